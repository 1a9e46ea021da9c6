//! Sparse linear algebra: CSR storage, Krylov solvers and preconditioners.

mod asm;
mod csr;
mod fieldsplit;
mod gmg;
mod ilu;
mod krylov;
mod lu;
pub mod mmio;

pub use asm::{rcb_partition, Asm, AsmPartition};
pub use csr::{CsrMatrix, SparsityPattern};
pub use fieldsplit::{BlockOperator, Fieldsplit, InnerSolver, InnerStats};
pub use gmg::{dg_interpolation, dg_prolongation, Gmg, GmgLevels, SmootherConfig};
pub use ilu::Ilu0;
pub use krylov::{solve, KrylovConfig, KrylovMethod, KrylovResult};
pub use lu::DenseLu;

use thiserror::Error;

use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid sparsity pattern: {0}")]
    BadPattern(String),
    #[error("zero pivot in row {row}")]
    ZeroPivot { row: usize },
    #[error("matrix is singular (pivot column {col})")]
    Singular { col: usize },
    #[error("conjugate gradient detected an indefinite operator (pAp = {pap:e}) at iteration {iteration}")]
    Indefinite { iteration: usize, pap: f64 },
    #[error("Krylov breakdown: {0}")]
    Breakdown(String),
    #[error("non-finite residual at iteration {iteration}")]
    NotFinite { iteration: usize },
    #[error("inner solve of block `{block}` failed: {source}")]
    Inner {
        block: String,
        #[source]
        source: Box<LinalgError>,
    },
    #[error("Matrix Market: {0}")]
    MatrixMarket(String),
    #[error("multigrid level {level}: {msg}")]
    Level { level: usize, msg: String },
}

/// Square linear map `y = A x`.
pub trait LinearOperator: Send + Sync {
    fn nrows(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Approximate inverse `z ≈ A⁻¹ r`.
pub trait Preconditioner: Send + Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<(), LinalgError>;
}

/// `z = r`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPc;

impl Preconditioner for IdentityPc {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<(), LinalgError> {
        z.copy_from_slice(r);
        Ok(())
    }
}

/// Diagonal scaling.
#[derive(Debug, Clone)]
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinalgError> {
        let d = a.diagonal();
        if let Some(row) = d.iter().position(|&v| v == 0.0) {
            return Err(LinalgError::ZeroPivot { row });
        }
        Ok(Jacobi {
            inv_diag: d.iter().map(|v| 1.0 / v).collect(),
        })
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<(), LinalgError> {
        for ((z, r), d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *z = r * d;
        }
        Ok(())
    }
}

impl<T: Preconditioner + ?Sized> Preconditioner for Box<T> {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<(), LinalgError> {
        (**self).apply(r, z)
    }
}

impl<T: Preconditioner + ?Sized> Preconditioner for std::sync::Arc<T> {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<(), LinalgError> {
        (**self).apply(r, z)
    }
}

/// Dot product reduced in a fixed order.
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    par::sum_range(x.len().div_ceil(par::REDUCTION_CHUNK), |c| {
        let lo = c * par::REDUCTION_CHUNK;
        let hi = (lo + par::REDUCTION_CHUNK).min(x.len());
        x[lo..hi].iter().zip(&y[lo..hi]).map(|(a, b)| a * b).sum()
    })
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `y += a x`.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    const CH: usize = 8192;
    par::for_each_chunk_mut(y, CH, |c, ys| {
        let xs = &x[c * CH..c * CH + ys.len()];
        for (y, x) in ys.iter_mut().zip(xs) {
            *y += a * x;
        }
    });
}

/// `r = b − A x`.
pub fn residual<A: LinearOperator + ?Sized>(a: &A, x: &[f64], b: &[f64], r: &mut [f64]) {
    a.apply(x, r);
    for (r, b) in r.iter_mut().zip(b) {
        *r = b - *r;
    }
}
