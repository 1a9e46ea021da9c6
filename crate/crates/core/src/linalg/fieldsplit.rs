//! Multiplicative field-split preconditioner over a block system.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::{solve, CsrMatrix, KrylovConfig, LinalgError, LinearOperator, Preconditioner};

/// Square block matrix with `n_fields × n_fields` blocks of equal size.
/// Missing blocks are zero.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    n_fields: usize,
    block_len: usize,
    blocks: Vec<Option<Arc<CsrMatrix>>>,
}

impl BlockOperator {
    pub fn new(n_fields: usize, block_len: usize, blocks: Vec<Option<Arc<CsrMatrix>>>) -> Result<Self, LinalgError> {
        if blocks.len() != n_fields * n_fields {
            return Err(LinalgError::DimensionMismatch {
                expected: n_fields * n_fields,
                got: blocks.len(),
            });
        }
        for b in blocks.iter().flatten() {
            if b.nrows() != block_len || b.ncols() != block_len {
                return Err(LinalgError::DimensionMismatch { expected: block_len, got: b.nrows() });
            }
        }
        Ok(BlockOperator {
            n_fields,
            block_len,
            blocks,
        })
    }

    pub fn n_fields(&self) -> usize {
        self.n_fields
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&Arc<CsrMatrix>> {
        self.blocks[i * self.n_fields + j].as_ref()
    }

    /// Assembles the blocks into one monolithic matrix.
    pub fn to_csr(&self) -> CsrMatrix {
        let n = self.block_len;
        let mut t = Vec::new();
        for i in 0..self.n_fields {
            for j in 0..self.n_fields {
                if let Some(b) = self.block(i, j) {
                    for r in 0..n {
                        let (cols, vals) = b.row(r);
                        t.extend(cols.iter().zip(vals).map(|(&c, &v)| (i * n + r, j * n + c, v)));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(self.n_fields * n, self.n_fields * n, &t).expect("block indices are in range")
    }
}

impl LinearOperator for BlockOperator {
    fn nrows(&self) -> usize {
        self.n_fields * self.block_len
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.block_len;
        let mut tmp = vec![0.0; n];
        for (i, yi) in y.chunks_mut(n).enumerate() {
            yi.fill(0.0);
            for j in 0..self.n_fields {
                if let Some(b) = self.block(i, j) {
                    b.spmv_unchecked(&x[j * n..(j + 1) * n], &mut tmp);
                    for (y, t) in yi.iter_mut().zip(&tmp) {
                        *y += t;
                    }
                }
            }
        }
    }
}

/// Counters for one inner solver, shared across applications.
#[derive(Debug, Default)]
pub struct InnerStats {
    applications: AtomicUsize,
    iterations: AtomicUsize,
    max_iterations: AtomicUsize,
    unconverged: AtomicUsize,
}

impl InnerStats {
    fn record(&self, iterations: usize, converged: bool) {
        self.applications.fetch_add(1, Ordering::Relaxed);
        self.iterations.fetch_add(iterations, Ordering::Relaxed);
        self.max_iterations.fetch_max(iterations, Ordering::Relaxed);
        if !converged {
            self.unconverged.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn applications(&self) -> usize {
        self.applications.load(Ordering::Relaxed)
    }

    pub fn iterations(&self) -> usize {
        self.iterations.load(Ordering::Relaxed)
    }

    pub fn max_iterations(&self) -> usize {
        self.max_iterations.load(Ordering::Relaxed)
    }

    pub fn unconverged(&self) -> usize {
        self.unconverged.load(Ordering::Relaxed)
    }

    pub fn mean_iterations(&self) -> f64 {
        let a = self.applications();
        if a == 0 {
            0.0
        } else {
            self.iterations() as f64 / a as f64
        }
    }

    pub fn reset(&self) {
        self.applications.store(0, Ordering::Relaxed);
        self.iterations.store(0, Ordering::Relaxed);
        self.max_iterations.store(0, Ordering::Relaxed);
        self.unconverged.store(0, Ordering::Relaxed);
    }
}

/// Krylov solve of one diagonal block.
pub struct InnerSolver {
    pub name: String,
    pub ksp: KrylovConfig,
    pub pc: Box<dyn Preconditioner>,
    pub stats: Arc<InnerStats>,
}

impl InnerSolver {
    pub fn new(name: impl Into<String>, ksp: KrylovConfig, pc: Box<dyn Preconditioner>) -> Self {
        InnerSolver {
            name: name.into(),
            ksp,
            pc,
            stats: Arc::new(InnerStats::default()),
        }
    }
}

/// Block upper-triangular preconditioner: blocks are solved from the last
/// field back to the first, each right-hand side corrected by the already
/// computed fields through the off-diagonal blocks above the diagonal.
pub struct Fieldsplit {
    op: Arc<BlockOperator>,
    inner: Vec<InnerSolver>,
}

impl Fieldsplit {
    pub fn new(op: Arc<BlockOperator>, inner: Vec<InnerSolver>) -> Result<Self, LinalgError> {
        if inner.len() != op.n_fields() {
            return Err(LinalgError::DimensionMismatch {
                expected: op.n_fields(),
                got: inner.len(),
            });
        }
        for (i, s) in inner.iter().enumerate() {
            if op.block(i, i).is_none() {
                return Err(LinalgError::Inner {
                    block: s.name.clone(),
                    source: Box::new(LinalgError::BadPattern("missing diagonal block".into())),
                });
            }
        }
        Ok(Fieldsplit { op, inner })
    }

    pub fn inner(&self) -> &[InnerSolver] {
        &self.inner
    }
}

impl Preconditioner for Fieldsplit {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<(), LinalgError> {
        let n = self.op.block_len();
        let nf = self.op.n_fields();
        let mut rhs = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for i in (0..nf).rev() {
            rhs.copy_from_slice(&r[i * n..(i + 1) * n]);
            for j in i + 1..nf {
                if let Some(b) = self.op.block(i, j) {
                    b.spmv_unchecked(&z[j * n..(j + 1) * n], &mut tmp);
                    for (r, t) in rhs.iter_mut().zip(&tmp) {
                        *r -= t;
                    }
                }
            }
            let s = &self.inner[i];
            let zi = &mut z[i * n..(i + 1) * n];
            zi.fill(0.0);
            let a = self.op.block(i, i).unwrap();
            let res = solve(a.as_ref(), &s.pc, &rhs, zi, &s.ksp).map_err(|e| LinalgError::Inner {
                block: s.name.clone(),
                source: Box::new(e),
            })?;
            s.stats.record(res.iterations, res.converged);
        }
        Ok(())
    }
}
