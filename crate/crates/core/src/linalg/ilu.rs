//! Incomplete LU factorization with zero fill.

use super::{CsrMatrix, LinalgError, Preconditioner};

/// ILU(0) factors stored in the pattern of the original matrix: strictly
/// lower entries hold L (unit diagonal implied), the rest hold U.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinalgError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LinalgError::DimensionMismatch { expected: n, got: a.ncols() });
        }
        let mut lu = a.clone();
        let pat = lu.pattern().clone();
        let rp = pat.row_ptr();
        let ci = pat.col_idx();
        let mut diag = vec![0usize; n];
        for (r, d) in diag.iter_mut().enumerate() {
            *d = pat.find(r, r).ok_or(LinalgError::ZeroPivot { row: r })?;
        }
        let vals = lu.values_mut();
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            for k in rp[i]..rp[i + 1] {
                pos[ci[k]] = k;
            }
            for kk in rp[i]..diag[i] {
                let k = ci[kk];
                let pivot = vals[diag[k]];
                if pivot == 0.0 {
                    return Err(LinalgError::ZeroPivot { row: k });
                }
                let lik = vals[kk] / pivot;
                vals[kk] = lik;
                for kj in diag[k] + 1..rp[k + 1] {
                    let p = pos[ci[kj]];
                    if p != usize::MAX {
                        vals[p] -= lik * vals[kj];
                    }
                }
            }
            if vals[diag[i]] == 0.0 || !vals[diag[i]].is_finite() {
                return Err(LinalgError::ZeroPivot { row: i });
            }
            for k in rp[i]..rp[i + 1] {
                pos[ci[k]] = usize::MAX;
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Solves `L U z = r` in place.
    pub fn solve_in_place(&self, z: &mut [f64]) {
        let pat = self.lu.pattern();
        let rp = pat.row_ptr();
        let ci = pat.col_idx();
        let v = self.lu.values();
        for i in 0..self.n() {
            let mut s = z[i];
            for k in rp[i]..self.diag[i] {
                s -= v[k] * z[ci[k]];
            }
            z[i] = s;
        }
        for i in (0..self.n()).rev() {
            let mut s = z[i];
            for k in self.diag[i] + 1..rp[i + 1] {
                s -= v[k] * z[ci[k]];
            }
            z[i] = s / v[self.diag[i]];
        }
    }

    pub fn factors(&self) -> &CsrMatrix {
        &self.lu
    }
}

impl Preconditioner for Ilu0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<(), LinalgError> {
        z.copy_from_slice(r);
        self.solve_in_place(z);
        Ok(())
    }
}
