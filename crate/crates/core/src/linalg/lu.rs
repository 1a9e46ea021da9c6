//! Dense LU with partial pivoting, used for coarse-grid solves.

use super::{CsrMatrix, LinalgError, Preconditioner};

#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    /// Factors a row-major `n × n` matrix.
    pub fn new(n: usize, mut a: Vec<f64>) -> Result<Self, LinalgError> {
        if a.len() != n * n {
            return Err(LinalgError::DimensionMismatch { expected: n * n, got: a.len() });
        }
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = scale * f64::EPSILON * n as f64;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if !(pmax > tiny) {
                return Err(LinalgError::Singular { col: k });
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let piv = a[k * n + k];
            for i in k + 1..n {
                let l = a[i * n + k] / piv;
                a[i * n + k] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        a[i * n + j] -= l * a[k * n + j];
                    }
                }
            }
        }
        Ok(DenseLu { n, lu: a, perm })
    }

    pub fn from_csr(a: &CsrMatrix) -> Result<Self, LinalgError> {
        let n = a.nrows();
        let mut d = vec![0.0; n * n];
        for r in 0..n {
            let (cols, vals) = a.row(r);
            for (c, v) in cols.iter().zip(vals) {
                d[r * n + c] += v;
            }
        }
        Self::new(n, d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            x[i] = b[self.perm[i]];
        }
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(l, x)| l * x).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s: f64 = row.iter().zip(&x[i + 1..]).map(|(u, x)| u * x).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
    }
}

impl Preconditioner for DenseLu {
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<(), LinalgError> {
        self.solve(r, z);
        Ok(())
    }
}
