//! Compressed sparse row matrices with shareable sparsity patterns.

use std::sync::Arc;

use super::{LinalgError, LinearOperator};
use crate::par;

/// Row offsets and sorted column indices of a sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPattern {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsityPattern {
    pub fn new(nrows: usize, ncols: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>) -> Result<Self, LinalgError> {
        if row_ptr.len() != nrows + 1 || row_ptr[0] != 0 || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(LinalgError::BadPattern("row offsets inconsistent".into()));
        }
        for r in 0..nrows {
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if row_ptr[r + 1] < row_ptr[r] {
                return Err(LinalgError::BadPattern(format!("row {r} has negative length")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(LinalgError::BadPattern(format!("row {r} columns not strictly increasing")));
            }
            if cols.last().is_some_and(|&c| c >= ncols) {
                return Err(LinalgError::BadPattern(format!("row {r} column out of range")));
            }
        }
        Ok(SparsityPattern {
            nrows,
            ncols,
            row_ptr,
            col_idx,
        })
    }

    pub(crate) fn new_unchecked(nrows: usize, ncols: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>) -> Self {
        debug_assert!(Self::new(nrows, ncols, row_ptr.clone(), col_idx.clone()).is_ok());
        SparsityPattern {
            nrows,
            ncols,
            row_ptr,
            col_idx,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    /// Position of entry `(r, c)` in the value array.
    #[inline]
    pub fn find(&self, r: usize, c: usize) -> Option<usize> {
        let lo = self.row_ptr[r];
        self.row(r).binary_search(&c).ok().map(|k| lo + k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        CsrMatrix { pattern, values }
    }

    pub fn from_parts(pattern: Arc<SparsityPattern>, values: Vec<f64>) -> Result<Self, LinalgError> {
        if values.len() != pattern.nnz() {
            return Err(LinalgError::DimensionMismatch {
                expected: pattern.nnz(),
                got: values.len(),
            });
        }
        Ok(CsrMatrix { pattern, values })
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, LinalgError> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(LinalgError::BadPattern(format!("entry ({r}, {c}) out of range")));
            }
            rows[r].push((c, v));
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        let pattern = Arc::new(SparsityPattern::new_unchecked(nrows, ncols, row_ptr, col_idx));
        Ok(CsrMatrix { pattern, values })
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, |r| r.len());
        let trip: Vec<_> = rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(move |(j, &v)| (i, j, v)))
            .collect();
        Self::from_triplets(rows.len(), ncols, &trip).unwrap()
    }

    pub fn identity(n: usize) -> Self {
        let pattern = Arc::new(SparsityPattern::new_unchecked(n, n, (0..=n).collect(), (0..n).collect()));
        CsrMatrix {
            pattern,
            values: vec![1.0; n],
        }
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.pattern.row_ptr[r];
        let hi = self.pattern.row_ptr[r + 1];
        (&self.pattern.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pattern.find(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows().min(self.ncols())).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64], y: &mut [f64]) -> Result<(), LinalgError> {
        if x.len() != self.ncols() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.ncols(),
                got: x.len(),
            });
        }
        if y.len() != self.nrows() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.nrows(),
                got: y.len(),
            });
        }
        self.spmv_unchecked(x, y);
        Ok(())
    }

    pub(crate) fn spmv_unchecked(&self, x: &[f64], y: &mut [f64]) {
        const ROWS: usize = 256;
        par::for_each_chunk_mut(y, ROWS, |ci, chunk| {
            let base = ci * ROWS;
            for (k, yi) in chunk.iter_mut().enumerate() {
                let (cols, vals) = self.row(base + k);
                *yi = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
            }
        });
    }

    pub fn transpose(&self) -> CsrMatrix {
        let (m, n) = (self.nrows(), self.ncols());
        let mut counts = vec![0usize; n + 1];
        for &c in &self.pattern.col_idx {
            counts[c + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..m {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let k = next[c];
                col_idx[k] = r;
                values[k] = v;
                next[c] += 1;
            }
        }
        CsrMatrix {
            pattern: Arc::new(SparsityPattern::new_unchecked(n, m, row_ptr, col_idx)),
            values,
        }
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &CsrMatrix) -> Result<CsrMatrix, LinalgError> {
        if self.ncols() != other.nrows() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.ncols(),
                got: other.nrows(),
            });
        }
        let n = other.ncols();
        let rows: Vec<(Vec<usize>, Vec<f64>)> = par::map_range(self.nrows(), |r| {
            let mut acc: Vec<(usize, f64)> = Vec::new();
            let (cols, vals) = self.row(r);
            for (&k, &a) in cols.iter().zip(vals) {
                let (c2, v2) = other.row(k);
                for (&c, &b) in c2.iter().zip(v2) {
                    acc.push((c, a * b));
                }
            }
            acc.sort_by_key(|e| e.0);
            let mut oc: Vec<usize> = Vec::new();
            let mut ov: Vec<f64> = Vec::new();
            for (c, v) in acc {
                if oc.last() == Some(&c) {
                    *ov.last_mut().unwrap() += v;
                } else {
                    oc.push(c);
                    ov.push(v);
                }
            }
            (oc, ov)
        });
        let mut row_ptr = Vec::with_capacity(self.nrows() + 1);
        row_ptr.push(0);
        let total: usize = rows.iter().map(|r| r.0.len()).sum();
        let mut col_idx = Vec::with_capacity(total);
        let mut values = Vec::with_capacity(total);
        for (c, v) in rows {
            col_idx.extend(c);
            values.extend(v);
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix {
            pattern: Arc::new(SparsityPattern::new_unchecked(self.nrows(), n, row_ptr, col_idx)),
            values,
        })
    }

    /// Principal submatrix on the sorted index set `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> CsrMatrix {
        let mut local = vec![usize::MAX; self.ncols()];
        for (k, &g) in idx.iter().enumerate() {
            local[g] = k;
        }
        let mut row_ptr = Vec::with_capacity(idx.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &g in idx {
            let (cols, vals) = self.row(g);
            for (&c, &v) in cols.iter().zip(vals) {
                let l = local[c];
                if l != usize::MAX {
                    col_idx.push(l);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        // global columns are sorted and idx is sorted, so local columns are too
        CsrMatrix {
            pattern: Arc::new(SparsityPattern::new_unchecked(idx.len(), idx.len(), row_ptr, col_idx)),
            values,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols()]; self.nrows()];
        for (r, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        d
    }

    /// Largest `|a_ij − a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst: f64 = 0.0;
        for r in 0..self.nrows() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - t.get(r, c)).abs());
            }
            let (cols, vals) = t.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(r, c)).abs());
            }
        }
        worst
    }
}

impl LinearOperator for CsrMatrix {
    fn nrows(&self) -> usize {
        CsrMatrix::nrows(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_unchecked(x, y)
    }
}
