//! Compressed sparse row storage.
//!
//! Every large `n x n` matrix in the crate (the `C_i` terms of a parameterized
//! family, the Chebyshev coefficients `P_l`, the assembled `P(sigma)`) lives in
//! this format. Products with the transpose are computed directly from the row
//! layout, so `A^T` is never materialized.

use super::dense::DenseMatrix;
use super::LinalgError;

/// Real CSR matrix with strictly increasing column indices inside each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, validating every structural invariant.
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        if row_ptr.len() != nrows + 1 {
            return Err(LinalgError::InvalidStructure(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                nrows + 1
            )));
        }
        if row_ptr[0] != 0 || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(LinalgError::InvalidStructure(
                "row_ptr must start at 0 and end at nnz".into(),
            ));
        }
        if col_idx.len() != values.len() {
            return Err(LinalgError::InvalidStructure(
                "col_idx and values differ in length".into(),
            ));
        }
        for i in 0..nrows {
            let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
            if lo > hi {
                return Err(LinalgError::InvalidStructure(format!(
                    "row_ptr decreases at row {i}"
                )));
            }
            let row = &col_idx[lo..hi];
            if row.iter().any(|&c| c >= ncols) {
                return Err(LinalgError::InvalidStructure(format!(
                    "column index out of range in row {i}"
                )));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(LinalgError::InvalidStructure(format!(
                    "columns not strictly increasing in row {i}"
                )));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Assembles from `(row, col, value)` triplets. Duplicates are summed;
    /// explicit zeros are kept so that patterns can be shared between matrices.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, LinalgError> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(i, j, _) in &sorted {
            if i >= nrows || j >= ncols {
                return Err(LinalgError::InvalidStructure(format!(
                    "triplet ({i}, {j}) outside a {nrows}x{ncols} matrix"
                )));
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            col_idx.push(j);
            values.push(v);
            row_ptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::new(nrows, ncols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Keeps every entry, including exact zeros.
    pub fn from_dense(a: &DenseMatrix) -> Self {
        let mut row_ptr = Vec::with_capacity(a.nrows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let v = a[(i, j)];
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: a.nrows(),
            ncols: a.ncols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// Iterates `(row, col, value)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }

    /// Stored value at `(i, j)`, zero when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x` or `y = A^T x`.
    pub fn spmv(&self, x: &[f64], transpose: bool) -> Result<Vec<f64>, LinalgError> {
        let out_len = if transpose { self.ncols } else { self.nrows };
        let mut y = vec![0.0; out_len];
        self.spmv_acc(1.0, x, transpose, &mut y)?;
        Ok(y)
    }

    /// `y += scale * op(A) x` without allocating.
    pub fn spmv_acc(
        &self,
        scale: f64,
        x: &[f64],
        transpose: bool,
        y: &mut [f64],
    ) -> Result<(), LinalgError> {
        let (in_len, out_len) = if transpose {
            (self.nrows, self.ncols)
        } else {
            (self.ncols, self.nrows)
        };
        if x.len() != in_len {
            return Err(LinalgError::DimensionMismatch {
                expected: in_len,
                found: x.len(),
            });
        }
        if y.len() != out_len {
            return Err(LinalgError::DimensionMismatch {
                expected: out_len,
                found: y.len(),
            });
        }
        if scale == 0.0 {
            return Ok(());
        }
        if transpose {
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let sx = scale * xi;
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    y[self.col_idx[k]] += self.values[k] * sx;
                }
            }
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                let mut acc = 0.0;
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.values[k] * x[self.col_idx[k]];
                }
                *yi += scale * acc;
            }
        }
        Ok(())
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (i, j, v) in self.iter() {
            let slot = next[j];
            col_idx[slot] = i;
            values[slot] = v;
            next[j] += 1;
        }
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// `sum_k w_k A_k` on the union of the input patterns.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> Result<SparseMatrix, LinalgError> {
        let Some(&(_, first)) = terms.first() else {
            return Err(LinalgError::InvalidStructure(
                "linear combination of zero matrices".into(),
            ));
        };
        let (nrows, ncols) = (first.nrows, first.ncols);
        for (_, m) in terms {
            if m.nrows != nrows || m.ncols != ncols {
                return Err(LinalgError::ShapeMismatch {
                    expected: (nrows, ncols),
                    found: (m.nrows, m.ncols),
                });
            }
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        // dense scatter row by row
        let mut marker = vec![usize::MAX; ncols];
        let mut acc = vec![0.0; ncols];
        let mut cols: Vec<usize> = Vec::new();
        for i in 0..nrows {
            cols.clear();
            for &(w, m) in terms {
                for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                    let j = m.col_idx[k];
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        cols.push(j);
                    }
                    acc[j] += w * m.values[k];
                }
            }
            cols.sort_unstable();
            for &j in &cols {
                col_idx.push(j);
                values.push(acc[j]);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn scaled(&self, s: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest |i - j| over stored entries, as (lower, upper).
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut lower = 0;
        let mut upper = 0;
        for (i, j, _) in self.iter() {
            if i > j {
                lower = lower.max(i - j);
            } else {
                upper = upper.max(j - i);
            }
        }
        (lower, upper)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            d[(i, j)] += v;
        }
        d
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }
}
