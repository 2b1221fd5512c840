use std::ops::{Index, IndexMut};

use super::LinalgError;

/// Smallest pivot magnitude accepted by the LU factorizations.
pub const PIVOT_FLOOR: f64 = 1e-300;

/// Row-major dense matrix, used for small systems and test oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != nrows * ncols {
            return Err(LinalgError::DimensionMismatch {
                expected: nrows * ncols,
                found: data.len(),
            });
        }
        Ok(Self { nrows, ncols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            if r.len() != ncols {
                return Err(LinalgError::DimensionMismatch {
                    expected: ncols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { nrows, ncols, data })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.ncols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.ncols,
                found: x.len(),
            });
        }
        Ok((0..self.nrows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if self.ncols != other.nrows {
            return Err(LinalgError::DimensionMismatch {
                expected: self.ncols,
                found: other.nrows,
            });
        }
        let mut out = DenseMatrix::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.ncols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(LinalgError::ShapeMismatch {
                expected: (self.nrows, self.ncols),
                found: (other.nrows, other.ncols),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect();
        Ok(DenseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            data,
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.ncols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.ncols + j]
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
///
/// `L` (unit diagonal, strictly lower part) and `U` are packed into one matrix.
#[derive(Debug, Clone)]
pub struct DenseLU {
    factors: DenseMatrix,
    /// `perm[i]` is the original row placed at position `i`.
    perm: Vec<usize>,
}

impl DenseLU {
    pub fn factor(a: &DenseMatrix) -> Result<Self, LinalgError> {
        if a.nrows() != a.ncols() {
            return Err(LinalgError::ShapeMismatch {
                expected: (a.nrows(), a.nrows()),
                found: (a.nrows(), a.ncols()),
            });
        }
        let n = a.nrows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pmax > PIVOT_FLOOR) {
                return Err(LinalgError::Singular { index: k });
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let l = lu[(i, k)] / pivot;
                lu[(i, k)] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    let ukj = lu[(k, j)];
                    lu[(i, j)] -= l * ukj;
                }
            }
        }
        Ok(Self { factors: lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Solves `A x = b`, or `A^T x = b` when `transpose` is set.
    pub fn solve(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>, LinalgError> {
        let n = self.dim();
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let f = &self.factors;
        if !transpose {
            let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
            for i in 0..n {
                let s: f64 = (0..i).map(|j| f[(i, j)] * x[j]).sum();
                x[i] -= s;
            }
            for i in (0..n).rev() {
                let s: f64 = (i + 1..n).map(|j| f[(i, j)] * x[j]).sum();
                x[i] = (x[i] - s) / f[(i, i)];
            }
            Ok(x)
        } else {
            // A^T = U^T L^T P
            let mut w = b.to_vec();
            for i in 0..n {
                let s: f64 = (0..i).map(|j| f[(j, i)] * w[j]).sum();
                w[i] = (w[i] - s) / f[(i, i)];
            }
            for i in (0..n).rev() {
                let s: f64 = (i + 1..n).map(|j| f[(j, i)] * w[j]).sum();
                w[i] -= s;
            }
            let mut x = vec![0.0; n];
            for (i, &p) in self.perm.iter().enumerate() {
                x[p] = w[i];
            }
            Ok(x)
        }
    }
}

/// Convenience wrapper matching the factor/solve pair.
pub fn lu_factor(a: &DenseMatrix) -> Result<DenseLU, LinalgError> {
    DenseLU::factor(a)
}

pub fn lu_solve(lu: &DenseLU, b: &[f64], transpose: bool) -> Result<Vec<f64>, LinalgError> {
    lu.solve(b, transpose)
}
