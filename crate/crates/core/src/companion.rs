//! The `dn x dn` companion pencil `K - mu M` linearizing `P(mu) x = b`.
//!
//! Unknowns are the blocks `u_l = tau_l(mu) x` for `l = 0..d-1`. The first
//! `d - 1` block rows encode the Chebyshev recurrence and the last block row
//! encodes `P(mu) x = b` with `tau_d` eliminated through the recurrence.

use crate::chebyshev::{cheb_basis, MatrixChebPoly};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, LinalgError, SparseMatrix};

/// Largest `dn` accepted by [`CompanionOperator::assemble_dense`].
pub const DENSE_GUARD: usize = 5000;

#[derive(Debug, Clone)]
pub struct CompanionOperator {
    poly: MatrixChebPoly,
    n: usize,
    d: usize,
    /// Last block row of `K`.
    last_row: Vec<SparseMatrix>,
}

/// A length-`dn` vector viewed as `d` blocks of length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedVector {
    data: Vec<f64>,
    n: usize,
}

impl ExtendedVector {
    pub fn new(data: Vec<f64>, n: usize) -> Result<Self> {
        if n == 0 || data.len() % n != 0 {
            return Err(Error::InvalidInput(format!(
                "length {} is not a multiple of the block size {n}",
                data.len()
            )));
        }
        Ok(Self { data, n })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            data: vec![0.0; n * d],
            n,
        }
    }

    pub fn block_size(&self) -> usize {
        self.n
    }

    pub fn num_blocks(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn block(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// `b~ = (0, ..., 0, b)`.
pub fn build_btilde(b: &[f64], d: usize) -> ExtendedVector {
    let n = b.len();
    let mut v = ExtendedVector::zeros(n, d);
    v.block_mut(d - 1).copy_from_slice(b);
    v
}

/// Block 0 of a companion vector, which carries `x` since `tau_0 = 1`.
pub fn extract_x(u: &[f64], n: usize) -> Vec<f64> {
    u[..n].to_vec()
}

/// `(tau_0(mu) x, ..., tau_{d-1}(mu) x)`.
pub fn structured_vector(x: &[f64], mu: f64, poly: &MatrixChebPoly) -> ExtendedVector {
    let tau = cheb_basis(mu, &poly.params);
    let n = x.len();
    let d = poly.degree();
    let mut v = ExtendedVector::zeros(n, d);
    for k in 0..d {
        v.block_mut(k).iter_mut().zip(x).for_each(|(o, xi)| *o = tau[k] * xi);
    }
    v
}

impl CompanionOperator {
    pub fn new(poly: MatrixChebPoly) -> Result<Self> {
        let d = poly.degree();
        if d < 2 {
            return Err(Error::InvalidInput(format!(
                "companion form needs degree >= 2, got {d}"
            )));
        }
        let n = poly.n();
        let p = &poly.coeffs;
        let mut last_row: Vec<SparseMatrix> = p[..d].to_vec();
        last_row[d - 2] = SparseMatrix::linear_combination(&[(1.0, &p[d - 2]), (-1.0, &p[d])])?;
        Ok(Self { poly, n, d, last_row })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.n * self.d
    }

    pub fn a(&self) -> f64 {
        self.poly.a()
    }

    pub fn poly(&self) -> &MatrixChebPoly {
        &self.poly
    }

    /// Block `k` of the last block row of `K`.
    pub fn last_row_block(&self, k: usize) -> &SparseMatrix {
        &self.last_row[k]
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            }
            .into());
        }
        Ok(())
    }

    pub fn apply_k(&self, v: &[f64], transpose: bool) -> Result<Vec<f64>> {
        self.check_len(v)?;
        let (n, d) = (self.n, self.d);
        let blk = |k: usize| &v[k * n..(k + 1) * n];
        let mut out = vec![0.0; n * d];
        if !transpose {
            out[..n].copy_from_slice(blk(1));
            for r in 1..d - 1 {
                let (lo, hi) = (blk(r - 1), blk(r + 1));
                for (i, o) in out[r * n..(r + 1) * n].iter_mut().enumerate() {
                    *o = lo[i] + hi[i];
                }
            }
            let last = &mut out[(d - 1) * n..];
            for k in 0..d {
                self.last_row[k].spmv_acc(1.0, blk(k), false, last)?;
            }
        } else {
            let w_last = blk(d - 1);
            for r in 0..d - 1 {
                let w = blk(r);
                if r >= 1 {
                    out[(r - 1) * n..r * n].iter_mut().zip(w).for_each(|(o, x)| *o += x);
                }
                out[(r + 1) * n..(r + 2) * n].iter_mut().zip(w).for_each(|(o, x)| *o += x);
            }
            for k in 0..d {
                self.last_row[k].spmv_acc(1.0, w_last, true, &mut out[k * n..(k + 1) * n])?;
            }
        }
        Ok(out)
    }

    pub fn apply_m(&self, v: &[f64], transpose: bool) -> Result<Vec<f64>> {
        self.check_len(v)?;
        let (n, d, a) = (self.n, self.d, self.a());
        let mut out = vec![0.0; n * d];
        for (o, x) in out[..n].iter_mut().zip(&v[..n]) {
            *o = x / a;
        }
        for (o, x) in out[n..(d - 1) * n].iter_mut().zip(&v[n..(d - 1) * n]) {
            *o = 2.0 * x / a;
        }
        self.poly.coeffs[d].spmv_acc(-2.0 / a, &v[(d - 1) * n..], transpose, &mut out[(d - 1) * n..])?;
        Ok(out)
    }

    /// `(K - mu M) v`, or its transpose.
    pub fn apply_pencil(&self, mu: f64, v: &[f64], transpose: bool) -> Result<Vec<f64>> {
        let mut out = self.apply_k(v, transpose)?;
        let m = self.apply_m(v, transpose)?;
        out.iter_mut().zip(&m).for_each(|(o, x)| *o -= mu * x);
        Ok(out)
    }

    /// Dense `K` and `M`, filled block by block.
    pub fn assemble_dense(&self) -> Result<(DenseMatrix, DenseMatrix)> {
        let dn = self.dim();
        if dn > DENSE_GUARD {
            return Err(LinalgError::SizeGuard {
                size: dn,
                limit: DENSE_GUARD,
            }
            .into());
        }
        let (n, d, a) = (self.n, self.d, self.a());
        let mut k = DenseMatrix::zeros(dn, dn);
        let mut m = DenseMatrix::zeros(dn, dn);
        for i in 0..n {
            k[(i, n + i)] = 1.0;
            m[(i, i)] = 1.0 / a;
        }
        for r in 1..d - 1 {
            for i in 0..n {
                k[(r * n + i, (r - 1) * n + i)] = 1.0;
                k[(r * n + i, (r + 1) * n + i)] = 1.0;
                m[(r * n + i, r * n + i)] = 2.0 / a;
            }
        }
        let off = (d - 1) * n;
        for (blk, mat) in self.last_row.iter().enumerate() {
            for (i, j, v) in mat.iter() {
                k[(off + i, blk * n + j)] += v;
            }
        }
        for (i, j, v) in self.poly.coeffs[d].iter() {
            m[(off + i, off + j)] += -2.0 / a * v;
        }
        Ok((k, m))
    }
}
