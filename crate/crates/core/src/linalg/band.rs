use super::dense::PIVOT_FLOOR;
use super::{LinalgError, SparseMatrix};

/// Banded LU with partial pivoting, stored column-wise in the usual
/// `2*kl + ku + 1` band layout (fill from pivoting widens the upper band to `kl + ku`).
#[derive(Debug, Clone)]
pub struct BandLU {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLU {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ld + (self.kl + self.ku + i - j)
    }

    pub fn factor(a: &SparseMatrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::ShapeMismatch {
                expected: (a.nrows(), a.nrows()),
                found: (a.nrows(), a.ncols()),
            });
        }
        let n = a.nrows();
        let (kl, ku) = a.bandwidths();
        let ld = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            ld,
            ab: vec![0.0; ld * n],
            piv: vec![0; n],
        };
        for (i, j, v) in a.iter() {
            let k = lu.idx(i, j);
            lu.ab[k] = v;
        }
        let uw = kl + ku;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut pmax = -1.0;
            for i in k..=last {
                let v = lu.ab[lu.idx(i, k)].abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if !(pmax > PIVOT_FLOOR) {
                return Err(LinalgError::Singular { index: k });
            }
            lu.piv[k] = p;
            let jend = (k + uw).min(n - 1);
            if p != k {
                for j in k..=jend {
                    let (x, y) = (lu.idx(k, j), lu.idx(p, j));
                    lu.ab.swap(x, y);
                }
            }
            let pivot = lu.ab[lu.idx(k, k)];
            for i in k + 1..=last {
                let ik = lu.idx(i, k);
                let l = lu.ab[ik] / pivot;
                lu.ab[ik] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=jend {
                    let kj = lu.ab[lu.idx(k, j)];
                    let ij = lu.idx(i, j);
                    lu.ab[ij] -= l * kj;
                }
            }
        }
        Ok(lu)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`, or `A^T x = b` when `transpose` is set.
    pub fn solve(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>, LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let uw = self.kl + self.ku;
        let mut x = b.to_vec();
        if !transpose {
            for k in 0..n {
                x.swap(k, self.piv[k]);
                let xk = x[k];
                if xk != 0.0 {
                    for i in k + 1..=(k + self.kl).min(n - 1) {
                        x[i] -= self.ab[self.idx(i, k)] * xk;
                    }
                }
            }
            for i in (0..n).rev() {
                let mut s = x[i];
                for j in i + 1..=(i + uw).min(n - 1) {
                    s -= self.ab[self.idx(i, j)] * x[j];
                }
                x[i] = s / self.ab[self.idx(i, i)];
            }
        } else {
            for i in 0..n {
                let mut s = x[i];
                for j in i.saturating_sub(uw)..i {
                    s -= self.ab[self.idx(j, i)] * x[j];
                }
                x[i] = s / self.ab[self.idx(i, i)];
            }
            for k in (0..n).rev() {
                let mut s = 0.0;
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    s += self.ab[self.idx(i, k)] * x[i];
                }
                x[k] -= s;
                x.swap(k, self.piv[k]);
            }
        }
        Ok(x)
    }
}
