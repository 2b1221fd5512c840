//! Shift-and-invert preconditioner `(K - sigma M)^{-1}` applied through a block LU
//! factorization of the block-column-permuted pencil.
//!
//! With the first block column moved to the end, `(K - sigma M) Pi = L U` where
//! `L` is block lower triangular (identity diagonal except `P(sigma)` in the last
//! block) and `U` is the identity plus a last block column `-tau_{k+1}(sigma) I`.
//! Only the last block of `L^{-1}` needs a solve with `P(sigma)`.

mod inner;

use std::sync::atomic::{AtomicUsize, Ordering};

pub use inner::{InnerOutcome, InnerSolver, InnerSpec, InnerStatus, IterMethod, FLOOR_ACCEPT};

use crate::chebyshev::{assemble_p_at, cheb_basis};
use crate::companion::CompanionOperator;
use crate::error::{Error, Result};
use crate::linalg::vec::norm2;
use crate::linalg::{LinalgError, SparseMatrix};

/// Bookkeeping for one preconditioner application.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InnerRecord {
    /// Requested bound on `|defect| / |input|`.
    pub requested_tol: f64,
    /// Achieved `|defect| / |input|`, when known.
    pub achieved_rel: Option<f64>,
    pub inner_iterations: usize,
    pub status: InnerStatus,
}

/// Result of applying `(K - sigma M)^{-1}` or its transpose.
#[derive(Debug, Clone)]
pub struct Applied {
    pub out: Vec<f64>,
    pub record: InnerRecord,
    /// `(K - sigma M) out - y` (or the transposed analogue), when tracked.
    pub defect: Option<Vec<f64>>,
}

/// Anything that acts like `(K - sigma M)^{-1}` with a per-call tolerance.
pub trait ShiftInvert {
    fn dim(&self) -> usize;
    fn sigma(&self) -> f64;
    /// `(K - sigma M)^{-1} y` with `|(K - sigma M) out - y| <= tol |y|`.
    fn apply(&self, y: &[f64], tol: f64) -> Result<Applied>;
    /// `(K - sigma M)^{-T} y` with the analogous bound.
    fn apply_transpose(&self, y: &[f64], tol: f64) -> Result<Applied>;
    /// True when every application is exact up to roundoff.
    fn is_exact(&self) -> bool;
    /// Number of inner `P(sigma)` solves performed so far.
    fn inner_solves(&self) -> usize;
}

pub struct Preconditioner {
    n: usize,
    d: usize,
    a: f64,
    sigma: f64,
    /// `tau_0(sigma) .. tau_d(sigma)`.
    tau: Vec<f64>,
    /// Last block row of `L` left of the diagonal.
    l_last: Vec<SparseMatrix>,
    inner: InnerSolver,
    track_defect: bool,
    uinv_sign: f64,
    solves: AtomicUsize,
    inner_iterations: AtomicUsize,
}

impl Preconditioner {
    pub fn new(op: &CompanionOperator, sigma: f64, spec: InnerSpec) -> Result<Self> {
        let a = op.a();
        if !(sigma.abs() < a) {
            return Err(Error::InvalidInput(format!(
                "target sigma = {sigma} must lie strictly inside (-{a}, {a})"
            )));
        }
        let (n, d) = (op.n(), op.d());
        let poly = op.poly();
        let tau = cheb_basis(sigma, &poly.params);
        // last row of K - sigma M, columns 1..d-1
        let mut l_last: Vec<SparseMatrix> = (1..d).map(|k| op.last_row_block(k).clone()).collect();
        l_last[d - 2] = SparseMatrix::linear_combination(&[
            (1.0, op.last_row_block(d - 1)),
            (2.0 * sigma / a, &poly.coeffs[d]),
        ])?;
        let psigma = assemble_p_at(poly, sigma);
        let inner = InnerSolver::new(psigma, spec, sigma)?;
        Ok(Self {
            n,
            d,
            a,
            sigma,
            tau,
            l_last,
            inner,
            track_defect: false,
            uinv_sign: 1.0,
            solves: AtomicUsize::new(0),
            inner_iterations: AtomicUsize::new(0),
        })
    }

    /// Also return the explicit defect vector with every application.
    pub fn with_defect_tracking(mut self, on: bool) -> Self {
        self.track_defect = on;
        self
    }

    /// Flips the sign of the `U^{-1}` coupling terms. Only for mutation testing.
    #[doc(hidden)]
    pub fn tampered_uinv(mut self) -> Self {
        self.uinv_sign = -self.uinv_sign;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `tau_0(sigma) .. tau_d(sigma)`.
    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn p_sigma(&self) -> &SparseMatrix {
        self.inner.matrix()
    }

    pub fn total_inner_iterations(&self) -> usize {
        self.inner_iterations.load(Ordering::Relaxed)
    }

    fn check_len(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n * self.d {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n * self.d,
                found: y.len(),
            }
            .into());
        }
        Ok(())
    }

    fn inner_solve(&self, rhs: &[f64], target: f64, transpose: bool) -> Result<InnerOutcome> {
        self.solves.fetch_add(1, Ordering::Relaxed);
        let out = self.inner.solve(rhs, target, transpose)?;
        self.inner_iterations.fetch_add(out.iterations, Ordering::Relaxed);
        Ok(out)
    }

    /// Forward substitution with `L`; returns the result and the inner outcome
    /// together with the right-hand side handed to the inner solve.
    pub fn apply_linv(&self, y: &[f64], target: f64) -> Result<(Vec<f64>, InnerOutcome, Vec<f64>)> {
        self.check_len(y)?;
        let (n, d) = (self.n, self.d);
        let c = 2.0 * self.sigma / self.a;
        let mut out = vec![0.0; n * d];
        out[..n].copy_from_slice(&y[..n]);
        for k in 1..d - 1 {
            for i in 0..n {
                let prev2 = if k >= 2 { out[(k - 2) * n + i] } else { 0.0 };
                out[k * n + i] = y[k * n + i] + c * out[(k - 1) * n + i] - prev2;
            }
        }
        let mut rhs = y[(d - 1) * n..].to_vec();
        for (k, m) in self.l_last.iter().enumerate() {
            m.spmv_acc(-1.0, &out[k * n..(k + 1) * n], false, &mut rhs)?;
        }
        let res = self.inner_solve(&rhs, target, false)?;
        out[(d - 1) * n..].copy_from_slice(&res.x);
        Ok((out, res, rhs))
    }

    pub fn apply_uinv(&self, y: &[f64]) -> Vec<f64> {
        let (n, d) = (self.n, self.d);
        let mut out = y.to_vec();
        let last = &y[(d - 1) * n..];
        for k in 0..d - 1 {
            let t = self.uinv_sign * self.tau[k + 1];
            for (o, l) in out[k * n..(k + 1) * n].iter_mut().zip(last) {
                *o += t * l;
            }
        }
        out
    }

    fn apply_uinv_t(&self, y: &[f64]) -> Vec<f64> {
        let (n, d) = (self.n, self.d);
        let mut out = y.to_vec();
        for k in 0..d - 1 {
            let t = self.uinv_sign * self.tau[k + 1];
            for i in 0..n {
                out[(d - 1) * n + i] += t * y[k * n + i];
            }
        }
        out
    }

    /// Moves the last block to the front.
    fn perm(&self, z: &[f64]) -> Vec<f64> {
        let (n, d) = (self.n, self.d);
        let mut out = Vec::with_capacity(n * d);
        out.extend_from_slice(&z[(d - 1) * n..]);
        out.extend_from_slice(&z[..(d - 1) * n]);
        out
    }

    /// Moves the first block to the end.
    fn perm_t(&self, y: &[f64]) -> Vec<f64> {
        let (n, d) = (self.n, self.d);
        let mut out = Vec::with_capacity(n * d);
        out.extend_from_slice(&y[n..]);
        out.extend_from_slice(&y[..n]);
        out
    }

    /// Backward substitution with `L^T`; the inner solve comes first.
    fn apply_linv_t(&self, z: &[f64], target: f64) -> Result<(Vec<f64>, InnerOutcome, Vec<f64>)> {
        let (n, d) = (self.n, self.d);
        let c = 2.0 * self.sigma / self.a;
        let rhs = z[(d - 1) * n..].to_vec();
        let res = self.inner_solve(&rhs, target, true)?;
        let mut x = vec![0.0; n * d];
        x[(d - 1) * n..].copy_from_slice(&res.x);
        let (head, xl) = x.split_at_mut((d - 1) * n);
        for k in (0..d - 1).rev() {
            let mut blk = z[k * n..(k + 1) * n].to_vec();
            self.l_last[k].spmv_acc(-1.0, xl, true, &mut blk)?;
            if k + 1 <= d - 2 {
                for i in 0..n {
                    blk[i] += c * head[(k + 1) * n + i];
                }
            }
            if k + 2 <= d - 2 {
                for i in 0..n {
                    blk[i] -= head[(k + 2) * n + i];
                }
            }
            head[k * n..(k + 1) * n].copy_from_slice(&blk);
        }
        Ok((x, res, rhs))
    }

    fn finish(
        &self,
        ynorm: f64,
        tol: f64,
        res: &InnerOutcome,
        rhs: &[f64],
        transpose: bool,
    ) -> Result<(InnerRecord, Option<Vec<f64>>)> {
        let (n, d) = (self.n, self.d);
        let need_defect = self.track_defect || (res.residual_norm.is_none() && !self.inner.is_direct());
        let mut defect = None;
        let mut dnorm = res.residual_norm;
        if need_defect {
            let mut e = self.inner.matrix().spmv(&res.x, transpose)?;
            e.iter_mut().zip(rhs).for_each(|(ei, ri)| *ei -= ri);
            dnorm = Some(norm2(&e));
            let mut full = vec![0.0; n * d];
            // the forward defect lives in the last block, the adjoint one in block 0
            let off = if transpose { 0 } else { (d - 1) * n };
            full[off..off + n].copy_from_slice(&e);
            defect = Some(full);
        }
        let achieved_rel = dnorm.map(|e| if ynorm > 0.0 { e / ynorm } else { e });
        Ok((
            InnerRecord {
                requested_tol: tol,
                achieved_rel,
                inner_iterations: res.iterations,
                status: res.status,
            },
            defect,
        ))
    }
}

impl ShiftInvert for Preconditioner {
    fn dim(&self) -> usize {
        self.n * self.d
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn apply(&self, y: &[f64], tol: f64) -> Result<Applied> {
        let ynorm = norm2(y);
        let (w, res, rhs) = self.apply_linv(y, tol * ynorm)?;
        let out = self.perm(&self.apply_uinv(&w));
        let (record, defect) = self.finish(ynorm, tol, &res, &rhs, false)?;
        Ok(Applied { out, record, defect })
    }

    fn apply_transpose(&self, y: &[f64], tol: f64) -> Result<Applied> {
        self.check_len(y)?;
        let ynorm = norm2(y);
        let z = self.apply_uinv_t(&self.perm_t(y));
        let (out, res, rhs) = self.apply_linv_t(&z, tol * ynorm)?;
        let (record, defect) = self.finish(ynorm, tol, &res, &rhs, true)?;
        Ok(Applied { out, record, defect })
    }

    fn is_exact(&self) -> bool {
        self.inner.is_direct()
    }

    fn inner_solves(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }
}
