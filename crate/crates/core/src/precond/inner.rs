//! Solvers for the `n x n` systems with `P(sigma)` or its transpose.

use crate::error::{Error, Result};
use crate::linalg::vec::{axpy, dot, norm2};
use crate::linalg::{BandLU, DenseLU, LinalgError, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IterMethod {
    Bicg,
    Bicgstab,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerSpec {
    Direct,
    Iterative {
        method: IterMethod,
        /// Defaults to `10 n`.
        max_iter: Option<usize>,
    },
}

impl InnerSpec {
    pub fn bicg() -> Self {
        InnerSpec::Iterative {
            method: IterMethod::Bicg,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerStatus {
    /// Direct factorization; no tolerance applies.
    Exact,
    Converged,
    /// Residual refinement stopped improving before the requested tolerance;
    /// the request was below what working precision allows for this system.
    AccuracyFloor,
}

/// Below this relative accuracy a stalled inner solve is accepted as an accuracy floor.
pub const FLOOR_ACCEPT: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub x: Vec<f64>,
    pub residual_norm: Option<f64>,
    pub iterations: usize,
    pub status: InnerStatus,
}

enum Factor {
    Dense(DenseLU),
    Band(BandLU),
}

enum Mode {
    Direct(Factor),
    Iterative { method: IterMethod, max_iter: usize },
}

pub struct InnerSolver {
    matrix: SparseMatrix,
    symmetric: bool,
    mode: Mode,
}

fn is_symmetric(a: &SparseMatrix) -> bool {
    let t = a.transpose();
    t.row_ptr() == a.row_ptr() && t.col_idx() == a.col_idx() && t.values() == a.values()
}

impl InnerSolver {
    pub fn new(matrix: SparseMatrix, spec: InnerSpec, sigma: f64) -> Result<Self> {
        let n = matrix.nrows();
        let symmetric = is_symmetric(&matrix);
        let mode = match spec {
            InnerSpec::Direct => {
                let (kl, ku) = matrix.bandwidths();
                let band_cost = (2 * kl + ku + 1) * n;
                let factor = if band_cost * 2 < n * n {
                    BandLU::factor(&matrix).map(Factor::Band)
                } else {
                    DenseLU::factor(&matrix.to_dense()).map(Factor::Dense)
                };
                match factor {
                    Ok(f) => Mode::Direct(f),
                    Err(LinalgError::Singular { .. }) => return Err(Error::SingularShift { sigma }),
                    Err(e) => return Err(e.into()),
                }
            }
            InnerSpec::Iterative { method, max_iter } => Mode::Iterative {
                method,
                max_iter: max_iter.unwrap_or(10 * n).max(1),
            },
        };
        Ok(Self {
            matrix,
            symmetric,
            mode,
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.mode, Mode::Direct(_))
    }

    /// Solves `P z = r` (or `P^T z = r`) to `|P z - r| <= target` in iterative mode.
    pub fn solve(&self, r: &[f64], target: f64, transpose: bool) -> Result<InnerOutcome> {
        match &self.mode {
            Mode::Direct(f) => {
                let x = match f {
                    Factor::Dense(lu) => lu.solve(r, transpose)?,
                    Factor::Band(lu) => lu.solve(r, transpose)?,
                };
                Ok(InnerOutcome {
                    x,
                    residual_norm: None,
                    iterations: 0,
                    status: InnerStatus::Exact,
                })
            }
            Mode::Iterative { method, max_iter } => {
                let transpose = transpose && !self.symmetric;
                refine(self, *method, r, target, transpose, *max_iter)
            }
        }
    }

    fn apply(&self, x: &[f64], transpose: bool) -> Vec<f64> {
        self.matrix.spmv(x, transpose).expect("inner dimensions validated")
    }
}

/// Restarted Krylov iteration with explicit residual recomputation between passes.
fn refine(
    s: &InnerSolver,
    method: IterMethod,
    b: &[f64],
    target: f64,
    transpose: bool,
    max_iter: usize,
) -> Result<InnerOutcome> {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm <= target {
        return Ok(InnerOutcome {
            x,
            residual_norm: Some(bnorm),
            iterations: 0,
            status: InnerStatus::Converged,
        });
    }
    let mut r = b.to_vec();
    let mut prev = bnorm;
    let mut total = 0;
    loop {
        let budget = max_iter - total;
        let (dx, used) = match method {
            IterMethod::Bicg => bicg_pass(s, &r, target, transpose, budget),
            IterMethod::Bicgstab => bicgstab_pass(s, &r, target, transpose, budget),
        };
        total += used;
        axpy(1.0, &dx, &mut x);
        let ax = s.apply(&x, transpose);
        r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let rn = norm2(&r);
        if rn <= target {
            return Ok(InnerOutcome {
                x,
                residual_norm: Some(rn),
                iterations: total,
                status: InnerStatus::Converged,
            });
        }
        let stalled = rn > 0.5 * prev || used == 0;
        if stalled || total >= max_iter {
            if rn <= FLOOR_ACCEPT * bnorm {
                return Ok(InnerOutcome {
                    x,
                    residual_norm: Some(rn),
                    iterations: total,
                    status: InnerStatus::AccuracyFloor,
                });
            }
            return Err(Error::InnerFailure {
                achieved: rn / bnorm,
                requested: target / bnorm,
                iterations: total,
            });
        }
        prev = rn;
    }
}

/// One BiCG pass for `A dx = r0` from `dx = 0`; stops on the recursive residual.
fn bicg_pass(s: &InnerSolver, r0: &[f64], target: f64, transpose: bool, budget: usize) -> (Vec<f64>, usize) {
    let n = r0.len();
    let mut x = vec![0.0; n];
    let mut r = r0.to_vec();
    let mut rs = r0.to_vec();
    let mut p = r.clone();
    let mut ps = rs.clone();
    let mut rho = dot(&rs, &r);
    let mut it = 0;
    while it < budget {
        if rho == 0.0 || !rho.is_finite() {
            break;
        }
        let q = s.apply(&p, transpose);
        let denom = dot(&ps, &q);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let alpha = rho / denom;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        it += 1;
        if norm2(&r) <= target {
            break;
        }
        if s.symmetric {
            // shadow sequence coincides with the primary one
            rs.copy_from_slice(&r);
        } else {
            let qs = s.apply(&ps, !transpose);
            axpy(-alpha, &qs, &mut rs);
        }
        let rho_new = dot(&rs, &r);
        let beta = rho_new / rho;
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
            ps[i] = rs[i] + beta * ps[i];
        }
    }
    (x, it)
}

fn bicgstab_pass(s: &InnerSolver, r0: &[f64], target: f64, transpose: bool, budget: usize) -> (Vec<f64>, usize) {
    let n = r0.len();
    let mut x = vec![0.0; n];
    let mut r = r0.to_vec();
    let rhat = r0.to_vec();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut it = 0;
    while it < budget {
        let rho_new = dot(&rhat, &r);
        if rho_new == 0.0 || omega == 0.0 || !rho_new.is_finite() {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        v = s.apply(&p, transpose);
        let denom = dot(&rhat, &v);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        alpha = rho / denom;
        let sv: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        it += 1;
        if norm2(&sv) <= target {
            axpy(alpha, &p, &mut x);
            break;
        }
        let t = s.apply(&sv, transpose);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            axpy(alpha, &p, &mut x);
            break;
        }
        omega = dot(&t, &sv) / tt;
        for i in 0..n {
            x[i] += alpha * p[i] + omega * sv[i];
            r[i] = sv[i] - omega * t[i];
        }
        if norm2(&r) <= target {
            break;
        }
    }
    (x, it)
}
