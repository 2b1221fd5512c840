//! Result types shared by both solvers.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::precond::InnerRecord;

/// Supplies `A(mu) x` for residual checks: either the true parameterized
/// matrix or its Chebyshev interpolant.
pub trait ParamOperator {
    fn n(&self) -> usize;
    fn apply_at(&self, mu: f64, x: &[f64]) -> Result<Vec<f64>>;
    /// `true` when `apply_at` uses the original `A(mu)` rather than an interpolant.
    fn is_true_operator(&self) -> bool;
}

impl ParamOperator for crate::chebyshev::MatrixChebPoly {
    fn n(&self) -> usize {
        crate::chebyshev::MatrixChebPoly::n(self)
    }

    fn apply_at(&self, mu: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.apply(mu, x)
    }

    fn is_true_operator(&self) -> bool {
        false
    }
}

/// `|A(mu) x - b| / |b|`.
pub fn relative_residual(op: &dyn ParamOperator, mu: f64, x: &[f64], b: &[f64]) -> Result<f64> {
    let ax = op.apply_at(mu, x)?;
    let bn = crate::linalg::vec::norm2(b);
    let rn = crate::linalg::vec::norm2(&crate::linalg::vec::sub(&ax, b));
    Ok(if bn > 0.0 { rn / bn } else { rn })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Right,
    Left,
}

/// Shifts sorted by distance to `sigma` (ties: smaller `mu` first), so the
/// last entry is the farthest shift.
#[derive(Debug, Clone)]
pub struct ShiftSet {
    sigma: f64,
    mus: Vec<f64>,
    /// Position of each sorted shift in the caller's list.
    order: Vec<usize>,
}

impl ShiftSet {
    pub fn new(sigma: f64, mus: &[f64], a: f64) -> Result<Self> {
        if mus.is_empty() {
            return Err(Error::InvalidInput("at least one shift is required".into()));
        }
        for &mu in mus {
            if !mu.is_finite() || mu.abs() > a {
                return Err(Error::InvalidInput(format!("shift {mu} lies outside [-{a}, {a}]")));
            }
            if mu == sigma {
                return Err(Error::InvalidInput(format!("shift {mu} coincides with sigma")));
            }
        }
        let mut order: Vec<usize> = (0..mus.len()).collect();
        order.sort_by(|&i, &j| {
            let (di, dj) = ((mus[i] - sigma).abs(), (mus[j] - sigma).abs());
            di.total_cmp(&dj).then(mus[i].total_cmp(&mus[j]))
        });
        Ok(Self {
            sigma,
            mus: order.iter().map(|&i| mus[i]).collect(),
            order,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Sorted shifts.
    pub fn mus(&self) -> &[f64] {
        &self.mus
    }

    pub fn len(&self) -> usize {
        self.mus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mus.is_empty()
    }

    /// Caller index of sorted shift `k`.
    pub fn original_index(&self, k: usize) -> usize {
        self.order[k]
    }

    /// `-1 / (-mu + sigma)`.
    pub fn omega(&self, k: usize) -> f64 {
        -1.0 / (-self.mus[k] + self.sigma)
    }

    /// Index of the farthest shift.
    pub fn farthest(&self) -> usize {
        self.mus.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    Breakdown(String),
    InnerFailure(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct ShiftResult {
    pub mu: f64,
    pub x: Vec<f64>,
    pub converged: bool,
    /// Iteration at which the residual check first passed.
    pub iterations: Option<usize>,
    /// Final `|A(mu) x - b| / |b|`.
    pub relres_true: f64,
    /// Recursive relative residual estimate per iteration.
    pub relres_recursive: Vec<f64>,
    /// Explicit relative residual per iteration, where computed.
    pub relres_true_history: Vec<Option<f64>>,
    pub breakdown: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InexactDiagnostics {
    pub epsilon: f64,
    pub policy: String,
    /// Inner tolerance used at each iteration.
    pub inner_tols: Vec<f64>,
    /// One record per preconditioner application (forward and adjoint interleaved).
    pub inner_records: Vec<InnerRecord>,
    /// `Delta_i` for the farthest shift.
    pub deltas: Vec<f64>,
    /// Residual gap `delta_j` per iteration for the farthest shift (diagnostics mode).
    pub residual_gaps: Option<Vec<f64>>,
    pub tridiag_solves: usize,
    pub basis_products: usize,
    pub sigma_min_refreshes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub solver: String,
    pub sigma: f64,
    /// Shifts in the caller's order.
    pub shifts: Vec<ShiftResult>,
    pub iterations: usize,
    pub termination: Termination,
    /// Elapsed seconds since the end of precomputation, per completed iteration.
    pub cumulative_seconds: Vec<f64>,
    pub inner_solves: usize,
    pub true_operator: bool,
    pub inexact: Option<InexactDiagnostics>,
}

impl SolveReport {
    pub fn all_converged(&self) -> bool {
        self.termination == Termination::Converged && self.shifts.iter().all(|s| s.converged)
    }

    /// Durations of each iteration.
    pub fn iteration_seconds(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cumulative_seconds
            .iter()
            .map(|&t| {
                let dt = t - prev;
                prev = t;
                dt
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_ordering_and_tie_rule() {
        let s = ShiftSet::new(3.0, &[2.5, 3.25, 3.5, 2.75], 5.0).unwrap();
        assert_eq!(s.mus(), &[2.75, 3.25, 2.5, 3.5]);
        assert_eq!(s.farthest(), 3);
        assert_eq!(s.original_index(0), 3);
        assert!((s.omega(0) - (-1.0 / 0.25)).abs() < 1e-15);
    }

    #[test]
    fn invalid_shifts_rejected() {
        assert!(ShiftSet::new(0.0, &[0.0], 1.0).is_err());
        assert!(ShiftSet::new(0.0, &[1.5], 1.0).is_err());
        assert!(ShiftSet::new(0.0, &[], 1.0).is_err());
    }
}
