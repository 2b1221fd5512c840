//! Multishift BiCG with exact shift-and-invert preconditioning.
//!
//! One BiCG run on the seed operator `A_s = M (K - sigma M)^{-1}` (right side)
//! or `A_s = K^{-1} M` (left side, `sigma = 0`) yields iterates for every
//! shifted system `(A_s + c I) x = r_0`, `c = 1 / (sigma - mu)`, through the
//! colinearity `r_i = zeta_i r~_i` of seed and shifted residuals.

use std::time::Instant;

use crate::companion::{build_btilde, CompanionOperator};
use crate::error::{Error, Result};
use crate::linalg::vec::{axpy, dot, norm2};
use crate::precond::ShiftInvert;
use crate::report::{relative_residual, ParamOperator, ShiftResult, ShiftSet, Side, SolveReport, Termination};

#[derive(Debug, Clone)]
pub struct ExactOptions {
    pub tol: f64,
    pub maxit: usize,
    pub side: Side,
    /// Shadow starting vector; defaults to the seed starting residual.
    pub c_tilde: Option<Vec<f64>>,
    /// Compute explicit residuals of every shift at every iteration.
    pub true_residual_every_iteration: bool,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            maxit: 300,
            side: Side::Right,
            c_tilde: None,
            true_residual_every_iteration: false,
        }
    }
}

/// State handed to an observer after each iteration.
pub struct IterationView<'a> {
    /// Number of completed iterations.
    pub iteration: usize,
    pub r: &'a [f64],
    pub s: &'a [f64],
    pub u_seed: &'a [f64],
    /// Sorted shifts with their current colinearity factors and iterates.
    pub mus: &'a [f64],
    pub zetas: Vec<f64>,
    pub u_tilde: Vec<&'a [f64]>,
    /// False once a shift has converged (and is frozen) or broken down.
    pub active: Vec<bool>,
}

/// Next colinearity factor; `None` when it vanishes.
pub fn zeta_update(zeta_prev: f64, zeta: f64, omega: f64, alpha: f64, alpha_prev: f64, beta: f64) -> Option<f64> {
    let g = beta * alpha / alpha_prev;
    let next = (1.0 - alpha * omega - g) * zeta + g * zeta_prev;
    if next == 0.0 || !next.is_finite() {
        None
    } else {
        Some(next)
    }
}

/// Step length and direction weight of a shifted system.
pub fn shifted_coeffs(zeta_prev: f64, zeta: f64, zeta_next: f64, alpha: f64, beta: f64) -> (f64, f64) {
    let alpha_t = -alpha * zeta / zeta_next;
    let q = zeta_prev / zeta;
    (alpha_t, q * q * beta)
}

/// First `n` entries of `omega (K - sigma M)^{-1} u~`.
pub fn post_process(prec: &dyn ShiftInvert, n: usize, omega: f64, u_tilde: &[f64]) -> Result<Vec<f64>> {
    let z = prec.apply(u_tilde, 0.0)?.out;
    Ok(z[..n].iter().map(|v| omega * v).collect())
}

struct ShiftState {
    zeta_prev: f64,
    zeta: f64,
    v: Vec<f64>,
    u: Vec<f64>,
    broken: bool,
    converged_at: Option<usize>,
    x: Option<Vec<f64>>,
    last_true: f64,
    hist_rec: Vec<f64>,
    hist_true: Vec<Option<f64>>,
}

pub fn solve_exact(
    op: &CompanionOperator,
    prec: &dyn ShiftInvert,
    b: &[f64],
    shifts: &ShiftSet,
    opts: &ExactOptions,
    residual_op: Option<&dyn ParamOperator>,
) -> Result<SolveReport> {
    solve_exact_observed(op, prec, b, shifts, opts, residual_op, &mut |_| {})
}

pub fn solve_exact_observed(
    op: &CompanionOperator,
    prec: &dyn ShiftInvert,
    b: &[f64],
    shifts: &ShiftSet,
    opts: &ExactOptions,
    residual_op: Option<&dyn ParamOperator>,
    observer: &mut dyn FnMut(&IterationView),
) -> Result<SolveReport> {
    let (n, d) = (op.n(), op.d());
    let dn = n * d;
    if b.len() != n {
        return Err(Error::InvalidInput(format!("right-hand side has length {}, expected {n}", b.len())));
    }
    if prec.dim() != dn {
        return Err(Error::InvalidInput("preconditioner does not match the companion operator".into()));
    }
    if !prec.is_exact() {
        return Err(Error::InvalidInput("this solver requires exact (direct) inner solves".into()));
    }
    if shifts.sigma() != prec.sigma() {
        return Err(Error::InvalidInput("shift set and preconditioner use different sigma".into()));
    }
    if opts.side == Side::Left && prec.sigma() != 0.0 {
        return Err(Error::InvalidInput("left preconditioning requires sigma = 0".into()));
    }
    let resid_op: &dyn ParamOperator = residual_op.unwrap_or(op.poly());
    let bt = build_btilde(b, d).into_vec();
    // left side works with K^{-1} b~
    let r0 = match opts.side {
        Side::Right => bt.clone(),
        Side::Left => prec.apply(&bt, 0.0)?.out,
    };
    let c_tilde = opts.c_tilde.clone().unwrap_or_else(|| r0.clone());
    if c_tilde.len() != dn {
        return Err(Error::InvalidInput(format!("shadow vector has length {}, expected {dn}", c_tilde.len())));
    }
    if dot(&r0, &c_tilde) == 0.0 {
        return Err(Error::InvalidInput("shadow vector is orthogonal to the starting residual".into()));
    }
    let r0_norm = norm2(&r0);

    let mut r = r0;
    let mut s = c_tilde;
    let mut vs = vec![0.0; dn];
    let mut ws = vec![0.0; dn];
    let mut u_seed = vec![0.0; dn];
    let (mut rho_prev, mut alpha_prev) = (1.0, 1.0);
    let m = shifts.len();
    let mut states: Vec<ShiftState> = (0..m)
        .map(|_| ShiftState {
            zeta_prev: 1.0,
            zeta: 1.0,
            v: vec![0.0; dn],
            u: vec![0.0; dn],
            broken: false,
            converged_at: None,
            x: None,
            last_true: f64::NAN,
            hist_rec: Vec::new(),
            hist_true: Vec::new(),
        })
        .collect();
    let omegas: Vec<f64> = (0..m).map(|k| shifts.omega(k)).collect();
    let far = shifts.farthest();
    let mut far_passed = false;
    let mut cumulative = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    let extract = |st: &ShiftState, k: usize| -> Result<Vec<f64>> {
        match opts.side {
            Side::Right => post_process(prec, n, omegas[k], &st.u),
            Side::Left => Ok(st.u[..n].iter().map(|v| omegas[k] * v).collect()),
        }
    };

    let start = Instant::now();
    for i in 0..opts.maxit {
        let rho = dot(&r, &s);
        if rho.abs() <= 1e-14 * norm2(&r) * norm2(&s) || !rho.is_finite() {
            termination = Termination::Breakdown(format!("Lanczos breakdown (rho = {rho:e}) at iteration {i}"));
            break;
        }
        let beta = -rho / rho_prev;
        for j in 0..dn {
            vs[j] = r[j] - beta * vs[j];
            ws[j] = s[j] - beta * ws[j];
        }
        let step1 = match opts.side {
            Side::Right => prec.apply(&vs, 0.0).and_then(|a| op.apply_m(&a.out, false)),
            Side::Left => op.apply_m(&vs, false).and_then(|mv| Ok(prec.apply(&mv, 0.0)?.out)),
        };
        let v1 = match step1 {
            Ok(v) => v,
            Err(e) => {
                termination = Termination::InnerFailure(e.to_string());
                break;
            }
        };
        let denom = dot(&ws, &v1);
        if denom == 0.0 || !denom.is_finite() {
            termination = Termination::Breakdown(format!("zero pivot in the seed recurrence at iteration {i}"));
            break;
        }
        let alpha = rho / denom;
        let step2 = match opts.side {
            Side::Right => op.apply_m(&ws, true).and_then(|mw| Ok(prec.apply_transpose(&mw, 0.0)?.out)),
            Side::Left => prec.apply_transpose(&ws, 0.0).and_then(|a| op.apply_m(&a.out, true)),
        };
        let v2 = match step2 {
            Ok(v) => v,
            Err(e) => {
                termination = Termination::InnerFailure(e.to_string());
                break;
            }
        };

        for (k, st) in states.iter_mut().enumerate() {
            if st.broken || st.converged_at.is_some() {
                continue;
            }
            let Some(zeta_next) = zeta_update(st.zeta_prev, st.zeta, omegas[k], alpha, alpha_prev, beta) else {
                st.broken = true;
                continue;
            };
            let (alpha_t, beta_t) = shifted_coeffs(st.zeta_prev, st.zeta, zeta_next, alpha, beta);
            let inv = 1.0 / st.zeta;
            for j in 0..dn {
                st.v[j] = r[j] * inv - beta_t * st.v[j];
            }
            axpy(alpha_t, &st.v, &mut st.u);
            st.zeta_prev = st.zeta;
            st.zeta = zeta_next;
        }
        axpy(-alpha, &v1, &mut r);
        axpy(-alpha, &v2, &mut s);
        axpy(alpha, &vs, &mut u_seed);
        rho_prev = rho;
        alpha_prev = alpha;
        iterations = i + 1;

        let rn = norm2(&r);
        for st in states.iter_mut() {
            let est = match (st.converged_at, st.hist_rec.last()) {
                (Some(_), Some(&last)) => last,
                _ => rn / (st.zeta.abs() * r0_norm),
            };
            st.hist_rec.push(est);
        }
        observer(&IterationView {
            iteration: iterations,
            r: &r,
            s: &s,
            u_seed: &u_seed,
            mus: shifts.mus(),
            zetas: states.iter().map(|st| st.zeta).collect(),
            u_tilde: states.iter().map(|st| st.u.as_slice()).collect(),
            active: states.iter().map(|st| !st.broken && st.converged_at.is_none()).collect(),
        });

        // residual checks: farthest shift first, then the rest
        let check_all = far_passed || opts.true_residual_every_iteration;
        let mut checked = vec![false; m];
        let mut failure = None;
        for k in (0..m).rev() {
            let st = &states[k];
            if st.converged_at.is_some() || st.broken || !(k == far || check_all) {
                continue;
            }
            let x = match extract(st, k) {
                Ok(x) => x,
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            };
            let rel = relative_residual(resid_op, shifts.mus()[k], &x, b)?;
            checked[k] = true;
            let st = &mut states[k];
            st.last_true = rel;
            st.hist_true.push(Some(rel));
            if rel <= opts.tol {
                st.converged_at = Some(iterations);
                st.x = Some(x);
                if k == far {
                    far_passed = true;
                }
            }
        }
        if let Some(msg) = failure {
            termination = Termination::InnerFailure(msg);
            break;
        }
        // the farthest shift just passed: check everyone in the same iteration
        if far_passed && !check_all {
            for k in 0..m {
                let st = &states[k];
                if st.converged_at.is_some() || st.broken || checked[k] {
                    continue;
                }
                let x = extract(st, k)?;
                let rel = relative_residual(resid_op, shifts.mus()[k], &x, b)?;
                checked[k] = true;
                let st = &mut states[k];
                st.last_true = rel;
                st.hist_true.push(Some(rel));
                if rel <= opts.tol {
                    st.converged_at = Some(iterations);
                    st.x = Some(x);
                }
            }
        }
        for (k, st) in states.iter_mut().enumerate() {
            if !checked[k] {
                st.hist_true.push(None);
            }
        }
        cumulative.push(start.elapsed().as_secs_f64());
        if states.iter().all(|st| st.converged_at.is_some() || st.broken) {
            termination = if states.iter().all(|st| st.converged_at.is_some()) {
                Termination::Converged
            } else {
                Termination::Breakdown("colinearity factor vanished for some shifts".into())
            };
            break;
        }
    }

    let mut results: Vec<Option<ShiftResult>> = vec![None; m];
    for (k, mut st) in states.into_iter().enumerate() {
        let x = match st.x.take() {
            Some(x) => x,
            None => extract(&st, k)?,
        };
        let relres_true = if st.converged_at.is_some() {
            st.last_true
        } else {
            relative_residual(resid_op, shifts.mus()[k], &x, b)?
        };
        results[shifts.original_index(k)] = Some(ShiftResult {
            mu: shifts.mus()[k],
            x,
            converged: st.converged_at.is_some(),
            iterations: st.converged_at,
            relres_true,
            relres_recursive: st.hist_rec,
            relres_true_history: st.hist_true,
            breakdown: st.broken,
        });
    }
    Ok(SolveReport {
        solver: "exact".into(),
        sigma: shifts.sigma(),
        shifts: results.into_iter().map(|r| r.expect("every shift reported")).collect(),
        iterations,
        termination,
        cumulative_seconds: cumulative,
        inner_solves: prec.inner_solves(),
        true_operator: resid_op.is_true_operator(),
        inexact: None,
    })
}
