//! Multishift BiCG in Lanczos form with inexact preconditioner applications.
//!
//! The two-sided Lanczos process builds `M Z_j = V_j T_j + beta_j v_{j+1} e_j^T`
//! where `z_i ~ (K - sigma M)^{-1} v_i` is computed only to a tolerance that may
//! change with `i`. Each shift solves `(I + (sigma - mu) T_j) y = beta e_1` and
//! takes `u = Z_j y`.

use std::time::Instant;

use serde::Serialize;

use crate::companion::{build_btilde, CompanionOperator};
use crate::error::{Error, Result};
use crate::linalg::vec::{axpy, dot, norm2, sub};
use crate::linalg::{givens, smallest_singular_value, DenseMatrix};
use crate::precond::{InnerRecord, ShiftInvert};
use crate::report::{
    relative_residual, InexactDiagnostics, ParamOperator, ShiftResult, ShiftSet, SolveReport, Termination,
};

/// First inner tolerance of the adaptive rule.
pub const FIRST_TOL: f64 = 1e-14;
/// Clamp range for inner tolerances.
pub const TOL_FLOOR: f64 = 1e-14;
pub const TOL_CEIL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMinMode {
    /// Re-estimated from the current shifted tridiagonal on a doubling schedule.
    Running,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TolPolicy {
    /// `tol_i = epsilon / |last component of y_{i-1}(mu*)|`.
    Adaptive { epsilon: f64 },
    /// `|p_i| <= (1/j) (sigma_min / Delta_i) epsilon` with `j` = the budget (maxit by default).
    Bound {
        epsilon: f64,
        j_budget: Option<usize>,
        sigma_min: SigmaMinMode,
    },
    Fixed { tol: f64 },
}

impl TolPolicy {
    fn epsilon(&self) -> f64 {
        match *self {
            TolPolicy::Adaptive { epsilon } | TolPolicy::Bound { epsilon, .. } => epsilon,
            TolPolicy::Fixed { tol } => tol,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            TolPolicy::Adaptive { .. } => "adaptive",
            TolPolicy::Bound { .. } => "bound",
            TolPolicy::Fixed { .. } => "fixed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct InexactOptions {
    pub tol: f64,
    pub maxit: usize,
    pub policy: TolPolicy,
    pub c_tilde: Option<Vec<f64>>,
    /// Keep full basis vectors and defects, and track the residual gap of the farthest shift.
    pub diagnostics: bool,
    /// Keep iterating (without changing converged results) until this many iterations ran.
    pub min_iterations: usize,
    pub true_residual_every_iteration: bool,
}

impl Default for InexactOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            maxit: 300,
            policy: TolPolicy::Adaptive { epsilon: 1e-12 },
            c_tilde: None,
            diagnostics: false,
            min_iterations: 0,
            true_residual_every_iteration: false,
        }
    }
}

/// `epsilon / |component|`, clamped; the flag reports a vanishing component.
pub fn adaptive_tol(epsilon: f64, prev_last_component: f64) -> (f64, bool) {
    if prev_last_component == 0.0 || !prev_last_component.is_finite() {
        return (TOL_CEIL, true);
    }
    ((epsilon / prev_last_component.abs()).clamp(TOL_FLOOR, TOL_CEIL), false)
}

/// `(1/j) (sigma_min / Delta_i) epsilon`.
pub fn gap_bound(epsilon: f64, j_budget: usize, sigma_min: f64, delta_i: f64) -> f64 {
    sigma_min / delta_i * epsilon / j_budget as f64
}

/// Lanczos coefficients: `alphas[i]` is the diagonal entry of column `i`,
/// `betas[i]` the subdiagonal below it and `gammas[i]` the superdiagonal to its right.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Tridiagonal {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Dense `I + (sigma - mu) T` restricted to the leading `j x j` block.
    pub fn shifted_dense(&self, j: usize, mu: f64, sigma: f64) -> DenseMatrix {
        let c = sigma - mu;
        let mut h = DenseMatrix::identity(j);
        for i in 0..j {
            h[(i, i)] += c * self.alphas[i];
            if i + 1 < j {
                h[(i + 1, i)] = c * self.betas[i];
                h[(i, i + 1)] = c * self.gammas[i];
            }
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct ShiftedTridiagSolve {
    pub y: Vec<f64>,
    /// `Delta_1 .. Delta_j`.
    pub deltas: Vec<f64>,
    /// `Delta_{j+1}`, available when the subdiagonal entry below column `j` is known.
    pub delta_next: Option<f64>,
    pub cosines: Vec<f64>,
    pub sines: Vec<f64>,
    /// Last diagonal entry of the triangular factor of each leading `i x i` block.
    pub leading_diag: Vec<f64>,
}

/// Solves `(I + (sigma - mu) T_j) y = beta e_1` by Givens QR; `T_j` is the
/// leading `j x j` block of `t`.
pub fn shifted_tridiag_solve(t: &Tridiagonal, j: usize, mu: f64, sigma: f64, beta: f64) -> Result<ShiftedTridiagSolve> {
    if j == 0 || j > t.len() {
        return Err(Error::InvalidInput(format!("tridiagonal of size {} cannot provide {j} columns", t.len())));
    }
    let c = sigma - mu;
    let h = |i: usize| 1.0 + c * t.alphas[i];
    let mut r0 = vec![0.0; j];
    let mut r1 = vec![0.0; j];
    let mut r2 = vec![0.0; j];
    let mut g = vec![0.0; j];
    g[0] = beta;
    let mut deltas = Vec::with_capacity(j);
    let mut leading_diag = Vec::with_capacity(j);
    let mut cosines = Vec::with_capacity(j);
    let mut sines = Vec::with_capacity(j);
    let mut delta = beta.abs();
    let mut a = h(0);
    let mut b = if j >= 2 { c * t.gammas[0] } else { 0.0 };
    for k in 0..j {
        deltas.push(delta);
        leading_diag.push(a);
        if k + 1 == j {
            r0[k] = a;
            break;
        }
        let low = c * t.betas[k];
        let (rot, r) = givens(a, low);
        cosines.push(rot.c);
        sines.push(rot.s);
        r0[k] = r;
        let hn = h(k + 1);
        let un = if k + 2 < j { c * t.gammas[k + 1] } else { 0.0 };
        r1[k] = rot.c * b + rot.s * hn;
        r2[k] = rot.s * un;
        a = -rot.s * b + rot.c * hn;
        b = rot.c * un;
        let gk = g[k];
        g[k] = rot.c * gk;
        g[k + 1] = -rot.s * gk;
        delta *= rot.s.abs();
    }
    let delta_next = if j <= t.betas.len() {
        let (rot, _) = givens(a, c * t.betas[j - 1]);
        Some(delta * rot.s.abs())
    } else {
        None
    };
    let mut y = vec![0.0; j];
    for i in (0..j).rev() {
        if r0[i] == 0.0 || !r0[i].is_finite() {
            return Err(Error::InvalidInput(format!("shifted tridiagonal is singular at mu = {mu}")));
        }
        let mut s = g[i];
        if i + 1 < j {
            s -= r1[i] * y[i + 1];
        }
        if i + 2 < j {
            s -= r2[i] * y[i + 2];
        }
        y[i] = s / r0[i];
    }
    Ok(ShiftedTridiagSolve {
        y,
        deltas,
        delta_next,
        cosines,
        sines,
        leading_diag,
    })
}

/// Full basis data kept in diagnostics mode.
#[derive(Debug, Clone, Default)]
pub struct LanczosTrace {
    pub beta0: f64,
    pub v: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub xhat: Vec<Vec<f64>>,
    /// Defects `(K - sigma M) z_i - v_i`.
    pub defects: Vec<Vec<f64>>,
    pub t: Tridiagonal,
}

/// Residual-gap quantities of one shift at the current iteration.
#[derive(Debug, Clone, Copy)]
pub struct ResidualGap {
    pub r_in_norm: f64,
    pub r_ex_norm: f64,
    pub delta: f64,
    /// `|P_j y_j|` from the logged defects.
    pub defect_combination_norm: f64,
    /// `|r_in - (r_ex - P_j y_j)|`.
    pub identity_error: f64,
}

/// Explicit residual gap using the stored basis; needs diagnostics mode.
pub fn residual_gap(
    op: &CompanionOperator,
    trace: &LanczosTrace,
    b: &[f64],
    mu: f64,
    sigma: f64,
    y: &[f64],
) -> Result<ResidualGap> {
    let j = y.len();
    if trace.z.len() < j || trace.v.len() < j + 1 || trace.defects.len() < j {
        return Err(Error::MissingDiagnostics("basis and defect logs are required".into()));
    }
    let dn = op.dim();
    let mut u = vec![0.0; dn];
    let mut py = vec![0.0; dn];
    for i in 0..j {
        axpy(y[i], &trace.z[i], &mut u);
        axpy(y[i], &trace.defects[i], &mut py);
    }
    let bt = build_btilde(b, op.d()).into_vec();
    let r_in = sub(&bt, &op.apply_pencil(mu, &u, false)?);
    let scale = (mu - sigma) * trace.t.betas[j - 1] * y[j - 1];
    let r_ex: Vec<f64> = trace.v[j].iter().map(|v| scale * v).collect();
    let gap = sub(&r_in, &r_ex);
    let predicted: Vec<f64> = r_ex.iter().zip(&py).map(|(e, p)| e - p).collect();
    Ok(ResidualGap {
        r_in_norm: norm2(&r_in),
        r_ex_norm: norm2(&r_ex),
        delta: norm2(&gap),
        defect_combination_norm: norm2(&py),
        identity_error: norm2(&sub(&r_in, &predicted)),
    })
}

/// Per-iteration data handed to an observer.
pub struct InexactView<'a> {
    pub iteration: usize,
    pub t: &'a Tridiagonal,
    pub beta0: f64,
    /// First `n` rows of `z_1 .. z_j`.
    pub z_head: &'a [Vec<f64>],
    pub trace: Option<&'a LanczosTrace>,
    pub inner_tol: f64,
}

struct ShiftState {
    converged_at: Option<usize>,
    x: Option<Vec<f64>>,
    last_true: f64,
    hist_rec: Vec<f64>,
    hist_true: Vec<Option<f64>>,
    singular: bool,
}

pub fn solve_inexact(
    op: &CompanionOperator,
    prec: &dyn ShiftInvert,
    b: &[f64],
    shifts: &ShiftSet,
    opts: &InexactOptions,
    residual_op: Option<&dyn ParamOperator>,
) -> Result<SolveReport> {
    solve_inexact_observed(op, prec, b, shifts, opts, residual_op, &mut |_| {}).map(|(r, _)| r)
}

pub fn solve_inexact_observed(
    op: &CompanionOperator,
    prec: &dyn ShiftInvert,
    b: &[f64],
    shifts: &ShiftSet,
    opts: &InexactOptions,
    residual_op: Option<&dyn ParamOperator>,
    observer: &mut dyn FnMut(&InexactView),
) -> Result<(SolveReport, Option<LanczosTrace>)> {
    let (n, d) = (op.n(), op.d());
    let dn = n * d;
    if b.len() != n {
        return Err(Error::InvalidInput(format!("right-hand side has length {}, expected {n}", b.len())));
    }
    if prec.dim() != dn {
        return Err(Error::InvalidInput("preconditioner does not match the companion operator".into()));
    }
    if shifts.sigma() != prec.sigma() {
        return Err(Error::InvalidInput("shift set and preconditioner use different sigma".into()));
    }
    let sigma = shifts.sigma();
    let resid_op: &dyn ParamOperator = residual_op.unwrap_or(op.poly());
    let bt = build_btilde(b, d).into_vec();
    let c_tilde = opts.c_tilde.clone().unwrap_or_else(|| bt.clone());
    if c_tilde.len() != dn {
        return Err(Error::InvalidInput(format!("shadow vector has length {}, expected {dn}", c_tilde.len())));
    }
    let beta0 = norm2(&bt);
    let gamma0 = dot(&c_tilde, &bt) / beta0;
    if gamma0 == 0.0 || beta0 == 0.0 {
        return Err(Error::InvalidInput("shadow vector is orthogonal to the right-hand side".into()));
    }

    let m = shifts.len();
    let far = shifts.farthest();
    let mu_far = shifts.mus()[far];
    let mut states: Vec<ShiftState> = (0..m)
        .map(|_| ShiftState {
            converged_at: None,
            x: None,
            last_true: f64::NAN,
            hist_rec: Vec::new(),
            hist_true: Vec::new(),
            singular: false,
        })
        .collect();

    let mut t = Tridiagonal::default();
    let mut z_head: Vec<Vec<f64>> = Vec::new();
    let mut trace = opts.diagnostics.then(|| LanczosTrace {
        beta0,
        ..Default::default()
    });
    let mut inner_tols = Vec::new();
    let mut inner_records: Vec<InnerRecord> = Vec::new();
    let mut deltas = Vec::new();
    let mut gaps = opts.diagnostics.then(Vec::new);
    let (mut tridiag_solves, mut basis_products, mut sigma_refreshes) = (0usize, 0usize, 0usize);

    let mut v_prev = vec![0.0; dn];
    let mut w_prev = vec![0.0; dn];
    let mut v = bt.iter().map(|x| x / beta0).collect::<Vec<_>>();
    let mut w = c_tilde.iter().map(|x| x / gamma0).collect::<Vec<_>>();
    let (mut beta_prev, mut gamma_prev) = (beta0, gamma0);
    if let Some(tr) = trace.as_mut() {
        tr.v.push(v.clone());
        tr.w.push(w.clone());
    }

    // information carried from the previous iteration for the tolerance rules
    let mut prev_last_component = f64::NAN;
    let mut prev_delta_next = beta0.abs();
    let mut sigma_min_est = match opts.policy {
        TolPolicy::Bound { sigma_min: SigmaMinMode::Fixed(s), .. } => s,
        _ => 1.0,
    };
    let mut next_refresh = 1usize;
    let j_budget = match opts.policy {
        TolPolicy::Bound { j_budget, .. } => j_budget.unwrap_or(opts.maxit).max(1),
        _ => opts.maxit.max(1),
    };

    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut cumulative = Vec::new();
    let mut far_passed = false;
    let start = Instant::now();

    let x_from = |z_head: &[Vec<f64>], y: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (zi, yi) in z_head.iter().zip(y) {
            axpy(*yi, zi, &mut x);
        }
        x
    };

    for i in 1..=opts.maxit {
        let tol_i = match opts.policy {
            TolPolicy::Fixed { tol } => tol,
            TolPolicy::Adaptive { epsilon } => {
                if i == 1 {
                    FIRST_TOL
                } else {
                    adaptive_tol(epsilon, prev_last_component).0
                }
            }
            TolPolicy::Bound { epsilon, sigma_min, .. } => {
                if sigma_min == SigmaMinMode::Running && i >= 2 && i - 1 >= next_refresh {
                    let h = t.shifted_dense(i - 1, mu_far, sigma);
                    sigma_min_est = smallest_singular_value(&h);
                    sigma_refreshes += 1;
                    next_refresh *= 2;
                }
                gap_bound(epsilon, j_budget, sigma_min_est, prev_delta_next)
            }
        };
        inner_tols.push(tol_i);
        deltas.push(prev_delta_next);

        let zr = prec.apply(&v, tol_i);
        let xr = zr.and_then(|z| {
            let mw = op.apply_m(&w, true)?;
            Ok((z, prec.apply_transpose(&mw, tol_i)?))
        });
        let (za, xa) = match xr {
            Ok(p) => p,
            Err(e) => {
                termination = Termination::InnerFailure(e.to_string());
                break;
            }
        };
        inner_records.push(za.record.clone());
        inner_records.push(xa.record.clone());
        let mz = op.apply_m(&za.out, false)?;
        let alpha = dot(&w, &mz);
        let mut r_hat = mz;
        for k in 0..dn {
            r_hat[k] -= alpha * v[k] + gamma_prev_term(i, gamma_prev) * v_prev[k];
        }
        let mut s_hat = xa.out.clone();
        for k in 0..dn {
            s_hat[k] -= alpha * w[k] + beta_prev_term(i, beta_prev) * w_prev[k];
        }
        let beta = norm2(&r_hat);
        let gamma = if beta > 0.0 { dot(&s_hat, &r_hat) / beta } else { 0.0 };
        t.alphas.push(alpha);
        t.betas.push(beta);
        t.gammas.push(gamma);
        z_head.push(za.out[..n].to_vec());
        if let Some(tr) = trace.as_mut() {
            tr.z.push(za.out.clone());
            tr.xhat.push(xa.out.clone());
            let defect = match za.defect {
                Some(dv) => dv,
                None => {
                    let mut e = op.apply_pencil(sigma, &za.out, false)?;
                    e.iter_mut().zip(&v).for_each(|(ei, vi)| *ei -= vi);
                    e
                }
            };
            tr.defects.push(defect);
            tr.t = t.clone();
        }
        iterations = i;

        let lucky = beta == 0.0;
        let broken = !lucky && (gamma == 0.0 || !gamma.is_finite());
        if !lucky && !broken {
            v_prev = std::mem::replace(&mut v, r_hat.iter().map(|x| x / beta).collect());
            w_prev = std::mem::replace(&mut w, s_hat.iter().map(|x| x / gamma).collect());
            beta_prev = beta;
            gamma_prev = gamma;
            if let Some(tr) = trace.as_mut() {
                tr.v.push(v.clone());
                tr.w.push(w.clone());
            }
        }

        // farthest shift every iteration
        tridiag_solves += 1;
        let far_solve = match shifted_tridiag_solve(&t, i, mu_far, sigma, beta0) {
            Ok(s) => s,
            Err(_) => {
                states[far].singular = true;
                termination = Termination::Breakdown(format!("shifted tridiagonal singular at mu = {mu_far}"));
                break;
            }
        };
        prev_last_component = far_solve.y[i - 1];
        prev_delta_next = far_solve.delta_next.unwrap_or(0.0);
        if let (Some(g), Some(tr)) = (gaps.as_mut(), trace.as_ref()) {
            if tr.v.len() > i {
                g.push(residual_gap(op, tr, b, mu_far, sigma, &far_solve.y)?.delta);
            }
        }
        observer(&InexactView {
            iteration: i,
            t: &t,
            beta0,
            z_head: &z_head,
            trace: trace.as_ref(),
            inner_tol: tol_i,
        });

        let check_all = far_passed || opts.true_residual_every_iteration;
        let mut checked = vec![false; m];
        for k in (0..m).rev() {
            if states[k].converged_at.is_some() || !(k == far || check_all || far_passed) {
                continue;
            }
            let y = if k == far {
                far_solve.y.clone()
            } else {
                tridiag_solves += 1;
                match shifted_tridiag_solve(&t, i, shifts.mus()[k], sigma, beta0) {
                    Ok(s) => s.y,
                    Err(_) => {
                        states[k].singular = true;
                        continue;
                    }
                }
            };
            basis_products += 1;
            let x = x_from(&z_head, &y);
            let rel = relative_residual(resid_op, shifts.mus()[k], &x, b)?;
            let st = &mut states[k];
            checked[k] = true;
            st.last_true = rel;
            st.hist_true.push(Some(rel));
            st.hist_rec.push((shifts.mus()[k] - sigma).abs() * beta * y[i - 1].abs() / beta0);
            if rel <= opts.tol {
                st.converged_at = Some(i);
                st.x = Some(x);
                if k == far {
                    far_passed = true;
                }
            }
        }
        for (k, st) in states.iter_mut().enumerate() {
            if !checked[k] {
                st.hist_true.push(None);
                let last = st.hist_rec.last().copied().unwrap_or(f64::NAN);
                st.hist_rec.push(last);
            }
        }
        cumulative.push(start.elapsed().as_secs_f64());

        let done = states.iter().all(|s| s.converged_at.is_some());
        if done && i >= opts.min_iterations {
            termination = Termination::Converged;
            break;
        }
        if lucky || broken {
            termination = if done {
                Termination::Converged
            } else if lucky {
                Termination::Breakdown(format!("Lanczos vectors exhausted at iteration {i}"))
            } else {
                Termination::Breakdown(format!("two-sided Lanczos breakdown at iteration {i}"))
            };
            break;
        }
    }
    if termination == Termination::MaxIterations && states.iter().all(|s| s.converged_at.is_some()) {
        termination = Termination::Converged;
    }

    let j = t.len();
    let mut results: Vec<Option<ShiftResult>> = vec![None; m];
    for (k, mut st) in states.into_iter().enumerate() {
        let x = match st.x.take() {
            Some(x) => x,
            None if j > 0 => match shifted_tridiag_solve(&t, j, shifts.mus()[k], sigma, beta0) {
                Ok(s) => {
                    tridiag_solves += 1;
                    basis_products += 1;
                    x_from(&z_head, &s.y)
                }
                Err(_) => vec![0.0; n],
            },
            None => vec![0.0; n],
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
            breakdown: st.singular,
        });
    }
    let report = SolveReport {
        solver: "inexact".into(),
        sigma,
        shifts: results.into_iter().map(|r| r.expect("every shift reported")).collect(),
        iterations,
        termination,
        cumulative_seconds: cumulative,
        inner_solves: prec.inner_solves(),
        true_operator: resid_op.is_true_operator(),
        inexact: Some(InexactDiagnostics {
            epsilon: opts.policy.epsilon(),
            policy: opts.policy.name().into(),
            inner_tols,
            inner_records,
            deltas,
            residual_gaps: gaps,
            tridiag_solves,
            basis_products,
            sigma_min_refreshes: sigma_refreshes,
        }),
    };
    Ok((report, trace))
}

// v_0 and w_0 are zero, so the coupling coefficients only matter from the second step on
fn gamma_prev_term(i: usize, gamma_prev: f64) -> f64 {
    if i == 1 {
        0.0
    } else {
        gamma_prev
    }
}

fn beta_prev_term(i: usize, beta_prev: f64) -> f64 {
    if i == 1 {
        0.0
    } else {
        beta_prev
    }
}
