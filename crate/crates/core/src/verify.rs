//! Self-check suites run by `chebbicg verify`, using dense factorizations as oracles.

use std::cell::RefCell;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::Serialize;

use crate::chebyshev::{cheb_basis, cheb_nodes, eval_scalar, scalar_cheb_coeffs, ChebBasisParams, MatrixChebPoly};
use crate::companion::{build_btilde, CompanionOperator};
use crate::error::Result;
use crate::linalg::vec::{norm2, rel_diff};
use crate::linalg::{smallest_singular_value, DenseLU, SparseMatrix};
use crate::precond::{Applied, InnerSpec, Preconditioner, ShiftInvert};
use crate::problems::gen_helmholtz_fd;
use crate::report::{ShiftSet, Side};
use crate::solver_exact::{solve_exact, ExactOptions};
use crate::solver_inexact::{
    residual_gap, shifted_tridiag_solve, solve_inexact, solve_inexact_observed, InexactOptions, SigmaMinMode,
    TolPolicy, Tridiagonal,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Quick,
    Full,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub level: Level,
    /// Build every preconditioner with a sign-flipped `U^{-1}` (mutation check).
    pub tamper_uinv: bool,
}

struct Ctx {
    tamper: bool,
}

impl Ctx {
    fn prec(&self, op: &CompanionOperator, sigma: f64, spec: InnerSpec) -> Result<Preconditioner> {
        let p = Preconditioner::new(op, sigma, spec)?;
        Ok(if self.tamper { p.tampered_uinv() } else { p })
    }
}

fn random_poly(rng: &mut Xoshiro256PlusPlus, n: usize, d: usize, a: f64) -> Result<MatrixChebPoly> {
    let coeffs = (0..=d)
        .map(|l| {
            let mut t = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    let mut v = rng.gen_range(-1.0..1.0) * 0.5f64.powi(l as i32) / n as f64;
                    if l == 0 && i == j {
                        v += 2.0;
                    }
                    t.push((i, j, v));
                }
            }
            SparseMatrix::from_triplets(n, n, &t)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    MatrixChebPoly::new(ChebBasisParams::new(a, d)?, coeffs)
}

fn random_vec(rng: &mut Xoshiro256PlusPlus, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Deviation of `u` from `(tau_l(mu) u_0)_l` with `P(mu) u_0 = b`.
fn structure_deviation(op: &CompanionOperator, u: &[f64], mu: f64, b: &[f64]) -> Result<f64> {
    let n = op.n();
    let u0 = &u[..n];
    let tau = cheb_basis(mu, &op.poly().params);
    let mut worst: f64 = 0.0;
    for l in 1..op.d() {
        let expect: Vec<f64> = u0.iter().map(|v| tau[l] * v).collect();
        worst = worst.max(rel_diff(&u[l * n..(l + 1) * n], &expect));
    }
    Ok(worst.max(rel_diff(&op.poly().apply(mu, u0)?, b)))
}

fn check_structure(_: &Ctx) -> Result<(bool, String)> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let (n, d) = (rng.gen_range(2..=8), rng.gen_range(2..=10));
        let a = rng.gen_range(0.5..3.0);
        let op = CompanionOperator::new(random_poly(&mut rng, n, d, a)?)?;
        let b = random_vec(&mut rng, n);
        let mu = rng.gen_range(-a..a);
        let (k, m) = op.assemble_dense()?;
        let pencil = k.add_scaled(-mu, &m)?;
        let u = DenseLU::factor(&pencil)?.solve(&build_btilde(&b, d).into_vec(), false)?;
        worst = worst.max(structure_deviation(&op, &u, mu, &b)?);
    }
    Ok((worst <= 1e-9, format!("dense companion solves: max deviation {worst:.2e}")))
}

fn check_preconditioner(ctx: &Ctx) -> Result<(bool, String)> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(102);
    let (mut identity, mut structure): (f64, f64) = (0.0, 0.0);
    let mut counts = true;
    for _ in 0..30 {
        let (n, d) = (rng.gen_range(2..=8), rng.gen_range(2..=10));
        let a = rng.gen_range(0.5..3.0);
        let op = CompanionOperator::new(random_poly(&mut rng, n, d, a)?)?;
        let sigma = rng.gen_range(-0.9 * a..0.9 * a);
        let prec = ctx.prec(&op, sigma, InnerSpec::Direct)?;
        let y = random_vec(&mut rng, op.dim());
        let z = prec.apply(&y, 0.0)?.out;
        identity = identity.max(rel_diff(&op.apply_pencil(sigma, &z, false)?, &y));
        let zt = prec.apply_transpose(&y, 0.0)?.out;
        identity = identity.max(rel_diff(&op.apply_pencil(sigma, &zt, true)?, &y));
        counts &= prec.inner_solves() == 2;
        // b~ through the preconditioner must have the companion solution structure at sigma
        let b = random_vec(&mut rng, n);
        let u = prec.apply(&build_btilde(&b, d).into_vec(), 0.0)?.out;
        structure = structure.max(structure_deviation(&op, &u, sigma, &b)?);
    }
    Ok((
        identity <= 1e-10 && structure <= 1e-9 && counts,
        format!("identity error {identity:.2e}, structure deviation {structure:.2e}, one inner solve per application: {counts}"),
    ))
}

fn check_interpolation(_: &Ctx) -> Result<(bool, String)> {
    let params = ChebBasisParams::new(4.0, 17)?;
    let samples: Vec<f64> = cheb_nodes(&params).iter().map(|x| (-x).exp()).collect();
    let coeffs = scalar_cheb_coeffs(&samples, &params)?;
    let worst = (0..101)
        .map(|k| -4.0 + 0.08 * k as f64)
        .map(|mu| ((eval_scalar(&coeffs, mu, 4.0) - (-mu).exp()) / (-mu).exp()).abs())
        .fold(0.0, f64::max);
    Ok((worst <= 1e-8, format!("exp(-mu), d = 17 on [-4, 4]: max relative error {worst:.2e}")))
}

fn dense_solution(op: &CompanionOperator, mu: f64, b: &[f64]) -> Result<Vec<f64>> {
    Ok(DenseLU::factor(&op.poly().eval(mu).to_dense())?.solve(b, false)?)
}

fn check_solvers(ctx: &Ctx) -> Result<(bool, String)> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(103);
    let (n, d, a) = (12, 6, 2.0);
    let op = CompanionOperator::new(random_poly(&mut rng, n, d, a)?)?;
    let b = random_vec(&mut rng, n);
    let mut worst: f64 = 0.0;
    let mut converged = true;
    for (side, sigma, mus) in [
        (Side::Right, 0.3, vec![-1.2, -0.4, 0.8, 1.6]),
        (Side::Left, 0.0, vec![-0.6, -0.2, 0.3, 0.7]),
    ] {
        let prec = ctx.prec(&op, sigma, InnerSpec::Direct)?;
        let shifts = ShiftSet::new(sigma, &mus, a)?;
        let opts = ExactOptions {
            tol: 1e-11,
            maxit: 200,
            side,
            ..Default::default()
        };
        let rep = solve_exact(&op, &prec, &b, &shifts, &opts, None)?;
        converged &= rep.all_converged();
        for s in &rep.shifts {
            worst = worst.max(rel_diff(&s.x, &dense_solution(&op, s.mu, &b)?));
        }
        if side == Side::Right {
            let iopts = InexactOptions {
                tol: 1e-11,
                maxit: 200,
                policy: TolPolicy::Fixed { tol: 1e-14 },
                ..Default::default()
            };
            let rep = solve_inexact(&op, &prec, &b, &shifts, &iopts, None)?;
            converged &= rep.all_converged();
            for s in &rep.shifts {
                worst = worst.max(rel_diff(&s.x, &dense_solution(&op, s.mu, &b)?));
            }
        }
    }
    Ok((
        converged && worst <= 1e-8,
        format!("exact (both sides) and Lanczos solvers vs dense solves: max relative error {worst:.2e}, all converged: {converged}"),
    ))
}

fn check_deltas(_: &Ctx) -> Result<(bool, String)> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(104);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let j = rng.gen_range(2..12);
        let t = Tridiagonal {
            alphas: random_vec(&mut rng, j),
            betas: random_vec(&mut rng, j).iter().map(|v| v.abs() + 0.1).collect(),
            gammas: random_vec(&mut rng, j),
        };
        let (mu, sigma, beta) = (rng.gen_range(-1.0..1.0), 0.1, 1.3);
        let full = shifted_tridiag_solve(&t, j, mu, sigma, beta)?;
        for i in 1..=j {
            let lead = shifted_tridiag_solve(&t, i, mu, sigma, beta)?;
            let other = full.leading_diag[i - 1].abs() * lead.y[i - 1].abs();
            worst = worst.max((full.deltas[i - 1] - other).abs() / full.deltas[i - 1].max(1e-300));
        }
    }
    Ok((worst <= 1e-9, format!("Givens sine product vs |r_ii| |y_i|: max relative gap {worst:.2e}")))
}

/// Exact inverse plus a forward defect whose norm equals the requested bound.
struct Injecting {
    exact: Preconditioner,
    rng: RefCell<Xoshiro256PlusPlus>,
}

impl ShiftInvert for Injecting {
    fn dim(&self) -> usize {
        self.exact.dim()
    }

    fn sigma(&self) -> f64 {
        self.exact.sigma()
    }

    fn apply(&self, y: &[f64], tol: f64) -> Result<Applied> {
        let mut base = self.exact.apply(y, 0.0)?;
        let mut q = random_vec(&mut self.rng.borrow_mut(), y.len());
        let s = tol * norm2(y) / norm2(&q);
        q.iter_mut().for_each(|v| *v *= s);
        let dz = self.exact.apply(&q, 0.0)?.out;
        base.out.iter_mut().zip(&dz).for_each(|(o, e)| *o += e);
        base.defect = Some(q);
        Ok(base)
    }

    fn apply_transpose(&self, y: &[f64], _tol: f64) -> Result<Applied> {
        self.exact.apply_transpose(y, 0.0)
    }

    fn is_exact(&self) -> bool {
        false
    }

    fn inner_solves(&self) -> usize {
        self.exact.inner_solves()
    }
}

fn check_injection(ctx: &Ctx) -> Result<(bool, String)> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(105);
    let (n, d, a, sigma, budget) = (30, 6, 2.0, 0.0, 25);
    let op = CompanionOperator::new(random_poly(&mut rng, n, d, a)?)?;
    let b = random_vec(&mut rng, n);
    let shifts = ShiftSet::new(sigma, &[0.8, 1.5], a)?;
    let mu_far = shifts.mus()[shifts.farthest()];
    let min_sigma = |t: &Tridiagonal| {
        (1..=t.len())
            .map(|j| smallest_singular_value(&t.shifted_dense(j, mu_far, sigma)))
            .fold(f64::INFINITY, f64::min)
    };
    let run = |prec: &dyn ShiftInvert, policy: TolPolicy| -> Result<(Option<Vec<f64>>, Tridiagonal)> {
        let opts = InexactOptions {
            tol: 0.0,
            maxit: budget,
            policy,
            diagnostics: true,
            ..Default::default()
        };
        let (rep, trace) = solve_inexact_observed(&op, prec, &b, &shifts, &opts, None, &mut |_| {})?;
        Ok((rep.inexact.and_then(|d| d.residual_gaps), trace.map(|t| t.t).unwrap_or_default()))
    };
    let mut details = Vec::new();
    let mut passed = true;
    for eps in [1e-4, 1e-8] {
        let (_, t0) = run(&ctx.prec(&op, sigma, InnerSpec::Direct)?, TolPolicy::Fixed { tol: 0.0 })?;
        let mut smin = min_sigma(&t0);
        let mut gaps = None;
        for _ in 0..8 {
            let prec = Injecting {
                exact: ctx.prec(&op, sigma, InnerSpec::Direct)?,
                rng: RefCell::new(Xoshiro256PlusPlus::seed_from_u64(106)),
            };
            let policy = TolPolicy::Bound {
                epsilon: eps,
                j_budget: Some(budget),
                sigma_min: SigmaMinMode::Fixed(smin),
            };
            let (g, t) = run(&prec, policy)?;
            let achieved = min_sigma(&t);
            if achieved >= smin {
                gaps = g;
                break;
            }
            smin = 0.99 * achieved;
        }
        let gaps = gaps.unwrap_or_default();
        let worst = gaps.iter().copied().fold(0.0, f64::max);
        passed &= gaps.len() == budget && worst <= eps * (1.0 + 1e-6);
        details.push(format!("eps {eps:.0e}: max delta_j / eps = {:.3} over {} steps", worst / eps, gaps.len()));
    }
    Ok((passed, details.join("; ")))
}

fn check_gap_identity(ctx: &Ctx) -> Result<(bool, String)> {
    let problem = gen_helmholtz_fd(30, 30, 5.0)?;
    let op = CompanionOperator::new(problem.interpolate(34)?)?;
    let sigma = 3.0;
    let shifts = ShiftSet::new(sigma, &[2.5, 2.75, 3.25, 3.5], 5.0)?;
    let prec = ctx.prec(&op, sigma, InnerSpec::bicg())?.with_defect_tracking(true);
    let opts = InexactOptions {
        tol: 1e-8,
        maxit: 60,
        policy: TolPolicy::Fixed { tol: 1e-4 },
        diagnostics: true,
        ..Default::default()
    };
    let bnorm = norm2(&problem.b);
    let mut worst: f64 = 0.0;
    let mut failure = None;
    solve_inexact_observed(&op, &prec, &problem.b, &shifts, &opts, Some(&problem), &mut |view| {
        let Some(trace) = view.trace else { return };
        if trace.v.len() <= view.iteration {
            return;
        }
        for &mu in shifts.mus() {
            match shifted_tridiag_solve(view.t, view.iteration, mu, sigma, view.beta0)
                .and_then(|s| residual_gap(&op, trace, &problem.b, mu, sigma, &s.y))
            {
                Ok(g) => worst = worst.max(g.identity_error / bnorm),
                Err(e) => failure = Some(e),
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((worst <= 1e-10, format!("30x30 Helmholtz, inner tol 1e-4: max identity error / |b| = {worst:.2e}")))
}

type Check = fn(&Ctx) -> Result<(bool, String)>;

pub fn run_suite(opts: VerifyOptions) -> Vec<CheckResult> {
    let ctx = Ctx {
        tamper: opts.tamper_uinv,
    };
    let mut checks: Vec<(&'static str, Check)> = vec![
        ("companion solution structure", check_structure),
        ("preconditioner identity and structure", check_preconditioner),
        ("Chebyshev interpolation", check_interpolation),
        ("solvers against dense solves", check_solvers),
        ("Delta consistency", check_deltas),
    ];
    if opts.level == Level::Full {
        checks.push(("defect injection at the relaxation bound", check_injection));
        checks.push(("residual gap identity", check_gap_identity));
    }
    checks
        .into_iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let (passed, detail) = match f(&ctx) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckResult {
                name,
                passed,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}
