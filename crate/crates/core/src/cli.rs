//! Command-line front end: `solve`, `interp-check` and `verify`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::companion::CompanionOperator;
use crate::error::{Error, Result};
use crate::linalg::{write_array, DenseMatrix, SparseMatrix};
use crate::precond::{InnerSpec, IterMethod, Preconditioner};
use crate::problems::{gen_helmholtz_fd, gen_time_delay, load_manifest, ParamProblem};
use crate::report::{ParamOperator, ShiftSet, Side, SolveReport, Termination};
use crate::solver_exact::{solve_exact, ExactOptions};
use crate::solver_inexact::{solve_inexact, InexactOptions, SigmaMinMode, TolPolicy};
use crate::verify::{run_suite, Level, VerifyOptions};

#[derive(Debug, Parser)]
#[command(name = "chebbicg", version, about = "Multishift BiCG for A(mu) x = b over many parameter values")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve A(mu) x = b for every requested shift and write residuals.csv, solutions.mtx and report.json.
    Solve(SolveArgs),
    /// Report the Chebyshev interpolation error of A(mu) on a 101-point grid.
    InterpCheck(InterpArgs),
    /// Run the built-in dense-oracle self-checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    TimeDelay,
    Helmholtz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Exact,
    Inexact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerKind {
    Direct,
    Bicg,
    Bicgstab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Adaptive,
    Bound,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideArg {
    Right,
    Left,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Right => Side::Right,
            SideArg::Left => Side::Left,
        }
    }
}

/// Shift list: explicit values, or `linspace:start:stop:count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuSpec {
    List(Vec<f64>),
    Text(String),
}

impl MuSpec {
    pub fn expand(&self) -> Result<Vec<f64>> {
        match self {
            MuSpec::List(v) => Ok(v.clone()),
            MuSpec::Text(s) => parse_mu_list(s),
        }
    }
}

pub fn parse_mu_list(s: &str) -> Result<Vec<f64>> {
    let bad = |what: &str| Error::Config(format!("invalid shift list {s:?}: {what}"));
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("linspace:").or_else(|| s.strip_prefix("linspace(").and_then(|r| r.strip_suffix(')'))) {
        let parts: Vec<&str> = rest.split([':', ',']).map(str::trim).collect();
        let [start, stop, count] = parts[..] else {
            return Err(bad("linspace needs start, stop and count"));
        };
        let start: f64 = start.parse().map_err(|_| bad("start is not a number"))?;
        let stop: f64 = stop.parse().map_err(|_| bad("stop is not a number"))?;
        let count: usize = count.parse().map_err(|_| bad("count is not a positive integer"))?;
        return match count {
            0 => Err(bad("count must be positive")),
            1 => Ok(vec![start]),
            _ => Ok((0..count)
                .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
                .collect()),
        };
    }
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad(&format!("{t:?} is not a number"))))
        .collect()
}

fn mu_arg(s: &str) -> std::result::Result<MuSpec, String> {
    parse_mu_list(s).map(MuSpec::List).map_err(|e| e.to_string())
}

/// Problem selection, shared by `solve` and `interp-check`.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemArgs {
    /// Built-in problem.
    #[arg(long, value_enum)]
    pub problem: Option<ProblemKind>,
    /// TOML manifest describing A(mu) = sum f_i(mu) C_i and b (alternative to --problem).
    #[arg(long, conflicts_with = "problem")]
    pub manifest: Option<PathBuf>,
    /// Matrix dimension; for helmholtz it must be a perfect square nx * nx.
    #[arg(long)]
    pub n: Option<usize>,
    /// Helmholtz interior grid points in x.
    #[arg(long)]
    pub nx: Option<usize>,
    /// Helmholtz interior grid points in y.
    #[arg(long)]
    pub ny: Option<usize>,
    /// Seed of the time-delay generator.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Interpolation degree.
    #[arg(long)]
    pub d: Option<usize>,
    /// Half-width of the parameter interval [-a, a].
    #[arg(long)]
    pub a: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveArgs {
    /// TOML file with any of these options (snake_case keys); flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub problem: ProblemArgs,
    /// Preconditioner shift, strictly inside (-a, a).
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    /// Shifts: comma-separated values or linspace:start:stop:count.
    #[arg(long, value_parser = mu_arg, allow_hyphen_values = true)]
    pub mu: Option<MuSpec>,
    /// Relative residual tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub maxit: Option<usize>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    /// Preconditioning side (exact solver only; left requires sigma = 0).
    #[arg(long, value_enum)]
    pub side: Option<SideArg>,
    /// Solver for the P(sigma) systems inside the preconditioner.
    #[arg(long, value_enum)]
    pub inner: Option<InnerKind>,
    /// Target residual gap for the inexact solver's tolerance policy.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub tol_policy: Option<PolicyKind>,
    /// Inner tolerance for --tol-policy fixed.
    #[arg(long)]
    pub inner_tol: Option<f64>,
    /// Compute the explicit residual of every shift at every iteration.
    #[arg(long)]
    pub true_residuals: Option<bool>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record inner tolerances, Delta_i and inner solve records in report.json.
    #[arg(long)]
    pub diagnostics: bool,
    /// Write 0 in the timing column so that output is byte-reproducible.
    #[arg(long)]
    pub no_timings: bool,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub problem: ProblemArgs,
    /// Largest acceptable relative interpolation error.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "quick")]
    pub level: Level,
    #[arg(long, hide = true)]
    pub tamper_uinv: bool,
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

impl ProblemArgs {
    fn or(self, file: ProblemArgs) -> ProblemArgs {
        ProblemArgs {
            problem: self.problem.or(file.problem),
            manifest: self.manifest.or(file.manifest),
            n: self.n.or(file.n),
            nx: self.nx.or(file.nx),
            ny: self.ny.or(file.ny),
            seed: self.seed.or(file.seed),
            d: self.d.or(file.d),
            a: self.a.or(file.a),
        }
    }
}

impl SolveArgs {
    /// Flags first, then the config file.
    pub fn merged(self) -> Result<SolveArgs> {
        let file: SolveArgs = read_config(self.config.as_deref())?;
        let problem = if self.problem.manifest.is_some() || self.problem.problem.is_some() {
            // a problem chosen on the command line replaces the file's choice entirely
            ProblemArgs {
                manifest: self.problem.manifest.clone(),
                problem: self.problem.problem,
                ..self.problem.clone().or(file.problem.clone())
            }
        } else {
            self.problem.clone().or(file.problem.clone())
        };
        Ok(SolveArgs {
            config: self.config,
            problem,
            sigma: self.sigma.or(file.sigma),
            mu: self.mu.or(file.mu),
            tol: self.tol.or(file.tol),
            maxit: self.maxit.or(file.maxit),
            solver: self.solver.or(file.solver),
            side: self.side.or(file.side),
            inner: self.inner.or(file.inner),
            epsilon: self.epsilon.or(file.epsilon),
            tol_policy: self.tol_policy.or(file.tol_policy),
            inner_tol: self.inner_tol.or(file.inner_tol),
            true_residuals: self.true_residuals.or(file.true_residuals),
            out: self.out.or(file.out),
            diagnostics: self.diagnostics || file.diagnostics,
            no_timings: self.no_timings || file.no_timings,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemSource {
    TimeDelay { n: usize, seed: u64 },
    Helmholtz { nx: usize, ny: usize },
    Manifest { path: PathBuf },
}

/// Fully resolved and validated run configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub source: ProblemSource,
    pub d: usize,
    pub a: f64,
    pub sigma: f64,
    pub mus: Vec<f64>,
    pub tol: f64,
    pub maxit: usize,
    pub solver: SolverKind,
    pub side: SideArg,
    pub inner: InnerKind,
    pub epsilon: f64,
    pub tol_policy: PolicyKind,
    pub inner_tol: f64,
    pub true_residuals: bool,
    #[serde(skip)]
    pub out: PathBuf,
    pub diagnostics: bool,
    pub no_timings: bool,
}

struct Preset {
    d: usize,
    a: f64,
    sigma: f64,
    mus: Vec<f64>,
    tol: f64,
    solver: SolverKind,
    side: SideArg,
    inner: InnerKind,
}

fn preset(kind: Option<ProblemKind>) -> Preset {
    match kind {
        Some(ProblemKind::TimeDelay) => Preset {
            d: 17,
            a: 1.0,
            sigma: 0.0,
            mus: vec![-0.5, -0.1, 0.1, 0.5],
            tol: 1e-10,
            solver: SolverKind::Exact,
            side: SideArg::Left,
            inner: InnerKind::Direct,
        },
        Some(ProblemKind::Helmholtz) => Preset {
            d: 34,
            a: 5.0,
            sigma: 3.0,
            mus: vec![2.5, 2.75, 3.25, 3.5],
            tol: 1e-8,
            solver: SolverKind::Inexact,
            side: SideArg::Right,
            inner: InnerKind::Bicg,
        },
        None => Preset {
            d: 20,
            a: 1.0,
            sigma: 0.0,
            mus: Vec::new(),
            tol: 1e-8,
            solver: SolverKind::Exact,
            side: SideArg::Right,
            inner: InnerKind::Direct,
        },
    }
}

fn resolve_source(p: &ProblemArgs) -> Result<ProblemSource> {
    match (&p.manifest, p.problem) {
        (Some(path), _) => Ok(ProblemSource::Manifest { path: path.clone() }),
        (None, Some(ProblemKind::TimeDelay)) => Ok(ProblemSource::TimeDelay {
            n: p.n.unwrap_or(80),
            seed: p.seed.unwrap_or(2024),
        }),
        (None, Some(ProblemKind::Helmholtz)) => {
            let side = match p.n {
                Some(n) => {
                    let s = (n as f64).sqrt().round() as usize;
                    if s * s != n {
                        return Err(Error::Config(format!("helmholtz --n must be a perfect square, got {n}")));
                    }
                    Some(s)
                }
                None => None,
            };
            Ok(ProblemSource::Helmholtz {
                nx: p.nx.or(side).unwrap_or(100),
                ny: p.ny.or(side).unwrap_or(100),
            })
        }
        (None, None) => Err(Error::Config("either --problem or --manifest is required".into())),
    }
}

/// `a` of a manifest, read without loading its matrices.
fn manifest_half_width(path: &Path) -> Result<f64> {
    #[derive(Deserialize)]
    struct Head {
        a: f64,
    }
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let head: Head = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(head.a)
}

fn check_interval(d: usize, a: f64) -> Result<()> {
    if d < 2 {
        return Err(Error::Config(format!("d must be at least 2, got {d}")));
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::Config(format!("a must be positive, got {a}")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_args(args: SolveArgs) -> Result<RunConfig> {
        let args = args.merged()?;
        let source = resolve_source(&args.problem)?;
        let pre = preset(args.problem.problem.filter(|_| args.problem.manifest.is_none()));
        let a = match (&source, args.problem.a) {
            (ProblemSource::Manifest { path }, None) => manifest_half_width(path)?,
            (_, Some(a)) => a,
            _ => pre.a,
        };
        let d = args.problem.d.unwrap_or(pre.d);
        check_interval(d, a)?;
        let sigma = args.sigma.unwrap_or(pre.sigma);
        if !(sigma.is_finite() && sigma.abs() < a) {
            return Err(Error::Config(format!("sigma = {sigma} must lie strictly inside (-{a}, {a})")));
        }
        let mus = match &args.mu {
            Some(m) => m.expand()?,
            None if !pre.mus.is_empty() => pre.mus.clone(),
            None => return Err(Error::Config("--mu is required for manifest problems".into())),
        };
        if mus.is_empty() {
            return Err(Error::Config("at least one shift is required".into()));
        }
        for &mu in &mus {
            if !(mu.is_finite() && mu.abs() <= a) {
                return Err(Error::Config(format!("shift {mu} lies outside [-{a}, {a}]")));
            }
            if mu == sigma {
                return Err(Error::Config(format!("shift {mu} coincides with sigma")));
            }
        }
        let solver = args.solver.unwrap_or(pre.solver);
        let side = match (args.side, solver) {
            (Some(s), _) => s,
            (None, SolverKind::Inexact) => SideArg::Right,
            (None, SolverKind::Exact) => pre.side,
        };
        if side == SideArg::Left && solver == SolverKind::Inexact {
            return Err(Error::Config("the inexact solver is right-preconditioned only".into()));
        }
        if side == SideArg::Left && sigma != 0.0 {
            return Err(Error::Config(format!("left preconditioning requires sigma = 0, got {sigma}")));
        }
        let tol = args.tol.unwrap_or(pre.tol);
        let epsilon = args.epsilon.unwrap_or(1e-12);
        let inner_tol = args.inner_tol.unwrap_or(1e-10);
        for (name, v) in [("tol", tol), ("epsilon", epsilon), ("inner-tol", inner_tol)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        let maxit = args.maxit.unwrap_or(300);
        if maxit == 0 {
            return Err(Error::Config("maxit must be positive".into()));
        }
        Ok(RunConfig {
            source,
            d,
            a,
            sigma,
            mus,
            tol,
            maxit,
            solver,
            side,
            inner: args.inner.unwrap_or(pre.inner),
            epsilon,
            tol_policy: args.tol_policy.unwrap_or(PolicyKind::Adaptive),
            inner_tol,
            true_residuals: args.true_residuals.unwrap_or(true),
            out: args.out.unwrap_or_else(|| PathBuf::from("out")),
            diagnostics: args.diagnostics,
            no_timings: args.no_timings,
        })
    }

    fn inner_spec(&self) -> InnerSpec {
        match self.inner {
            InnerKind::Direct => InnerSpec::Direct,
            InnerKind::Bicg => InnerSpec::bicg(),
            InnerKind::Bicgstab => InnerSpec::Iterative {
                method: IterMethod::Bicgstab,
                max_iter: None,
            },
        }
    }

    fn policy(&self) -> TolPolicy {
        match self.tol_policy {
            PolicyKind::Adaptive => TolPolicy::Adaptive { epsilon: self.epsilon },
            PolicyKind::Bound => TolPolicy::Bound {
                epsilon: self.epsilon,
                j_budget: None,
                sigma_min: SigmaMinMode::Running,
            },
            PolicyKind::Fixed => TolPolicy::Fixed { tol: self.inner_tol },
        }
    }
}

fn build_problem(source: &ProblemSource, a: f64) -> Result<ParamProblem> {
    match source {
        ProblemSource::TimeDelay { n, seed } => gen_time_delay(*n, *seed, a),
        ProblemSource::Helmholtz { nx, ny } => gen_helmholtz_fd(*nx, *ny, a),
        ProblemSource::Manifest { path } => {
            let mut p = load_manifest(path)?;
            p.a = a;
            Ok(p)
        }
    }
}

#[derive(Serialize)]
struct ShiftSummary {
    mu: f64,
    converged: bool,
    iterations: Option<usize>,
    relres_true: f64,
    relres_recursive: Option<f64>,
    breakdown: bool,
}

#[derive(Serialize)]
struct RunReport<'a> {
    config: &'a RunConfig,
    problem: &'a str,
    n: usize,
    status: &'static str,
    termination: &'a Termination,
    iterations: usize,
    inner_solves: usize,
    inner_iterations: usize,
    true_residuals_from: &'static str,
    setup_seconds: Option<f64>,
    solve_seconds: Option<f64>,
    shifts: Vec<ShiftSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inexact: Option<&'a crate::report::InexactDiagnostics>,
}

fn fmt_num(v: f64) -> String {
    format!("{v:e}")
}

/// One row per (iteration, shift), shifts in the caller's order.
pub fn residuals_csv(rep: &SolveReport, no_timings: bool) -> String {
    let mut s = String::from("iteration,mu,relres_recursive,relres_true,cpu_seconds_cumulative\n");
    for i in 0..rep.iterations {
        let t = if no_timings {
            "0".to_string()
        } else {
            rep.cumulative_seconds.get(i).map_or_else(String::new, |&t| format!("{t:.6}"))
        };
        for sh in &rep.shifts {
            let rec = sh.relres_recursive.get(i).map_or_else(String::new, |&v| fmt_num(v));
            let tru = sh
                .relres_true_history
                .get(i)
                .copied()
                .flatten()
                .map_or_else(String::new, fmt_num);
            let _ = writeln!(s, "{},{},{rec},{tru},{t}", i + 1, fmt_num(sh.mu));
        }
    }
    s
}

pub fn solutions_matrix(rep: &SolveReport, n: usize) -> DenseMatrix {
    let m = rep.shifts.len();
    let mut data = vec![0.0; n * m];
    for (j, sh) in rep.shifts.iter().enumerate() {
        for (i, &v) in sh.x.iter().enumerate() {
            data[i * m + j] = v;
        }
    }
    DenseMatrix::from_row_major(n, m, data).expect("sizes match")
}

/// Runs one solve and writes the output files; returns the solver report.
pub fn run_solve(cfg: &RunConfig) -> Result<SolveReport> {
    let setup = Instant::now();
    let problem = build_problem(&cfg.source, cfg.a)?;
    let op = CompanionOperator::new(problem.interpolate(cfg.d)?)?;
    let shifts = ShiftSet::new(cfg.sigma, &cfg.mus, cfg.a)?;
    let prec = Preconditioner::new(&op, cfg.sigma, cfg.inner_spec())?;
    let residual_op: Option<&dyn ParamOperator> = problem.has_true_operator().then_some(&problem as _);
    let setup_seconds = setup.elapsed().as_secs_f64();
    let solve_start = Instant::now();
    let rep = match cfg.solver {
        SolverKind::Exact => {
            let opts = ExactOptions {
                tol: cfg.tol,
                maxit: cfg.maxit,
                side: cfg.side.into(),
                c_tilde: None,
                true_residual_every_iteration: cfg.true_residuals,
            };
            solve_exact(&op, &prec, &problem.b, &shifts, &opts, residual_op)?
        }
        SolverKind::Inexact => {
            let opts = InexactOptions {
                tol: cfg.tol,
                maxit: cfg.maxit,
                policy: cfg.policy(),
                true_residual_every_iteration: cfg.true_residuals,
                ..Default::default()
            };
            solve_inexact(&op, &prec, &problem.b, &shifts, &opts, residual_op)?
        }
    };
    let solve_seconds = solve_start.elapsed().as_secs_f64();

    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("residuals.csv"), residuals_csv(&rep, cfg.no_timings))?;
    fs::write(cfg.out.join("solutions.mtx"), write_array(&solutions_matrix(&rep, problem.n())))?;
    let report = RunReport {
        config: cfg,
        problem: &problem.descriptor,
        n: problem.n(),
        status: if rep.all_converged() { "converged" } else { "partial" },
        termination: &rep.termination,
        iterations: rep.iterations,
        inner_solves: rep.inner_solves,
        inner_iterations: prec.total_inner_iterations(),
        true_residuals_from: if rep.true_operator { "A(mu)" } else { "interpolant" },
        setup_seconds: (!cfg.no_timings).then_some(setup_seconds),
        solve_seconds: (!cfg.no_timings).then_some(solve_seconds),
        shifts: rep
            .shifts
            .iter()
            .map(|s| ShiftSummary {
                mu: s.mu,
                converged: s.converged,
                iterations: s.iterations,
                relres_true: s.relres_true,
                relres_recursive: s.relres_recursive.last().copied(),
                breakdown: s.breakdown,
            })
            .collect(),
        inexact: if cfg.diagnostics { rep.inexact.as_ref() } else { None },
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(cfg.out.join("report.json"), json + "\n")?;
    Ok(rep)
}

pub fn cmd_solve(args: SolveArgs) -> i32 {
    let cfg = match RunConfig::from_args(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match run_solve(&cfg) {
        Ok(rep) => {
            for s in &rep.shifts {
                println!(
                    "mu = {:>10.6}  converged = {:<5}  iterations = {:>4}  relres = {:.3e}",
                    s.mu,
                    s.converged,
                    s.iterations.map_or_else(|| "-".to_string(), |i| i.to_string()),
                    s.relres_true
                );
            }
            println!("outputs written to {}", cfg.out.display());
            if rep.all_converged() {
                0
            } else {
                eprintln!("not all shifts converged ({:?})", rep.termination);
                2
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Largest `|A(mu) - P(mu)|_F / |A(mu)|_F` over 101 equispaced points of `[-a, a]`.
pub fn interpolation_error(problem: &ParamProblem, d: usize) -> Result<f64> {
    if !problem.has_true_operator() {
        return Err(Error::TrueResidualUnavailable);
    }
    let poly = problem.interpolate(d)?;
    let a = problem.a;
    let mut worst: f64 = 0.0;
    for k in 0..101 {
        let mu = -a + 2.0 * a * k as f64 / 100.0;
        let exact = problem.eval_a_at(mu)?;
        let approx = poly.eval(mu);
        let diff = SparseMatrix::linear_combination(&[(1.0, &exact), (-1.0, &approx)])?;
        let scale = exact.frobenius_norm();
        worst = worst.max(if scale > 0.0 { diff.frobenius_norm() / scale } else { diff.frobenius_norm() });
    }
    Ok(worst)
}

pub fn cmd_interp_check(args: InterpArgs) -> i32 {
    let run = || -> Result<(f64, f64)> {
        let file: InterpArgs = read_config(args.config.as_deref())?;
        let p = args.problem.clone().or(file.problem);
        let source = resolve_source(&p)?;
        let pre = preset(p.problem.filter(|_| p.manifest.is_none()));
        let a = match (&source, p.a) {
            (ProblemSource::Manifest { path }, None) => manifest_half_width(path)?,
            (_, Some(a)) => a,
            _ => pre.a,
        };
        let d = p.d.unwrap_or(pre.d);
        check_interval(d, a)?;
        let problem = build_problem(&source, a)?;
        let threshold = args.threshold.or(file.threshold).unwrap_or(1e-8);
        Ok((interpolation_error(&problem, d)?, threshold))
    };
    match run() {
        Ok((err, threshold)) => {
            let ok = err <= threshold;
            println!("interpolation error {err:.3e} (threshold {threshold:.1e}): {}", if ok { "ok" } else { "above threshold" });
            if ok {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn cmd_verify(args: VerifyArgs) -> i32 {
    let results = run_suite(VerifyOptions {
        level: args.level,
        tamper_uinv: args.tamper_uinv,
    });
    for r in &results {
        println!(
            "{} {} ({:.2}s): {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.seconds,
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed", results.len());
    i32::from(failed > 0)
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::InterpCheck(a) => cmd_interp_check(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(extra: &[&str]) -> SolveArgs {
        let mut v = vec!["chebbicg", "solve"];
        v.extend_from_slice(extra);
        match Cli::try_parse_from(v).unwrap().command {
            Command::Solve(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn linspace_expands() {
        let mus = parse_mu_list("linspace:2.5:3.5:11").unwrap();
        assert_eq!(mus.len(), 11);
        assert_eq!(mus[0], 2.5);
        assert_eq!(mus[10], 3.5);
        assert!((mus[4] - 2.9).abs() < 1e-15);
        assert_eq!(parse_mu_list("linspace(2.5, 3.5, 11)").unwrap(), mus);
        assert_eq!(parse_mu_list("-1, 0.5").unwrap(), vec![-1.0, 0.5]);
        assert!(parse_mu_list("linspace:1:2").is_err());
        assert!(parse_mu_list("1,x").is_err());
    }

    #[test]
    fn presets_fill_defaults() {
        let c = RunConfig::from_args(args(&["--problem", "time-delay"])).unwrap();
        assert_eq!(c.source, ProblemSource::TimeDelay { n: 80, seed: 2024 });
        assert_eq!((c.d, c.a, c.sigma, c.side), (17, 1.0, 0.0, SideArg::Left));
        let c = RunConfig::from_args(args(&["--problem", "helmholtz", "--n", "400"])).unwrap();
        assert_eq!(c.source, ProblemSource::Helmholtz { nx: 20, ny: 20 });
        assert_eq!((c.d, c.a, c.sigma, c.solver), (34, 5.0, 3.0, SolverKind::Inexact));
    }

    #[test]
    fn validation_rejects_bad_configs() {
        for bad in [
            vec!["--problem", "helmholtz", "--mu", "3.0"],
            vec!["--problem", "helmholtz", "--sigma", "5"],
            vec!["--problem", "helmholtz", "--mu", "5.5"],
            vec!["--problem", "helmholtz", "--d", "1"],
            vec!["--problem", "helmholtz", "--n", "10"],
            vec!["--problem", "time-delay", "--sigma", "0.3"],
            vec!["--problem", "time-delay", "--solver", "inexact", "--side", "left"],
            vec![],
        ] {
            assert!(RunConfig::from_args(args(&bad)).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "problem = \"helmholtz\"\nnx = 12\nny = 10\nsigma = 2.0\nmu = \"linspace:1:1.5:3\"\ntol = 1e-6\ndiagnostics = true\n",
        )
        .unwrap();
        let c = RunConfig::from_args(args(&["--config", path.to_str().unwrap(), "--tol", "1e-9"])).unwrap();
        assert_eq!(c.source, ProblemSource::Helmholtz { nx: 12, ny: 10 });
        assert_eq!((c.sigma, c.tol, c.diagnostics), (2.0, 1e-9, true));
        assert_eq!(c.mus, vec![1.0, 1.25, 1.5]);
        fs::write(&path, "sigmaa = 1.0\n").unwrap();
        assert!(RunConfig::from_args(args(&["--config", path.to_str().unwrap()])).is_err());
    }
}
