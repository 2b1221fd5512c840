//! Built-in parameterized problems `A(mu) = sum_i f_i(mu) C_i` and a manifest loader.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::chebyshev::{cheb_nodes, matrix_poly_from_samples, ChebBasisParams, MatrixChebPoly, ParamMatrixSamples};
use crate::error::{Error, Result};
use crate::linalg::{read_matrix_market, SparseMatrix};
use crate::report::ParamOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarFn {
    One,
    Mu,
    MuSquared,
    SinSq,
    CosSq,
    ExpNeg,
}

impl ScalarFn {
    pub fn eval(self, mu: f64) -> f64 {
        match self {
            ScalarFn::One => 1.0,
            ScalarFn::Mu => mu,
            ScalarFn::MuSquared => mu * mu,
            ScalarFn::SinSq => mu.sin().powi(2),
            ScalarFn::CosSq => mu.cos().powi(2),
            ScalarFn::ExpNeg => (-mu).exp(),
        }
    }
}

/// Scalar factor of one term: a named function or its values at the Chebyshev nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum TermFn {
    Tag(ScalarFn),
    Samples(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct ParamTerm {
    pub matrix: SparseMatrix,
    pub f: TermFn,
}

#[derive(Debug, Clone)]
pub struct ParamProblem {
    pub terms: Vec<ParamTerm>,
    pub b: Vec<f64>,
    /// Half-width of the parameter interval.
    pub a: f64,
    pub descriptor: String,
}

impl ParamProblem {
    pub fn new(terms: Vec<ParamTerm>, b: Vec<f64>, a: f64, descriptor: impl Into<String>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidInput("a problem needs at least one term".into()));
        }
        let n = b.len();
        for t in &terms {
            if t.matrix.nrows() != n || t.matrix.ncols() != n {
                return Err(Error::InvalidInput(format!(
                    "term matrix is {}x{} but the right-hand side has length {n}",
                    t.matrix.nrows(),
                    t.matrix.ncols()
                )));
            }
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidInput(format!("interval half-width must be positive, got {a}")));
        }
        Ok(Self {
            terms,
            b,
            a,
            descriptor: descriptor.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    /// True when every term has a named scalar function.
    pub fn has_true_operator(&self) -> bool {
        self.terms.iter().all(|t| matches!(t.f, TermFn::Tag(_)))
    }

    fn tags(&self) -> Result<Vec<ScalarFn>> {
        self.terms
            .iter()
            .map(|t| match t.f {
                TermFn::Tag(f) => Ok(f),
                TermFn::Samples(_) => Err(Error::TrueResidualUnavailable),
            })
            .collect()
    }

    pub fn eval_a_at(&self, mu: f64) -> Result<SparseMatrix> {
        let tags = self.tags()?;
        let terms: Vec<(f64, &SparseMatrix)> = tags.iter().zip(&self.terms).map(|(f, t)| (f.eval(mu), &t.matrix)).collect();
        Ok(SparseMatrix::linear_combination(&terms)?)
    }

    pub fn sample_f_at_nodes(&self, params: &ChebBasisParams) -> Result<ParamMatrixSamples> {
        let nodes = cheb_nodes(params);
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let s = match &t.f {
                    TermFn::Tag(f) => nodes.iter().map(|&x| f.eval(x)).collect(),
                    TermFn::Samples(s) if s.len() == nodes.len() => s.clone(),
                    TermFn::Samples(s) => {
                        return Err(Error::SampleCount {
                            expected: nodes.len(),
                            found: s.len(),
                        })
                    }
                };
                Ok((t.matrix.clone(), s))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamMatrixSamples { terms })
    }

    /// Degree-`d` Chebyshev interpolant on `[-a, a]`.
    pub fn interpolate(&self, d: usize) -> Result<MatrixChebPoly> {
        let params = ChebBasisParams::new(self.a, d)?;
        matrix_poly_from_samples(&self.sample_f_at_nodes(&params)?, &params)
    }
}

impl ParamOperator for ParamProblem {
    fn n(&self) -> usize {
        self.b.len()
    }

    fn apply_at(&self, mu: f64, x: &[f64]) -> Result<Vec<f64>> {
        let tags = self.tags()?;
        let mut y = vec![0.0; self.n()];
        for (f, t) in tags.iter().zip(&self.terms) {
            t.matrix.spmv_acc(f.eval(mu), x, false, &mut y)?;
        }
        Ok(y)
    }

    fn is_true_operator(&self) -> bool {
        true
    }
}

fn random_dense(rng: &mut Xoshiro256PlusPlus, n: usize) -> SparseMatrix {
    let scale = 1.0 / n as f64;
    let mut t = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            t.push((i, j, rng.gen_range(-1.0..=1.0) * scale));
        }
    }
    SparseMatrix::from_triplets(n, n, &t).expect("indices in range")
}

/// `A(mu) = -mu I + A_0 + A_1 e^{-mu}` with random `A_0`, `A_1` (entries uniform in `[-1, 1] / n`).
pub fn gen_time_delay(n: usize, seed: u64, a: f64) -> Result<ParamProblem> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("time-delay problem needs n >= 2, got {n}")));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let a0 = random_dense(&mut rng, n);
    let a1 = random_dense(&mut rng, n);
    let b = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let terms = vec![
        ParamTerm {
            matrix: SparseMatrix::identity(n).scaled(-1.0),
            f: TermFn::Tag(ScalarFn::Mu),
        },
        ParamTerm {
            matrix: a0,
            f: TermFn::Tag(ScalarFn::One),
        },
        ParamTerm {
            matrix: a1,
            f: TermFn::Tag(ScalarFn::ExpNeg),
        },
    ];
    ParamProblem::new(terms, b, a, format!("time-delay n={n} seed={seed} delay=1"))
}

/// `A(mu) = L + sin^2(mu) diag(1 + sin x_1) + mu^2 I + cos^2(mu) diag(1 + cos x_2)` on the
/// unit square, where `L` is the 5-point discretization of `+laplacian` with zero Dirichlet
/// data on an `nx x ny` grid of interior points (row-major, `x_1` fastest).
pub fn gen_helmholtz_fd(nx: usize, ny: usize, a: f64) -> Result<ParamProblem> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidInput("grid needs at least one interior point per direction".into()));
    }
    let (hx, hy) = (1.0 / (nx + 1) as f64, 1.0 / (ny + 1) as f64);
    let (cx, cy) = (1.0 / (hx * hx), 1.0 / (hy * hy));
    let n = nx * ny;
    let idx = |i: usize, j: usize| j * nx + i;
    let mut lap = Vec::with_capacity(5 * n);
    let mut alpha = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for j in 0..ny {
        for i in 0..nx {
            let k = idx(i, j);
            let (x1, x2) = ((i + 1) as f64 * hx, (j + 1) as f64 * hy);
            lap.push((k, k, -2.0 * (cx + cy)));
            if i > 0 {
                lap.push((k, idx(i - 1, j), cx));
            }
            if i + 1 < nx {
                lap.push((k, idx(i + 1, j), cx));
            }
            if j > 0 {
                lap.push((k, idx(i, j - 1), cy));
            }
            if j + 1 < ny {
                lap.push((k, idx(i, j + 1), cy));
            }
            alpha.push(1.0 + x1.sin());
            beta.push(1.0 + x2.cos());
            b.push((-x1 * x2).exp());
        }
    }
    let terms = vec![
        ParamTerm {
            matrix: SparseMatrix::from_triplets(n, n, &lap)?,
            f: TermFn::Tag(ScalarFn::One),
        },
        ParamTerm {
            matrix: SparseMatrix::from_diagonal(&alpha),
            f: TermFn::Tag(ScalarFn::SinSq),
        },
        ParamTerm {
            matrix: SparseMatrix::identity(n),
            f: TermFn::Tag(ScalarFn::MuSquared),
        },
        ParamTerm {
            matrix: SparseMatrix::from_diagonal(&beta),
            f: TermFn::Tag(ScalarFn::CosSq),
        },
    ];
    ParamProblem::new(
        terms,
        b,
        a,
        format!("helmholtz finite differences {nx}x{ny} interior grid on the unit square"),
    )
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    a: f64,
    #[serde(default)]
    descriptor: Option<String>,
    b: String,
    terms: Vec<ManifestTerm>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestTerm {
    matrix: String,
    #[serde(default)]
    f: Option<ScalarFn>,
    #[serde(default)]
    samples: Option<Vec<f64>>,
}

/// Loads a problem from a TOML manifest. Paths inside it are relative to the manifest.
///
/// ```toml
/// a = 5.0
/// b = "b.mtx"
/// [[terms]]
/// matrix = "c0.mtx"
/// f = "one"
/// [[terms]]
/// matrix = "c1.mtx"
/// samples = [0.1, 0.2, 0.3]
/// ```
pub fn load_manifest(path: impl AsRef<Path>) -> Result<ParamProblem> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let m: Manifest = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let bm = read_matrix_market(dir.join(&m.b))?;
    if bm.ncols() != 1 {
        return Err(Error::Config(format!("right-hand side must be one column, found {}", bm.ncols())));
    }
    let b = bm.to_dense().as_slice().to_vec();
    let terms = m
        .terms
        .into_iter()
        .map(|t| {
            let f = match (t.f, t.samples) {
                (Some(f), None) => TermFn::Tag(f),
                (None, Some(s)) => TermFn::Samples(s),
                _ => {
                    return Err(Error::Config(format!(
                        "term '{}' needs exactly one of 'f' or 'samples'",
                        t.matrix
                    )))
                }
            };
            Ok(ParamTerm {
                matrix: read_matrix_market(dir.join(&t.matrix))?,
                f,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let descriptor = m.descriptor.unwrap_or_else(|| format!("manifest {}", path.display()));
    ParamProblem::new(terms, b, m.a, descriptor)
}
