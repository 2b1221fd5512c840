//! Chebyshev interpolation of scalar and matrix-valued functions on `[-a, a]`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChebBasisParams {
    pub a: f64,
    pub d: usize,
}

impl ChebBasisParams {
    pub fn new(a: f64, d: usize) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidInput(format!("interval half-width must be positive, got {a}")));
        }
        if d < 1 {
            return Err(Error::InvalidInput("degree must be at least 1".into()));
        }
        Ok(Self { a, d })
    }
}

/// `count` first-kind points `a cos(pi (2k+1) / (2 count))`, decreasing.
pub fn chebyshev_points(a: f64, count: usize) -> Vec<f64> {
    let m = count as f64;
    (0..count)
        .map(|k| a * (PI * (2 * k + 1) as f64 / (2.0 * m)).cos())
        .collect()
}

/// The `d + 1` interpolation nodes (roots of the degree `d + 1` polynomial).
pub fn cheb_nodes(params: &ChebBasisParams) -> Vec<f64> {
    chebyshev_points(params.a, params.d + 1)
}

/// `(tau_0(mu), ..., tau_d(mu))` by the three-term recurrence.
pub fn cheb_basis(mu: f64, params: &ChebBasisParams) -> Vec<f64> {
    basis_values(mu, params.a, params.d)
}

pub(crate) fn basis_values(mu: f64, a: f64, d: usize) -> Vec<f64> {
    let t = mu / a;
    let mut tau = Vec::with_capacity(d + 1);
    tau.push(1.0);
    if d >= 1 {
        tau.push(t);
    }
    for l in 1..d {
        let next = 2.0 * t * tau[l] - tau[l - 1];
        tau.push(next);
    }
    tau
}

/// Coefficients of the degree-`d` interpolant from samples at [`cheb_nodes`].
pub fn scalar_cheb_coeffs(samples: &[f64], params: &ChebBasisParams) -> Result<Vec<f64>> {
    let m = params.d + 1;
    if samples.len() != m {
        return Err(Error::SampleCount {
            expected: m,
            found: samples.len(),
        });
    }
    let mf = m as f64;
    Ok((0..m)
        .map(|l| {
            let s: f64 = samples
                .iter()
                .enumerate()
                .map(|(k, f)| f * (l as f64 * PI * (2 * k + 1) as f64 / (2.0 * mf)).cos())
                .sum();
            let w = if l == 0 { 1.0 } else { 2.0 };
            w * s / mf
        })
        .collect())
}

/// Evaluates `sum_l c_l tau_l(mu)`.
pub fn eval_scalar(coeffs: &[f64], mu: f64, a: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let tau = basis_values(mu, a, coeffs.len() - 1);
    coeffs.iter().zip(&tau).map(|(c, t)| c * t).sum()
}

/// Terms `(C_i, f_i(x_k))` of a sum-form matrix function sampled at the nodes.
#[derive(Debug, Clone)]
pub struct ParamMatrixSamples {
    pub terms: Vec<(SparseMatrix, Vec<f64>)>,
}

/// `P(mu) = sum_l P_l tau_l(mu)` with all `P_l` on a common pattern.
#[derive(Debug, Clone)]
pub struct MatrixChebPoly {
    pub params: ChebBasisParams,
    pub coeffs: Vec<SparseMatrix>,
}

impl MatrixChebPoly {
    pub fn new(params: ChebBasisParams, coeffs: Vec<SparseMatrix>) -> Result<Self> {
        if coeffs.len() != params.d + 1 {
            return Err(Error::SampleCount {
                expected: params.d + 1,
                found: coeffs.len(),
            });
        }
        let n = coeffs[0].nrows();
        for c in &coeffs {
            if c.nrows() != n || c.ncols() != n {
                return Err(Error::InvalidInput(format!(
                    "coefficient matrices must all be {n}x{n}, found {}x{}",
                    c.nrows(),
                    c.ncols()
                )));
            }
        }
        Ok(Self { params, coeffs })
    }

    pub fn n(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn degree(&self) -> usize {
        self.params.d
    }

    pub fn a(&self) -> f64 {
        self.params.a
    }

    pub fn eval(&self, mu: f64) -> SparseMatrix {
        assemble_p_at(self, mu)
    }

    /// `P(mu) x` without assembling `P(mu)`.
    pub fn apply(&self, mu: f64, x: &[f64]) -> Result<Vec<f64>> {
        let tau = cheb_basis(mu, &self.params);
        let mut y = vec![0.0; self.n()];
        for (t, p) in tau.iter().zip(&self.coeffs) {
            p.spmv_acc(*t, x, false, &mut y)?;
        }
        Ok(y)
    }
}

pub fn matrix_poly_from_samples(input: &ParamMatrixSamples, params: &ChebBasisParams) -> Result<MatrixChebPoly> {
    let Some((first, _)) = input.terms.first() else {
        return Err(Error::InvalidInput("no terms given".into()));
    };
    let n = first.nrows();
    let mut scal = Vec::with_capacity(input.terms.len());
    for (c, f) in &input.terms {
        if c.nrows() != n || c.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "term matrices must all be {n}x{n}, found {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        scal.push(scalar_cheb_coeffs(f, params)?);
    }
    let coeffs = (0..=params.d)
        .map(|l| {
            let terms: Vec<(f64, &SparseMatrix)> = input
                .terms
                .iter()
                .zip(&scal)
                .map(|((c, _), cs)| (cs[l], c))
                .collect();
            SparseMatrix::linear_combination(&terms)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    MatrixChebPoly::new(*params, coeffs)
}

pub fn assemble_p_at(poly: &MatrixChebPoly, sigma: f64) -> SparseMatrix {
    let tau = cheb_basis(sigma, &poly.params);
    let terms: Vec<(f64, &SparseMatrix)> = tau.iter().copied().zip(poly.coeffs.iter()).collect();
    SparseMatrix::linear_combination(&terms).expect("coefficient shapes validated at construction")
}

/// Max over probes of `|P(mu) - A(mu)|_F / |A(mu)|_F`.
pub fn interp_error<F>(poly: &MatrixChebPoly, mut eval_a: F, probes: &[f64]) -> Result<f64>
where
    F: FnMut(f64) -> Result<SparseMatrix>,
{
    let mut worst = 0.0f64;
    for &mu in probes {
        let p = assemble_p_at(poly, mu);
        let a = eval_a(mu)?;
        let diff = SparseMatrix::linear_combination(&[(1.0, &p), (-1.0, &a)])?;
        let denom = a.frobenius_norm();
        let e = if denom > 0.0 {
            diff.frobenius_norm() / denom
        } else {
            diff.frobenius_norm()
        };
        worst = worst.max(e);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn params(a: f64, d: usize) -> ChebBasisParams {
        ChebBasisParams::new(a, d).unwrap()
    }

    #[test]
    fn node_examples() {
        assert_eq!(chebyshev_points(2.0, 1).len(), 1);
        assert!(chebyshev_points(2.0, 1)[0].abs() < 1e-15);
        let x = cheb_nodes(&params(1.0, 1));
        let h = 0.5f64.sqrt();
        assert!((x[0] - h).abs() < 1e-15 && (x[1] + h).abs() < 1e-15);
    }

    #[test]
    fn nodes_are_roots_of_next_basis_polynomial() {
        let p = params(3.0, 7);
        let x = cheb_nodes(&p);
        let wider = params(3.0, 8);
        for w in x.windows(2) {
            assert!(w[0] > w[1]);
        }
        for &xk in &x {
            assert!(xk.abs() < 3.0);
            let tau = cheb_basis(xk, &wider);
            assert!(tau[8].abs() < 1e-13);
        }
    }

    #[test]
    fn basis_examples() {
        let b = cheb_basis(0.0, &params(1.0, 4));
        assert_eq!(b, vec![1.0, 0.0, -1.0, 0.0, 1.0]);
        assert!(cheb_basis(2.5, &params(2.5, 6)).iter().all(|&t| (t - 1.0).abs() < 1e-14));
        let h = cheb_basis(1.0, &params(2.0, 3));
        for (got, want) in h.iter().zip([1.0, 0.5, -0.5, -1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn coeff_examples() {
        let p = params(2.0, 5);
        let ones = vec![1.0; 6];
        let c = scalar_cheb_coeffs(&ones, &p).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15 && c[1..].iter().all(|v| v.abs() < 1e-15));
        let lin: Vec<f64> = cheb_nodes(&p).iter().map(|x| x / 2.0).collect();
        let c = scalar_cheb_coeffs(&lin, &p).unwrap();
        assert!((c[1] - 1.0).abs() < 1e-14);
        assert!(c.iter().enumerate().all(|(l, v)| l == 1 || v.abs() < 1e-15));
        assert!(matches!(scalar_cheb_coeffs(&[1.0], &p), Err(Error::SampleCount { .. })));
    }

    #[test]
    fn exp_coefficients_match_least_squares_fit() {
        let p = params(1.0, 10);
        let samples: Vec<f64> = cheb_nodes(&p).iter().map(|x| x.exp()).collect();
        let c = scalar_cheb_coeffs(&samples, &p).unwrap();
        let pts: Vec<f64> = (0..200).map(|k| -1.0 + 2.0 * k as f64 / 199.0).collect();
        // Chebyshev-Vandermonde built from the trigonometric definition
        let v = DMatrix::from_fn(200, 11, |i, l| (l as f64 * pts[i].acos()).cos());
        let rhs = DVector::from_iterator(200, pts.iter().map(|x| x.exp()));
        let ls = v.svd(true, true).solve(&rhs, 1e-14).unwrap();
        for l in 0..=10 {
            assert!((c[l] - ls[l]).abs() <= 1e-10, "l={l}: {} vs {}", c[l], ls[l]);
        }
    }

    #[test]
    fn matrix_poly_trivial_cases() {
        let c = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 1, 3.0)]).unwrap();
        let p = params(2.0, 4);
        let nodes = cheb_nodes(&p);
        let one = ParamMatrixSamples {
            terms: vec![(c.clone(), vec![1.0; 5])],
        };
        let poly = matrix_poly_from_samples(&one, &p).unwrap();
        assert_eq!(poly.coeffs[0].to_dense(), c.to_dense());
        assert!(poly.coeffs[1..].iter().all(|m| m.frobenius_norm() < 1e-15));
        let lin = ParamMatrixSamples {
            terms: vec![(c.clone(), nodes.iter().map(|x| x / 2.0).collect())],
        };
        let poly = matrix_poly_from_samples(&lin, &p).unwrap();
        assert!((poly.coeffs[1].frobenius_norm() - c.frobenius_norm()).abs() < 1e-14);
        assert!(poly.coeffs[0].frobenius_norm() < 1e-15);
        let bad = ParamMatrixSamples {
            terms: vec![(c.clone(), vec![1.0; 5]), (SparseMatrix::identity(3), vec![1.0; 5])],
        };
        assert!(matrix_poly_from_samples(&bad, &p).is_err());
    }

    #[test]
    fn assemble_at_zero_alternates() {
        let p = params(1.0, 4);
        let coeffs: Vec<SparseMatrix> = (0..5).map(|l| SparseMatrix::identity(2).scaled((l + 1) as f64)).collect();
        let poly = MatrixChebPoly::new(p, coeffs).unwrap();
        // 1 - 3 + 5
        assert_eq!(assemble_p_at(&poly, 0.0).to_dense()[(0, 0)], 3.0);
        let id = MatrixChebPoly::new(
            p,
            (0..5)
                .map(|l| SparseMatrix::identity(2).scaled(if l == 0 { 1.0 } else { 0.0 }))
                .collect(),
        )
        .unwrap();
        assert_eq!(assemble_p_at(&id, 0.37).to_dense(), crate::linalg::DenseMatrix::identity(2));
    }

    #[test]
    fn exp_neg_truncation_error() {
        let p = params(4.0, 17);
        let samples: Vec<f64> = cheb_nodes(&p).iter().map(|x| (-x).exp()).collect();
        let c = scalar_cheb_coeffs(&samples, &p).unwrap();
        let worst = (0..101)
            .map(|k| -4.0 + 8.0 * k as f64 / 100.0)
            .map(|mu| ((eval_scalar(&c, mu, 4.0) - (-mu).exp()) / (-mu).exp()).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-8, "{worst}");
    }

    proptest::proptest! {
        #[test]
        fn recurrence_matches_trig_definition(mu in -3.0f64..3.0, d in 1usize..40) {
            let tau = cheb_basis(mu, &params(3.0, d));
            let th = (mu / 3.0).acos();
            for (l, t) in tau.iter().enumerate() {
                proptest::prop_assert!((t - (l as f64 * th).cos()).abs() <= 1e-12);
            }
        }

        #[test]
        fn coefficient_round_trip(coeffs in proptest::collection::vec(-1.0f64..1.0, 2..30), a in 0.5f64..10.0) {
            let d = coeffs.len() - 1;
            let p = params(a, d);
            let samples: Vec<f64> = cheb_nodes(&p).iter().map(|&x| eval_scalar(&coeffs, x, a)).collect();
            let back = scalar_cheb_coeffs(&samples, &p).unwrap();
            for (u, v) in back.iter().zip(&coeffs) {
                proptest::prop_assert!((u - v).abs() <= 1e-12);
            }
        }
    }
}
