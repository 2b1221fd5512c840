//! The exact multishift solver and the Lanczos-form solver produce the same
//! iterates when the preconditioner is applied exactly.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use chebbicg::chebyshev::{ChebBasisParams, MatrixChebPoly};
use chebbicg::companion::CompanionOperator;
use chebbicg::linalg::vec::rel_diff;
use chebbicg::linalg::SparseMatrix;
use chebbicg::precond::{InnerSpec, Preconditioner};
use chebbicg::report::{ShiftSet, Side};
use chebbicg::solver_exact::{solve_exact, ExactOptions};
use chebbicg::solver_inexact::{solve_inexact, InexactOptions, TolPolicy};

fn setup(seed: u64, n: usize, d: usize, a: f64) -> (CompanionOperator, Vec<f64>) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let coeffs = (0..=d)
        .map(|l| {
            let mut t = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    let mut v = rng.gen_range(-1.0..1.0) * 0.5f64.powi(l as i32) / n as f64;
                    if l == 0 && i == j {
                        v += 2.0 + i as f64 / n as f64;
                    }
                    t.push((i, j, v));
                }
            }
            SparseMatrix::from_triplets(n, n, &t).unwrap()
        })
        .collect();
    let poly = MatrixChebPoly::new(ChebBasisParams::new(a, d).unwrap(), coeffs).unwrap();
    let b = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (CompanionOperator::new(poly).unwrap(), b)
}

#[test]
fn iterates_agree_at_every_iteration() {
    for (seed, n, d, sigma) in [(1, 20, 5, 0.2), (2, 15, 8, -0.4), (3, 30, 7, 0.0)] {
        let a = 2.0;
        let (op, b) = setup(seed, n, d, a);
        let prec = Preconditioner::new(&op, sigma, InnerSpec::Direct).unwrap();
        let shifts = ShiftSet::new(sigma, &[-1.5, -0.7, 0.6, 1.4], a).unwrap();
        let mut worst: f64 = 0.0;
        for j in 1..=15 {
            let e = ExactOptions {
                tol: 0.0,
                maxit: j,
                side: Side::Right,
                ..Default::default()
            };
            let l = InexactOptions {
                tol: 0.0,
                maxit: j,
                policy: TolPolicy::Fixed { tol: 0.0 },
                ..Default::default()
            };
            let re = solve_exact(&op, &prec, &b, &shifts, &e, None).unwrap();
            let rl = solve_inexact(&op, &prec, &b, &shifts, &l, None).unwrap();
            assert_eq!(re.iterations, j);
            assert_eq!(rl.iterations, j);
            for (x, y) in re.shifts.iter().zip(&rl.shifts) {
                assert_eq!(x.mu, y.mu);
                worst = worst.max(rel_diff(&y.x, &x.x));
            }
        }
        assert!(worst < 1e-10, "seed {seed}: max relative difference {worst:.2e}");
    }
}
