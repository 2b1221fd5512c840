use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::chebyshev::{ChebBasisParams, MatrixChebPoly};
use crate::companion::CompanionOperator;
use crate::linalg::SparseMatrix;

/// Random dense-pattern polynomial with a dominant constant term and decaying higher terms.
pub fn random_poly(seed: u64, n: usize, d: usize, a: f64) -> MatrixChebPoly {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let coeffs = (0..=d)
        .map(|l| {
            let mut t = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    let mut v = rng.gen_range(-1.0..1.0) * 0.5f64.powi(l as i32) / n as f64;
                    if l == 0 && i == j {
                        v += 2.0;
                    }
                    t.push((i, j, v));
                }
            }
            SparseMatrix::from_triplets(n, n, &t).unwrap()
        })
        .collect();
    MatrixChebPoly::new(ChebBasisParams::new(a, d).unwrap(), coeffs).unwrap()
}

pub fn random_op(seed: u64, n: usize, d: usize, a: f64) -> CompanionOperator {
    CompanionOperator::new(random_poly(seed, n, d, a)).unwrap()
}

pub fn random_vec(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}
