use super::DenseMatrix;

/// Smallest singular value by one-sided Jacobi (Hestenes) orthogonalization of the columns.
pub fn smallest_singular_value(t: &DenseMatrix) -> f64 {
    let m = t.nrows();
    let n = t.ncols();
    if m == 0 || n == 0 {
        return 0.0;
    }
    // column-major working copy
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| t[(i, j)]).collect()).collect();
    let tol = 1e-15;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut a = 0.0;
                    let mut b = 0.0;
                    let mut g = 0.0;
                    for i in 0..m {
                        a += cp[i] * cp[i];
                        b += cq[i] * cq[i];
                        g += cp[i] * cq[i];
                    }
                    (a, b, g)
                };
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let tt = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let tt = if zeta == 0.0 { 1.0 } else { tt };
                let c = 1.0 / (1.0 + tt * tt).sqrt();
                let s = c * tt;
                let (left, right) = cols.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                for i in 0..m {
                    let xp = cp[i];
                    let xq = cq[i];
                    cp[i] = c * xp - s * xq;
                    cq[i] = s * xp + c * xq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut norms: Vec<f64> = cols.iter().map(|c| super::vec::norm2(c)).collect();
    norms.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    if m < n {
        // rank is at most m; the trailing n - m values vanish
        return 0.0;
    }
    norms[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn random(rng: &mut Xoshiro256PlusPlus, n: usize) -> DenseMatrix {
        let data = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DenseMatrix::from_row_major(n, n, data).unwrap()
    }

    fn to_na(t: &DenseMatrix) -> DMatrix<f64> {
        DMatrix::from_fn(t.nrows(), t.ncols(), |i, j| t[(i, j)])
    }

    #[test]
    fn simple_cases() {
        assert!((smallest_singular_value(&DenseMatrix::identity(3)) - 1.0).abs() < 1e-15);
        let d = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.5]]).unwrap();
        assert!((smallest_singular_value(&d) - 0.5).abs() < 1e-15);
        let z = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(smallest_singular_value(&z) < 1e-15);
    }

    #[test]
    fn random_matches_eigenvalues_of_normal_matrix() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        let t = random(&mut rng, 6);
        let a = to_na(&t);
        let ev = (a.transpose() * &a).symmetric_eigen().eigenvalues;
        let lam = ev.iter().cloned().fold(f64::INFINITY, f64::min);
        let got = smallest_singular_value(&t);
        assert!((got - lam.sqrt()).abs() <= 1e-8 * lam.sqrt());
    }

    proptest::proptest! {
        #[test]
        fn reciprocal_of_inverse_norm(n in 1usize..10, seed in 0u64..300) {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            let t = random(&mut rng, n);
            let a = to_na(&t);
            if let Some(inv) = a.clone().try_inverse() {
                let inv_norm = inv.singular_values().max();
                let got = smallest_singular_value(&t);
                proptest::prop_assert!((got * inv_norm - 1.0).abs() <= 1e-8);
            }
        }
    }
}
