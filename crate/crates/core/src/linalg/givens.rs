/// Plane rotation `[[c, s], [-s, c]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GivensRotation {
    pub c: f64,
    pub s: f64,
}

impl GivensRotation {
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.c * x + self.s * y, -self.s * x + self.c * y)
    }
}

/// Rotation that maps `(a, b)` to `(r, 0)` with `r >= 0`.
pub fn givens(a: f64, b: f64) -> (GivensRotation, f64) {
    if a == 0.0 && b == 0.0 {
        return (GivensRotation { c: 1.0, s: 0.0 }, 0.0);
    }
    let r = a.hypot(b);
    (GivensRotation { c: a / r, s: b / r }, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cases() {
        assert_eq!(givens(1.0, 0.0), (GivensRotation { c: 1.0, s: 0.0 }, 1.0));
        assert_eq!(givens(0.0, 1.0), (GivensRotation { c: 0.0, s: 1.0 }, 1.0));
        assert_eq!(givens(0.0, 0.0), (GivensRotation { c: 1.0, s: 0.0 }, 0.0));
        let (g, r) = givens(3.0, 4.0);
        assert!((g.c - 0.6).abs() < 1e-15 && (g.s - 0.8).abs() < 1e-15 && (r - 5.0).abs() < 1e-15);
    }

    #[test]
    fn negative_inputs_keep_r_nonnegative() {
        let (g, r) = givens(-3.0, -4.0);
        assert!(r > 0.0);
        let (x, y) = g.apply(-3.0, -4.0);
        assert!((x - r).abs() < 1e-14 && y.abs() < 1e-14);
    }

    proptest::proptest! {
        #[test]
        fn annihilates_second_component(a in -1e3f64..1e3, b in -1e3f64..1e3) {
            let (g, r) = givens(a, b);
            proptest::prop_assert!((g.c * g.c + g.s * g.s - 1.0).abs() <= 1e-14);
            let (x, y) = g.apply(a, b);
            let scale = r.max(1.0);
            proptest::prop_assert!(y.abs() <= 1e-14 * scale);
            proptest::prop_assert!((x - r).abs() <= 1e-14 * scale);
            proptest::prop_assert!(r >= 0.0);
        }
    }
}
