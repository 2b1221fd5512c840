//! Small dense-vector helpers.

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    // scaled accumulation avoids overflow for huge entries
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * x.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

/// `y += s * x`
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn scale(s: f64, x: &mut [f64]) {
    for v in x.iter_mut() {
        *v *= s;
    }
}

pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn scaled(s: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| s * v).collect()
}

pub fn rel_diff(x: &[f64], reference: &[f64]) -> f64 {
    let denom = norm2(reference);
    let num = norm2(&sub(x, reference));
    if denom == 0.0 {
        num
    } else {
        num / denom
    }
}
