//! Small dense-vector helpers. All accumulation is sequential in f64 so
//! results do not depend on scheduling.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity, `None` when either vector has zero norm.
/// Clamped to `[-1, 1]` to absorb rounding. The denominator is
/// `sqrt(|a|^2 |b|^2)`, which makes `cosine(a, a)` exactly 1.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let denom = (dot(a, a) * dot(b, b)).sqrt();
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    Some((dot(a, b) / denom).clamp(-1.0, 1.0))
}

pub fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}
