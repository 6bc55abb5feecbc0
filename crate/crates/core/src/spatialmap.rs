//! Patch-level image–text similarity maps.
//!
//! Intermediate patch embeddings are pushed through the encoder's post
//! LayerNorm and projection into the joint space, negated on the way in, and
//! compared against the hybrid text feature by cosine similarity.
//!
//! Negating before the LayerNorm flips the sign of the map: LN is odd when
//! `beta = 0` and the projection is linear, so `cos(P(LN(-x)), t) =
//! -cos(P(LN(x)), t)`. With a nonzero `beta`, `LN(-x) = -LN(x) + 2 beta`.

use crate::error::ValidationError;
use crate::grid::FloatGrid;
use crate::linalg::cosine;
use crate::tensorio::{ProjectionParams, TensorF32};

/// Biased-variance LayerNorm over one hidden vector.
pub fn layer_norm(x: &[f32], params: &ProjectionParams) -> Result<Vec<f64>, ValidationError> {
    let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    layer_norm_f64(&x, params)
}

fn layer_norm_f64(x: &[f64], params: &ProjectionParams) -> Result<Vec<f64>, ValidationError> {
    if x.len() != params.d_star() {
        return Err(ValidationError::Length {
            what: "patch embedding",
            expected: params.d_star(),
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ValidationError::NonFinite("patch embedding"));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + params.ln_eps()).sqrt();
    Ok(x.iter()
        .zip(params.ln_gamma())
        .zip(params.ln_beta())
        .map(|((&v, &g), &b)| g as f64 * (v - mean) * inv_std + b as f64)
        .collect())
}

/// `LN(±e) · W`. With `negate` the sign is applied before the LayerNorm.
pub fn project_patch(
    e: &[f32],
    params: &ProjectionParams,
    negate: bool,
) -> Result<Vec<f64>, ValidationError> {
    let sign = if negate { -1.0 } else { 1.0 };
    let x: Vec<f64> = e.iter().map(|&v| sign * v as f64).collect();
    let normed = layer_norm_f64(&x, params)?;
    Ok(project(&normed, params))
}

fn project(h: &[f64], params: &ProjectionParams) -> Vec<f64> {
    let d = params.d();
    let w = params.proj();
    let mut out = vec![0.0f64; d];
    for (i, &hi) in h.iter().enumerate() {
        let row = &w[i * d..(i + 1) * d];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += hi * wij as f64;
        }
    }
    out
}

/// A `p × p` map of cosine similarities plus the number of patches whose
/// projection had zero norm (those entries are 0).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    pub map: FloatGrid,
    pub zero_norm_patches: usize,
}

/// The negation-corrected map used by the pipeline.
pub fn raw_similarity_map(
    patches: &TensorF32,
    e_context: &[f64],
    params: &ProjectionParams,
) -> Result<SimilarityMap, ValidationError> {
    similarity_map(patches, e_context, params, true)
}

/// Similarity map with an explicit choice of the negation correction.
pub fn similarity_map(
    patches: &TensorF32,
    e_context: &[f64],
    params: &ProjectionParams,
    negate: bool,
) -> Result<SimilarityMap, ValidationError> {
    let p = params.patch_grid();
    let expected = [p, p, params.d_star()];
    if patches.shape() != expected {
        return Err(crate::error::ShapeError::Mismatch {
            what: "patch embeddings",
            expected: format!("{expected:?}"),
            found: format!("{:?}", patches.shape()),
        }
        .into());
    }
    if e_context.len() != params.d() {
        return Err(ValidationError::Length {
            what: "e_context",
            expected: params.d(),
            found: e_context.len(),
        });
    }
    if e_context.iter().all(|&v| v == 0.0) {
        return Err(ValidationError::ZeroNorm("e_context"));
    }
    let d_star = params.d_star();
    let data = patches.data();
    let mut values = Vec::with_capacity(p * p);
    let mut zero_norm_patches = 0;
    for cell in data.chunks_exact(d_star) {
        let projected = project_patch(cell, params, negate)?;
        values.push(match cosine(&projected, e_context) {
            Some(c) => c,
            None => {
                zero_norm_patches += 1;
                0.0
            }
        });
    }
    if zero_norm_patches > 0 {
        log::debug!("{zero_norm_patches} patch(es) projected to zero norm");
    }
    Ok(SimilarityMap {
        map: FloatGrid::from_vec(p, p, values).expect("p >= 1"),
        zero_norm_patches,
    })
}

/// Min-max rescale to `[0, 1]`; a constant map becomes all zeros.
pub fn normalize_map(m: &FloatGrid) -> FloatGrid {
    let (lo, hi) = m
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if range.is_nan() || range <= 0.0 {
        return m.map(|_| 0.0);
    }
    m.map(|&v| (v - lo) / range)
}

/// Source coordinate and blend weight for one output index under the
/// align-corners=false convention.
fn source_index(dst: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let scale = in_len as f64 / out_len as f64;
    let src = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(in_len - 1);
    let i1 = if i0 + 1 < in_len { i0 + 1 } else { i0 };
    (i0, i1, src - i0 as f64)
}

/// Bilinear resize with align-corners=false (half-pixel centers, edge clamp).
pub fn interpolate_map(m: &FloatGrid, height: usize, width: usize) -> Result<FloatGrid, ValidationError> {
    if height == 0 {
        return Err(ValidationError::Empty("target height"));
    }
    if width == 0 {
        return Err(ValidationError::Empty("target width"));
    }
    let (in_h, in_w) = m.dims();
    let cols: Vec<_> = (0..width).map(|x| source_index(x, in_w, width)).collect();
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        let (y0, y1, ly) = source_index(y, in_h, height);
        for &(x0, x1, lx) in &cols {
            let v00 = *m.get(y0, x0);
            let v01 = *m.get(y0, x1);
            let v10 = *m.get(y1, x0);
            let v11 = *m.get(y1, x1);
            let top = v00 + lx * (v01 - v00);
            let bottom = v10 + lx * (v11 - v10);
            out.push(top + ly * (bottom - top));
        }
    }
    Ok(FloatGrid::from_vec(height, width, out).expect("dims positive"))
}
