//! Hybrid text feature: a per-dimension weighted sum of the sentence-level
//! embedding and the noun-plus-context embedding.
//!
//! Inputs are consumed as delivered by the extractor. No normalization is
//! applied here; the cosine similarities downstream absorb a global scale of
//! the result but not the relative scale of the two terms.

use crate::error::ValidationError;

/// Weight given to the sentence embedding when none is configured.
pub const DEFAULT_GAMMA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct HybridTextFeature {
    pub e_context: Vec<f64>,
    pub gamma: f64,
}

/// `gamma * e_sen + (1 - gamma) * e_noun`, computed in f64.
pub fn fuse(e_sen: &[f32], e_noun: &[f32], gamma: f64) -> Result<HybridTextFeature, ValidationError> {
    if e_sen.len() != e_noun.len() {
        return Err(ValidationError::Length {
            what: "e_noun",
            expected: e_sen.len(),
            found: e_noun.len(),
        });
    }
    if e_sen.is_empty() {
        return Err(ValidationError::Empty("e_sen"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(ValidationError::OutOfRange {
            name: "gamma",
            value: gamma,
            min: 0.0,
            max: 1.0,
        });
    }
    if e_sen.iter().any(|x| !x.is_finite()) {
        return Err(ValidationError::NonFinite("e_sen"));
    }
    if e_noun.iter().any(|x| !x.is_finite()) {
        return Err(ValidationError::NonFinite("e_noun"));
    }
    let rest = 1.0 - gamma;
    let e_context = e_sen
        .iter()
        .zip(e_noun)
        .map(|(&s, &n)| gamma * s as f64 + rest * n as f64)
        .collect();
    Ok(HybridTextFeature { e_context, gamma })
}
