//! IoU-family metrics, candidate-set oracles and the layer-similarity profile.

use crate::error::{ShapeError, ValidationError};
use crate::grid::Mask;
use crate::linalg::{cosine, to_f64};
use crate::tensorio::TensorF32;

/// Exact pixel counts for one prediction/ground-truth pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PixelCounts {
    pub intersection: u64,
    pub union: u64,
}

impl PixelCounts {
    /// `|P ∩ G| / |P ∪ G|`, or 1 when both masks are empty.
    pub fn iou(self) -> f64 {
        if self.union == 0 {
            1.0
        } else {
            self.intersection as f64 / self.union as f64
        }
    }
}

pub fn overlap_counts(p: &Mask, g: &Mask) -> Result<PixelCounts, ValidationError> {
    if !p.same_dims(g) {
        return Err(ShapeError::Mismatch {
            what: "mask shape",
            expected: format!("{:?}", g.dims()),
            found: format!("{:?}", p.dims()),
        }
        .into());
    }
    let mut c = PixelCounts::default();
    for (&a, &b) in p.as_slice().iter().zip(g.as_slice()) {
        c.intersection += (a && b) as u64;
        c.union += (a || b) as u64;
    }
    Ok(c)
}

pub fn iou(p: &Mask, g: &Mask) -> Result<f64, ValidationError> {
    overlap_counts(p, g).map(PixelCounts::iou)
}

/// Mean and overall IoU over a set of samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub miou: f64,
    pub oiou: f64,
    pub total_intersection: u64,
    pub total_union: u64,
}

/// mIoU is the mean of per-sample IoUs; oIoU is summed intersections over
/// summed unions (1 if every union is empty).
pub fn aggregate(samples: &[PixelCounts]) -> Result<Aggregate, ValidationError> {
    if samples.is_empty() {
        return Err(ValidationError::Empty("sample list"));
    }
    let miou = samples.iter().map(|c| c.iou()).sum::<f64>() / samples.len() as f64;
    let total_intersection: u64 = samples.iter().map(|c| c.intersection).sum();
    let total_union: u64 = samples.iter().map(|c| c.union).sum();
    let oiou = PixelCounts {
        intersection: total_intersection,
        union: total_union,
    }
    .iou();
    Ok(Aggregate {
        miou,
        oiou,
        total_intersection,
        total_union,
    })
}

/// Best IoU against `g` among `candidates`.
pub fn best_iou<'a>(
    candidates: impl IntoIterator<Item = &'a Mask>,
    g: &Mask,
) -> Result<f64, ValidationError> {
    let mut best: Option<f64> = None;
    for m in candidates {
        let v = iou(m, g)?;
        best = Some(best.map_or(v, |b| b.max(v)));
    }
    best.ok_or(ValidationError::Empty("candidate set"))
}

/// Best IoU among the retained top-k candidates.
pub fn topk_oracle(masks: &[Mask], topk_ids: &[usize], g: &Mask) -> Result<f64, ValidationError> {
    best_iou(topk_ids.iter().map(|&i| &masks[i]), g)
}

/// Best IoU over every candidate the mask generator produced.
pub fn upper_bound(masks: &[Mask], g: &Mask) -> Result<f64, ValidationError> {
    best_iou(masks, g)
}

/// Per-layer cosine between two `[L, d]` embedding sequences. Layers where
/// either vector has zero norm give 0; the second value counts them.
pub fn layer_profile(a: &TensorF32, b: &TensorF32) -> Result<(Vec<f64>, usize), ValidationError> {
    if a.shape().len() != 2 || a.shape() != b.shape() {
        return Err(ShapeError::Mismatch {
            what: "layer sequences",
            expected: format!("{:?}", a.shape()),
            found: format!("{:?}", b.shape()),
        }
        .into());
    }
    let mut zero = 0;
    let values = (0..a.rows())
        .map(|l| {
            cosine(&to_f64(a.row(l)), &to_f64(b.row(l))).unwrap_or_else(|| {
                zero += 1;
                0.0
            })
        })
        .collect();
    Ok((values, zero))
}
