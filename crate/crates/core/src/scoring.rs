//! Candidate-mask scoring, CoMap-guided reranking of the top candidates and
//! final selection with the spatial-coherence penalty.

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterMap;
use crate::error::{ShapeError, ValidationError};
use crate::grid::{LabelGrid, Mask};
use crate::linalg::cosine;
use crate::tensorio::TensorF32;

/// How a mask's agreement with the CoMap clusters is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OverlapMetric {
    /// IoU between the mask and the union of all cluster pixels.
    #[default]
    UnionIou,
    /// Best IoU between the mask and any single cluster.
    PerClusterMax,
}

impl OverlapMetric {
    pub fn name(self) -> &'static str {
        match self {
            OverlapMetric::UnionIou => "union-iou",
            OverlapMetric::PerClusterMax => "per-cluster-max",
        }
    }
}

/// Size of the retained candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TopkPolicy {
    /// One slot per generated cluster (at least one).
    #[default]
    ClusterCount,
    Fixed(usize),
}

impl TopkPolicy {
    pub fn requested(self) -> Option<usize> {
        match self {
            TopkPolicy::ClusterCount => None,
            TopkPolicy::Fixed(k) => Some(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskScore {
    pub mask_id: usize,
    /// Cosine with the hybrid text feature.
    pub s_pos: f64,
    /// Cosine with the negative text feature, when one was extracted.
    pub s_neg: Option<f64>,
    /// Agreement with the CoMap clusters, in `[0, 1]`.
    pub overlap: f64,
    /// Score used for the final choice.
    pub final_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// All candidates by descending `s_pos`.
    pub sorted_ids: Vec<usize>,
    /// All candidates by descending overlap.
    pub clustered_ids: Vec<usize>,
    pub topk_ids: Vec<usize>,
    pub final_id: usize,
    pub k_used: usize,
    pub scores: Vec<MaskScore>,
    /// Whether the spatial-coherence penalty entered the final choice.
    pub spatial_guided: bool,
    /// A spatial cue was flagged but no negative embedding was available.
    pub guidance_fallback: bool,
    /// Candidates whose image embedding had zero norm (scored 0).
    pub zero_norm_masks: usize,
}

/// Per-mask cosine of each `e_img` row with `text`. Zero-norm rows score 0;
/// the second value counts them.
pub fn initial_scores(e_img: &TensorF32, text: &[f64]) -> Result<(Vec<f64>, usize), ValidationError> {
    if e_img.shape().len() != 2 || e_img.shape()[1] != text.len() {
        return Err(ShapeError::Mismatch {
            what: "e_img",
            expected: format!("[M, {}]", text.len()),
            found: format!("{:?}", e_img.shape()),
        }
        .into());
    }
    if text.iter().all(|&v| v == 0.0) {
        return Err(ValidationError::ZeroNorm("text feature"));
    }
    let mut zero = 0;
    let scores = (0..e_img.rows())
        .map(|m| {
            let row: Vec<f64> = e_img.row(m).iter().map(|&v| v as f64).collect();
            cosine(&row, text).unwrap_or_else(|| {
                zero += 1;
                0.0
            })
        })
        .collect();
    if zero > 0 {
        log::debug!("{zero} candidate embedding(s) with zero norm");
    }
    Ok((scores, zero))
}

/// Descending by score, ties by ascending id.
pub fn sort_masks(scores: &[f64]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ids
}

/// Agreement between `mask` and the image-resolution cluster labels.
/// Zero when there are no clusters.
pub fn cluster_overlap(
    mask: &Mask,
    labels: &LabelGrid,
    k: u32,
    metric: OverlapMetric,
) -> Result<f64, ValidationError> {
    if !mask.same_dims(labels) {
        return Err(ShapeError::Mismatch {
            what: "mask vs cluster map",
            expected: format!("{:?}", labels.dims()),
            found: format!("{:?}", mask.dims()),
        }
        .into());
    }
    if k == 0 {
        return Ok(0.0);
    }
    let k = k as usize;
    let mut inter = vec![0u64; k + 1];
    let mut size = vec![0u64; k + 1];
    for (&m, &l) in mask.as_slice().iter().zip(labels.as_slice()) {
        let l = l as usize;
        size[l] += 1;
        if m {
            inter[l] += 1;
        }
    }
    let mask_count = mask.count();
    let ratio = |i: u64, s: u64| -> f64 {
        let union = s + mask_count - i;
        if union == 0 {
            0.0
        } else {
            i as f64 / union as f64
        }
    };
    Ok(match metric {
        OverlapMetric::UnionIou => {
            let i: u64 = inter[1..].iter().sum();
            let s: u64 = size[1..].iter().sum();
            ratio(i, s)
        }
        OverlapMetric::PerClusterMax => (1..=k).map(|l| ratio(inter[l], size[l])).fold(0.0, f64::max),
    })
}

/// Orders all candidates by descending overlap, then descending `s_pos`,
/// then ascending id.
pub fn clustered_order(overlaps: &[f64], s_pos: &[f64]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..overlaps.len()).collect();
    ids.sort_by(|&a, &b| {
        overlaps[b]
            .total_cmp(&overlaps[a])
            .then(s_pos[b].total_cmp(&s_pos[a]))
            .then(a.cmp(&b))
    });
    ids
}

/// Number of retained candidates.
pub fn k_used(requested_k: Option<usize>, clusters: u32, candidates: usize) -> usize {
    requested_k
        .unwrap_or((clusters as usize).max(1))
        .max(1)
        .min(candidates)
}

/// Keeps the best candidate by text similarity and fills the remaining
/// `k_used - 1` slots from the other candidates in clustered order.
pub fn rerank_top_candidates(sorted_ids: &[usize], clustered_ids: &[usize], k_used: usize) -> Vec<usize> {
    let Some(&first) = sorted_ids.first() else {
        return Vec::new();
    };
    std::iter::once(first)
        .chain(clustered_ids.iter().copied().filter(|&id| id != first))
        .take(k_used.max(1))
        .collect()
}

/// Final score per candidate: `s_pos - alpha * s_neg` when guidance applies,
/// plain `s_pos` otherwise.
pub fn final_score(s_pos: f64, s_neg: Option<f64>, alpha: f64, guided: bool) -> f64 {
    match (guided, s_neg) {
        (true, Some(neg)) => s_pos - alpha * neg,
        _ => s_pos,
    }
}

/// Argmax of `final_scores` over `topk_ids`, ties by ascending id.
pub fn select_final(topk_ids: &[usize], final_scores: &[f64]) -> usize {
    *topk_ids
        .iter()
        .max_by(|&&a, &&b| final_scores[a].total_cmp(&final_scores[b]).then(b.cmp(&a)))
        .expect("top-k is never empty")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub alpha: f64,
    pub topk: TopkPolicy,
    pub overlap_metric: OverlapMetric,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            topk: TopkPolicy::ClusterCount,
            overlap_metric: OverlapMetric::UnionIou,
        }
    }
}

/// Inputs for one sample's candidate selection.
pub struct Candidates<'a> {
    pub masks: &'a [Mask],
    pub e_img: &'a TensorF32,
    pub e_context: &'a [f64],
    pub e_neg: Option<&'a [f64]>,
    pub spatial_cue: bool,
}

/// Runs scoring, sorting, reranking and final selection for one sample.
pub fn select(
    candidates: &Candidates<'_>,
    comap: &ClusterMap,
    config: &SelectionConfig,
) -> Result<SelectionResult, ValidationError> {
    if candidates.masks.is_empty() {
        return Err(ValidationError::Empty("candidate masks"));
    }
    if candidates.e_img.rows() != candidates.masks.len() {
        return Err(ValidationError::Length {
            what: "e_img rows",
            expected: candidates.masks.len(),
            found: candidates.e_img.rows(),
        });
    }
    if !(0.0..=1.0).contains(&config.alpha) {
        return Err(ValidationError::OutOfRange {
            name: "alpha",
            value: config.alpha,
            min: 0.0,
            max: 1.0,
        });
    }
    let labels = comap
        .interpolated
        .as_ref()
        .ok_or(ValidationError::Empty("interpolated cluster map"))?;

    let (s_pos, zero_pos) = initial_scores(candidates.e_img, candidates.e_context)?;
    let (s_neg, zero_neg) = match candidates.e_neg {
        Some(neg) if neg.iter().any(|&v| v != 0.0) => {
            let (s, z) = initial_scores(candidates.e_img, neg)?;
            (Some(s), z)
        }
        _ => (None, 0),
    };
    let overlaps = candidates
        .masks
        .iter()
        .map(|m| cluster_overlap(m, labels, comap.k, config.overlap_metric))
        .collect::<Result<Vec<_>, _>>()?;

    let guidance_fallback = candidates.spatial_cue && s_neg.is_none();
    if guidance_fallback {
        log::warn!("spatial cue present without a negative text embedding; selecting by s_pos");
    }
    let guided = candidates.spatial_cue && s_neg.is_some();

    let scores: Vec<MaskScore> = (0..s_pos.len())
        .map(|m| {
            let neg = s_neg.as_ref().map(|s| s[m]);
            MaskScore {
                mask_id: m,
                s_pos: s_pos[m],
                s_neg: neg,
                overlap: overlaps[m],
                final_score: final_score(s_pos[m], neg, config.alpha, guided),
            }
        })
        .collect();
    let finals: Vec<f64> = scores.iter().map(|s| s.final_score).collect();

    let sorted_ids = sort_masks(&s_pos);
    let clustered_ids = clustered_order(&overlaps, &s_pos);
    let k = k_used(config.topk.requested(), comap.k, s_pos.len());
    let topk_ids = rerank_top_candidates(&sorted_ids, &clustered_ids, k);
    let final_id = select_final(&topk_ids, &finals);

    Ok(SelectionResult {
        sorted_ids,
        clustered_ids,
        topk_ids,
        final_id,
        k_used: k,
        scores,
        spatial_guided: guided,
        guidance_fallback,
        zero_norm_masks: zero_pos.max(zero_neg),
    })
}
