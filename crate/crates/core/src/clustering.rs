//! Threshold a similarity map and group the surviving patches into
//! connected clusters (the CoMap).
//!
//! Seeds are scanned in raster order and each seed floods its component with
//! a FIFO queue, so labels are numbered by the raster position of each
//! component's first cell.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::grid::{FloatGrid, LabelGrid, Mask};
use crate::spatialmap::normalize_map;

/// Step by which the threshold is lowered when nothing passes it.
pub const THRESHOLD_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// N, S, E, W neighbours.
    #[default]
    Four,
    /// All eight neighbours.
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }

    pub fn as_number(self) -> u8 {
        match self {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMap {
    /// Patch-resolution labels, `0` is background.
    pub labels: LabelGrid,
    /// Number of clusters; labels run `1..=k`.
    pub k: u32,
    /// Threshold that produced `labels` after any adaptive lowering.
    pub delta_used: f64,
    /// Labels upsampled to image resolution, when requested.
    pub interpolated: Option<LabelGrid>,
}

/// Strict `m > delta`, entrywise.
pub fn threshold(m: &FloatGrid, delta: f64) -> Mask {
    m.map(|&v| v > delta)
}

/// Labels the connected components of `b` in raster seed order.
pub fn connected_components(b: &Mask, connectivity: Connectivity) -> (LabelGrid, u32) {
    let (h, w) = b.dims();
    let mut labels = LabelGrid::filled(h, w, 0);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for r in 0..h {
        for c in 0..w {
            if !*b.get(r, c) || *labels.get(r, c) != 0 {
                continue;
            }
            next += 1;
            labels.set(r, c, next);
            queue.push_back((r, c));
            while let Some((pr, pc)) = queue.pop_front() {
                for &(dr, dc) in connectivity.offsets() {
                    let nr = pr as isize + dr;
                    let nc = pc as isize + dc;
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let (nr, nc) = (nr as usize, nc as usize);
                    if *b.get(nr, nc) && *labels.get(nr, nc) == 0 {
                        labels.set(nr, nc, next);
                        queue.push_back((nr, nc));
                    }
                }
            }
        }
    }
    (labels, next)
}

/// Labels one thresholded grid without the adaptive fallback.
pub fn cluster_binary(b: &Mask, connectivity: Connectivity, delta: f64) -> ClusterMap {
    let (labels, k) = connected_components(b, connectivity);
    ClusterMap {
        labels,
        k,
        delta_used: delta,
        interpolated: None,
    }
}

/// Thresholds an already normalized map, lowering `delta` in steps of
/// [`THRESHOLD_STEP`] while nothing passes. Stops with `k = 0` once the next
/// step would go below zero. Returns the binary grid and the threshold used.
pub fn adaptive_threshold(m_norm: &FloatGrid, delta: f64) -> (Mask, f64) {
    let mut step = 0u32;
    loop {
        let current = delta - step as f64 * THRESHOLD_STEP;
        let b = threshold(m_norm, current);
        if b.any() {
            return (b, current);
        }
        let next = delta - (step + 1) as f64 * THRESHOLD_STEP;
        if next < 0.0 {
            return (b, current);
        }
        step += 1;
    }
}

/// Nearest-neighbour upsampling of a label grid. Source index is
/// `floor(dst * in / out)` in exact integer arithmetic.
pub fn upsample_labels(labels: &LabelGrid, height: usize, width: usize) -> LabelGrid {
    let (in_h, in_w) = labels.dims();
    LabelGrid::from_fn(height, width, |y, x| {
        *labels.get(y * in_h / height, x * in_w / width)
    })
}

/// Full CoMap construction from a raw similarity map: normalize, threshold
/// with fallback, label, and upsample labels to `height × width`.
pub fn comap(
    raw: &FloatGrid,
    delta: f64,
    height: usize,
    width: usize,
    connectivity: Connectivity,
) -> ClusterMap {
    let normalized = normalize_map(raw);
    let (binary, delta_used) = adaptive_threshold(&normalized, delta);
    let mut cm = cluster_binary(&binary, connectivity, delta_used);
    cm.interpolated = Some(upsample_labels(&cm.labels, height, width));
    cm
}
