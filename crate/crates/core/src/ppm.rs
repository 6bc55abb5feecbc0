//! Binary PPM (P6) output with a fixed heatmap colormap and label palette.
//!
//! Heatmap: values are clamped to `[0, 1]` and quantized to
//! `q = round(255 * v)`. The color for `q` is a piecewise-linear blend through
//! five stops at `q = 0, 64, 128, 192, 255`:
//! dark blue (0,0,128), blue (0,0,255), green (0,255,0), yellow (255,255,0),
//! red (255,0,0). Channels are computed in integer arithmetic with
//! round-half-up, so output is bit-exact for identical inputs.

use std::fs;
use std::path::Path;

use crate::error::Error;
use crate::grid::{FloatGrid, LabelGrid, Mask};

pub type Rgb = [u8; 3];

const STOPS: [(u32, Rgb); 5] = [
    (0, [0, 0, 128]),
    (64, [0, 0, 255]),
    (128, [0, 255, 0]),
    (192, [255, 255, 0]),
    (255, [255, 0, 0]),
];

/// Background first, then colors cycled for labels `1, 2, ...`.
pub const LABEL_PALETTE: [Rgb; 11] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 190],
];

/// Colors for the final-mask overlay.
pub const TRUE_POSITIVE: Rgb = [255, 255, 255];
pub const FALSE_POSITIVE: Rgb = [255, 0, 0];
pub const FALSE_NEGATIVE: Rgb = [0, 0, 255];
pub const TRUE_NEGATIVE: Rgb = [0, 0, 0];

pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn colormap(q: u8) -> Rgb {
    let q = q as u32;
    let i = STOPS
        .iter()
        .rposition(|&(s, _)| s <= q)
        .unwrap()
        .min(STOPS.len() - 2);
    let (q0, c0) = STOPS[i];
    let (q1, c1) = STOPS[i + 1];
    let span = q1 - q0;
    let t = q - q0;
    let mut out = [0u8; 3];
    for ch in 0..3 {
        let a = c0[ch] as i64;
        let b = c1[ch] as i64;
        // a + (b - a) * t / span, rounded half up.
        let num = a * span as i64 + (b - a) * t as i64;
        out[ch] = ((2 * num + span as i64).div_euclid(2 * span as i64)) as u8;
    }
    out
}

pub fn label_color(label: u32) -> Rgb {
    if label == 0 {
        LABEL_PALETTE[0]
    } else {
        let n = (LABEL_PALETTE.len() - 1) as u32;
        LABEL_PALETTE[(1 + (label - 1) % n) as usize]
    }
}

/// An 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl Image {
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for px in &self.pixels {
            out.extend_from_slice(px);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), Error> {
        let path = path.as_ref();
        fs::write(path, self.to_ppm()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Heatmap of values expected in `[0, 1]`.
pub fn heatmap(values: &FloatGrid) -> Image {
    Image {
        width: values.width(),
        height: values.height(),
        pixels: values.as_slice().iter().map(|&v| colormap(quantize(v))).collect(),
    }
}

pub fn label_image(labels: &LabelGrid) -> Image {
    Image {
        width: labels.width(),
        height: labels.height(),
        pixels: labels.as_slice().iter().map(|&l| label_color(l)).collect(),
    }
}

/// Prediction against ground truth: TP white, FP red, FN blue, TN black.
pub fn mask_overlay(pred: &Mask, gt: &Mask) -> Image {
    let pixels = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(&p, &g)| match (p, g) {
            (true, true) => TRUE_POSITIVE,
            (true, false) => FALSE_POSITIVE,
            (false, true) => FALSE_NEGATIVE,
            (false, false) => TRUE_NEGATIVE,
        })
        .collect();
    Image {
        width: pred.width(),
        height: pred.height(),
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_hits_stops() {
        for (q, c) in STOPS {
            assert_eq!(colormap(q as u8), c);
        }
        assert_eq!(colormap(32), [0, 0, 192]);
        assert_eq!(colormap(96), [0, 128, 128]);
    }

    #[test]
    fn quantize_clamps() {
        assert_eq!(quantize(-0.3), 0);
        assert_eq!(quantize(1.7), 255);
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(f64::NAN), 0);
    }

    #[test]
    fn ppm_header_and_size() {
        let img = heatmap(&FloatGrid::filled(3, 2, 0.25));
        let bytes = img.to_ppm();
        assert!(bytes.starts_with(b"P6\n2 3\n255\n"));
        assert_eq!(bytes.len(), 11 + 3 * 6);
        let first = &bytes[11..14];
        assert!(bytes[11..].chunks(3).all(|px| px == first));
    }

    #[test]
    fn palette_cycles() {
        assert_eq!(label_color(0), [0, 0, 0]);
        assert_eq!(label_color(1), label_color(11));
        assert_ne!(label_color(1), label_color(2));
    }
}
