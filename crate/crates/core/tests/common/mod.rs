//! Helpers shared by the integration tests: independent oracles, random
//! instance generators and access to the checked-in golden fixture.

#![allow(dead_code)]

use std::path::PathBuf;

use copatch::clustering::{comap, ClusterMap, Connectivity};
use copatch::scoring::{Candidates, SelectionConfig, TopkPolicy};
use copatch::tensorio::{ProjectionParams, TensorF32};
use copatch::{FloatGrid, Grid, Mask};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

pub fn golden_expected() -> serde_json::Value {
    let text = std::fs::read_to_string(golden_dir().join("expected.json")).expect("expected.json");
    serde_json::from_str(&text).expect("expected.json parses")
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; good enough for test data.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn normal_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f32> {
    (0..n).map(|_| (normal(rng) * scale) as f32).collect()
}

pub fn random_params(rng: &mut impl Rng, d_star: usize, d: usize, beta_scale: f64) -> ProjectionParams {
    let gamma = (0..d_star).map(|_| (1.0 + 0.2 * normal(rng)) as f32).collect();
    let beta = normal_vec(rng, d_star, beta_scale);
    let proj = normal_vec(rng, d_star * d, 1.0 / (d_star as f64).sqrt());
    ProjectionParams::new(d_star, d, gamma, beta, 1e-5, proj, 0, 1).expect("valid params")
}

/// Union-find labelling with canonical raster numbering: labels are
/// assigned in order of each component's first pixel in row-major order.
pub fn union_find_labels(bits: &[bool], h: usize, w: usize, eight: bool) -> (Vec<u32>, u32) {
    let mut parent: Vec<usize> = (0..h * w).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let unite = |p: &mut Vec<usize>, a: usize, b: usize| {
        let (ra, rb) = (find(p, a), find(p, b));
        if ra != rb {
            p[ra.max(rb)] = ra.min(rb);
        }
    };
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !bits[i] {
                continue;
            }
            let mut neighbours = vec![(r as isize - 1, c as isize), (r as isize, c as isize - 1)];
            if eight {
                neighbours.push((r as isize - 1, c as isize - 1));
                neighbours.push((r as isize - 1, c as isize + 1));
            }
            for (nr, nc) in neighbours {
                if nr < 0 || nc < 0 || nc >= w as isize {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                if bits[j] {
                    unite(&mut parent, i, j);
                }
            }
        }
    }
    let mut canonical = std::collections::HashMap::new();
    let mut out = vec![0u32; h * w];
    for i in 0..h * w {
        if bits[i] {
            let root = find(&mut parent, i);
            let next = canonical.len() as u32 + 1;
            out[i] = *canonical.entry(root).or_insert(next);
        }
    }
    (out, canonical.len() as u32)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut num = 0.0;
    let (mut va, mut vb) = (0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    num / (va * vb).sqrt()
}

pub fn random_rect_mask(rng: &mut impl Rng, h: usize, w: usize) -> Mask {
    let (y0, x0) = (rng.gen_range(0..h), rng.gen_range(0..w));
    let (y1, x1) = (rng.gen_range(y0..=h), rng.gen_range(x0..=w));
    Mask::from_fn(h, w, |y, x| y >= y0 && y < y1 && x >= x0 && x < x1)
}

/// A randomized scoring problem: candidate masks, embeddings, a CoMap and
/// a ground truth.
pub struct Instance {
    pub masks: Vec<Mask>,
    pub e_img: TensorF32,
    pub e_context: Vec<f64>,
    pub e_neg: Option<Vec<f64>>,
    pub spatial_cue: bool,
    pub comap: ClusterMap,
    pub gt: Mask,
}

impl Instance {
    pub fn random(rng: &mut impl Rng) -> Self {
        let (p, h, w, d) = (7, 28, 28, 8);
        let m = rng.gen_range(1..=8);
        let masks: Vec<Mask> = (0..m).map(|_| random_rect_mask(rng, h, w)).collect();
        let e_img = TensorF32::new(vec![m, d], normal_vec(rng, m * d, 1.0)).unwrap();
        let e_context: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        let e_neg = rng.gen_bool(0.5).then(|| (0..d).map(|_| normal(rng)).collect());
        let raw: FloatGrid = Grid::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
        let delta = rng.gen_range(0.0..1.0);
        let comap = comap(&raw, delta, h, w, Connectivity::Four);
        Instance {
            masks,
            e_img,
            e_context,
            e_neg,
            spatial_cue: rng.gen_bool(0.5),
            comap,
            gt: random_rect_mask(rng, h, w),
        }
    }

    pub fn candidates(&self) -> Candidates<'_> {
        Candidates {
            masks: &self.masks,
            e_img: &self.e_img,
            e_context: &self.e_context,
            e_neg: self.e_neg.as_deref(),
            spatial_cue: self.spatial_cue,
        }
    }

    pub fn config(&self, topk: TopkPolicy) -> SelectionConfig {
        SelectionConfig {
            topk,
            ..SelectionConfig::default()
        }
    }
}

pub fn assert_close(found: f64, expected: f64, tol: f64, what: &str) {
    assert!(
        (found - expected).abs() <= tol,
        "{what}: found {found}, expected {expected} (tolerance {tol})"
    );
}

/// Copies the golden fixture into a fresh temporary directory.
pub fn golden_copy() -> tempfile::TempDir {
    fn copy(from: &std::path::Path, to: &std::path::Path) {
        std::fs::create_dir_all(to).unwrap();
        for entry in std::fs::read_dir(from).unwrap() {
            let entry = entry.unwrap();
            let target = to.join(entry.file_name());
            if entry.file_type().unwrap().is_dir() {
                copy(&entry.path(), &target);
            } else {
                std::fs::copy(entry.path(), target).unwrap();
            }
        }
    }
    let dir = tempfile::tempdir().unwrap();
    copy(&golden_dir(), dir.path());
    dir
}
