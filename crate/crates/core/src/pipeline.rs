//! End-to-end pipeline over a fixture: fuse text features, build the
//! similarity map and CoMap, select a mask per sample and evaluate.

use rayon::prelude::*;

use crate::clustering::{comap, ClusterMap, Connectivity};
use crate::error::{Error, FixtureError};
use crate::evaluation::{self, aggregate, overlap_counts, PixelCounts};
use crate::grid::FloatGrid;
use crate::linalg::to_f64;
use crate::ppm::{self, Image};
use crate::scoring::{self, Candidates, OverlapMetric, SelectionConfig, SelectionResult, TopkPolicy};
use crate::spatialmap::{interpolate_map, normalize_map, raw_similarity_map, SimilarityMap};
use crate::tensorio::{Fixture, FixtureManifest, ProjectionParams, SampleRecord};
use crate::textfusion::{fuse, DEFAULT_GAMMA};

/// Published per-backbone defaults: `(model tag, layer, delta, alpha)`.
pub const MODEL_DEFAULTS: &[(&str, u32, f64, f64)] = &[
    ("clip-vit-b-32", 10, 0.5, 0.5),
    ("clip-vit-b-16", 8, 0.3, 0.7),
    ("dfn-vit-h-14", 22, 0.5, 0.5),
];

/// One fixed configuration applied to every sample of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub layer: u32,
    pub delta: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub topk: TopkPolicy,
    pub connectivity: Connectivity,
    pub overlap_metric: OverlapMetric,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
    /// Skip samples that fail to load instead of aborting the run.
    pub skip_invalid: bool,
}

/// Command-line or caller overrides; `None` falls back to the manifest and
/// then to [`MODEL_DEFAULTS`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub layer: Option<u32>,
    pub delta: Option<f64>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub topk: Option<TopkPolicy>,
    pub connectivity: Option<Connectivity>,
    pub overlap_metric: Option<OverlapMetric>,
    pub jobs: Option<usize>,
    pub skip_invalid: bool,
}

impl RunConfig {
    pub fn resolve(manifest: &FixtureManifest, o: &ConfigOverrides) -> Result<Self, Error> {
        let model = MODEL_DEFAULTS.iter().find(|(tag, ..)| *tag == manifest.model);
        let defaults = manifest.defaults;
        let layer = o.layer.or(defaults.layer).or(model.map(|m| m.1)).ok_or_else(|| {
            Error::Config(format!(
                "no exit layer given and no default for model {:?}",
                manifest.model
            ))
        })?;
        let delta = o.delta.or(defaults.delta).or(model.map(|m| m.2)).unwrap_or(0.5);
        let alpha = o.alpha.or(defaults.alpha).or(model.map(|m| m.3)).unwrap_or(0.5);
        let gamma = o.gamma.or(defaults.gamma).unwrap_or(DEFAULT_GAMMA);
        let cfg = RunConfig {
            layer,
            delta,
            alpha,
            gamma,
            topk: o.topk.unwrap_or_default(),
            connectivity: o.connectivity.unwrap_or_default(),
            overlap_metric: o.overlap_metric.unwrap_or_default(),
            jobs: o.jobs.unwrap_or(1),
            skip_invalid: o.skip_invalid,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        for (name, v) in [
            ("delta", self.delta),
            ("alpha", self.alpha),
            ("gamma", self.gamma),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.topk == TopkPolicy::Fixed(0) {
            return Err(Error::Config("top-k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            alpha: self.alpha,
            topk: self.topk,
            overlap_metric: self.overlap_metric,
        }
    }
}

/// Every intermediate product for one sample.
#[derive(Debug, Clone)]
pub struct SampleAnalysis {
    pub e_context: Vec<f64>,
    pub similarity: SimilarityMap,
    pub comap: ClusterMap,
    pub selection: SelectionResult,
}

pub fn analyze_sample(
    record: &SampleRecord,
    params: &ProjectionParams,
    config: &RunConfig,
) -> Result<SampleAnalysis, Error> {
    let fused = fuse(&record.e_sen, &record.e_noun, config.gamma)?;
    let similarity = raw_similarity_map(&record.patches, &fused.e_context, params)?;
    let (h, w) = record.gt.dims();
    let cm = comap(&similarity.map, config.delta, h, w, config.connectivity);
    let e_neg = record.e_neg.as_deref().map(to_f64);
    let candidates = Candidates {
        masks: &record.masks,
        e_img: &record.e_img,
        e_context: &fused.e_context,
        e_neg: e_neg.as_deref(),
        spatial_cue: record.has_spatial_cue(),
    };
    let selection = scoring::select(&candidates, &cm, &config.selection())?;
    Ok(SampleAnalysis {
        e_context: fused.e_context,
        similarity,
        comap: cm,
        selection,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub sample_id: String,
    pub spatial_cue: Option<String>,
    pub clusters: u32,
    pub delta_used: f64,
    pub selection: SelectionResult,
    pub counts: PixelCounts,
    pub iou: f64,
    pub topk_oracle_iou: f64,
    pub upper_bound_iou: f64,
    pub zero_norm_patches: usize,
}

pub fn evaluate_sample(
    record: &SampleRecord,
    params: &ProjectionParams,
    config: &RunConfig,
) -> Result<SampleOutcome, Error> {
    let a = analyze_sample(record, params, config)?;
    let sel = a.selection;
    let counts = overlap_counts(&record.masks[sel.final_id], &record.gt)?;
    let topk_oracle_iou = evaluation::topk_oracle(&record.masks, &sel.topk_ids, &record.gt)?;
    let upper_bound_iou = evaluation::upper_bound(&record.masks, &record.gt)?;
    Ok(SampleOutcome {
        sample_id: record.sample_id.clone(),
        spatial_cue: record.spatial_cue.clone(),
        clusters: a.comap.k,
        delta_used: a.comap.delta_used,
        counts,
        iou: counts.iou(),
        topk_oracle_iou,
        upper_bound_iou,
        zero_norm_patches: a.similarity.zero_norm_patches,
        selection: sel,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupSummary {
    pub samples: usize,
    pub miou: f64,
    pub oiou: f64,
}

/// Aggregate metrics for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub samples: usize,
    pub miou: f64,
    pub oiou: f64,
    pub topk_oracle_miou: f64,
    pub upper_bound_miou: f64,
    pub mean_clusters: f64,
    pub total_intersection: u64,
    pub total_union: u64,
    pub zero_norm_patches: usize,
    pub zero_norm_masks: usize,
    pub guidance_fallbacks: usize,
    /// Samples where prediction and ground truth were both empty (IoU 1).
    pub empty_pairs: usize,
    pub spatial: Option<GroupSummary>,
    pub non_spatial: Option<GroupSummary>,
}

fn group(outcomes: &[&SampleOutcome]) -> Option<GroupSummary> {
    let counts: Vec<PixelCounts> = outcomes.iter().map(|o| o.counts).collect();
    aggregate(&counts).ok().map(|a| GroupSummary {
        samples: counts.len(),
        miou: a.miou,
        oiou: a.oiou,
    })
}

impl EvalReport {
    pub fn from_outcomes(outcomes: &[SampleOutcome]) -> Result<Self, Error> {
        let counts: Vec<PixelCounts> = outcomes.iter().map(|o| o.counts).collect();
        let agg = aggregate(&counts)?;
        let n = outcomes.len() as f64;
        let mean = |f: &dyn Fn(&SampleOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n;
        let (spatial, non_spatial): (Vec<&SampleOutcome>, Vec<&SampleOutcome>) =
            outcomes.iter().partition(|o| o.spatial_cue.is_some());
        Ok(EvalReport {
            samples: outcomes.len(),
            miou: agg.miou,
            oiou: agg.oiou,
            topk_oracle_miou: mean(&|o| o.topk_oracle_iou),
            upper_bound_miou: mean(&|o| o.upper_bound_iou),
            mean_clusters: mean(&|o| o.clusters as f64),
            total_intersection: agg.total_intersection,
            total_union: agg.total_union,
            zero_norm_patches: outcomes.iter().map(|o| o.zero_norm_patches).sum(),
            zero_norm_masks: outcomes.iter().map(|o| o.selection.zero_norm_masks).sum(),
            guidance_fallbacks: outcomes.iter().filter(|o| o.selection.guidance_fallback).count(),
            empty_pairs: counts.iter().filter(|c| c.union == 0).count(),
            spatial: group(&spatial),
            non_spatial: group(&non_spatial),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedSample {
    pub sample_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub model: String,
    pub config: RunConfig,
    pub samples: Vec<SampleOutcome>,
    pub skipped: Vec<SkippedSample>,
    pub report: EvalReport,
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker(s): {e}")))
}

/// Runs the pipeline on every sample. Samples are processed in parallel
/// and assembled in `sample_id` order, independent of manifest order.
pub fn run(fixture: &Fixture, config: &RunConfig) -> Result<RunOutput, Error> {
    config.validate()?;
    let params = fixture.params(config.layer)?;
    let pool = thread_pool(config.jobs)?;
    let entries = &fixture.manifest().samples;
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| entries[a].id.cmp(&entries[b].id));
    let results: Vec<Result<SampleOutcome, Error>> = pool.install(|| {
        order
            .par_iter()
            .map(|&i| {
                let record = fixture.load_sample(i, config.layer)?;
                evaluate_sample(&record, &params, config)
            })
            .collect()
    });

    let mut samples = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for (entry, result) in order.iter().map(|&i| &entries[i]).zip(results) {
        match result {
            Ok(o) => samples.push(o),
            Err(e) if config.skip_invalid => {
                log::warn!("skipping sample {}: {e}", entry.id);
                skipped.push(SkippedSample {
                    sample_id: entry.id.clone(),
                    reason: e.to_string(),
                });
            }
            Err(Error::Fixture(e)) => return Err(e.into()),
            Err(e) => {
                return Err(FixtureError::invariant(&entry.id, e.to_string()).into());
            }
        }
    }
    if samples.is_empty() {
        return Err(FixtureError::Manifest("no valid samples to evaluate".into()).into());
    }
    let report = EvalReport::from_outcomes(&samples)?;
    Ok(RunOutput {
        model: fixture.manifest().model.clone(),
        config: config.clone(),
        samples,
        skipped,
        report,
    })
}

/// Hyperparameter grid; every combination is one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub layers: Vec<u32>,
    pub deltas: Vec<f64>,
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub layer: u32,
    pub delta: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub samples: usize,
    pub miou: f64,
    pub oiou: f64,
    pub topk_oracle_miou: f64,
    pub mean_clusters: f64,
}

pub fn sweep(fixture: &Fixture, base: &RunConfig, grid: &SweepGrid) -> Result<Vec<SweepRow>, Error> {
    if grid.layers.is_empty() || grid.deltas.is_empty() || grid.alphas.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut rows = Vec::new();
    for &layer in &grid.layers {
        for &delta in &grid.deltas {
            for &alpha in &grid.alphas {
                let cfg = RunConfig {
                    layer,
                    delta,
                    alpha,
                    ..base.clone()
                };
                let out = run(fixture, &cfg)?;
                rows.push(SweepRow {
                    layer,
                    delta,
                    alpha,
                    gamma: cfg.gamma,
                    samples: out.report.samples,
                    miou: out.report.miou,
                    oiou: out.report.oiou,
                    topk_oracle_miou: out.report.topk_oracle_miou,
                    mean_clusters: out.report.mean_clusters,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderKind {
    /// Raw cosine map, `[-1, 1]` mapped linearly onto the colormap.
    RawMap,
    NormalizedMap,
    Clusters,
    /// Selected mask against ground truth.
    FinalMask,
}

impl RenderKind {
    pub fn name(self) -> &'static str {
        match self {
            RenderKind::RawMap => "raw-map",
            RenderKind::NormalizedMap => "normalized-map",
            RenderKind::Clusters => "clusters",
            RenderKind::FinalMask => "final-mask",
        }
    }
}

/// Renders one view of a sample at image resolution.
pub fn render(
    fixture: &Fixture,
    config: &RunConfig,
    sample_id: &str,
    kind: RenderKind,
) -> Result<Image, Error> {
    config.validate()?;
    let params = fixture.params(config.layer)?;
    let record = fixture.load_by_id(sample_id, config.layer)?;
    let a = analyze_sample(&record, &params, config)?;
    render_analysis(&record, &a, kind)
}

pub fn render_analysis(record: &SampleRecord, a: &SampleAnalysis, kind: RenderKind) -> Result<Image, Error> {
    let (h, w) = record.gt.dims();
    Ok(match kind {
        RenderKind::RawMap => {
            let up = interpolate_map(&a.similarity.map, h, w)?;
            ppm::heatmap(&up.map(|&v| (v + 1.0) / 2.0))
        }
        RenderKind::NormalizedMap => {
            let up: FloatGrid = interpolate_map(&normalize_map(&a.similarity.map), h, w)?;
            ppm::heatmap(&up)
        }
        RenderKind::Clusters => {
            ppm::label_image(a.comap.interpolated.as_ref().expect("comap always interpolates"))
        }
        RenderKind::FinalMask => ppm::mask_overlay(&record.masks[a.selection.final_id], &record.gt),
    })
}

/// Per-layer cosine between the CLS sequences of two samples.
pub fn profile(fixture: &Fixture, layer: u32, a: &str, b: &str) -> Result<Vec<f64>, Error> {
    let load = |id: &str| -> Result<_, Error> {
        let rec = fixture.load_by_id(id, layer)?;
        rec.cls_layers
            .ok_or_else(|| FixtureError::invariant(id, "no per-layer CLS embeddings").into())
    };
    let (values, zero) = evaluation::layer_profile(&load(a)?, &load(b)?)?;
    if zero > 0 {
        log::warn!("{zero} layer(s) with a zero-norm embedding scored 0");
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorio::{HyperDefaults, ParamFiles};

    fn manifest(model: &str, defaults: HyperDefaults) -> FixtureManifest {
        FixtureManifest {
            version: crate::tensorio::FIXTURE_VERSION.into(),
            model: model.into(),
            d: 1,
            d_star: 1,
            p: 1,
            height: 1,
            width: 1,
            layers: vec![1],
            defaults,
            params: ParamFiles {
                ln_gamma: "g".into(),
                ln_beta: "b".into(),
                ln_eps: 1e-5,
                proj: "w".into(),
            },
            samples: vec![],
        }
    }

    #[test]
    fn model_tag_defaults() {
        let c = RunConfig::resolve(
            &manifest("clip-vit-b-16", HyperDefaults::default()),
            &Default::default(),
        )
        .unwrap();
        assert_eq!((c.layer, c.delta, c.alpha, c.gamma), (8, 0.3, 0.7, 0.5));
        let c = RunConfig::resolve(
            &manifest("dfn-vit-h-14", HyperDefaults::default()),
            &Default::default(),
        )
        .unwrap();
        assert_eq!((c.layer, c.delta, c.alpha), (22, 0.5, 0.5));
    }

    #[test]
    fn precedence_and_validation() {
        let m = manifest(
            "clip-vit-b-32",
            HyperDefaults {
                layer: Some(3),
                delta: Some(0.2),
                ..Default::default()
            },
        );
        let c = RunConfig::resolve(&m, &Default::default()).unwrap();
        assert_eq!((c.layer, c.delta, c.alpha), (3, 0.2, 0.5));
        let o = ConfigOverrides {
            delta: Some(0.9),
            ..Default::default()
        };
        assert_eq!(RunConfig::resolve(&m, &o).unwrap().delta, 0.9);
        let bad = ConfigOverrides {
            alpha: Some(1.5),
            ..Default::default()
        };
        assert!(matches!(RunConfig::resolve(&m, &bad), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::resolve(
                &manifest("mystery", HyperDefaults::default()),
                &Default::default()
            ),
            Err(Error::Config(_))
        ));
    }
}
