//! Run reports (TOML-compatible text), per-sample CSV and sweep CSV.
//!
//! Field order is fixed and floats are printed with six decimals, so two
//! runs over the same inputs produce identical bytes.

use std::fmt::Write as _;

use crate::error::Error;
use crate::pipeline::{GroupSummary, RunOutput, SampleOutcome, SweepRow};
use crate::scoring::TopkPolicy;

pub const REPORT_FORMAT: &str = "copatch-report/1";

/// Six-decimal float; negative zero prints as zero.
pub fn fmt6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn id_list(ids: &[usize]) -> String {
    let parts: Vec<String> = ids.iter().map(usize::to_string).collect();
    format!("[{}]", parts.join(", "))
}

pub fn topk_label(t: TopkPolicy) -> String {
    match t {
        TopkPolicy::ClusterCount => "clusters".into(),
        TopkPolicy::Fixed(k) => k.to_string(),
    }
}

fn write_group(out: &mut String, name: &str, g: &Option<GroupSummary>) {
    let _ = writeln!(out, "\n[groups.{name}]");
    match g {
        Some(g) => {
            let _ = writeln!(out, "samples = {}", g.samples);
            let _ = writeln!(out, "miou = {}", fmt6(g.miou));
            let _ = writeln!(out, "oiou = {}", fmt6(g.oiou));
        }
        None => {
            let _ = writeln!(out, "samples = 0");
        }
    }
}

fn write_sample(out: &mut String, s: &SampleOutcome) {
    let sel = &s.selection;
    out.push_str("\n[[sample]]\n");
    let _ = writeln!(out, "id = {}", quote(&s.sample_id));
    if let Some(cue) = &s.spatial_cue {
        let _ = writeln!(out, "spatial_cue = {}", quote(cue));
    }
    let _ = writeln!(out, "final_id = {}", sel.final_id);
    let _ = writeln!(out, "k_used = {}", sel.k_used);
    let _ = writeln!(out, "clusters = {}", s.clusters);
    let _ = writeln!(out, "delta_used = {}", fmt6(s.delta_used));
    let _ = writeln!(out, "iou = {}", fmt6(s.iou));
    let _ = writeln!(out, "topk_oracle_iou = {}", fmt6(s.topk_oracle_iou));
    let _ = writeln!(out, "upper_bound_iou = {}", fmt6(s.upper_bound_iou));
    let _ = writeln!(out, "intersection = {}", s.counts.intersection);
    let _ = writeln!(out, "union = {}", s.counts.union);
    let _ = writeln!(out, "spatial_guided = {}", sel.spatial_guided);
    let _ = writeln!(out, "zero_norm_patches = {}", s.zero_norm_patches);
    let _ = writeln!(out, "sorted_ids = {}", id_list(&sel.sorted_ids));
    let _ = writeln!(out, "clustered_ids = {}", id_list(&sel.clustered_ids));
    let _ = writeln!(out, "topk_ids = {}", id_list(&sel.topk_ids));
    out.push_str("scores = [\n");
    for sc in &sel.scores {
        let neg = sc
            .s_neg
            .map(|v| format!(", s_neg = {}", fmt6(v)))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "  {{ id = {}, s_pos = {}{neg}, overlap = {}, final = {} }},",
            sc.mask_id,
            fmt6(sc.s_pos),
            fmt6(sc.overlap),
            fmt6(sc.final_score)
        );
    }
    out.push_str("]\n");
}

/// Structured text report for one run.
pub fn render_report(run: &RunOutput) -> String {
    let c = &run.config;
    let r = &run.report;
    let mut out = String::new();
    out.push_str("# copatch run report\n");
    let _ = writeln!(out, "format = {}", quote(REPORT_FORMAT));
    let _ = writeln!(out, "model = {}", quote(&run.model));
    let _ = writeln!(out, "layer = {}", c.layer);
    let _ = writeln!(out, "delta = {}", fmt6(c.delta));
    let _ = writeln!(out, "alpha = {}", fmt6(c.alpha));
    let _ = writeln!(out, "gamma = {}", fmt6(c.gamma));
    let _ = writeln!(out, "topk = {}", quote(&topk_label(c.topk)));
    let _ = writeln!(out, "connectivity = {}", c.connectivity.as_number());
    let _ = writeln!(out, "overlap_metric = {}", quote(c.overlap_metric.name()));
    let _ = writeln!(out, "samples = {}", r.samples);
    let _ = writeln!(out, "skipped = {}", run.skipped.len());
    let _ = writeln!(out, "miou = {}", fmt6(r.miou));
    let _ = writeln!(out, "oiou = {}", fmt6(r.oiou));
    let _ = writeln!(out, "topk_oracle_miou = {}", fmt6(r.topk_oracle_miou));
    let _ = writeln!(out, "upper_bound_miou = {}", fmt6(r.upper_bound_miou));
    let _ = writeln!(out, "mean_clusters = {}", fmt6(r.mean_clusters));
    let _ = writeln!(out, "total_intersection = {}", r.total_intersection);
    let _ = writeln!(out, "total_union = {}", r.total_union);
    let _ = writeln!(out, "zero_norm_patches = {}", r.zero_norm_patches);
    let _ = writeln!(out, "zero_norm_masks = {}", r.zero_norm_masks);
    let _ = writeln!(out, "guidance_fallbacks = {}", r.guidance_fallbacks);
    let _ = writeln!(out, "empty_pairs = {}", r.empty_pairs);
    write_group(&mut out, "spatial", &r.spatial);
    write_group(&mut out, "non_spatial", &r.non_spatial);
    for s in &run.skipped {
        out.push_str("\n[[skipped_sample]]\n");
        let _ = writeln!(out, "id = {}", quote(&s.sample_id));
        let _ = writeln!(out, "reason = {}", quote(&s.reason));
    }
    for s in &run.samples {
        write_sample(&mut out, s);
    }
    out
}

fn csv_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w)?;
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields is utf-8"))
}

pub const SAMPLE_CSV_HEADER: [&str; 11] = [
    "sample_id",
    "spatial_cue",
    "final_id",
    "k_used",
    "clusters",
    "iou",
    "topk_oracle_iou",
    "upper_bound_iou",
    "intersection",
    "union",
    "topk_ids",
];

/// One row per evaluated sample.
pub fn samples_csv(run: &RunOutput) -> Result<String, Error> {
    csv_string(|w| {
        w.write_record(SAMPLE_CSV_HEADER)?;
        for s in &run.samples {
            let topk: Vec<String> = s.selection.topk_ids.iter().map(usize::to_string).collect();
            w.write_record([
                s.sample_id.clone(),
                s.spatial_cue.clone().unwrap_or_default(),
                s.selection.final_id.to_string(),
                s.selection.k_used.to_string(),
                s.clusters.to_string(),
                fmt6(s.iou),
                fmt6(s.topk_oracle_iou),
                fmt6(s.upper_bound_iou),
                s.counts.intersection.to_string(),
                s.counts.union.to_string(),
                topk.join(" "),
            ])?;
        }
        Ok(())
    })
}

pub const SWEEP_CSV_HEADER: [&str; 9] = [
    "layer",
    "delta",
    "alpha",
    "gamma",
    "samples",
    "miou",
    "oiou",
    "topk_oracle_miou",
    "mean_clusters",
];

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String, Error> {
    csv_string(|w| {
        w.write_record(SWEEP_CSV_HEADER)?;
        for r in rows {
            w.write_record([
                r.layer.to_string(),
                fmt6(r.delta),
                fmt6(r.alpha),
                fmt6(r.gamma),
                r.samples.to_string(),
                fmt6(r.miou),
                fmt6(r.oiou),
                fmt6(r.topk_oracle_miou),
                fmt6(r.mean_clusters),
            ])?;
        }
        Ok(())
    })
}

pub fn profile_csv(values: &[f64]) -> Result<String, Error> {
    csv_string(|w| {
        w.write_record(["layer", "cosine"])?;
        for (l, v) in values.iter().enumerate() {
            w.write_record([l.to_string(), fmt6(*v)])?;
        }
        Ok(())
    })
}
