mod common;

use copatch::clustering::{comap, connected_components, Connectivity};
use copatch::pipeline::{
    self, profile, render, run, sweep, ConfigOverrides, RenderKind, RunConfig, SweepGrid,
};
use copatch::report::{render_report, samples_csv, sweep_csv, SAMPLE_CSV_HEADER, SWEEP_CSV_HEADER};
use copatch::scoring::{OverlapMetric, TopkPolicy};
use copatch::tensorio::Fixture;
use copatch::{Error, FloatGrid, Grid, Mask};
use proptest::prelude::*;

use common::*;

fn golden() -> (Fixture, RunConfig) {
    let f = Fixture::open(golden_dir()).unwrap();
    let cfg = RunConfig::resolve(f.manifest(), &ConfigOverrides::default()).unwrap();
    (f, cfg)
}

#[test]
fn report_matches_oracle_expectation() {
    let (f, cfg) = golden();
    let text = render_report(&run(&f, &cfg).unwrap());
    let expected = std::fs::read_to_string(golden_dir().join("expected_report.toml")).unwrap();
    assert_eq!(text, expected);
}

#[test]
fn report_is_valid_toml() {
    let (f, cfg) = golden();
    let text = render_report(&run(&f, &cfg).unwrap());
    let doc: toml::Table = text.parse().unwrap();
    assert_eq!(doc["format"].as_str(), Some("copatch-report/1"));
    assert_eq!(doc["samples"].as_integer(), Some(5));
    let samples = doc["sample"].as_array().unwrap();
    assert_eq!(samples.len(), 5);
    assert_eq!(samples[2]["spatial_cue"].as_str(), Some("behind"));
    assert_eq!(samples[2]["scores"].as_array().unwrap().len(), 4);
    assert!(doc["groups"]["spatial"]["miou"].as_float().is_some());
}

#[test]
fn raw_map_render_is_byte_identical_to_oracle() {
    let (f, cfg) = golden();
    let image = render(&f, &cfg, "s000", RenderKind::RawMap).unwrap();
    let expected = std::fs::read(golden_dir().join("expected_raw_map_s000.ppm")).unwrap();
    assert_eq!(image.to_ppm(), expected);
}

#[test]
fn every_render_kind_has_image_size() {
    let (f, cfg) = golden();
    for kind in [
        RenderKind::RawMap,
        RenderKind::NormalizedMap,
        RenderKind::Clusters,
        RenderKind::FinalMask,
    ] {
        let image = render(&f, &cfg, "s002", kind).unwrap();
        assert_eq!((image.width, image.height), (56, 56), "{}", kind.name());
        let bytes = image.to_ppm();
        assert!(bytes.starts_with(b"P6\n56 56\n255\n"));
        assert_eq!(bytes.len(), 13 + 56 * 56 * 3);
    }
}

#[test]
fn sweep_matches_oracle_delta_curve() {
    let (f, cfg) = golden();
    let expected = golden_expected();
    let curve = expected["delta_sweep"].as_array().unwrap();
    let grid = SweepGrid {
        layers: vec![10],
        deltas: curve.iter().map(|p| p["delta"].as_f64().unwrap()).collect(),
        alphas: vec![0.5],
    };
    let rows = sweep(&f, &cfg, &grid).unwrap();
    for (row, point) in rows.iter().zip(curve) {
        assert_close(
            row.mean_clusters,
            point["mean_clusters"].as_f64().unwrap(),
            1e-12,
            "mean clusters",
        );
    }
    let csv = sweep_csv(&rows).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), SWEEP_CSV_HEADER.join(","));
    assert_eq!(lines.count(), 9);
}

#[test]
fn top1_request_selects_best_by_text() {
    let (f, cfg) = golden();
    let out = run(
        &f,
        &RunConfig {
            topk: TopkPolicy::Fixed(1),
            ..cfg
        },
    )
    .unwrap();
    for s in &out.samples {
        assert_eq!(s.selection.final_id, s.selection.sorted_ids[0], "{}", s.sample_id);
        assert_eq!(s.topk_oracle_iou, s.iou);
    }
}

#[test]
fn one_point_sweep_equals_run() {
    let (f, cfg) = golden();
    let grid = SweepGrid {
        layers: vec![cfg.layer],
        deltas: vec![cfg.delta],
        alphas: vec![cfg.alpha],
    };
    let rows = sweep(&f, &cfg, &grid).unwrap();
    let r = run(&f, &cfg).unwrap().report;
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert_eq!(
        (row.miou, row.oiou, row.topk_oracle_miou, row.mean_clusters),
        (r.miou, r.oiou, r.topk_oracle_miou, r.mean_clusters)
    );
}

#[test]
fn sweep_covers_the_full_grid() {
    let (f, cfg) = golden();
    let grid = SweepGrid {
        layers: vec![8, 10],
        deltas: vec![0.3, 0.5],
        alphas: vec![0.0, 0.5, 1.0],
    };
    let rows = sweep(&f, &cfg, &grid).unwrap();
    assert_eq!(rows.len(), 12);
    assert_eq!((rows[0].layer, rows[0].delta, rows[0].alpha), (8, 0.3, 0.0));
    assert_eq!((rows[11].layer, rows[11].delta, rows[11].alpha), (10, 0.5, 1.0));
}

#[test]
fn empty_sweep_grid_is_a_config_error() {
    let (f, cfg) = golden();
    let grid = SweepGrid {
        layers: vec![],
        deltas: vec![0.5],
        alphas: vec![0.5],
    };
    assert!(matches!(sweep(&f, &cfg, &grid), Err(Error::Config(_))));
}

#[test]
fn samples_csv_has_one_row_per_sample() {
    let (f, cfg) = golden();
    let csv = samples_csv(&run(&f, &cfg).unwrap()).unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        SAMPLE_CSV_HEADER
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(&rows[2][1], "behind");
}

#[test]
fn alpha_zero_disables_the_penalty() {
    let (f, cfg) = golden();
    let out = run(&f, &RunConfig { alpha: 0.0, ..cfg }).unwrap();
    let s002 = &out.samples[2];
    assert!(s002.selection.spatial_guided);
    assert_eq!(s002.selection.final_id, s002.selection.sorted_ids[0]);
}

#[test]
fn fixed_topk_and_other_options_run() {
    let (f, cfg) = golden();
    for topk in [TopkPolicy::Fixed(1), TopkPolicy::Fixed(3), TopkPolicy::Fixed(10)] {
        let out = run(&f, &RunConfig { topk, ..cfg.clone() }).unwrap();
        for s in &out.samples {
            assert_eq!(s.selection.k_used, topk.requested().unwrap().min(4));
        }
    }
    let out = run(
        &f,
        &RunConfig {
            connectivity: Connectivity::Eight,
            overlap_metric: OverlapMetric::PerClusterMax,
            layer: 8,
            ..cfg
        },
    )
    .unwrap();
    assert_eq!(out.samples.len(), 5);
}

#[test]
fn invalid_config_is_rejected() {
    let (f, cfg) = golden();
    assert!(matches!(
        run(
            &f,
            &RunConfig {
                delta: 1.5,
                ..cfg.clone()
            }
        ),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        run(&f, &RunConfig { jobs: 0, ..cfg }),
        Err(Error::Config(_))
    ));
    let bad = ConfigOverrides {
        gamma: Some(-0.1),
        ..Default::default()
    };
    assert!(matches!(
        RunConfig::resolve(f.manifest(), &bad),
        Err(Error::Config(_))
    ));
}

#[test]
fn profile_is_one_value_per_layer() {
    let (f, _) = golden();
    let values = profile(&f, 10, "s000", "s001").unwrap();
    assert_eq!(values.len(), 12);
    assert!(values.iter().all(|v| (-1.0..=1.0).contains(v)));
    let same = profile(&f, 10, "s003", "s003").unwrap();
    assert!(same.iter().all(|&v| v == 1.0));
}

#[test]
fn analysis_matches_oracle_labels_at_layer_ten() {
    let (f, cfg) = golden();
    let params = f.params(10).unwrap();
    let expected = golden_expected();
    for (i, e) in expected["samples"].as_array().unwrap().iter().enumerate() {
        let rec = f.load_sample(i, 10).unwrap();
        let a = pipeline::analyze_sample(&rec, &params, &cfg).unwrap();
        let up = a.comap.interpolated.unwrap();
        // Every 8x8 block carries its patch label.
        for y in 0..56 {
            for x in 0..56 {
                assert_eq!(up.get(y, x), a.comap.labels.get(y / 8, x / 8));
            }
        }
        assert_eq!(a.comap.k as u64, e["clusters"].as_u64().unwrap());
    }
}

fn grid_strategy() -> impl Strategy<Value = (usize, usize, Vec<bool>)> {
    (1usize..20, 1usize..20).prop_flat_map(|(h, w)| {
        prop::collection::vec(any::<bool>(), h * w).prop_map(move |bits| (h, w, bits))
    })
}

proptest! {
    #[test]
    fn components_match_union_find((h, w, bits) in grid_strategy(), eight in any::<bool>()) {
        let conn = if eight { Connectivity::Eight } else { Connectivity::Four };
        let grid: Mask = Grid::from_vec(h, w, bits.clone()).unwrap();
        let (labels, k) = connected_components(&grid, conn);
        let (oracle, ko) = union_find_labels(&bits, h, w, eight);
        prop_assert_eq!(k, ko);
        prop_assert_eq!(labels.as_slice(), oracle.as_slice());
    }

    #[test]
    fn comap_threshold_is_monotone(values in prop::collection::vec(-1.0f64..1.0, 49), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let raw: FloatGrid = Grid::from_vec(7, 7, values).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let low = comap(&raw, lo, 14, 14, Connectivity::Four);
        let high = comap(&raw, hi, 14, 14, Connectivity::Four);
        // A higher threshold never adds foreground.
        let fg = |l: &copatch::LabelGrid| l.as_slice().iter().filter(|&&v| v > 0).count();
        prop_assert!(fg(&high.labels) <= fg(&low.labels));
        prop_assert!(high.k >= 1 && low.k >= 1);
    }
}
