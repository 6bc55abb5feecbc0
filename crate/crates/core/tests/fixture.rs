mod common;

use copatch::pipeline::{run, ConfigOverrides, RunConfig};
use copatch::report::render_report;
use copatch::tensorio::{write_tensor, Fixture, Tensor, FIXTURE_VERSION, MANIFEST_FILE};
use copatch::{Error, FixtureError};

use common::*;

fn defaults(f: &Fixture) -> RunConfig {
    RunConfig::resolve(f.manifest(), &ConfigOverrides::default()).unwrap()
}

#[test]
fn golden_loads_five_valid_records() {
    let f = Fixture::open(golden_dir()).unwrap();
    assert_eq!(f.manifest().version, FIXTURE_VERSION);
    assert_eq!(f.len(), 5);
    assert!(f.missing_files().is_empty());
    for &layer in &f.manifest().layers {
        for i in 0..f.len() {
            let r = f.load_sample(i, layer).unwrap();
            assert_eq!(r.patches.shape(), [7, 7, 16]);
            assert_eq!(r.masks.len(), 4);
            assert_eq!(r.gt.dims(), (56, 56));
            assert_eq!(r.e_sen.len(), 8);
            assert_eq!(r.exit_layer, layer);
        }
    }
    let spatial: Vec<bool> = (0..5)
        .map(|i| f.load_sample(i, 10).unwrap().has_spatial_cue())
        .collect();
    assert_eq!(spatial, [false, false, true, false, true]);
}

#[test]
fn absent_file_names_sample_and_path() {
    let dir = golden_copy();
    std::fs::remove_file(dir.path().join("s003/e_img.cpt")).unwrap();
    let f = Fixture::open(dir.path()).unwrap();
    let missing = f.missing_files();
    assert_eq!(missing.len(), 1);
    assert!(
        matches!(&missing[0], FixtureError::MissingFile { sample_id, path }
        if sample_id == "s003" && path.ends_with("s003/e_img.cpt"))
    );

    let err = f.load_by_id("s003", 10).unwrap_err().to_string();
    assert!(err.contains("s003") && err.contains("e_img.cpt"), "{err}");

    let err = run(&f, &defaults(&f)).unwrap_err();
    assert!(matches!(err, Error::Fixture(_)), "{err:?}");
    assert!(err.to_string().contains("s003"));
}

#[test]
fn embedding_length_mismatch_is_rejected() {
    let dir = golden_copy();
    write_tensor(
        &Tensor::new(vec![7], vec![0.5f32; 7]).unwrap(),
        dir.path().join("s001/e_sen.cpt"),
    )
    .unwrap();
    let f = Fixture::open(dir.path()).unwrap();
    let err = f.load_by_id("s001", 10).unwrap_err();
    assert!(
        matches!(&err, FixtureError::Invariant { sample_id, .. } if sample_id == "s001"),
        "{err:?}"
    );
    assert!(err.to_string().contains("e_sen"));
}

#[test]
fn non_binary_masks_are_rejected() {
    let dir = golden_copy();
    let mut data = vec![0u8; 4 * 56 * 56];
    data[10] = 2;
    write_tensor(
        &Tensor::new(vec![4, 56, 56], data).unwrap(),
        dir.path().join("s000/masks.cpt"),
    )
    .unwrap();
    let f = Fixture::open(dir.path()).unwrap();
    let err = f.load_by_id("s000", 10).unwrap_err().to_string();
    assert!(err.contains("s000"), "{err}");
}

#[test]
fn skip_invalid_keeps_the_rest() {
    let dir = golden_copy();
    std::fs::remove_file(dir.path().join("s002/patches_l10.cpt")).unwrap();
    let f = Fixture::open(dir.path()).unwrap();
    let cfg = RunConfig {
        skip_invalid: true,
        ..defaults(&f)
    };
    let out = run(&f, &cfg).unwrap();
    assert_eq!(out.samples.len(), 4);
    assert_eq!(out.skipped.len(), 1);
    assert_eq!(out.skipped[0].sample_id, "s002");
    let ids: Vec<&str> = out.samples.iter().map(|s| s.sample_id.as_str()).collect();
    assert_eq!(ids, ["s000", "s001", "s003", "s004"]);
}

#[test]
fn outcomes_do_not_depend_on_manifest_order() {
    let golden = Fixture::open(golden_dir()).unwrap();
    let reference = run(&golden, &defaults(&golden)).unwrap();

    let dir = golden_copy();
    let mut manifest = golden.manifest().clone();
    manifest.samples.reverse();
    Fixture::write_manifest(dir.path(), &manifest).unwrap();
    let reversed = Fixture::open(dir.path()).unwrap();
    let out = run(&reversed, &defaults(&reversed)).unwrap();

    for o in &out.samples {
        let r = reference
            .samples
            .iter()
            .find(|r| r.sample_id == o.sample_id)
            .unwrap();
        assert_eq!(o.selection, r.selection);
        assert_eq!(o.counts, r.counts);
        assert_eq!(o.clusters, r.clusters);
    }
    let ids: Vec<&str> = out.samples.iter().map(|s| s.sample_id.as_str()).collect();
    assert_eq!(ids, ["s000", "s001", "s002", "s003", "s004"]);
    assert_eq!(render_report(&out), render_report(&reference));
}

#[test]
fn manifest_problems_are_reported() {
    let dir = golden_copy();
    let path = dir.path().join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).unwrap();

    std::fs::write(&path, text.replace(FIXTURE_VERSION, "copatch-fixture/9")).unwrap();
    assert!(matches!(
        Fixture::open(dir.path()),
        Err(FixtureError::Version { .. })
    ));

    std::fs::write(&path, "{ not json").unwrap();
    assert!(matches!(
        Fixture::open(dir.path()),
        Err(FixtureError::ManifestParse { .. })
    ));

    std::fs::remove_file(&path).unwrap();
    assert!(matches!(
        Fixture::open(dir.path()),
        Err(FixtureError::ManifestIo { .. })
    ));
}

#[test]
fn unknown_layer_and_sample() {
    let f = Fixture::open(golden_dir()).unwrap();
    assert!(matches!(
        f.params(3),
        Err(FixtureError::UnknownLayer { layer: 3, .. })
    ));
    assert!(matches!(
        f.load_by_id("nope", 10),
        Err(FixtureError::UnknownSample(_))
    ));
}
