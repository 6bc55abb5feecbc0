use std::path::PathBuf;
use std::process::{Command, Output};

fn golden() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden")
}

fn copatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_copatch"))
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture_arg() -> String {
    golden().to_string_lossy().into_owned()
}

#[test]
fn run_prints_report_and_exits_zero() {
    let out = copatch(&["run", "--fixture", &fixture_arg()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let expected = std::fs::read(golden().join("expected_report.toml")).unwrap();
    assert_eq!(out.stdout, expected);
}

#[test]
fn run_is_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for jobs in ["1", "8", "8"] {
        let path = dir.path().join(format!("r{}.toml", reports.len()));
        let out = copatch(&[
            "run",
            "--fixture",
            &fixture_arg(),
            "--jobs",
            jobs,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        reports.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[1], reports[2]);
}

#[test]
fn flags_override_manifest_defaults() {
    let out = copatch(&[
        "run",
        "--fixture",
        &fixture_arg(),
        "--delta",
        "0.3",
        "--layer",
        "8",
        "--topk",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("layer = 8\n"));
    assert!(text.contains("delta = 0.300000\n"));
    assert!(
        text.contains("topk = 2\n") || text.contains("topk = \"2\"\n"),
        "{text}"
    );
}

#[test]
fn usage_errors_exit_two() {
    let f = fixture_arg();
    for args in [
        vec!["run", "--fixture", f.as_str(), "--delta", "1.5"],
        vec!["run", "--fixture", f.as_str(), "--topk", "0"],
        vec!["run", "--fixture", f.as_str(), "--jobs", "0"],
        vec!["run"],
        vec!["frobnicate"],
    ] {
        let out = copatch(&args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn empty_sweep_grid_is_a_usage_error() {
    let out = copatch(&["sweep", "--fixture", &fixture_arg(), "--deltas", ""]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn fixture_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = copatch(&["run", "--fixture", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.json"));

    let out = copatch(&["run", "--fixture", &fixture_arg(), "--layer", "3"]);
    assert_eq!(out.status.code(), Some(1));

    let out = copatch(&[
        "render",
        "--fixture",
        &fixture_arg(),
        "--sample",
        "nope",
        "--what",
        "raw-map",
        "--out",
        "/dev/null",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_writes_csv() {
    let out = copatch(&[
        "sweep",
        "--fixture",
        &fixture_arg(),
        "--deltas",
        "0.1,0.5,0.9",
        "--alphas",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("layer,delta,alpha"));
}

#[test]
fn render_matches_oracle_ppm() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("raw.ppm");
    let out = copatch(&[
        "render",
        "--fixture",
        &fixture_arg(),
        "--sample",
        "s000",
        "--what",
        "raw-map",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(golden().join("expected_raw_map_s000.ppm")).unwrap()
    );
}

#[test]
fn check_and_profile() {
    let out = copatch(&["check", "--fixture", &fixture_arg()]);
    assert_eq!(out.status.code(), Some(0));
    let out = copatch(&[
        "profile",
        "--fixture",
        &fixture_arg(),
        "--sample-a",
        "s000",
        "--sample-b",
        "s004",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 13);
}

#[test]
fn fallback_warning_goes_to_stderr() {
    let out = Command::new(env!("CARGO_BIN_EXE_copatch"))
        .args(["run", "--fixture", &fixture_arg()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("spatial cue present without a negative text embedding"),
        "{stderr}"
    );
}
