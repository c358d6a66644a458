//! Black-box tests of the command-line interface: exit codes, error
//! messages, and the cache handshake between `ingest` and the later stages.

use citypulse::synth::{SynthDataset, SynthScenario};
use std::path::Path;
use std::process::{Command, Output};

fn small_scenario() -> SynthScenario {
    let mut sc = SynthScenario::default();
    sc.seed = 42;
    sc.n_zones = 6;
    sc.towers_per_zone = (1, 2);
    sc.devices = 120;
    sc.pre_days = 2;
    sc.post_days = 2;
    sc
}

fn write_dataset(dir: &Path) {
    let ds = SynthDataset::new(small_scenario()).unwrap();
    ds.write_to_dir(dir).unwrap();
}

fn citypulse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_citypulse"))
        .args(args)
        .output()
        .expect("binary must launch")
}

#[test]
fn missing_zones_file_exits_2_and_names_the_path() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    write_dataset(&data);
    std::fs::remove_file(data.join("zones.geojson")).unwrap();

    let out = citypulse(&[
        "--config",
        data.join("study.cfg").to_str().unwrap(),
        "--out",
        root.path().join("out").to_str().unwrap(),
        "ingest",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("zones.geojson"),
        "stderr should name the missing file, got: {stderr}"
    );
}

#[test]
fn sweep_before_ingest_exits_3() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    write_dataset(&data);

    let out = citypulse(&[
        "--config",
        data.join("study.cfg").to_str().unwrap(),
        "--out",
        root.path().join("out").to_str().unwrap(),
        "sweep",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ingest"), "stderr should point at ingest, got: {stderr}");
}

#[test]
fn stale_cache_after_input_change_exits_3() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    write_dataset(&data);
    let config = data.join("study.cfg");
    let out_dir = root.path().join("out");
    let common = [
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ];

    let out = citypulse(&[&common[..], &["ingest"]].concat());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    // any change to an input invalidates the cached profiles
    let events = data.join("events.csv");
    let mut contents = std::fs::read_to_string(&events).unwrap();
    contents.push_str("2016-08-02,00:01,d00001,T0001,standard,12.0\n");
    std::fs::write(&events, contents).unwrap();

    let out = citypulse(&[&common[..], &["profiles"]].concat());
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("events.csv"), "stderr should name the changed input, got: {stderr}");
}

#[test]
fn ingest_writes_filter_report_and_sweep_writes_exports() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    write_dataset(&data);
    let config = data.join("study.cfg");
    let out_dir = root.path().join("out");
    let common = [
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ];

    let out = citypulse(&[&common[..], &["ingest"]].concat());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(out_dir.join("filter_report.csv")).unwrap();
    assert!(report.starts_with("metric,value"), "unexpected report header: {report}");
    assert!(report.contains("kept_devices,"), "report should count kept devices: {report}");

    let out = citypulse(&[&common[..], &["sweep"]].concat());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["fits.csv", "windows.csv", "irr_series.csv", "correlations.csv"] {
        assert!(out_dir.join(file).exists(), "missing export {file}");
    }
}

#[test]
fn unknown_model_exits_2() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    write_dataset(&data);

    let out = citypulse(&[
        "--config",
        data.join("study.cfg").to_str().unwrap(),
        "--out",
        root.path().join("out").to_str().unwrap(),
        "--model",
        "quadratic",
        "sweep",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
