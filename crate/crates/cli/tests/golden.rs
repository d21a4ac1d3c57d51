//! Set `PSNAT_BLESS=1` to regenerate the golden files after a vetted change.

mod common;

use std::fs;

#[test]
fn pipeline_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let report = common::run_pipeline(dir.path());
    assert_eq!(report.artifacts.len(), 14);
    let golden = common::golden_dir();
    if std::env::var_os("PSNAT_BLESS").is_some() {
        let _ = fs::remove_dir_all(&golden);
        fs::create_dir_all(&golden).unwrap();
        for f in &report.artifacts {
            fs::copy(dir.path().join(f), golden.join(f)).unwrap();
        }
    }
    let diff = common::differing(&report, dir.path(), &golden);
    assert!(diff.is_empty(), "differs from golden: {diff:?}");
}

#[test]
fn sidecars_chain_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    common::run_pipeline(dir.path());
    let meta = |f: &str| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(dir.path().join(f)).unwrap()).unwrap()
    };
    let grid = meta("grid.csv.meta.json");
    assert_eq!(grid["ball"]["built_in"], "ball");
    assert_eq!(grid["delta_hat"]["source"], "exponent");
    let exponent = meta("exponent.json");
    assert_eq!(grid["delta_hat"]["value"], exponent["delta_hat"]);
    let ct = meta("boundary.csv.meta.json");
    assert_eq!(ct["stream"], 3);
    assert!(ct["truncation"]["truncation_factor"].as_f64().unwrap() < 0.1);
    assert!(!fs::read_to_string(dir.path().join("ball.csv.meta.json")).unwrap().contains("time"));
}
