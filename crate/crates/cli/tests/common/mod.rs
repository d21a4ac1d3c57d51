//! The golden pipeline: `scenarios/pipeline.toml` run into a directory and
//! compared byte for byte with `tests/golden/pipeline`.

use std::fs;
use std::path::{Path, PathBuf};

use psnat_cli::{RunOptions, RunReport, Scenario, Session};

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/pipeline")
}

pub fn run_pipeline(out: &Path) -> RunReport {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/pipeline.toml");
    let sc = Scenario::from_file(&path).expect("pipeline scenario parses");
    // No profile cache: a reloaded grid could differ in the last bit of its step.
    let opts = RunOptions { out_dir: out.to_path_buf(), cache_dir: None };
    Session::new(&sc, opts).expect("valid scenario").run_all().expect("pipeline runs")
}

/// Names of files that differ between two directories, over the files of `report`.
pub fn differing(report: &RunReport, a: &Path, b: &Path) -> Vec<String> {
    report
        .artifacts
        .iter()
        .filter(|f| fs::read(a.join(f)).ok() != fs::read(b.join(f)).ok())
        .map(|f| f.display().to_string())
        .collect()
}
