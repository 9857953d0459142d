mod common;

use std::fs;

use common::{check_goldens, fixture, read_json, run_golden, GOLDEN_FILES};

#[test]
fn golden_run_matches_checked_in_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    run_golden(dir.path()).unwrap();
    check_goldens(dir.path()).unwrap();
}

#[test]
fn golden_report_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    run_golden(dir.path()).unwrap();
    let report = read_json(&dir.path().join("report.json"));
    let metrics = report["dramas"][0]["report"].as_object().unwrap();
    for (name, value) in metrics {
        if name != "counts" {
            assert_eq!(value.as_f64(), Some(100.0), "{name}");
        }
    }
}

#[test]
fn rerun_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_golden(a.path()).unwrap();
    run_golden(b.path()).unwrap();
    for name in GOLDEN_FILES {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn snapshots_follow_stage_order() {
    let stages = ["merged", "relations_extracted", "filtered", "roles_assigned", "grouped"];
    for stage in stages {
        let crs = read_json(&fixture(&format!("golden/expected/crs.{stage}.json")));
        assert_eq!(crs["stage"], stage);
        assert_eq!(crs["schema_version"], 1);
    }
}
