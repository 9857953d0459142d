#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use crs_cli::{invoke, CliError};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn crs<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Result<String, CliError> {
    let mut argv = vec![std::ffi::OsString::from("crs")];
    argv.extend(args.iter().map(|a| a.as_ref().to_owned()));
    invoke(argv)
}

/// Files a golden run writes and the goldens pin down.
pub const GOLDEN_FILES: &[&str] = &[
    "triplets.jsonl",
    "graph.json",
    "selection.json",
    "crs.merged.json",
    "crs.relations_extracted.json",
    "crs.filtered.json",
    "crs.roles_assigned.json",
    "crs.grouped.json",
    "agents.json",
    "report.json",
    "report.txt",
    "crs.grouped.dot",
];

/// Runs every command on the 5-character harbor drama under its mock script.
pub fn run_golden(out: &Path) -> Result<(), CliError> {
    let f = fixture("golden");
    let mock = f.join("mock.json");
    let o = |name: &str| out.join(name);
    crs(&[
        "--mock-script".as_ref(),
        mock.as_os_str(),
        "build-graph".as_ref(),
        f.join("scripts").as_os_str(),
        "--out-dir".as_ref(),
        out.as_os_str(),
    ])?;
    crs(&[
        "select".as_ref(),
        "--graph".as_ref(),
        o("graph.json").as_os_str(),
        "--main".as_ref(),
        "Kim Ha-na".as_ref(),
        "--sub".as_ref(),
        "Park Jun".as_ref(),
        "--out".as_ref(),
        o("selection.json").as_os_str(),
    ])?;
    crs(&[
        "--mock-script".as_ref(),
        mock.as_os_str(),
        "refine".as_ref(),
        "--selection".as_ref(),
        o("selection.json").as_os_str(),
        "--treatment".as_ref(),
        f.join("treatment.txt").as_os_str(),
        "--summaries".as_ref(),
        f.join("summary_e1.txt").as_os_str(),
        f.join("summary_e2.txt").as_os_str(),
        "--out-dir".as_ref(),
        out.as_os_str(),
    ])?;
    crs(&[
        "evaluate".as_ref(),
        "--crs".as_ref(),
        o("crs.grouped.json").as_os_str(),
        "--gt".as_ref(),
        f.join("gt.json").as_os_str(),
        "--name".as_ref(),
        "harbor".as_ref(),
        "--embedder".as_ref(),
        "exact".as_ref(),
        "--out-dir".as_ref(),
        out.as_os_str(),
    ])?;
    crs(&["render".as_ref(), o("crs.grouped.json").as_os_str()])?;
    Ok(())
}

/// Compares `out` against the checked-in goldens byte for byte. With
/// `UPDATE_GOLDENS` set, rewrites the goldens instead.
pub fn check_goldens(out: &Path) -> Result<(), String> {
    let expected = fixture("golden/expected");
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        fs::create_dir_all(&expected).map_err(|e| e.to_string())?;
        for name in GOLDEN_FILES {
            fs::copy(out.join(name), expected.join(name)).map_err(|e| format!("{name}: {e}"))?;
        }
        return Ok(());
    }
    let mut mismatched = Vec::new();
    for name in GOLDEN_FILES {
        let got = fs::read(out.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let want = fs::read(expected.join(name)).map_err(|e| format!("golden {name}: {e}"))?;
        if got != want {
            mismatched.push(*name);
        }
    }
    if mismatched.is_empty() {
        Ok(())
    } else {
        Err(format!("differs from golden: {}", mismatched.join(", ")))
    }
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}
