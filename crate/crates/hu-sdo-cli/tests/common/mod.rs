#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// Runs the binary from the crate root so report paths stay relative.
pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hu-sdo"))
        .args(args)
        .current_dir(manifest_dir())
        .output()
        .expect("binary runs")
}

pub fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not a report ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

/// Report text with the `timing` block blanked.
pub fn without_timing(text: &str) -> Value {
    let mut v: Value = serde_json::from_str(text).expect("valid JSON");
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timing");
    }
    v
}

/// Each golden case: file stem, then the arguments.
pub const GOLDEN_CASES: [(&str, &[&str]); 3] = [
    (
        "pair_coupling",
        &["--input", "tests/data/pair.edges", "--format", "edges", "--round", "hyperplane", "--trials", "20"],
    ),
    ("complete_graph_pos_4", &["--input", "tests/data/k4pos.mtx", "--round", "hyperplane", "--trials", "20"]),
    ("complete_graph_neg_4", &["--input", "tests/data/k4neg.mtx", "--round", "hyperplane", "--trials", "20"]),
];

pub fn golden_path(name: &str) -> PathBuf {
    manifest_dir().join("tests/golden").join(format!("{name}.json"))
}

/// Compares a fresh run with its golden file; `UPDATE_GOLDEN=1` rewrites it.
pub fn check_golden(name: &str, args: &[&str]) -> Result<(), String> {
    let out = run(args);
    if !out.status.success() {
        return Err(format!("{name}: exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    let text = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &text).map_err(|e| e.to_string())?;
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if without_timing(&expected) == without_timing(&text) {
        Ok(())
    } else {
        Err(format!("{name}: report differs from {}", path.display()))
    }
}

pub fn temp_out(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}
