#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// `(file stem, raw text)` of every corpus document, sorted by name.
pub fn corpus() -> Vec<(String, String)> {
    let mut out: Vec<_> = fs::read_dir(workspace_root().join("corpus"))
        .expect("corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(".darpal.json"))
        .map(|p| {
            let stem = p
                .file_name()
                .unwrap()
                .to_string_lossy()
                .trim_end_matches(".darpal.json")
                .to_string();
            (stem, fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

pub fn fixture(rel: &str) -> String {
    fs::read_to_string(workspace_root().join("fixtures").join(rel)).unwrap()
}
