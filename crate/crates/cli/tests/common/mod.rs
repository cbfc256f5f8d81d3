#![allow(dead_code)]

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use partsim::data::write_pairs;
use partsim::synth::{planted, PlantedConfig, PlantedData};
use serde_json::Value;

pub fn partsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_partsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs the binary and insists on exit 0.
pub fn ok(args: &[&str]) -> Output {
    let out = partsim(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "partsim {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

pub fn write_planted(path: &Path, cfg: &PlantedConfig) -> PlantedData {
    let d = planted(cfg);
    write_pairs(&d.matrix, BufWriter::new(File::create(path).unwrap())).unwrap();
    d
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Output name → digest, as listed by a run manifest.
pub fn output_digests(dir: &Path) -> Vec<(String, String)> {
    let m = read_json(&dir.join("run.manifest.json"));
    m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| (o["path"].as_str().unwrap().to_owned(), o["sha256"].as_str().unwrap().to_owned()))
        .collect()
}

/// (stage, file) of every split read recorded in a run manifest.
pub fn reads(dir: &Path) -> Vec<(String, String)> {
    let m = read_json(&dir.join("run.manifest.json"));
    m["files_read"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["stage"].as_str().unwrap().to_owned(), e["file"].as_str().unwrap().to_owned()))
        .collect()
}

/// A small planted dataset, split with seed 1.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub data: PathBuf,
    pub split: PathBuf,
    pub planted: PlantedData,
}

pub fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.tsv");
    let planted = write_planted(
        &data,
        &PlantedConfig {
            n_users: 400,
            n_items: 120,
            clusters: 4,
            p_in: 0.15,
            popularity_skew: 0.8,
            seed: 5,
            ..Default::default()
        },
    );
    let split = dir.path().join("split");
    ok(&["split", "--input", s(&data), "--seed", "1", "--out", s(&split)]);
    Fixture { dir, data, split, planted }
}
