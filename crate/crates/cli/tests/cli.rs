use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

const SMALL: &str = r#"
seed = 5

[data.synthetic]
communities = 2
customers_per_community = 60
mules = 3
smurfers = 3

[grid]
gains = [0.3]
resolutions = [4]
ks = [3]

[stability.eps]
kind = "fixed"
netsimile = 1e9
spectral = 1e9

[detect]
ensemble_size = 1

[validate]
alpha = 1.0
permutations = 99
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topoguard")).args(args).arg("--out-dir").arg(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn small_config(dir: &TempDir) -> String {
    let path = dir.path().join("run.toml");
    fs::write(&path, SMALL).unwrap();
    path.to_string_lossy().into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn synth_and_features_agree_on_customer_count() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir);
    ok(dir.path(), &["synth", "--config", &cfg]);
    ok(dir.path(), &["features", "--config", &cfg]);
    let features = fs::read_to_string(dir.path().join("features.csv")).unwrap();
    assert_eq!(features.lines().count(), 1 + 2 * 60 + 3 + 3);
    let truth = json(&dir.path().join("ground_truth.json"));
    assert_eq!(truth["anomaly_labels"].as_object().unwrap().len(), 126);
    // rejects.csv is always written, header only for clean input
    assert_eq!(fs::read_to_string(dir.path().join("rejects.csv")).unwrap(), "line,reason\n");
}

#[test]
fn manifest_digests_match_the_files() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir);
    ok(dir.path(), &["synth", "--config", &cfg]);
    let m = json(&dir.path().join("manifest_synth.json"));
    assert_eq!(m["stage"], "synth");
    assert_eq!(m["master_seed"], 5);
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    for o in outputs {
        let bytes = fs::read(dir.path().join(o["path"].as_str().unwrap())).unwrap();
        assert_eq!(o["sha256"].as_str().unwrap(), sha2_hex(&bytes));
    }
}

fn sha2_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn single_theta_grid_runs_end_to_end() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir);
    for stage in ["synth", "features", "stability", "detect", "segment"] {
        ok(dir.path(), &[stage, "--config", &cfg]);
    }
    let region = json(&dir.path().join("stable_region.json"));
    assert_eq!(region["theta_opt"]["gain"], 0.3);
    assert_eq!(region["theta_opt"]["resolution"], 4);
    assert_eq!(region["theta_opt"]["k"], 3);
    assert_eq!(region["members"].as_array().unwrap().len(), 1);

    // alpha = 1 makes every tested pair significant
    let sig = fs::read_to_string(dir.path().join("significance.csv")).unwrap();
    assert!(sig.starts_with("community_a,community_b,pseudo_f,raw_p,corrected_p,significant\n"));
    assert!(sig.lines().count() > 1, "{sig}");
    assert!(sig.lines().skip(1).all(|l| l.ends_with(",true")), "{sig}");

    let before = fs::read(dir.path().join("significance.csv")).unwrap();
    ok(dir.path(), &["validate", "--config", &cfg]);
    assert_eq!(fs::read(dir.path().join("significance.csv")).unwrap(), before);
}

#[test]
fn missing_inputs_exit_with_3() {
    let dir = TempDir::new().unwrap();
    for stage in ["features", "stability", "detect", "segment", "validate"] {
        let out = run(dir.path(), &[stage]);
        assert_eq!(out.status.code(), Some(3), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn empty_stable_region_exits_with_3_after_writing_the_scan() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir);
    let tight = SMALL.replace("netsimile = 1e9", "netsimile = 0.0");
    let tight_path = dir.path().join("tight.toml");
    fs::write(&tight_path, tight).unwrap();
    ok(dir.path(), &["synth", "--config", &cfg]);
    ok(dir.path(), &["features", "--config", &cfg]);
    let out = run(dir.path(), &["stability", "--config", tight_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("stability_scan.csv").exists());
    assert!(dir.path().join("manifest_stability.json").exists());
    let out = run(dir.path(), &["detect", "--config", tight_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_problems_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[detect]\npercentile = 0\n").unwrap();
    assert_eq!(run(dir.path(), &["synth", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    fs::write(&bad, "seed = \"x\"\n").unwrap();
    assert_eq!(run(dir.path(), &["synth", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["synth", "--threads", "0"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn defaults_round_trip_through_config() {
    let dir = TempDir::new().unwrap();
    let text = ok(dir.path(), &["defaults"]);
    let path = dir.path().join("defaults.toml");
    fs::write(&path, &text).unwrap();
    assert_eq!(ok(dir.path(), &["defaults", "--config", path.to_str().unwrap()]), text);
    assert_eq!(ok(dir.path(), &["defaults", "--seed", "9"]), text.replace("seed = 42", "seed = 9"));
}
