//! End-to-end checks of the `coordlab` binary: exit codes, report shape,
//! manifest embedding, and byte-level reproducibility.

use std::path::Path;
use std::process::Command;

const SPEC: &str = r#"{
    "alphabets": {"S": 2, "X": 2, "Y": 2, "V": 2},
    "source": [0.5, 0.5],
    "channel": [[0.9, 0.1], [0.1, 0.9], [0.9, 0.1], [0.1, 0.9]],
    "target_x": [[0.5, 0.5], [0.5, 0.5]],
    "distortion": [[0.0, 1.0], [1.0, 0.0]]
}"#;

/// Skewed-state spec whose codebooks stay tiny at short blocklengths.
const SIM_SPEC: &str = r#"{
    "alphabets": {"S": 2, "X": 2, "Y": 2},
    "source": [0.98, 0.02],
    "channel": [[0.9, 0.1], [0.1, 0.9], [0.9, 0.1], [0.1, 0.9]],
    "target_x": [[0.8, 0.2], [0.2, 0.8]]
}"#;

const NO_ACTION_AUX: &str = r#"{
    "variant": "no-action",
    "w1": {"axes": [{"name": "W1", "size": 2}], "mass": [0.5, 0.5]},
    "x": {
        "from": [{"name": "S", "size": 2}, {"name": "W1", "size": 2}],
        "to": [{"name": "X", "size": 2}],
        "rows": [1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]
    }
}"#;

const CAUSAL_AUX: &str = r#"{
    "variant": "causal",
    "w1": {"axes": [{"name": "W1", "size": 2}], "mass": [0.5, 0.5]},
    "w2": {
        "from": [{"name": "S", "size": 2}, {"name": "W1", "size": 2}],
        "to": [{"name": "W2", "size": 1}],
        "rows": [1.0, 1.0, 1.0, 1.0]
    },
    "x": {
        "from": [{"name": "S", "size": 2}, {"name": "W1", "size": 2}],
        "to": [{"name": "X", "size": 2}],
        "rows": [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]
    }
}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coordlab"))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn missing_spec_file_exits_with_validation_error() {
    let out = bin()
        .args(["region", "--spec", "/nonexistent.json", "--variant", "causal"])
        .args(["--rate", "0.1", "--leakage", "0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn region_query_emits_manifest_and_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "bsc.json", SPEC);
    let out = bin()
        .args(["region", "--spec", &spec, "--variant", "causal"])
        .args(["--rate", "0.0", "--leakage", "2.0"]) // beyond H(S): rejected fast
        .args(["--restarts", "2", "--w1", "2", "--w2", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["manifest"]["command"], "region");
    assert_eq!(doc["report"]["verdict"], "not-achievable");
    assert!(doc["manifest"]["spec_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn min_leakage_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "bsc.json", SIM_SPEC);
    let out1 = dir.path().join("run1.json");
    let out2 = dir.path().join("run2.json");
    for out in [&out1, &out2] {
        let status = bin()
            .args(["min-leakage", "--spec", &spec, "--variant", "no-action"])
            .args(["--rate", "0.05", "--restarts", "4", "--w1", "2", "--seed", "11"])
            .args(["--threads", "2", "--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert_eq!(a, b, "reports differ between identical runs");
}

#[test]
fn boundary_emits_polygon_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "spec.json", SIM_SPEC);
    let aux = write(dir.path(), "aux.json", CAUSAL_AUX);
    let out = dir.path().join("boundary.json");
    let status = bin()
        .args(["boundary", "--spec", &spec, "--aux", &aux])
        .args(["--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["manifest"]["command"], "boundary");
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# {"), "manifest comment line");
    assert_eq!(lines.next().unwrap(), "r,e");
    assert!(lines.next().is_some(), "at least one vertex row");
}

#[test]
fn simulate_single_block_with_aux_writes_trials_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "spec.json", SIM_SPEC);
    let aux = write(dir.path(), "aux.json", NO_ACTION_AUX);
    let out = dir.path().join("sim.json");
    let status = bin()
        .args(["simulate", "--spec", &spec, "--aux", &aux])
        .args(["--rate", "0.0", "--leakage", "0.1", "--n", "6", "--blocks", "1"])
        .args(["--trials", "3", "--seed", "5", "--delta", "0.6"])
        .args(["--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(doc["report"]["leakage_exact"].is_number(), "n = 6 is enumerable");
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[1], "trial,seed,decode_error,tv,leakage");
    assert_eq!(lines.len(), 2 + 3, "one row per trial");
}

#[test]
fn simulate_searches_a_witness_when_none_is_given() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "spec.json", SIM_SPEC);
    let out = bin()
        .args(["simulate", "--spec", &spec])
        .args(["--rate", "0.02", "--leakage", "0.09", "--n", "60", "--blocks", "3"])
        .args(["--trials", "2", "--seed", "5", "--delta", "0.4"])
        .args(["--restarts", "8", "--w1", "2", "--w2", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc["report"]["median_decode_error"].is_number());
    assert_eq!(doc["report"]["per_trial"].as_array().unwrap().len(), 2);
}

#[test]
fn game_reports_value_and_gap() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "bsc.json", SPEC);
    let out = bin()
        .args(["game", "--spec", &spec, "--rate", "0.0"])
        .args(["--restarts", "4", "--w1", "2", "--seed", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc["report"]["d_star"].is_number());
    assert!(doc["report"]["gap"].is_number());
    assert!(doc["report"]["decoder"]["rows"].is_array());
}

#[test]
fn beliefs_audit_reports_bound() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "spec.json", SIM_SPEC);
    let aux = write(dir.path(), "aux.json", NO_ACTION_AUX);
    let out = bin()
        .args(["beliefs", "--spec", &spec, "--aux", &aux, "--n", "4"])
        .args(["--alpha", "0.3", "--gamma", "0.3", "--delta", "0.5", "--seed", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["report"]["audit"]["holds"], true);
    assert_eq!(doc["report"]["belief_sets"]["holds"], true);
}

#[test]
fn witness_cache_round_trips(){
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let spec = write(dir.path(), "spec.json", SIM_SPEC);
    let run = || {
        bin()
            .env("COORDLAB_CACHE_DIR", cache.to_str().unwrap())
            .args(["min-leakage", "--spec", &spec, "--variant", "no-action"])
            .args(["--rate", "0.02", "--restarts", "3", "--w1", "2", "--seed", "8"])
            .output()
            .unwrap()
    };
    let first = run();
    assert_eq!(first.status.code(), Some(0));
    assert!(cache.read_dir().unwrap().count() > 0, "cache populated");
    let second = run();
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout, "cache hit must reproduce bytes");
}
