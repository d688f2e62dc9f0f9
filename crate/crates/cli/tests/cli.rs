use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"
[simgen.city]
grid_width = 10
grid_height = 10
corridors = 2
seh_count = 1
couriers = 20
history_days = 1

[eatne]
base_dim = 8
max_epochs = 2
walks_per_node = 2

[dispatch]
orders = 30
couriers = 90
"#;

fn scdn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scdn"))
        .current_dir(dir)
        .env("SCDN_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = scdn(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn manifest(dir: &Path, command: &str) -> Value {
    serde_json::from_slice(&fs::read(dir.join("manifests").join(format!("{command}.json"))).unwrap()).unwrap()
}

fn small(dir: &Path) {
    fs::write(dir.join("small.toml"), SMALL).unwrap();
}

fn hashes(m: &Value) -> Vec<String> {
    m["outputs"].as_object().unwrap().values().map(|v| v.as_str().unwrap().to_string()).collect()
}

#[test]
fn generate_twice_gives_identical_hashes() {
    let d = tempfile::tempdir().unwrap();
    small(d.path());
    ok(d.path(), &["--config", "small.toml", "--seed", "7", "--out", "a", "generate"]);
    ok(d.path(), &["--config", "small.toml", "--seed", "7", "--out", "b", "generate"]);
    let (a, b) = (manifest(&d.path().join("a"), "generate"), manifest(&d.path().join("b"), "generate"));
    assert_eq!(hashes(&a), hashes(&b));
    assert_eq!(a["config_hash"], b["config_hash"]);
    assert_eq!(a["seed"], 7);
    ok(d.path(), &["--config", "small.toml", "--seed", "8", "--out", "c", "generate"]);
    assert_ne!(hashes(&a), hashes(&manifest(&d.path().join("c"), "generate")));
}

#[test]
fn pipeline_runs_and_train_echoes_defaults() {
    let d = tempfile::tempdir().unwrap();
    small(d.path());
    for cmd in ["generate", "build-graph", "train", "index", "identify-seh", "dispatch"] {
        ok(d.path(), &["--config", "small.toml", cmd]);
    }
    let out = d.path().join("out");
    let resolved: toml::Table = toml::from_str(&fs::read_to_string(out.join("resolved_config.toml")).unwrap()).unwrap();
    let eatne = resolved["eatne"].as_table().unwrap();
    assert_eq!(eatne["learning_rate"].as_float(), Some(0.001));
    assert_eq!(eatne["base_dim"].as_integer(), Some(8));
    assert_eq!(eatne["walk_length"].as_integer(), Some(10));

    let curve = fs::read_to_string(out.join("training_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3, "{curve}");
    let report: Value = serde_json::from_slice(&fs::read(out.join("dispatch_report.json")).unwrap()).unwrap();
    assert_eq!(report["orders"], 30);
    assert_eq!(report["method"], "scdn");
    let train = manifest(&out, "train");
    assert!(train["inputs"].as_object().unwrap().keys().any(|k| k.ends_with("graph.json")));

    // The written instance replays to the same assignment.
    let first = fs::read(out.join("assignment.json")).unwrap();
    ok(
        d.path(),
        &[
            "--config",
            "small.toml",
            "--out",
            "replay",
            "--paths.scenario",
            "out/scenario",
            "--paths.embeddings",
            "out/embeddings.bin",
            "--paths.orders",
            "out/instance_orders.jsonl",
            "--paths.couriers=out/instance_couriers.jsonl",
            "dispatch",
        ],
    );
    let a: Value = serde_json::from_slice(&first).unwrap();
    let b: Value = serde_json::from_slice(&fs::read(d.path().join("replay/assignment.json")).unwrap()).unwrap();
    assert_eq!(a["assignment"], b["assignment"]);
}

#[test]
fn bad_config_exits_2_with_line() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("bad.toml"), "seed = 1\n\n[dispatch.params]\np2 = 3.0\n").unwrap();
    let out = scdn(d.path(), &["--config", "bad.toml", "generate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml:4:1: dispatch.params.p2"), "{err}");

    fs::write(d.path().join("unknown.toml"), "[eatne]\nlearning_rat = 0.1\n").unwrap();
    let out = scdn(d.path(), &["--config", "unknown.toml", "generate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown.toml:2:"));

    let out = scdn(d.path(), &["--eatne.walk_length", "1", "generate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("override --eatne.walk_length"));
}

#[test]
fn missing_input_exits_3() {
    let d = tempfile::tempdir().unwrap();
    let out = scdn(d.path(), &["--out", "empty", "build-graph"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing input file"));
    let out = scdn(d.path(), &["--config", "nowhere.toml", "generate"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn oracle_check_passes() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(d.path(), &["oracle-check", "--quick"]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("PASS"), "{table}");
    assert!(!table.contains("FAIL"), "{table}");
    assert!(d.path().join("out/manifests/oracle-check.json").is_file());
}
