use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
mode = "mab"
replicas = [7]

[env]
d = 4
m = 30
T = 8
s = 1
gap = 0.3
noise = 0.1

[meta]
k = 2
"#;

fn meta_bandit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meta-bandit")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn seeds(out: &Path) -> Vec<u64> {
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    s["replicas"].as_array().unwrap().iter().map(|r| r["seed"].as_u64().unwrap()).collect()
}

#[test]
fn run_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");
    let o = meta_bandit(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["regret_series.csv", "baseline_series.csv", "pt_trajectory.csv", "grid.csv", "summary.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert_eq!(seeds(&out), vec![7]);
}

#[test]
fn seed_override_and_replicas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");
    let o = meta_bandit(&[
        "run", "--config", &cfg, "--out", out.to_str().unwrap(), "--replicas", "3", "--seed-override", "40",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(seeds(&out), vec![40, 41, 42]);
}

#[test]
fn json_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let json = r#"{"mode": "mab", "replicas": [1],
        "env": {"d": 3, "m": 20, "T": 4, "s": 1, "gap": 0.2, "noise": 0.0},
        "meta": {"k": 2}}"#;
    let cfg = write(dir.path(), "small.json", json);
    let o = meta_bandit(&["run", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let bad = write(dir.path(), "bad.toml", &SMALL.replace("gap = 0.3", "gap = -3.0"));
    assert_eq!(meta_bandit(&["run", "--config", &bad, "--out", out]).status.code(), Some(2));
    let unknown = write(dir.path(), "unknown.toml", &SMALL.replace("[meta]", "[meta]\nwidth = 3"));
    assert_eq!(meta_bandit(&["run", "--config", &unknown, "--out", out]).status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    assert_eq!(meta_bandit(&["run", "--config", missing.to_str().unwrap(), "--out", out]).status.code(), Some(2));
    let cfg = write(dir.path(), "small.toml", SMALL);
    assert_eq!(meta_bandit(&["run", "--config", &cfg, "--out", out, "--replicas", "0"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let blocker = write(dir.path(), "file", "not a directory");
    let o = meta_bandit(&["run", "--config", &cfg, "--out", &blocker]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn quick_verify_passes() {
    let o = meta_bandit(&["verify", "--quick"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("[PASS]")));
    assert!(!stdout.contains("[FAIL]"));
}
