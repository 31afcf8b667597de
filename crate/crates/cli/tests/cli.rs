use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn starnoma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starnoma"))
        .args(args)
        .output()
        .expect("binary runs")
}

const TINY: &str = r#"
algorithms = ["mappo", "ppo"]
seeds = [1, 2]

[sweeps]
p_max_dbm = [10.0, 20.0]
elements = [5, 10]

[hp]
episodes = 2
steps = 3
hidden = [8]
"#;

#[test]
fn validate_config_prints_hash() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    fs::write(&path, TINY).unwrap();
    let out = starnoma(&["validate-config", "--config", path.to_str().unwrap()]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["valid"], true);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn invalid_config_reports_fields_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "seeds = [3, 3]\n[system]\nusers = 2\nclusters = 4\n").unwrap();
    let out = starnoma(&["validate-config", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "config");
    let problems: Vec<&str> = v["problems"].as_array().unwrap().iter().map(|p| p.as_str().unwrap()).collect();
    assert!(problems.iter().any(|p| p.starts_with("seeds")));
    assert!(problems.iter().any(|p| p.starts_with("system.clusters")));
}

#[test]
fn unknown_verb_is_a_usage_error() {
    let out = starnoma(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "usage");
}

#[test]
fn converge_then_dump_optimal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, TINY).unwrap();
    let out_dir = dir.path().join("out");
    let args = [
        "converge",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seeds",
        "4",
        "--episodes",
        "3",
    ];
    let out = starnoma(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["runs"].as_array().unwrap().len(), 2);
    let trace = fs::read_to_string(out_dir.join("converge/mappo_seed4_p20.csv")).unwrap();
    assert_eq!(trace.lines().count(), 4);
    let summary = fs::read_to_string(out_dir.join("converge/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);

    let ckpt = out_dir.join("converge/checkpoints/mappo_seed4.ckpt");
    let out = starnoma(&[
        "dump-optimal",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let amps = fs::read_to_string(out_dir.join("dump-optimal/amplitudes.csv")).unwrap();
    assert_eq!(amps.lines().count(), 1 + 2 * 10);
    let powers = fs::read_to_string(out_dir.join("dump-optimal/powers.csv")).unwrap();
    assert_eq!(powers.lines().count(), 1 + 4);
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, TINY).unwrap();
    let mut traces = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = starnoma(&[
            "sweep-power",
            "--serial",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        traces.push(fs::read_to_string(out_dir.join("sweep-power/summary.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
    assert_eq!(traces[0].lines().count(), 1 + 2 * 2 * 2);
}

#[test]
fn missing_checkpoint_is_a_load_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = starnoma(&["dump-optimal", "--checkpoint", dir.path().join("nope").to_str().unwrap()]);
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "checkpoint");
}
