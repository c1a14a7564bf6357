use std::path::Path;
use std::process::Command;

fn irdm(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_irdm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn simulate(dir: &Path, t: &str) {
    let out = irdm(&[
        "simulate",
        "--out",
        dir.to_str().unwrap(),
        "--t",
        t,
        "--seed",
        "5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn bad_config_exits_with_one_and_lists_problems() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "stages = [\"nirdm\"]\n[shocks]\nlambda = 0.0\n").unwrap();
    let out = irdm(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("requires stage irdm"), "{err}");
    assert!(err.contains("lambda"), "{err}");
    assert!(err.contains("inputs.prices"), "{err}");
}

#[test]
fn stage_failure_exits_with_two_and_records_manifest() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "600");
    // GARCH needs 250 observations; keep too few prices
    let prices = dir.path().join("prices.csv");
    let text = std::fs::read_to_string(&prices).unwrap();
    let short: Vec<&str> = text.lines().take(1 + 4 * 100).collect();
    std::fs::write(&prices, short.join("\n") + "\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = irdm(&[
        "fit-baseline",
        "--config",
        dir.path().join("config.toml").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["failed_stage"], "baseline");
    assert_eq!(manifest["completed"], false);
    assert!(out_dir.join("returns.csv").is_file());
}

#[test]
fn subcommand_runs_only_its_closure() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "600");
    let out_dir = dir.path().join("idx");
    let out = irdm(&[
        "build-index",
        "--config",
        dir.path().join("config.toml").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--markets",
        "IDN,MYS",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("shocks.csv").is_file());
    assert!(out_dir.join("midas_index.csv").is_file());
    assert!(!out_dir.join("table1_baseline_garch.csv").exists());
    let shocks = std::fs::read_to_string(out_dir.join("shocks.csv")).unwrap();
    assert!(shocks
        .lines()
        .skip(1)
        .all(|l| l.contains(",IDN,") || l.contains(",MYS,")));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["completed"], true);
    let hashes = manifest["outputs"].as_array().unwrap();
    assert!(hashes.iter().any(|o| o["file"] == "shocks.csv"));
}
