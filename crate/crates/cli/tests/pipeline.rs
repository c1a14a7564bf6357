use irdm_cli::config::{SimulateOptions, ALL_STAGES};
use irdm_cli::{pipeline, simulate};
use irdm_core::evaluate::ErrorMode;

#[test]
fn expanding_window_mode_runs_and_is_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let opts = SimulateOptions {
        t: 900,
        ..SimulateOptions::default()
    };
    let mut cfg = simulate::write_bundle(&opts, 9, dir.path()).unwrap();
    cfg.out_dir = dir.path().join("out");
    cfg.evaluate.error_mode = ErrorMode::Expanding;
    cfg.evaluate.min_train = 300;
    cfg.evaluate.rolling_window = 200;
    cfg.robustness.lambdas = vec![0.02];
    let manifest = pipeline::run(&cfg, &ALL_STAGES).unwrap();
    assert!(manifest.completed);
    assert_eq!(manifest.error_mode, "expanding");
    let t6 = std::fs::read_to_string(cfg.out_dir.join("table6_dm_enc.csv")).unwrap();
    let rows: Vec<&str> = t6.lines().skip(1).collect();
    assert_eq!(rows.len(), 16);
    // 899 regression rows less the 300 used for the first fit
    assert!(rows.iter().all(|r| r.ends_with(",599")), "{t6}");
    let roll = std::fs::read_to_string(cfg.out_dir.join("figure21_rolling_dm.csv")).unwrap();
    assert_eq!(roll.lines().count(), 1 + 4 * (599 - 200 + 1));
}
