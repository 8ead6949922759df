mod common;

use advse::attacks::{Method, TargetKind};
use advse::harness::{
    aggregate, build_examples, run_attacks, run_eval, run_snr_sweep, run_target_attack,
    run_transfer_matrix, synth_dataset, write_report, ExperimentConfig, Manifest,
};
use approx::assert_abs_diff_eq;
use common::tiny_config;

#[test]
fn config_json_round_trips_and_fills_defaults() {
    let cfg = ExperimentConfig::default();
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
    let partial: ExperimentConfig = serde_json::from_str(r#"{"seed": 5}"#).unwrap();
    assert_eq!(partial.seed, 5);
    assert_eq!(partial.snr_grid, cfg.snr_grid);
}

#[test]
fn validation_rejects_bad_configs() {
    let mut cfg = tiny_config();
    cfg.snr_grid.clear();
    assert!(cfg.validate().is_err());
    let mut cfg = tiny_config();
    cfg.attack_target = TargetKind::Speech;
    assert!(cfg.validate().is_err());
}

#[test]
fn examples_are_reproducible_and_hit_their_snr() {
    let cfg = tiny_config();
    let a = build_examples(&cfg).unwrap();
    let b = build_examples(&cfg).unwrap();
    assert_eq!(a.len(), cfg.num_sentences * cfg.snr_grid.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.mixed, y.mixed);
        assert_abs_diff_eq!(x.measured_snr_db, x.snr_db, epsilon = 1e-6);
    }
}

#[test]
fn synth_writes_manifest_and_audio() {
    let cfg = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    let m = synth_dataset(&cfg, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    let parsed: Manifest = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, m);
    for sub in ["clean", "noise", "mixed"] {
        assert!(std::fs::read_dir(dir.path().join(sub)).unwrap().count() > 0);
    }
}

#[test]
fn protocols_produce_complete_reports() {
    let cfg = tiny_config();
    let n = cfg.num_sentences * cfg.snr_grid.len();

    let eval = run_eval(&cfg).unwrap();
    assert_eq!(eval.rows.len(), n);
    assert!(eval.rows.iter().all(|r| r.method.is_none()));

    let sweep = run_snr_sweep(&cfg).unwrap();
    assert_eq!(sweep.rows.len(), n * cfg.methods.len());
    assert_eq!(sweep.aggregates.len(), cfg.snr_grid.len() * cfg.methods.len());
    assert!(!sweep.find(0.0, Some(Method::Opt)).is_empty());
    assert!(sweep.rows.iter().all(|r| r.error.is_none()));

    let target = run_target_attack(&cfg).unwrap();
    assert_eq!(target.rows.len(), cfg.num_sentences);
    assert!(target.rows.iter().all(|r| r.target_transcript.is_some()));

    let transfer = run_transfer_matrix(&cfg).unwrap();
    assert_eq!(transfer.transfer.len(), 4);
    assert_eq!(transfer.rows.len(), 4 * n);
}

#[test]
fn aggregate_groups_by_snr_and_method() {
    let cfg = tiny_config();
    let sweep = run_snr_sweep(&cfg).unwrap();
    let again = aggregate(&sweep.rows);
    assert_eq!(again.len(), sweep.aggregates.len());
    for a in &again {
        assert_eq!(a.rows, cfg.num_sentences);
    }
}

#[test]
fn reports_and_artifacts_are_written() {
    let cfg = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    let report = run_eval(&cfg).unwrap();
    let json = write_report(&report, dir.path(), "eval").unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    let csv = std::fs::read_to_string(dir.path().join("eval_rows.csv")).unwrap();
    assert_eq!(csv.lines().count(), report.rows.len() + 1);

    let (attack, artifacts) = run_attacks(&cfg, dir.path()).unwrap();
    assert_eq!(artifacts.len(), attack.rows.len());
    for a in &artifacts {
        assert!(a.wav.exists() && a.sidecar.exists());
    }
}
