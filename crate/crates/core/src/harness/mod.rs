//! Experiment protocols: dataset synthesis, SNR sweeps, target attacks and
//! the transfer matrix, with JSON and CSV reports.

mod config;
mod dataset;
mod experiments;
mod report;

pub use config::{ExperimentConfig, ModelSpec, SEED_ENV};
pub use dataset::{build_examples, synth_dataset, Example, Manifest, ManifestRow};
pub use experiments::{
    obtain_model, run_attacks, run_eval, run_snr_sweep, run_target_attack, run_transfer_matrix,
    train_model, AttackArtifact,
};
pub use report::{
    aggregate, median, write_report, Aggregate, Report, Row, TransferCell, REPORT_SCHEMA_VERSION,
};
