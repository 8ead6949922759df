#![allow(dead_code)]

use advse::enhancers::{ArchConfig, DatasetSpec, TrainConfig, WaveAeArch};
use advse::harness::ExperimentConfig;

/// Small config that runs every protocol in a few seconds.
pub fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        snr_grid: vec![0.0, 4.0],
        num_sentences: 2,
        sentence_len: 3,
        ..ExperimentConfig::default()
    };
    let train = TrainConfig {
        epochs: 2,
        dataset: DatasetSpec {
            num_sentences: 6,
            sentence_len: 3,
            ..DatasetSpec::default()
        },
        ..TrainConfig::default()
    };
    cfg.model.train = train.clone();
    cfg.transfer_model.train = train;
    cfg.transfer_model.arch = ArchConfig::WaveAe(WaveAeArch {
        channels1: 4,
        channels2: 6,
        ..WaveAeArch::default()
    });
    cfg.attack.itr = 10;
    cfg.attack.steps = 3;
    cfg
}
