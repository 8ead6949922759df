use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackConfig, Method, TargetKind};
use crate::audio::NoiseKind;
use crate::codec::CodecConfig;
use crate::enhancers::{ArchConfig, MaskNetArch, TrainConfig, WaveAeArch};
use crate::error::{Error, Result};

/// Environment variable that overrides [`ExperimentConfig::seed`].
pub const SEED_ENV: &str = "ADVSE_SEED";

/// Where an enhancer comes from: a saved file if `path` exists, otherwise
/// built from `arch` with `init_seed` and trained with `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub name: String,
    pub path: Option<PathBuf>,
    pub arch: ArchConfig,
    pub init_seed: u64,
    pub train: TrainConfig,
}

impl ModelSpec {
    pub fn masknet() -> Self {
        Self {
            name: "masknet".into(),
            path: None,
            arch: ArchConfig::MaskNet(MaskNetArch::default()),
            init_seed: 1,
            train: TrainConfig::default(),
        }
    }

    pub fn waveae() -> Self {
        Self {
            name: "waveae".into(),
            path: None,
            arch: ArchConfig::WaveAe(WaveAeArch::default()),
            init_seed: 2,
            train: TrainConfig {
                epochs: 30,
                ..TrainConfig::default()
            },
        }
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::masknet()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub snr_grid: Vec<f64>,
    pub num_sentences: usize,
    pub sentence_len: usize,
    pub noise: NoiseKind,
    pub codec: CodecConfig,
    /// Attacked model; the source row of the transfer matrix.
    pub model: ModelSpec,
    /// Second model of the transfer matrix.
    pub transfer_model: ModelSpec,
    /// Methods of the SNR sweep.
    pub methods: Vec<Method>,
    /// Shared attack hyperparameters; `method` is set per run.
    pub attack: AttackConfig,
    /// Per-step amplitude of FGSM in the sweep.
    pub fgsm_epsilon: f64,
    /// SNR at which target-attack victims are mixed.
    pub target_snr_db: f64,
    /// Target of the standalone `attack` command.
    pub attack_target: TargetKind,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            snr_grid: vec![-8.0, -4.0, 0.0, 4.0, 8.0],
            num_sentences: 10,
            sentence_len: 5,
            noise: NoiseKind::White,
            codec: CodecConfig::default(),
            model: ModelSpec::masknet(),
            transfer_model: ModelSpec::waveae(),
            methods: vec![Method::Fgsm, Method::Opt],
            attack: AttackConfig {
                epsilon: 0.005,
                s_radius: 0.05,
                steps: 20,
                opt_linf: Some(0.05),
                ..AttackConfig::default()
            },
            fgsm_epsilon: 0.05,
            target_snr_db: 8.0,
            attack_target: TargetKind::Silence,
            output_dir: PathBuf::from("advse-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_grid.is_empty() {
            return Err(Error::Config("snr_grid must not be empty".into()));
        }
        if let Some(s) = self.snr_grid.iter().find(|s| !s.is_finite()) {
            return Err(Error::Config(format!("snr_grid entry {s} is not finite")));
        }
        if self.num_sentences == 0 {
            return Err(Error::Config("num_sentences must be ≥ 1".into()));
        }
        if self.sentence_len == 0 {
            return Err(Error::Config("sentence_len must be ≥ 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        if !(self.fgsm_epsilon >= 0.0) {
            return Err(Error::Config("fgsm_epsilon must be ≥ 0".into()));
        }
        if !self.target_snr_db.is_finite() {
            return Err(Error::Config("target_snr_db must be finite".into()));
        }
        if self.attack_target == TargetKind::Speech {
            return Err(Error::Config(
                "attack_target speech needs a clip; use the target experiment".into(),
            ));
        }
        self.codec.validate()?;
        self.attack.validate()
    }

    /// Attack settings for `method`.
    pub fn attack_for(&self, method: Method) -> AttackConfig {
        let mut cfg = self.attack.clone();
        cfg.method = method;
        if method == Method::Fgsm {
            cfg.epsilon = self.fgsm_epsilon;
        }
        cfg
    }

    /// Applies the seed override from `SEED_ENV` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?;
        }
        Ok(())
    }
}
