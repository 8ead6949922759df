//! Differentiable speech enhancers.
//!
//! Two architectures share one [`EnhancerModel`] container:
//! - `MaskNet`: per-frame MLP over STFT magnitudes predicting a (0, 1) mask,
//!   resynthesized with the noisy phase.
//! - `WaveAe`: waveform-to-waveform 1-D convolutional autoencoder.
//!
//! Either model can splice its forward pass into a larger [`GraphBuilder`],
//! which is how the attacks obtain gradients with respect to the input.

mod format;
mod masknet;
mod train;
mod waveae;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::grad::{Bindings, Graph, GraphBuilder, NodeId, Tensor};
use crate::scalar::Scalar;
use crate::signal::StftConfig;

pub use format::{from_bytes, load_model, save_model, to_bytes, FORMAT_VERSION, MAGIC};
pub use masknet::MaskNetArch;
pub use train::{synth_training_set, train, DatasetSpec, NoiseKind, TrainConfig, TrainingPair};
pub use waveae::WaveAeArch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MaskNet,
    WaveAe,
}

impl ModelKind {
    pub fn tag(self) -> u8 {
        match self {
            ModelKind::MaskNet => 1,
            ModelKind::WaveAe => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(ModelKind::MaskNet),
            2 => Some(ModelKind::WaveAe),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArchConfig {
    MaskNet(MaskNetArch),
    WaveAe(WaveAeArch),
}

impl ArchConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ArchConfig::MaskNet(_) => ModelKind::MaskNet,
            ArchConfig::WaveAe(_) => ModelKind::WaveAe,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Trained (or freshly initialized) enhancer parameters plus architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancerModel<T> {
    pub arch: ArchConfig,
    pub params: BTreeMap<String, Tensor<T>>,
    pub train_meta: TrainMeta,
}

/// Parameter leaves of a spliced enhancer, in model order.
#[derive(Debug, Clone)]
pub struct ParamLeaves {
    pub leaves: Vec<(String, NodeId)>,
}

impl ParamLeaves {
    pub fn bind<'a, T: Scalar>(
        &self,
        model: &'a EnhancerModel<T>,
        bindings: &mut Bindings<'a, T>,
    ) {
        for (name, id) in &self.leaves {
            bindings.bind(*id, &model.params[name]);
        }
    }
}

/// Standalone `x ↦ g(x)` graph for a fixed input length.
#[derive(Debug, Clone)]
pub struct EnhancerGraph<T> {
    pub graph: Graph<T>,
    pub input: NodeId,
    pub params: ParamLeaves,
}

impl<T: Scalar> EnhancerGraph<T> {
    pub fn run(&self, model: &EnhancerModel<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut b = Bindings::new();
        b.bind(self.input, x);
        self.params.bind(model, &mut b);
        self.graph.forward(&b)
    }
}

pub(crate) fn glorot<T: Scalar>(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> Tensor<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random_range(-a..=a))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product")
}

impl<T: Scalar> EnhancerModel<T> {
    pub fn build_masknet(arch: MaskNetArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            arch: ArchConfig::MaskNet(arch),
            params: arch.init_params(&mut rng),
            train_meta: TrainMeta {
                seed,
                ..TrainMeta::default()
            },
        })
    }

    pub fn build_waveae(arch: WaveAeArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            arch: ArchConfig::WaveAe(arch),
            params: arch.init_params(&mut rng),
            train_meta: TrainMeta {
                seed,
                ..TrainMeta::default()
            },
        })
    }

    pub fn build(arch: ArchConfig, seed: u64) -> Result<Self> {
        match arch {
            ArchConfig::MaskNet(a) => Self::build_masknet(a, seed),
            ArchConfig::WaveAe(a) => Self::build_waveae(a, seed),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.arch.kind()
    }

    pub fn stft_config(&self) -> Option<StftConfig> {
        match self.arch {
            ArchConfig::MaskNet(a) => Some(a.stft),
            ArchConfig::WaveAe(_) => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    /// Shortest input the model accepts.
    pub fn min_len(&self) -> usize {
        match self.arch {
            ArchConfig::MaskNet(a) => a.stft.frame_len,
            ArchConfig::WaveAe(_) => 4,
        }
    }

    /// Splices `y = g(x)` into `b`, where `x` is a `[len]` node.
    pub fn splice(&self, b: &mut GraphBuilder<T>, x: NodeId) -> Result<(NodeId, ParamLeaves)> {
        let [len] = *b.shape(x) else {
            return Err(Error::Shape(format!(
                "enhancer input must be a vector, got {:?}",
                b.shape(x)
            )));
        };
        if len < self.min_len() {
            return Err(Error::Size(format!(
                "input of {len} samples shorter than the model minimum {}",
                self.min_len()
            )));
        }
        let mut leaves = Vec::with_capacity(self.params.len());
        let mut ids = BTreeMap::new();
        for (name, t) in &self.params {
            let id = b.param(name, t.shape())?;
            ids.insert(name.clone(), id);
            leaves.push((name.clone(), id));
        }
        let y = match self.arch {
            ArchConfig::MaskNet(a) => masknet::splice(&a, b, x, len, &ids)?,
            ArchConfig::WaveAe(a) => waveae::splice(&a, b, x, len, &ids)?,
        };
        Ok((y, ParamLeaves { leaves }))
    }

    pub fn graph(&self, len: usize) -> Result<EnhancerGraph<T>> {
        let mut b = GraphBuilder::new();
        let x = b.input("x", &[len])?;
        let (y, params) = self.splice(&mut b, x)?;
        Ok(EnhancerGraph {
            graph: b.finish(y)?,
            input: x,
            params,
        })
    }

    /// `y_en = g(x)`.
    pub fn enhance(&self, x: &Waveform<T>) -> Result<Waveform<T>> {
        x.validate()?;
        let g = self.graph(x.len())?;
        let y = g.run(self, &Tensor::vector(x.samples.clone()))?;
        Ok(Waveform::new(y.into_data(), x.sample_rate))
    }

    pub fn is_finite(&self) -> bool {
        self.params.values().all(|t| t.is_finite())
    }
}
