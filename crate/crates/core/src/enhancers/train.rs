use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{make_noise, mix_at_snr, MixSpec, Waveform};
use crate::codec::{encode, random_sentence, CodecConfig};
use crate::error::{Error, Result};
use crate::grad::{AdamConfig, AdamState, Bindings, Graph, GraphBuilder, NodeId, Tensor};
use crate::scalar::Scalar;
use crate::seeds::derive_seed;

pub use crate::audio::NoiseKind;

use super::{EnhancerModel, ParamLeaves};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair<T> {
    pub noisy: Waveform<T>,
    pub clean: Waveform<T>,
}

/// Synthetic (noisy, clean) corpus description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub num_sentences: usize,
    pub sentence_len: usize,
    pub snr_min: f64,
    pub snr_max: f64,
    pub noise: NoiseKind,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            num_sentences: 64,
            sentence_len: 5,
            snr_min: -8.0,
            snr_max: 8.0,
            noise: NoiseKind::White,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub dataset: DatasetSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 8,
            lr: 0.003,
            seed: 7,
            dataset: DatasetSpec::default(),
        }
    }
}

const STREAM_SENTENCE: u64 = 11;
const STREAM_NOISE: u64 = 12;
const STREAM_MIX: u64 = 13;
const STREAM_SNR: u64 = 14;

/// Tone sentences mixed with seeded noise at SNRs drawn uniformly from `[snr_min, snr_max]`.
pub fn synth_training_set<T: Scalar>(
    spec: &DatasetSpec,
    codec: &CodecConfig,
    seed: u64,
) -> Result<Vec<TrainingPair<T>>> {
    if spec.sentence_len == 0 || spec.snr_min > spec.snr_max {
        return Err(Error::Config("bad training dataset spec".into()));
    }
    (0..spec.num_sentences as u64)
        .map(|i| {
            let words = random_sentence(
                derive_seed(seed, STREAM_SENTENCE, i),
                spec.sentence_len,
                codec.vocab_size,
            );
            let clean: Waveform<T> = encode(&words, codec)?;
            let noise = make_noise(
                spec.noise,
                clean.len() * 2,
                codec.sample_rate,
                derive_seed(seed, STREAM_NOISE, i),
            );
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SNR, i));
            let snr_db = if spec.snr_max > spec.snr_min {
                rng.random_range(spec.snr_min..=spec.snr_max)
            } else {
                spec.snr_min
            };
            let noisy = mix_at_snr(
                &clean,
                &noise,
                MixSpec {
                    snr_db,
                    seed: derive_seed(seed, STREAM_MIX, i),
                },
            )?;
            Ok(TrainingPair { noisy, clean })
        })
        .collect()
}

struct LossGraph<T> {
    graph: Graph<T>,
    input: NodeId,
    target: NodeId,
    params: ParamLeaves,
}

fn loss_graph<T: Scalar>(model: &EnhancerModel<T>, len: usize) -> Result<LossGraph<T>> {
    let mut b = GraphBuilder::new();
    let input = b.input("x", &[len])?;
    let target = b.input("clean", &[len])?;
    let (y, params) = model.splice(&mut b, input)?;
    let loss = b.mse(y, target)?;
    Ok(LossGraph {
        graph: b.finish(loss)?,
        input,
        target,
        params,
    })
}

fn mean_loss<T: Scalar>(
    model: &EnhancerModel<T>,
    data: &[(Tensor<T>, Tensor<T>)],
    graphs: &HashMap<usize, LossGraph<T>>,
) -> Result<f64> {
    let mut total = 0.0;
    for (x, clean) in data {
        let lg = &graphs[&x.len()];
        let mut b = Bindings::new();
        b.bind(lg.input, x).bind(lg.target, clean);
        lg.params.bind(model, &mut b);
        total += lg.graph.forward(&b)?.item().as_f64();
    }
    Ok(total / data.len() as f64)
}

/// Supervised MSE training with Adam; deterministic for a given seed.
pub fn train<T: Scalar>(
    model: &EnhancerModel<T>,
    dataset: &[TrainingPair<T>],
    cfg: &TrainConfig,
) -> Result<EnhancerModel<T>> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let data: Vec<(Tensor<T>, Tensor<T>)> = dataset
        .iter()
        .map(|p| {
            if p.noisy.len() != p.clean.len() {
                return Err(Error::Shape("noisy/clean length mismatch".into()));
            }
            Ok((
                Tensor::vector(p.noisy.samples.clone()),
                Tensor::vector(p.clean.samples.clone()),
            ))
        })
        .collect::<Result<_>>()?;
    let mut graphs = HashMap::new();
    for (x, _) in &data {
        if !graphs.contains_key(&x.len()) {
            graphs.insert(x.len(), loss_graph(model, x.len())?);
        }
    }

    let mut model = model.clone();
    let initial_loss = mean_loss(&model, &data, &graphs)?;
    if !initial_loss.is_finite() {
        return Err(Error::Training("initial loss is not finite".into()));
    }
    let names: Vec<String> = model.params.keys().cloned().collect();
    let adam_cfg = AdamConfig::with_lr(cfg.lr);
    let mut states: Vec<AdamState<T>> = names
        .iter()
        .map(|n| AdamState::new(model.params[n].len(), adam_cfg))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Vec<Vec<T>> = names
                .iter()
                .map(|n| vec![T::zero(); model.params[n].len()])
                .collect();
            for &i in batch {
                let (x, clean) = &data[i];
                let lg = &graphs[&x.len()];
                let mut b = Bindings::new();
                b.bind(lg.input, x).bind(lg.target, clean);
                lg.params.bind(&model, &mut b);
                let wrt: Vec<NodeId> = names
                    .iter()
                    .map(|n| lg.params.leaves.iter().find(|(m, _)| m == n).expect("param leaf").1)
                    .collect();
                let (loss, grads) = lg.graph.value_and_gradients(&b, &wrt)?;
                if !loss.is_finite() {
                    return Err(Error::Training(format!("non-finite loss in epoch {epoch}")));
                }
                for (a, g) in acc.iter_mut().zip(grads) {
                    a.iter_mut().zip(g.data()).for_each(|(a, &g)| *a = *a + g);
                }
            }
            let scale = T::one() / T::lit(batch.len() as f64);
            for ((name, state), g) in names.iter().zip(states.iter_mut()).zip(acc) {
                let g: Vec<T> = g.into_iter().map(|v| v * scale).collect();
                let p = model.params.get_mut(name).expect("param present");
                state
                    .step(p.data_mut(), &g)
                    .map_err(|e| Error::Training(format!("epoch {epoch}: {e}")))?;
            }
        }
    }

    let final_loss = mean_loss(&model, &data, &graphs)?;
    if !final_loss.is_finite() || !model.is_finite() {
        return Err(Error::Training("parameters diverged".into()));
    }
    model.train_meta = super::TrainMeta {
        seed: cfg.seed,
        epochs: cfg.epochs as u64,
        initial_loss,
        final_loss,
    };
    Ok(model)
}
