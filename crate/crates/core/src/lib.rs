//! Adversarial examples against speech enhancement models.
//!
//! The crate bundles everything needed to attack a differentiable enhancer
//! `g` end to end at desk scale:
//!
//! - [`audio`]: waveforms, WAV I/O, seeded noise and SNR mixing.
//! - [`signal`]: STFT/ISTFT with a sqrt-Hann window and exact reconstruction.
//! - [`grad`]: a small reverse-mode autodiff engine and Adam.
//! - [`codec`]: a tone-word speech surrogate and its exact recognizer.
//! - [`enhancers`]: MaskNet (spectral mask) and WaveAE (waveform) models.
//! - [`attacks`]: MSE-FGSM, MSE-PGD and the optimization-based attack.
//! - [`metrics`]: WER, residual perturbation rate (RPR) and degree of
//!   enhancement (DE).
//! - [`harness`]: SNR sweeps, target attacks, transfer matrices and reports.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the common instantiations.

pub mod attacks;
pub mod audio;
pub mod codec;
pub mod enhancers;
pub mod error;
pub mod grad;
pub mod harness;
pub mod metrics;
pub mod scalar;
pub mod seeds;
pub mod signal;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Waveform64 = audio::Waveform<f64>;
pub type Waveform32 = audio::Waveform<f32>;
pub type Tensor64 = grad::Tensor<f64>;
pub type Tensor32 = grad::Tensor<f32>;
pub type Graph64 = grad::Graph<f64>;
pub type Graph32 = grad::Graph<f32>;
pub type Spectrogram64 = signal::Spectrogram<f64>;
pub type Spectrogram32 = signal::Spectrogram<f32>;
pub type EnhancerModel64 = enhancers::EnhancerModel<f64>;
pub type EnhancerModel32 = enhancers::EnhancerModel<f32>;
