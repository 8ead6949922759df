//! STFT analysis and synthesis.
//!
//! The DFT is an explicit basis-matrix product so that the graph engine can
//! reuse the exact same kernels (`DftBasis`, `frame_signal`, `overlap_add`)
//! and produce bit-identical forward values.
//!
//! Framing: the signal is padded with `hop` zeros at the front and with zeros
//! at the tail up to a whole number of hops plus one extra hop. Every original
//! sample is then covered by exactly two frames, where the squared window sums
//! to one.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

/// Smoothing term inside the magnitude square root.
pub const EPS_MAG: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// `sin(πn/L)`, the square root of the periodic Hann window. Used for both
    /// analysis and synthesis; its square overlap-adds to one at 50% overlap.
    SqrtHann,
}

impl Window {
    pub fn coefficients<T: Scalar>(self, len: usize) -> Vec<T> {
        match self {
            Window::SqrtHann => (0..len)
                .map(|n| T::lit((PI * n as f64 / len as f64).sin()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_len: 256,
            hop: 128,
            window: Window::SqrtHann,
        }
    }
}

impl StftConfig {
    pub fn new(frame_len: usize) -> Result<Self> {
        let cfg = Self {
            frame_len,
            hop: frame_len / 2,
            window: Window::SqrtHann,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.frame_len.is_power_of_two() || self.frame_len < 64 {
            return Err(Error::Config(format!(
                "frame_len must be a power of two ≥ 64, got {}",
                self.frame_len
            )));
        }
        if self.hop * 2 != self.frame_len {
            return Err(Error::Config(format!(
                "hop must be frame_len/2 ({}), got {}",
                self.frame_len / 2,
                self.hop
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn pad_front(&self) -> usize {
        self.hop
    }

    pub fn num_frames(&self, len: usize) -> usize {
        let body = len.div_ceil(self.hop) * self.hop;
        (self.hop + body + self.hop) / self.hop - 1
    }
}

/// Analysis and synthesis matrices for one frame length.
///
/// `analysis_re/im` are `L × K` with the window folded in; `synthesis_re/im`
/// are `K × L` and invert the one-sided spectrum of a real frame.
#[derive(Debug, Clone)]
pub struct DftBasis<T> {
    pub cfg: StftConfig,
    pub window: Vec<T>,
    pub analysis_re: Vec<T>,
    pub analysis_im: Vec<T>,
    pub synthesis_re: Vec<T>,
    pub synthesis_im: Vec<T>,
}

impl<T: Scalar> DftBasis<T> {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let l = cfg.frame_len;
        let k = cfg.bins();
        let window: Vec<T> = cfg.window.coefficients(l);
        let mut analysis_re = vec![T::zero(); l * k];
        let mut analysis_im = vec![T::zero(); l * k];
        let mut synthesis_re = vec![T::zero(); k * l];
        let mut synthesis_im = vec![T::zero(); k * l];
        for n in 0..l {
            let w = window[n].as_f64();
            for b in 0..k {
                // reduce the phase index exactly before the trig call
                let angle = 2.0 * PI * ((b * n) % l) as f64 / l as f64;
                let (s, c) = angle.sin_cos();
                analysis_re[n * k + b] = T::lit(w * c);
                analysis_im[n * k + b] = T::lit(-w * s);
                let weight = if b == 0 || b == l / 2 { 1.0 } else { 2.0 } / l as f64;
                synthesis_re[b * l + n] = T::lit(weight * c);
                synthesis_im[b * l + n] = T::lit(-weight * s);
            }
        }
        Ok(Self {
            cfg,
            window,
            analysis_re,
            analysis_im,
            synthesis_re,
            synthesis_im,
        })
    }

    /// `(re, im)`, each `frames × bins`, of already-framed data.
    pub fn analyze(&self, frames: &[T], num_frames: usize) -> (Vec<T>, Vec<T>) {
        let (l, k) = (self.cfg.frame_len, self.cfg.bins());
        (
            scalar::matmul(frames, &self.analysis_re, num_frames, l, k),
            scalar::matmul(frames, &self.analysis_im, num_frames, l, k),
        )
    }

    /// Windowed time frames (`frames × L`) reconstructed from a one-sided spectrum.
    pub fn synthesize(&self, re: &[T], im: &[T], num_frames: usize) -> Vec<T> {
        let (l, k) = (self.cfg.frame_len, self.cfg.bins());
        let mut out = scalar::matmul(re, &self.synthesis_re, num_frames, k, l);
        T::gemm(
            num_frames,
            k,
            l,
            im,
            (k as isize, 1),
            &self.synthesis_im,
            (l as isize, 1),
            T::one(),
            &mut out,
            (l as isize, 1),
        );
        out
    }
}

/// Splits `x` into overlapping frames (`num_frames × frame_len`, row-major).
pub fn frame_signal<T: Scalar>(x: &[T], cfg: &StftConfig) -> Vec<T> {
    let (l, hop, pad) = (cfg.frame_len, cfg.hop, cfg.pad_front());
    let f = cfg.num_frames(x.len());
    let mut out = vec![T::zero(); f * l];
    for t in 0..f {
        for j in 0..l {
            let pos = (t * hop + j) as isize - pad as isize;
            if pos >= 0 && (pos as usize) < x.len() {
                out[t * l + j] = x[pos as usize];
            }
        }
    }
    out
}

/// Adjoint of [`frame_signal`]: sums frame entries back onto the samples they came from.
pub fn frame_signal_adjoint<T: Scalar>(frames: &[T], cfg: &StftConfig, len: usize) -> Vec<T> {
    let (l, hop, pad) = (cfg.frame_len, cfg.hop, cfg.pad_front());
    let f = cfg.num_frames(len);
    let mut out = vec![T::zero(); len];
    for t in 0..f {
        for j in 0..l {
            let pos = (t * hop + j) as isize - pad as isize;
            if pos >= 0 && (pos as usize) < len {
                out[pos as usize] = out[pos as usize] + frames[t * l + j];
            }
        }
    }
    out
}

/// Per-sample reciprocal of the summed squared window over all frames.
pub fn overlap_norm<T: Scalar>(window: &[T], cfg: &StftConfig, len: usize) -> Vec<T> {
    let (l, hop, pad) = (cfg.frame_len, cfg.hop, cfg.pad_front());
    let f = cfg.num_frames(len);
    let mut acc = vec![T::zero(); len];
    for t in 0..f {
        for j in 0..l {
            let pos = (t * hop + j) as isize - pad as isize;
            if pos >= 0 && (pos as usize) < len {
                acc[pos as usize] = acc[pos as usize] + window[j] * window[j];
            }
        }
    }
    acc.into_iter().map(|a| T::one() / a).collect()
}

/// Weighted overlap-add of windowed frames, normalized and cut to `len` samples.
pub fn overlap_add<T: Scalar>(
    frames: &[T],
    window: &[T],
    inv_norm: &[T],
    cfg: &StftConfig,
    len: usize,
) -> Vec<T> {
    let (l, hop, pad) = (cfg.frame_len, cfg.hop, cfg.pad_front());
    let f = cfg.num_frames(len);
    let mut out = vec![T::zero(); len];
    for t in 0..f {
        for j in 0..l {
            let pos = (t * hop + j) as isize - pad as isize;
            if pos >= 0 && (pos as usize) < len {
                out[pos as usize] = out[pos as usize] + window[j] * frames[t * l + j];
            }
        }
    }
    for (o, &s) in out.iter_mut().zip(inv_norm) {
        *o = *o * s;
    }
    out
}

/// Adjoint of [`overlap_add`] with respect to the frames.
pub fn overlap_add_adjoint<T: Scalar>(
    grad: &[T],
    window: &[T],
    inv_norm: &[T],
    cfg: &StftConfig,
) -> Vec<T> {
    let len = grad.len();
    let (l, hop, pad) = (cfg.frame_len, cfg.hop, cfg.pad_front());
    let f = cfg.num_frames(len);
    let mut out = vec![T::zero(); f * l];
    for t in 0..f {
        for j in 0..l {
            let pos = (t * hop + j) as isize - pad as isize;
            if pos >= 0 && (pos as usize) < len {
                let p = pos as usize;
                out[t * l + j] = window[j] * inv_norm[p] * grad[p];
            }
        }
    }
    out
}

pub fn smooth_magnitude<T: Scalar>(re: T, im: T) -> T {
    (re * re + im * im + T::lit(EPS_MAG)).sqrt()
}

/// One-sided complex STFT stored as separate real and imaginary planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    pub real_part: Vec<T>,
    pub imag_part: Vec<T>,
    pub num_frames: usize,
    pub config: StftConfig,
    pub original_len: usize,
    pub sample_rate: u32,
}

impl<T: Scalar> Spectrogram<T> {
    pub fn bins(&self) -> usize {
        self.config.bins()
    }

    pub fn get(&self, frame: usize, bin: usize) -> (T, T) {
        let i = frame * self.bins() + bin;
        (self.real_part[i], self.imag_part[i])
    }

    pub fn scaled(&self, a: T) -> Self {
        let mut out = self.clone();
        out.real_part.iter_mut().for_each(|v| *v = *v * a);
        out.imag_part.iter_mut().for_each(|v| *v = *v * a);
        out
    }

    fn check(&self) -> Result<()> {
        self.config.validate()?;
        let want_frames = self.config.num_frames(self.original_len);
        let cells = self.num_frames * self.bins();
        if self.num_frames != want_frames
            || self.real_part.len() != cells
            || self.imag_part.len() != cells
        {
            return Err(Error::Shape(format!(
                "spectrogram planes {}/{} and {} frames inconsistent with {} samples ({} frames × {} bins)",
                self.real_part.len(),
                self.imag_part.len(),
                self.num_frames,
                self.original_len,
                want_frames,
                self.bins()
            )));
        }
        Ok(())
    }
}

pub fn stft<T: Scalar>(w: &Waveform<T>, cfg: &StftConfig) -> Result<Spectrogram<T>> {
    let basis = DftBasis::new(*cfg)?;
    stft_with(w, &basis)
}

pub fn stft_with<T: Scalar>(w: &Waveform<T>, basis: &DftBasis<T>) -> Result<Spectrogram<T>> {
    let cfg = basis.cfg;
    if w.len() < cfg.frame_len {
        return Err(Error::Size(format!(
            "waveform of {} samples shorter than one frame ({})",
            w.len(),
            cfg.frame_len
        )));
    }
    let frames = frame_signal(&w.samples, &cfg);
    let f = cfg.num_frames(w.len());
    let (re, im) = basis.analyze(&frames, f);
    Ok(Spectrogram {
        real_part: re,
        imag_part: im,
        num_frames: f,
        config: cfg,
        original_len: w.len(),
        sample_rate: w.sample_rate,
    })
}

pub fn istft<T: Scalar>(s: &Spectrogram<T>) -> Result<Waveform<T>> {
    s.check()?;
    let basis = DftBasis::new(s.config)?;
    istft_with(s, &basis)
}

pub fn istft_with<T: Scalar>(s: &Spectrogram<T>, basis: &DftBasis<T>) -> Result<Waveform<T>> {
    s.check()?;
    let frames = basis.synthesize(&s.real_part, &s.imag_part, s.num_frames);
    let norm = overlap_norm(&basis.window, &s.config, s.original_len);
    let samples = overlap_add(&frames, &basis.window, &norm, &s.config, s.original_len);
    Ok(Waveform::new(samples, s.sample_rate))
}

/// `sqrt(re² + im² + ε)` per cell, `frames × bins`.
pub fn magnitude<T: Scalar>(s: &Spectrogram<T>) -> Vec<T> {
    s.real_part
        .iter()
        .zip(&s.imag_part)
        .map(|(&r, &i)| smooth_magnitude(r, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(samples: Vec<f64>) -> Waveform<f64> {
        Waveform::new(samples, 16_000)
    }

    #[test]
    fn config_validation() {
        assert!(StftConfig::new(256).is_ok());
        assert!(StftConfig::new(32).is_err());
        assert!(StftConfig::new(200).is_err());
        let bad = StftConfig {
            frame_len: 256,
            hop: 64,
            window: Window::SqrtHann,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_in_zero_out() {
        let cfg = StftConfig::default();
        let s = stft(&wave(vec![0.0; 1000]), &cfg).unwrap();
        assert!(s.real_part.iter().chain(&s.imag_part).all(|&v| v == 0.0));
        let y = istft(&s).unwrap();
        assert!(y.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_input_dc_bin() {
        let cfg = StftConfig::default();
        let c = 0.3;
        let s = stft(&wave(vec![c; 2048]), &cfg).unwrap();
        let win_sum: f64 = cfg.window.coefficients::<f64>(cfg.frame_len).iter().sum();
        // frames 1..F-2 lie entirely inside the signal
        for t in 1..s.num_frames - 2 {
            let (re, im) = s.get(t, 0);
            assert!((re - c * win_sum).abs() < 1e-9, "frame {t}: {re}");
            assert!(im.abs() < 1e-12);
        }
    }

    #[test]
    fn bin_centered_sinusoid_peaks_at_its_bin() {
        let cfg = StftConfig::default();
        let bin = 10;
        let x: Vec<f64> = (0..2048)
            .map(|n| (2.0 * PI * bin as f64 * n as f64 / cfg.frame_len as f64).cos())
            .collect();
        let s = stft(&wave(x), &cfg).unwrap();
        let mag = magnitude(&s);
        for t in 1..s.num_frames - 2 {
            let row = &mag[t * cfg.bins()..(t + 1) * cfg.bins()];
            let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(argmax, bin);
        }
    }

    #[test]
    fn magnitude_examples() {
        assert!((smooth_magnitude(3.0f64, 4.0) - 5.0).abs() < 1e-6);
        assert!((smooth_magnitude(0.0f64, 0.0) - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn too_short_is_size_error() {
        let cfg = StftConfig::default();
        assert!(matches!(stft(&wave(vec![0.1; 100]), &cfg), Err(Error::Size(_))));
    }

    #[test]
    fn inconsistent_dims_is_shape_error() {
        let cfg = StftConfig::default();
        let mut s = stft(&wave(vec![0.1; 1000]), &cfg).unwrap();
        s.real_part.pop();
        assert!(matches!(istft(&s), Err(Error::Shape(_))));
    }

    #[test]
    fn istft_is_linear() {
        let cfg = StftConfig::default();
        let x: Vec<f64> = (0..1500).map(|n| (n as f64 * 0.05).sin() * 0.4).collect();
        let s = stft(&wave(x), &cfg).unwrap();
        let y = istft(&s).unwrap();
        let y2 = istft(&s.scaled(-2.5)).unwrap();
        for (a, b) in y.samples.iter().zip(&y2.samples) {
            assert!((b - (-2.5 * a)).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = StftConfig::default();
        let l = cfg.frame_len;
        let x: Vec<f64> = (0..1000).map(|n| ((n * n) as f64 * 0.001).sin()).collect();
        let s = stft(&wave(x.clone()), &cfg).unwrap();
        let frames = frame_signal(&x, &cfg);
        let w: Vec<f64> = cfg.window.coefficients(l);
        for t in 0..s.num_frames {
            let time: f64 = (0..l).map(|j| (w[j] * frames[t * l + j]).powi(2)).sum();
            let freq: f64 = (0..cfg.bins())
                .map(|b| {
                    let (re, im) = s.get(t, b);
                    let c = if b == 0 || b == l / 2 { 1.0 } else { 2.0 };
                    c * (re * re + im * im)
                })
                .sum::<f64>()
                / l as f64;
            assert!((time - freq).abs() <= 1e-9 * time.max(1.0), "frame {t}");
        }
    }

    #[test]
    fn frame_adjoint_matches_dot_product() {
        let cfg = StftConfig::new(64).unwrap();
        let x: Vec<f64> = (0..150).map(|i| (i as f64).cos()).collect();
        let f = cfg.num_frames(x.len());
        let g: Vec<f64> = (0..f * 64).map(|i| (i as f64 * 0.7).sin()).collect();
        let fx = frame_signal(&x, &cfg);
        let lhs: f64 = fx.iter().zip(&g).map(|(a, b)| a * b).sum();
        let adj = frame_signal_adjoint(&g, &cfg, x.len());
        let rhs: f64 = x.iter().zip(&adj).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
