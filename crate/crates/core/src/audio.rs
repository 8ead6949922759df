//! Float waveforms, WAV file I/O and SNR-controlled mixing.
//!
//! Audio lives in memory as floats in full-scale units (±1.0). PCM16 only
//! appears at the file boundary.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono audio buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Scalar> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![T::zero(); len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> T {
        rms(&self.samples)
    }

    pub fn peak(&self) -> T {
        self.samples
            .iter()
            .fold(T::zero(), |m, &s| if s.abs() > m { s.abs() } else { m })
    }

    pub fn energy(&self) -> T {
        self.samples.iter().map(|&s| s * s).sum()
    }

    pub fn scaled(&self, gain: T) -> Self {
        Self::new(
            self.samples.iter().map(|&s| s * gain).collect(),
            self.sample_rate,
        )
    }

    /// Clip every sample to `[-1, 1]`.
    pub fn clipped(&self) -> Self {
        Self::new(
            self.samples
                .iter()
                .map(|&s| s.max(-T::one()).min(T::one()))
                .collect(),
            self.sample_rate,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.is_finite())
    }

    /// Errors unless the buffer is non-empty and finite.
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::EmptyInput("waveform has no samples".into()));
        }
        if self.sample_rate == 0 {
            return Err(Error::Format("sample rate must be positive".into()));
        }
        if !self.is_finite() {
            return Err(Error::Numeric("waveform contains non-finite samples".into()));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Waveform<U> {
        Waveform::new(
            self.samples.iter().map(|&s| U::lit(s.as_f64())).collect(),
            self.sample_rate,
        )
    }
}

pub fn rms<T: Scalar>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    let e: T = x.iter().map(|&s| s * s).sum();
    (e / T::lit(x.len() as f64)).sqrt()
}

/// SNR in dB of `signal` against `noise`, full-buffer RMS.
pub fn snr_db<T: Scalar>(signal: &[T], noise: &[T]) -> f64 {
    20.0 * (rms(signal).as_f64() / rms(noise).as_f64()).log10()
}

/// Mixing request: target SNR and the seed for the noise crop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub snr_db: f64,
    pub seed: u64,
}

/// Full record of one mixing operation.
#[derive(Debug, Clone)]
pub struct Mixture<T> {
    pub mixed: Waveform<T>,
    /// `g · noise_crop`, before any renormalization.
    pub scaled_noise: Vec<T>,
    pub noise_gain: T,
    /// Factor applied to `clean + scaled_noise` to avoid clipping (1 when none).
    pub renorm: T,
    pub noise_offset: usize,
}

/// Peak level mixtures are renormalized to when they would clip.
pub const MIX_PEAK: f64 = 0.95;

pub fn mix_at_snr<T: Scalar>(
    clean: &Waveform<T>,
    noise: &Waveform<T>,
    spec: MixSpec,
) -> Result<Waveform<T>> {
    mix_at_snr_detailed(clean, noise, spec).map(|m| m.mixed)
}

/// Mixes `clean` with a crop of `noise` scaled so that the pre-normalization
/// SNR equals `spec.snr_db`. Noise shorter than the clean signal is tiled.
pub fn mix_at_snr_detailed<T: Scalar>(
    clean: &Waveform<T>,
    noise: &Waveform<T>,
    spec: MixSpec,
) -> Result<Mixture<T>> {
    clean.validate()?;
    noise.validate()?;
    if clean.sample_rate != noise.sample_rate {
        return Err(Error::Format(format!(
            "sample rate mismatch: clean {} Hz, noise {} Hz",
            clean.sample_rate, noise.sample_rate
        )));
    }
    if !spec.snr_db.is_finite() {
        return Err(Error::Config("snr_db must be finite".into()));
    }
    let n = clean.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (crop, offset) = if noise.len() >= n {
        let offset = rng.random_range(0..=noise.len() - n);
        (noise.samples[offset..offset + n].to_vec(), offset)
    } else {
        let offset = rng.random_range(0..noise.len());
        let crop = (0..n)
            .map(|i| noise.samples[(offset + i) % noise.len()])
            .collect();
        (crop, offset)
    };
    let clean_rms = clean.rms();
    let noise_rms = rms(&crop);
    if clean_rms == T::zero() {
        return Err(Error::Degenerate("clean signal is silent".into()));
    }
    if noise_rms == T::zero() {
        return Err(Error::Degenerate("noise crop is silent".into()));
    }
    let gain = clean_rms / noise_rms * T::lit(10f64.powf(-spec.snr_db / 20.0));
    let scaled_noise: Vec<T> = crop.iter().map(|&v| v * gain).collect();
    let raw = Waveform::new(
        clean
            .samples
            .iter()
            .zip(&scaled_noise)
            .map(|(&c, &v)| c + v)
            .collect(),
        clean.sample_rate,
    );
    let peak = raw.peak();
    let (mixed, renorm) = if peak > T::one() {
        let target = T::lit(MIX_PEAK);
        (raw.scaled(target / peak), target / peak)
    } else {
        (raw, T::one())
    };
    Ok(Mixture {
        mixed,
        scaled_noise,
        noise_gain: gain,
        renorm,
        noise_offset: offset,
    })
}

pub fn peak_normalize<T: Scalar>(w: &Waveform<T>, peak: T) -> Result<Waveform<T>> {
    if !(peak > T::zero() && peak <= T::one()) {
        return Err(Error::Config(format!("peak must be in (0, 1], got {peak}")));
    }
    let current = w.peak();
    if current == T::zero() {
        return Err(Error::Degenerate("cannot normalize an all-zero waveform".into()));
    }
    Ok(w.scaled(peak / current))
}

/// Background noise families used as acoustic "scenes".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    /// White noise restricted to 500–2500 Hz.
    Band,
}

pub const BAND_LOW_HZ: f64 = 500.0;
pub const BAND_HIGH_HZ: f64 = 2500.0;

/// Seeded Gaussian noise with unit RMS (before any band limiting rescale).
pub fn make_noise<T: Scalar>(kind: NoiseKind, len: usize, sample_rate: u32, seed: u64) -> Waveform<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    if kind == NoiseKind::Band && len > 0 {
        let mut planner = FftPlanner::<f64>::new();
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        planner.plan_fft_forward(len).process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            let bin = k.min(len - k) as f64;
            let hz = bin * sample_rate as f64 / len as f64;
            if !(BAND_LOW_HZ..=BAND_HIGH_HZ).contains(&hz) {
                *c = Complex::new(0.0, 0.0);
            }
        }
        planner.plan_fft_inverse(len).process(&mut buf);
        x = buf.iter().map(|c| c.re / len as f64).collect();
        let r = rms(&x);
        if r > 0.0 {
            x.iter_mut().for_each(|v| *v /= r);
        }
    }
    Waveform::new(x.into_iter().map(T::lit).collect(), sample_rate)
}

// ---------------------------------------------------------------------------
// WAV

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Quantize one full-scale sample to a PCM16 code (clip, round half away from zero).
pub fn quantize_pcm16(s: f64) -> i16 {
    let clipped = s.clamp(-1.0, 1.0);
    (clipped * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn read_wav<T: Scalar>(path: impl AsRef<Path>) -> Result<Waveform<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wav(&bytes)
}

pub fn parse_wav<T: Scalar>(bytes: &[u8]) -> Result<Waveform<T>> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("missing RIFF/WAVE header".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Format("chunk extends past end of file".into()))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::Format("fmt chunk too short".into()));
                }
                let mut tag = u16::from_le_bytes([body[0], body[1]]);
                let channels = u16::from_le_bytes([body[2], body[3]]);
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes([body[14], body[15]]);
                if tag == FORMAT_EXTENSIBLE {
                    if body.len() < 26 {
                        return Err(Error::Format("extensible fmt chunk too short".into()));
                    }
                    tag = u16::from_le_bytes([body[24], body[25]]);
                }
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }
    let (tag, channels, rate, bits) =
        fmt.ok_or_else(|| Error::Format("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("no data chunk".into()))?;
    if channels != 1 {
        return Err(Error::Unsupported(format!("{channels} channels (mono only)")));
    }
    if rate == 0 {
        return Err(Error::Format("sample rate is zero".into()));
    }
    let samples: Vec<T> = match (tag, bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|c| T::lit(i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0))
            .collect(),
        (FORMAT_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect(),
        _ => {
            return Err(Error::Unsupported(format!(
                "codec tag {tag} with {bits} bits per sample"
            )))
        }
    };
    Ok(Waveform::new(samples, rate))
}

pub fn encode_wav<T: Scalar>(w: &Waveform<T>) -> Vec<u8> {
    let data_len = w.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &w.samples {
        out.extend_from_slice(&quantize_pcm16(s.as_f64()).to_le_bytes());
    }
    out
}

/// Writes a mono PCM16 file.
pub fn write_wav<T: Scalar>(path: impl AsRef<Path>, w: &Waveform<T>) -> Result<()> {
    let path = path.as_ref();
    if w.sample_rate == 0 {
        return Err(Error::Format("sample rate must be positive".into()));
    }
    if !w.is_finite() {
        return Err(Error::Numeric("refusing to write non-finite samples".into()));
    }
    fs::write(path, encode_wav(w)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn float_wav(samples: &[f32], channels: u16, rate: u32) -> Vec<u8> {
        let data_len = samples.len() * 4;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&FORMAT_FLOAT.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * 4 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(4 * channels).to_le_bytes());
        out.extend_from_slice(&32u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data_len as u32).to_le_bytes());
        for s in samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    #[test]
    fn pcm16_scaling() {
        let w = Waveform::new(vec![0.5f64, 0.0, -0.25], 16_000);
        let bytes = encode_wav(&w);
        assert_eq!(i16::from_le_bytes([bytes[44], bytes[45]]), 16384);
        let back: Waveform<f64> = parse_wav(&bytes).unwrap();
        assert_eq!(back.samples, vec![0.5, 0.0, -0.25]);
        assert_eq!(back.sample_rate, 16_000);
    }

    #[test]
    fn quantization_clips_and_rounds() {
        assert_eq!(quantize_pcm16(1.5), 32767);
        assert_eq!(quantize_pcm16(1.0), 32767);
        assert_eq!(quantize_pcm16(-1.0), -32768);
        assert_eq!(quantize_pcm16(-3.0), -32768);
        assert_eq!(quantize_pcm16(0.0), 0);
        // half a code rounds away from zero
        assert_eq!(quantize_pcm16(0.5 / 32768.0), 1);
        assert_eq!(quantize_pcm16(-0.5 / 32768.0), -1);
    }

    #[test]
    fn zero_buffer_writes_zero_codes() {
        let w = Waveform::<f64>::zeros(10, 8000);
        let bytes = encode_wav(&w);
        assert!(bytes[44..].iter().all(|&b| b == 0));
    }

    #[test]
    fn reads_float32() {
        let bytes = float_wav(&[0.25, -0.75], 1, 22_050);
        let w: Waveform<f64> = parse_wav(&bytes).unwrap();
        assert_eq!(w.samples, vec![0.25, -0.75]);
        assert_eq!(w.sample_rate, 22_050);
    }

    #[test]
    fn rejects_stereo_and_garbage() {
        let bytes = float_wav(&[0.25, -0.75], 2, 16_000);
        assert!(matches!(
            parse_wav::<f64>(&bytes),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(parse_wav::<f64>(b"RIFX0000WAVE"), Err(Error::Format(_))));
        let mut truncated = encode_wav(&Waveform::new(vec![0.1f64; 32], 16_000));
        truncated.truncate(50);
        assert!(matches!(parse_wav::<f64>(&truncated), Err(Error::Format(_))));
    }

    #[test]
    fn gains_at_equal_rms() {
        let clean = Waveform::new(vec![0.1f64, -0.1, 0.1, -0.1], 16_000);
        let noise = Waveform::new(vec![-0.1f64, 0.1, 0.1, -0.1], 16_000);
        for (snr, want) in [(0.0, 1.0), (20.0, 0.1), (-8.0, 2.511_886_431_509_58)] {
            let m = mix_at_snr_detailed(&clean, &noise, MixSpec { snr_db: snr, seed: 1 }).unwrap();
            assert!((m.noise_gain - want).abs() < 1e-12, "snr {snr}: {}", m.noise_gain);
        }
    }

    #[test]
    fn silent_inputs_are_degenerate() {
        let clean = Waveform::new(vec![0.0f64; 8], 16_000);
        let noise = Waveform::new(vec![0.1f64; 8], 16_000);
        let spec = MixSpec { snr_db: 0.0, seed: 0 };
        assert!(matches!(mix_at_snr(&clean, &noise, spec), Err(Error::Degenerate(_))));
        assert!(matches!(mix_at_snr(&noise, &clean, spec), Err(Error::Degenerate(_))));
    }

    #[test]
    fn clipping_mix_is_renormalized() {
        let clean = Waveform::new(vec![0.9f64, -0.9, 0.9, -0.9], 16_000);
        let noise = Waveform::new(vec![0.9f64, -0.9, 0.9, -0.9], 16_000);
        let m = mix_at_snr_detailed(&clean, &noise, MixSpec { snr_db: 0.0, seed: 0 }).unwrap();
        assert!((m.mixed.peak() - MIX_PEAK).abs() < 1e-12);
    }

    #[test]
    fn short_noise_is_tiled() {
        let clean = Waveform::new((0..50).map(|i| (i as f64 * 0.3).sin() * 0.2).collect(), 16_000);
        let noise = Waveform::new(vec![0.1f64, -0.2, 0.3], 16_000);
        let m = mix_at_snr_detailed(&clean, &noise, MixSpec { snr_db: 3.0, seed: 9 }).unwrap();
        assert_eq!(m.mixed.len(), 50);
        assert!((snr_db(&clean.samples, &m.scaled_noise) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn band_noise_has_no_out_of_band_energy() {
        let n = 4096;
        let w: Waveform<f64> = make_noise(NoiseKind::Band, n, 16_000, 5);
        assert!((w.rms() - 1.0).abs() < 1e-9);
        let mut planner = FftPlanner::<f64>::new();
        let mut buf: Vec<Complex<f64>> = w.samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
        planner.plan_fft_forward(n).process(&mut buf);
        let out_of_band: f64 = (0..n / 2)
            .filter(|&k| (k as f64 * 16_000.0 / n as f64) < 400.0)
            .map(|k| buf[k].norm_sqr())
            .sum();
        assert!(out_of_band < 1e-12 * n as f64);
        assert_eq!(w, make_noise(NoiseKind::Band, n, 16_000, 5));
    }

    #[test]
    fn peak_normalize_cases() {
        let w = Waveform::new(vec![0.5f64, -0.25], 16_000);
        assert_eq!(peak_normalize(&w, 1.0).unwrap().samples, vec![1.0, -0.5]);
        let at_peak = Waveform::new(vec![1.0f64, -0.5], 16_000);
        assert_eq!(peak_normalize(&at_peak, 1.0).unwrap(), at_peak);
        assert!(matches!(
            peak_normalize(&Waveform::<f64>::zeros(4, 16_000), 1.0),
            Err(Error::Degenerate(_))
        ));
        assert!(peak_normalize(&w, 0.0).is_err());
    }
}
