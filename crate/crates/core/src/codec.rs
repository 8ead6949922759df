//! Tone-word codec: a synthetic speech surrogate and its recognizer.
//!
//! Word `i` is a sinusoid at `base_freq + i · freq_step` Hz. Sentences are
//! words separated by short silences. The decoder gates on frame energy,
//! cuts each active run into word-length segments and picks the spectral peak
//! of each segment.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{rms, Waveform, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ordered word indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Transcript {
    pub words: Vec<usize>,
}

impl Transcript {
    pub fn new(words: Vec<usize>) -> Self {
        Self { words }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for w in &self.words {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{w}")?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for Transcript {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|_| Error::Format(format!("bad word index `{tok}`")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Transcript::new)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecConfig {
    pub vocab_size: usize,
    pub sample_rate: u32,
    /// Seconds per word.
    pub word_dur: f64,
    /// Seconds of silence between words.
    pub gap_dur: f64,
    /// Raised-cosine onset/offset ramp length, seconds.
    pub ramp_dur: f64,
    pub base_freq: f64,
    pub freq_step: f64,
    pub amplitude: f64,
    /// RMS below which a gate frame or a segment counts as silence.
    pub energy_floor: f64,
    /// Length of the energy-gate frames, seconds.
    pub gate_frame_dur: f64,
    /// Peaks farther than this from every word frequency decode to nothing.
    pub max_peak_dev_hz: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            vocab_size: 16,
            sample_rate: DEFAULT_SAMPLE_RATE,
            word_dur: 0.1,
            gap_dur: 0.025,
            ramp_dur: 0.005,
            base_freq: 400.0,
            freq_step: 150.0,
            amplitude: 0.5,
            energy_floor: 0.05,
            gate_frame_dur: 0.005,
            max_peak_dev_hz: 75.0,
        }
    }
}

impl CodecConfig {
    pub fn freq(&self, word: usize) -> f64 {
        self.base_freq + self.freq_step * word as f64
    }

    pub fn word_samples(&self) -> usize {
        (self.word_dur * self.sample_rate as f64).round() as usize
    }

    pub fn gap_samples(&self) -> usize {
        (self.gap_dur * self.sample_rate as f64).round() as usize
    }

    /// Length in samples of an encoded sentence of `words` words.
    pub fn sentence_samples(&self, words: usize) -> usize {
        if words == 0 {
            return 0;
        }
        words * self.word_samples() + (words - 1) * self.gap_samples()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.sample_rate == 0 {
            return Err(Error::Config("vocab_size and sample_rate must be positive".into()));
        }
        let top = self.freq(self.vocab_size - 1);
        if top >= self.sample_rate as f64 / 2.0 {
            return Err(Error::Config(format!(
                "highest word frequency {top} Hz is above Nyquist"
            )));
        }
        if self.word_samples() == 0 || self.ramp_dur * 2.0 > self.word_dur {
            return Err(Error::Config("word too short for its ramps".into()));
        }
        Ok(())
    }

    /// Word index whose frequency is closest to `hz`, if within tolerance.
    pub fn word_for_freq(&self, hz: f64) -> Option<usize> {
        let idx = ((hz - self.base_freq) / self.freq_step).round();
        let idx = idx.clamp(0.0, (self.vocab_size - 1) as f64) as usize;
        ((hz - self.freq(idx)).abs() <= self.max_peak_dev_hz).then_some(idx)
    }
}

pub fn encode<T: Scalar>(words: &Transcript, cfg: &CodecConfig) -> Result<Waveform<T>> {
    cfg.validate()?;
    if words.is_empty() {
        return Err(Error::EmptyInput("cannot encode an empty transcript".into()));
    }
    if let Some(&w) = words.words.iter().find(|&&w| w >= cfg.vocab_size) {
        return Err(Error::Config(format!(
            "word {w} outside vocabulary of {}",
            cfg.vocab_size
        )));
    }
    let sr = cfg.sample_rate as f64;
    let word_len = cfg.word_samples();
    let gap = cfg.gap_samples();
    let ramp = (cfg.ramp_dur * sr).round() as usize;
    let mut out = Vec::with_capacity(cfg.sentence_samples(words.len()));
    for (i, &w) in words.words.iter().enumerate() {
        if i > 0 {
            out.extend(std::iter::repeat_n(T::zero(), gap));
        }
        let f = cfg.freq(w);
        for n in 0..word_len {
            let env = ramp_gain(n, word_len, ramp);
            let phase = 2.0 * std::f64::consts::PI * f * n as f64 / sr;
            out.push(T::lit(cfg.amplitude * env * phase.sin()));
        }
    }
    Ok(Waveform::new(out, cfg.sample_rate))
}

fn ramp_gain(n: usize, len: usize, ramp: usize) -> f64 {
    if ramp == 0 {
        return 1.0;
    }
    let edge = n.min(len - 1 - n);
    if edge >= ramp {
        1.0
    } else {
        0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / ramp as f64).cos()
    }
}

/// Sample ranges `[start, end)` of energy-gated activity.
fn active_runs(x: &[f64], cfg: &CodecConfig) -> Vec<(usize, usize)> {
    let frame = ((cfg.gate_frame_dur * cfg.sample_rate as f64).round() as usize).max(1);
    let mut runs = Vec::new();
    let mut open: Option<usize> = None;
    for (i, chunk) in x.chunks(frame).enumerate() {
        let start = i * frame;
        let active = rms(chunk) >= cfg.energy_floor;
        match (active, open) {
            (true, None) => open = Some(start),
            (false, Some(s)) => {
                runs.push((s, start));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        runs.push((s, x.len()));
    }
    runs
}

/// Toy recognizer.
pub fn decode<T: Scalar>(w: &Waveform<T>, cfg: &CodecConfig) -> Transcript {
    let x: Vec<f64> = w.samples.iter().map(|s| s.as_f64()).collect();
    let sr = w.sample_rate as f64;
    let word_len = ((cfg.word_dur * sr).round() as usize).max(1);
    let mut planner = FftPlanner::<f64>::new();
    let mut words = Vec::new();
    for (start, end) in active_runs(&x, cfg) {
        let segments = ((end - start) as f64 / word_len as f64).round() as usize;
        for j in 0..segments {
            let a = start + j * word_len;
            let b = (a + word_len).min(x.len());
            if a >= b {
                break;
            }
            if let Some(word) = classify_segment(&x[a..b], sr, cfg, &mut planner) {
                words.push(word);
            }
        }
    }
    Transcript::new(words)
}

fn classify_segment(
    seg: &[f64],
    sr: f64,
    cfg: &CodecConfig,
    planner: &mut FftPlanner<f64>,
) -> Option<usize> {
    if seg.len() < 2 || rms(seg) < cfg.energy_floor {
        return None;
    }
    let n = seg.len();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = seg
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
            Complex::new(s * hann, 0.0)
        })
        .collect();
    fft.process(&mut buf);
    let peak = (1..=n / 2).max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr()))?;
    cfg.word_for_freq(peak as f64 * sr / n as f64)
}

/// Uniform i.i.d. word draw.
pub fn random_sentence(seed: u64, len: usize, vocab_size: usize) -> Transcript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Transcript::new((0..len).map(|_| rng.random_range(0..vocab_size)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, secs: f64, amp: f64) -> Waveform<f64> {
        let n = (secs * 16_000.0) as usize;
        Waveform::new(
            (0..n)
                .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin())
                .collect(),
            16_000,
        )
    }

    #[test]
    fn single_word_shape() {
        let cfg = CodecConfig::default();
        let w: Waveform<f64> = encode(&Transcript::new(vec![3]), &cfg).unwrap();
        assert_eq!(w.len(), 1600);
        assert!((cfg.freq(3) - 850.0).abs() < 1e-12);
        assert!((w.peak() - 0.5).abs() < 1e-3);
        assert_eq!(w.samples[0], 0.0);
        assert_eq!(decode(&w, &cfg), Transcript::new(vec![3]));
    }

    #[test]
    fn sentence_duration() {
        let cfg = CodecConfig::default();
        for n in 1..6 {
            let t = random_sentence(n as u64, n, 16);
            let w: Waveform<f64> = encode(&t, &cfg).unwrap();
            let want = n as f64 * 0.1 + (n - 1) as f64 * 0.025;
            assert!((w.duration_secs() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_and_out_of_vocab() {
        let cfg = CodecConfig::default();
        assert!(matches!(
            encode::<f64>(&Transcript::default(), &cfg),
            Err(Error::EmptyInput(_))
        ));
        assert!(encode::<f64>(&Transcript::new(vec![16]), &cfg).is_err());
    }

    #[test]
    fn decode_silence_and_pure_tone() {
        let cfg = CodecConfig::default();
        assert!(decode(&Waveform::<f64>::zeros(8000, 16_000), &cfg).is_empty());
        assert_eq!(decode(&tone(1150.0, 0.1, 0.5), &cfg).words, vec![5]);
        // between words 5 and 6 by more than 75 Hz from both: nothing
        assert!(decode(&tone(1150.0 + 75.0 + 10.0, 0.1, 0.5), &cfg).words.len() <= 1);
        assert!(decode(&tone(5000.0, 0.1, 0.5), &cfg).is_empty());
    }

    #[test]
    fn random_sentence_properties() {
        let a = random_sentence(7, 8, 16);
        assert_eq!(a, random_sentence(7, 8, 16));
        assert_eq!(a.len(), 8);
        assert!(a.words.iter().all(|&w| w < 16));
    }

    #[test]
    fn transcript_text_round_trip() {
        let t = Transcript::new(vec![0, 15, 3]);
        assert_eq!(t.to_string(), "0 15 3");
        assert_eq!("0  15\n3 ".parse::<Transcript>().unwrap(), t);
        assert!("1 x".parse::<Transcript>().is_err());
    }
}
