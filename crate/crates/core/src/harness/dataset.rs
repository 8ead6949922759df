use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::{make_noise, mix_at_snr_detailed, snr_db, write_wav, MixSpec, Waveform};
use crate::codec::{encode, random_sentence, Transcript};
use crate::error::{Error, Result};
use crate::seeds::derive_seed;

use super::ExperimentConfig;

const STREAM_SENTENCE: u64 = 101;
const STREAM_NOISE: u64 = 102;
const STREAM_MIX: u64 = 103;

/// One (sentence, SNR) evaluation item.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub sentence: usize,
    pub snr_db: f64,
    pub transcript: Transcript,
    pub clean: Waveform<f64>,
    pub noise: Waveform<f64>,
    pub mixed: Waveform<f64>,
    /// SNR measured between the clean signal and the scaled noise crop.
    pub measured_snr_db: f64,
    /// Gain applied after mixing to avoid clipping (1 when none).
    pub renorm: f64,
}

pub fn sentence_transcript(cfg: &ExperimentConfig, sentence: usize) -> Transcript {
    random_sentence(
        derive_seed(cfg.seed, STREAM_SENTENCE, sentence as u64),
        cfg.sentence_len,
        cfg.codec.vocab_size,
    )
}

/// Sentence-major, SNR-minor list of held-out examples.
pub fn build_examples(cfg: &ExperimentConfig) -> Result<Vec<Example>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.num_sentences * cfg.snr_grid.len());
    for s in 0..cfg.num_sentences {
        let transcript = sentence_transcript(cfg, s);
        let clean: Waveform<f64> = encode(&transcript, &cfg.codec)?;
        let noise = make_noise(
            cfg.noise,
            clean.len() * 2,
            cfg.codec.sample_rate,
            derive_seed(cfg.seed, STREAM_NOISE, s as u64),
        );
        for (k, &snr) in cfg.snr_grid.iter().enumerate() {
            let mix = mix_at_snr_detailed(
                &clean,
                &noise,
                MixSpec {
                    snr_db: snr,
                    seed: derive_seed(cfg.seed, STREAM_MIX, (s * cfg.snr_grid.len() + k) as u64),
                },
            )?;
            out.push(Example {
                id: format!("s{s:04}_snr{snr:+}"),
                sentence: s,
                snr_db: snr,
                transcript: transcript.clone(),
                measured_snr_db: snr_db(&clean.samples, &mix.scaled_noise),
                renorm: mix.renorm,
                clean: clean.clone(),
                noise: noise.clone(),
                mixed: mix.mixed,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub sentence: usize,
    pub snr_db: f64,
    pub measured_snr_db: f64,
    pub renorm: f64,
    pub transcript: Transcript,
    pub clean: String,
    pub noise: String,
    pub mixed: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub rows: Vec<ManifestRow>,
}

/// Writes `clean/`, `noise/`, `mixed/` WAVs, `transcripts.txt` and
/// `manifest.json` under `dir`. Paths in the manifest are relative to `dir`.
pub fn synth_dataset(cfg: &ExperimentConfig, dir: &Path) -> Result<Manifest> {
    let examples = build_examples(cfg)?;
    for sub in ["clean", "noise", "mixed"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut rows = Vec::with_capacity(examples.len());
    let mut transcripts = String::new();
    for ex in &examples {
        let clean = format!("clean/s{:04}.wav", ex.sentence);
        let noise = format!("noise/s{:04}.wav", ex.sentence);
        if ex.snr_db == cfg.snr_grid[0] {
            write_wav(dir.join(&clean), &ex.clean)?;
            // Unit-RMS noise exceeds full scale; store it at a tenth.
            write_wav(dir.join(&noise), &ex.noise.scaled(0.1))?;
            transcripts.push_str(&format!("s{:04}\t{}\n", ex.sentence, ex.transcript));
        }
        let mixed = format!("mixed/{}.wav", ex.id);
        write_wav(dir.join(&mixed), &ex.mixed)?;
        rows.push(ManifestRow {
            id: ex.id.clone(),
            sentence: ex.sentence,
            snr_db: ex.snr_db,
            measured_snr_db: ex.measured_snr_db,
            renorm: ex.renorm,
            transcript: ex.transcript.clone(),
            clean,
            noise,
            mixed,
        });
    }
    let p = dir.join("transcripts.txt");
    fs::write(&p, transcripts).map_err(|e| Error::io(&p, e))?;
    let manifest = Manifest {
        config: cfg.clone(),
        rows,
    };
    let p = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
    Ok(manifest)
}
