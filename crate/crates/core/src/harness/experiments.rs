use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::attacks::{make_target, run_attack, AttackConfig, Method, TargetSpec, TraceStep};
use crate::audio::{write_wav, Waveform};
use crate::codec::{decode, encode, random_sentence, CodecConfig, Transcript};
use crate::enhancers::{load_model, synth_training_set, train, EnhancerModel};
use crate::error::{Error, Result};
use crate::metrics::{perturbation_stats, rpr, wer, MetricReport, PerturbationStats};
use crate::seeds::derive_seed;

use super::dataset::{build_examples, Example};
use super::report::{Report, Row, TransferCell};
use super::{ExperimentConfig, ModelSpec};

const STREAM_TARGET_SENTENCE: u64 = 104;
const STREAM_TARGET_NOISE: u64 = 105;

/// Builds `spec.arch` from `spec.init_seed` and trains it on a synthetic
/// corpus drawn with `spec.train.seed`.
pub fn train_model(spec: &ModelSpec, codec: &CodecConfig) -> Result<EnhancerModel<f64>> {
    let data = synth_training_set(&spec.train.dataset, codec, spec.train.seed)?;
    let init = EnhancerModel::build(spec.arch.clone(), spec.init_seed)?;
    train(&init, &data, &spec.train)
}

/// Loads `spec.path` when it exists, otherwise trains.
pub fn obtain_model(spec: &ModelSpec, codec: &CodecConfig) -> Result<EnhancerModel<f64>> {
    match &spec.path {
        Some(p) if p.exists() => {
            let m = load_model(p)?;
            if m.arch != spec.arch {
                return Err(Error::Config(format!(
                    "model file {} does not match the configured architecture",
                    p.display()
                )));
            }
            Ok(m)
        }
        _ => train_model(spec, codec),
    }
}

struct Scored {
    metrics: MetricReport,
    noisy: Transcript,
    enh_orig: Transcript,
    enh_adv: Transcript,
}

fn score(
    model: &EnhancerModel<f64>,
    ex: &Example,
    x_star: &Waveform<f64>,
    target: Option<&Transcript>,
    codec: &CodecConfig,
) -> Result<Scored> {
    let y = model.enhance(&ex.mixed)?;
    let y_star = model.enhance(x_star)?;
    let noisy = decode(&ex.mixed, codec);
    let enh_orig = decode(&y, codec);
    let enh_adv = decode(&y_star, codec);
    let wer_noisy = wer(&ex.transcript, &noisy)?;
    let wer_enh_orig = wer(&ex.transcript, &enh_orig)?;
    let wer_enh_adv = wer(&ex.transcript, &enh_adv)?;
    let wer_vs_target = target.map(|t| wer(t, &enh_adv)).transpose()?;
    let (rpr_value, rpr_error) =
        match rpr(&ex.mixed.samples, &x_star.samples, &y.samples, &y_star.samples) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
    let PerturbationStats { l2, linf, snr_db } =
        perturbation_stats(&ex.mixed.samples, &x_star.samples)?;
    Ok(Scored {
        metrics: MetricReport {
            wer_noisy,
            wer_enh_orig,
            wer_enh_adv,
            wer_vs_target,
            rpr: rpr_value,
            rpr_error,
            de: crate::metrics::de(wer_enh_adv, wer_enh_orig),
            l2_pert: l2,
            linf_pert: linf,
            pert_snr_db: snr_db,
        },
        noisy,
        enh_orig,
        enh_adv,
    })
}

fn row(
    ex: &Example,
    method: Option<Method>,
    source: &str,
    eval: &str,
    target: Option<&Transcript>,
    scored: Result<Scored>,
) -> Row {
    let mut r = Row {
        id: ex.id.clone(),
        sentence: ex.sentence,
        snr_db: ex.snr_db,
        method,
        source_model: source.to_string(),
        eval_model: eval.to_string(),
        reference: ex.transcript.clone(),
        target_transcript: target.cloned(),
        decoded_noisy: None,
        decoded_enh_orig: None,
        decoded_enh_adv: None,
        metrics: None,
        error: None,
    };
    match scored {
        Ok(s) => {
            r.decoded_noisy = Some(s.noisy);
            r.decoded_enh_orig = Some(s.enh_orig);
            r.decoded_enh_adv = Some(s.enh_adv);
            r.metrics = Some(s.metrics);
        }
        Err(e) => r.error = Some(format!("{}: {e}", e.kind())),
    }
    r
}

fn attack_and_score(
    model: &EnhancerModel<f64>,
    ex: &Example,
    t_adv: &Waveform<f64>,
    cfg: &AttackConfig,
    target: Option<&Transcript>,
    codec: &CodecConfig,
) -> Result<Scored> {
    let adv = run_attack(model, &ex.mixed, t_adv, cfg)?;
    score(model, ex, &adv.x_star, target, codec)
}

/// Enhancement without attack: noisy vs enhanced WER per example.
pub fn run_eval(cfg: &ExperimentConfig) -> Result<Report> {
    let model = obtain_model(&cfg.model, &cfg.codec)?;
    let name = &cfg.model.name;
    let rows = build_examples(cfg)?
        .iter()
        .map(|ex| row(ex, None, name, name, None, score(&model, ex, &ex.mixed, None, &cfg.codec)))
        .collect();
    Ok(Report::new("eval", cfg, rows))
}

/// Every configured method against every example with a silence target.
pub fn run_snr_sweep(cfg: &ExperimentConfig) -> Result<Report> {
    let model = obtain_model(&cfg.model, &cfg.codec)?;
    let name = &cfg.model.name;
    let mut rows = Vec::new();
    for ex in build_examples(cfg)? {
        let t_adv = make_target(&TargetSpec::silence(), &ex.mixed)?;
        for &method in &cfg.methods {
            let acfg = cfg.attack_for(method);
            let scored = attack_and_score(&model, &ex, &t_adv, &acfg, None, &cfg.codec);
            rows.push(row(&ex, Some(method), name, name, None, scored));
        }
    }
    Ok(Report::new("snr_sweep", cfg, rows))
}

/// OPT attack whose target is the clean rendering of a second sentence.
/// One victim per sentence, mixed at `target_snr_db`.
pub fn run_target_attack(cfg: &ExperimentConfig) -> Result<Report> {
    let model = obtain_model(&cfg.model, &cfg.codec)?;
    let name = &cfg.model.name;
    let mut victims_cfg = cfg.clone();
    victims_cfg.snr_grid = vec![cfg.target_snr_db];
    let acfg = cfg.attack_for(Method::Opt);
    let mut rows = Vec::new();
    for ex in build_examples(&victims_cfg)? {
        let target_words = random_sentence(
            derive_seed(cfg.seed, STREAM_TARGET_SENTENCE, ex.sentence as u64),
            cfg.sentence_len,
            cfg.codec.vocab_size,
        );
        let scored = encode::<f64>(&target_words, &cfg.codec)
            .and_then(|clip| make_target(&TargetSpec::speech(clip), &ex.mixed))
            .and_then(|t_adv| {
                attack_and_score(&model, &ex, &t_adv, &acfg, Some(&target_words), &cfg.codec)
            });
        rows.push(row(&ex, Some(Method::Opt), name, name, Some(&target_words), scored));
    }
    Ok(Report::new("target_attack", cfg, rows))
}

/// PGD examples crafted on each model, scored on both.
pub fn run_transfer_matrix(cfg: &ExperimentConfig) -> Result<Report> {
    let models = [
        (&cfg.model.name, obtain_model(&cfg.model, &cfg.codec)?),
        (&cfg.transfer_model.name, obtain_model(&cfg.transfer_model, &cfg.codec)?),
    ];
    if models[0].0 == models[1].0 {
        return Err(Error::Config("transfer models need distinct names".into()));
    }
    let examples = build_examples(cfg)?;
    let acfg = cfg.attack_for(Method::Pgd);
    let mut rows = Vec::new();
    for (src_name, src) in &models {
        for ex in &examples {
            let adv = make_target(&TargetSpec::silence(), &ex.mixed)
                .and_then(|t| run_attack(src, &ex.mixed, &t, &acfg));
            for (eval_name, eval) in &models {
                let r = match &adv {
                    Ok(a) => {
                        let scored = score(eval, ex, &a.x_star, None, &cfg.codec);
                        row(ex, Some(Method::Pgd), src_name, eval_name, None, scored)
                    }
                    Err(e) => {
                        let placeholder = Err(Error::Contract(String::new()));
                        let mut r = row(ex, Some(Method::Pgd), src_name, eval_name, None, placeholder);
                        r.error = Some(format!("{}: {e}", e.kind()));
                        r
                    }
                };
                rows.push(r);
            }
        }
    }
    let mut report = Report::new("transfer_matrix", cfg, rows);
    for (src_name, _) in &models {
        for (eval_name, _) in &models {
            let cell: Vec<&MetricReport> = report
                .rows
                .iter()
                .filter(|r| &r.source_model == *src_name && &r.eval_model == *eval_name)
                .filter_map(|r| r.metrics.as_ref())
                .collect();
            let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            report.transfer.push(TransferCell {
                source_model: src_name.to_string(),
                eval_model: eval_name.to_string(),
                rows: cell.len(),
                mean_de: mean(cell.iter().map(|m| m.de).collect()),
                mean_rpr: mean(cell.iter().filter_map(|m| m.rpr).collect()),
            });
        }
    }
    Ok(report)
}

/// Files written for one adversarial example.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackArtifact {
    pub id: String,
    pub wav: PathBuf,
    pub sidecar: PathBuf,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    id: &'a str,
    experiment_seed: u64,
    target: crate::attacks::TargetKind,
    target_seed: u64,
    config: &'a AttackConfig,
    perturbation: PerturbationStats,
    trace: &'a [TraceStep],
}

/// Attacks every example with `cfg.attack` and `cfg.attack_target`, writing
/// `adversarial/<id>.wav` plus a JSON sidecar under `dir`.
pub fn run_attacks(cfg: &ExperimentConfig, dir: &Path) -> Result<(Report, Vec<AttackArtifact>)> {
    let model = obtain_model(&cfg.model, &cfg.codec)?;
    let name = &cfg.model.name;
    let out = dir.join("adversarial");
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut rows = Vec::new();
    let mut artifacts = Vec::new();
    for (i, ex) in build_examples(cfg)?.iter().enumerate() {
        let target_seed = derive_seed(cfg.seed, STREAM_TARGET_NOISE, i as u64);
        let spec = TargetSpec {
            kind: cfg.attack_target,
            seed: target_seed,
            clip: None,
        };
        let result = make_target(&spec, &ex.mixed).and_then(|t| {
            let adv = run_attack(&model, &ex.mixed, &t, &cfg.attack)?;
            let wav = out.join(format!("{}.wav", ex.id));
            write_wav(&wav, &adv.x_star)?;
            let sidecar = out.join(format!("{}.json", ex.id));
            let meta = Sidecar {
                id: &ex.id,
                experiment_seed: cfg.seed,
                target: cfg.attack_target,
                target_seed,
                config: &adv.config,
                perturbation: perturbation_stats(&ex.mixed.samples, &adv.x_star.samples)?,
                trace: &adv.trace,
            };
            let json = serde_json::to_string_pretty(&meta).expect("sidecar serializes");
            fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))?;
            artifacts.push(AttackArtifact {
                id: ex.id.clone(),
                wav,
                sidecar,
            });
            score(&model, ex, &adv.x_star, None, &cfg.codec)
        });
        rows.push(row(ex, Some(cfg.attack.method), name, name, None, result));
    }
    Ok((Report::new("attack", cfg, rows), artifacts))
}
