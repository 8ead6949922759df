use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use advse::enhancers::save_model;
use advse::harness::{
    run_attacks, run_eval, run_snr_sweep, run_target_attack, run_transfer_matrix, synth_dataset,
    train_model, write_report, ExperimentConfig, ModelSpec,
};
use advse::{Error, Result};

#[derive(Parser)]
#[command(name = "advse", version, about = "Adversarial attacks on speech enhancers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the clean/noise/mixed WAV dataset and its manifest.
    Synth,
    /// Train and save enhancer models.
    Train {
        #[arg(long, value_enum, default_value_t = Which::Primary)]
        model: Which,
    },
    /// Attack every example and write adversarial WAVs with JSON sidecars.
    Attack,
    /// Noisy vs enhanced WER without attack.
    Eval,
    /// FGSM/OPT (optionally PGD) sweep over the SNR grid.
    Sweep,
    /// 2×2 PGD transferability matrix.
    Transfer,
    /// Target attack replacing the victim's content.
    Target,
    /// Print the effective config as JSON.
    Config,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    Primary,
    Transfer,
    Both,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.apply_env()?;
    cfg.validate()?;
    Ok(cfg)
}

fn train_and_save(spec: &ModelSpec, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let model = train_model(spec, &cfg.codec)?;
    let path = spec
        .path
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join(format!("{}.advse", spec.name)));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    save_model(&model, &path)?;
    Ok(path)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    let cfg = load_config(cli)?;
    let dir = &cfg.output_dir;
    let outputs: Vec<String> = match &cli.command {
        Command::Config => {
            return Ok(serde_json::to_value(&cfg).expect("config serializes"));
        }
        Command::Synth => {
            let data_dir = dir.join("dataset");
            let manifest = synth_dataset(&cfg, &data_dir)?;
            return Ok(json!({
                "command": "synth",
                "outputs": [display(&data_dir.join("manifest.json"))],
                "rows": manifest.rows.len(),
            }));
        }
        Command::Train { model } => {
            let mut paths = Vec::new();
            if matches!(model, Which::Primary | Which::Both) {
                paths.push(display(&train_and_save(&cfg.model, &cfg)?));
            }
            if matches!(model, Which::Transfer | Which::Both) {
                paths.push(display(&train_and_save(&cfg.transfer_model, &cfg)?));
            }
            paths
        }
        Command::Attack => {
            let (report, artifacts) = run_attacks(&cfg, dir)?;
            let mut out = vec![display(&write_report(&report, dir, "attack")?)];
            out.extend(artifacts.iter().map(|a| display(&a.wav)));
            out
        }
        Command::Eval => vec![display(&write_report(&run_eval(&cfg)?, dir, "eval")?)],
        Command::Sweep => vec![display(&write_report(&run_snr_sweep(&cfg)?, dir, "sweep")?)],
        Command::Transfer => vec![display(&write_report(
            &run_transfer_matrix(&cfg)?,
            dir,
            "transfer",
        )?)],
        Command::Target => vec![display(&write_report(
            &run_target_attack(&cfg)?,
            dir,
            "target",
        )?)],
    };
    let name = match cli.command {
        Command::Synth => "synth",
        Command::Train { .. } => "train",
        Command::Attack => "attack",
        Command::Eval => "eval",
        Command::Sweep => "sweep",
        Command::Transfer => "transfer",
        Command::Target => "target",
        Command::Config => "config",
    };
    Ok(json!({ "command": name, "outputs": outputs }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": { "kind": e.kind(), "message": e.to_string() } })
            );
            ExitCode::FAILURE
        }
    }
}
