use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::Method;
use crate::codec::Transcript;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;

use super::ExperimentConfig;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One attacked (or evaluated) example on one evaluation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: String,
    pub sentence: usize,
    pub snr_db: f64,
    /// `None` for plain enhancement evaluation.
    pub method: Option<Method>,
    pub source_model: String,
    pub eval_model: String,
    pub reference: Transcript,
    pub target_transcript: Option<Transcript>,
    pub decoded_noisy: Option<Transcript>,
    pub decoded_enh_orig: Option<Transcript>,
    pub decoded_enh_adv: Option<Transcript>,
    pub metrics: Option<MetricReport>,
    /// Set when the row failed; failed rows carry no metrics.
    pub error: Option<String>,
}

/// Mean and median of the finite values of one metric within a group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub count: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
}

impl Stat {
    fn of(values: &[f64]) -> Self {
        let v: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        Self {
            count: v.len(),
            mean: (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64),
            median: median(&v),
        }
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub snr_db: f64,
    pub method: Option<Method>,
    pub source_model: String,
    pub eval_model: String,
    pub rows: usize,
    pub failed: usize,
    pub wer_noisy: Stat,
    pub wer_enh_orig: Stat,
    pub wer_enh_adv: Stat,
    pub wer_vs_target: Stat,
    pub de: Stat,
    pub rpr: Stat,
    /// Fraction of rows with a defined RPR above one.
    pub rpr_above_one: Option<f64>,
    pub linf_pert: Stat,
}

/// Groups rows by (SNR, method, source, eval) in first-appearance order.
/// Failed rows are counted but contribute no values.
pub fn aggregate(rows: &[Row]) -> Vec<Aggregate> {
    let mut order: Vec<(u64, Option<Method>, String, String)> = Vec::new();
    let mut groups: BTreeMap<usize, Vec<&Row>> = BTreeMap::new();
    for r in rows {
        let key = (
            r.snr_db.to_bits(),
            r.method,
            r.source_model.clone(),
            r.eval_model.clone(),
        );
        let idx = match order.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                order.push(key);
                order.len() - 1
            }
        };
        groups.entry(idx).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let ok: Vec<&MetricReport> = g.iter().filter_map(|r| r.metrics.as_ref()).collect();
            let pick = |f: &dyn Fn(&MetricReport) -> Option<f64>| -> Vec<f64> {
                ok.iter().filter_map(|m| f(m)).collect()
            };
            let rpr = pick(&|m| m.rpr);
            Aggregate {
                snr_db: g[0].snr_db,
                method: g[0].method,
                source_model: g[0].source_model.clone(),
                eval_model: g[0].eval_model.clone(),
                rows: g.len(),
                failed: g.len() - ok.len(),
                wer_noisy: Stat::of(&pick(&|m| Some(m.wer_noisy))),
                wer_enh_orig: Stat::of(&pick(&|m| Some(m.wer_enh_orig))),
                wer_enh_adv: Stat::of(&pick(&|m| Some(m.wer_enh_adv))),
                wer_vs_target: Stat::of(&pick(&|m| m.wer_vs_target)),
                de: Stat::of(&pick(&|m| Some(m.de))),
                rpr_above_one: (!ok.is_empty())
                    .then(|| rpr.iter().filter(|&&r| r > 1.0).count() as f64 / ok.len() as f64),
                rpr: Stat::of(&rpr),
                linf_pert: Stat::of(&pick(&|m| Some(m.linf_pert))),
            }
        })
        .collect()
}

/// Mean DE and RPR of one (source, eval) pair of the transfer matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub source_model: String,
    pub eval_model: String,
    pub rows: usize,
    pub mean_de: Option<f64>,
    pub mean_rpr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: String,
    pub config: ExperimentConfig,
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
    pub transfer: Vec<TransferCell>,
}

impl Report {
    pub fn new(experiment: &str, config: &ExperimentConfig, rows: Vec<Row>) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            experiment: experiment.to_string(),
            config: config.clone(),
            aggregates: aggregate(&rows),
            rows,
            transfer: Vec::new(),
        }
    }

    pub fn find(&self, snr_db: f64, method: Option<Method>) -> Vec<&Aggregate> {
        self.aggregates
            .iter()
            .filter(|a| a.snr_db == snr_db && a.method == method)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat per-row table.
    pub fn rows_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Format(format!("csv: {e}"));
        w.write_record([
            "id",
            "sentence",
            "snr_db",
            "method",
            "source_model",
            "eval_model",
            "reference",
            "target",
            "decoded_noisy",
            "decoded_enh_orig",
            "decoded_enh_adv",
            "wer_noisy",
            "wer_enh_orig",
            "wer_enh_adv",
            "wer_vs_target",
            "de",
            "rpr",
            "l2_pert",
            "linf_pert",
            "error",
        ])
        .map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let tr = |t: &Option<Transcript>| t.as_ref().map(|t| t.to_string()).unwrap_or_default();
        for r in &self.rows {
            let m = r.metrics.as_ref();
            w.write_record([
                r.id.clone(),
                r.sentence.to_string(),
                r.snr_db.to_string(),
                r.method.map(|m| m.name().to_string()).unwrap_or_default(),
                r.source_model.clone(),
                r.eval_model.clone(),
                r.reference.to_string(),
                tr(&r.target_transcript),
                tr(&r.decoded_noisy),
                tr(&r.decoded_enh_orig),
                tr(&r.decoded_enh_adv),
                opt(m.map(|m| m.wer_noisy)),
                opt(m.map(|m| m.wer_enh_orig)),
                opt(m.map(|m| m.wer_enh_adv)),
                opt(m.and_then(|m| m.wer_vs_target)),
                opt(m.map(|m| m.de)),
                opt(m.and_then(|m| m.rpr)),
                opt(m.map(|m| m.l2_pert)),
                opt(m.map(|m| m.linf_pert)),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Per-group summary table.
    pub fn aggregates_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Format(format!("csv: {e}"));
        w.write_record([
            "snr_db",
            "method",
            "source_model",
            "eval_model",
            "rows",
            "failed",
            "mean_wer_noisy",
            "mean_wer_enh_orig",
            "mean_wer_enh_adv",
            "median_wer_vs_target",
            "mean_de",
            "median_de",
            "mean_rpr",
            "median_rpr",
            "rpr_above_one",
        ])
        .map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for a in &self.aggregates {
            w.write_record([
                a.snr_db.to_string(),
                a.method.map(|m| m.name().to_string()).unwrap_or_default(),
                a.source_model.clone(),
                a.eval_model.clone(),
                a.rows.to_string(),
                a.failed.to_string(),
                opt(a.wer_noisy.mean),
                opt(a.wer_enh_orig.mean),
                opt(a.wer_enh_adv.mean),
                opt(a.wer_vs_target.median),
                opt(a.de.mean),
                opt(a.de.median),
                opt(a.rpr.mean),
                opt(a.rpr.median),
                opt(a.rpr_above_one),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Writes `<stem>.json`, `<stem>_rows.csv` and `<stem>_aggregates.csv`
/// under `dir`; returns the JSON path.
pub fn write_report(report: &Report, dir: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join(format!("{stem}.json"));
    fs::write(&json, report.to_json()).map_err(|e| Error::io(&json, e))?;
    let rows = dir.join(format!("{stem}_rows.csv"));
    fs::write(&rows, report.rows_csv()?).map_err(|e| Error::io(&rows, e))?;
    let agg = dir.join(format!("{stem}_aggregates.csv"));
    fs::write(&agg, report.aggregates_csv()?).map_err(|e| Error::io(&agg, e))?;
    Ok(json)
}
