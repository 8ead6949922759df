//! Word error rate, residual perturbation rate, degree of enhancement.

use serde::{Deserialize, Serialize};

use crate::codec::Transcript;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Guard on `|ln ‖x* − x‖₂|` below which the RPR ratio is refused.
pub const RPR_LOG_GUARD: f64 = 1e-6;

/// Minimum number of substitutions, deletions and insertions turning `a` into `b`.
pub fn edit_distance(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `(S + D + I) / len(ref)`; may exceed one.
pub fn wer(reference: &Transcript, hypothesis: &Transcript) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::UndefinedMetric("WER with an empty reference".into()));
    }
    Ok(edit_distance(&reference.words, &hypothesis.words) as f64 / reference.len() as f64)
}

fn l2_diff<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| {
            let d = (p - q).as_f64();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `ln ‖y* − y‖₂ / ln ‖x* − x‖₂` over raw samples.
pub fn rpr<T: Scalar>(x: &[T], x_star: &[T], y_en: &[T], y_star_en: &[T]) -> Result<f64> {
    let n = x.len();
    if x_star.len() != n || y_en.len() != n || y_star_en.len() != n {
        return Err(Error::Shape(format!(
            "rpr needs equal lengths, got {n}, {}, {}, {}",
            x_star.len(),
            y_en.len(),
            y_star_en.len()
        )));
    }
    let dx = l2_diff(x_star, x);
    if dx == 0.0 {
        return Err(Error::UndefinedMetric("RPR with zero perturbation".into()));
    }
    let denom = dx.ln();
    if denom.abs() < RPR_LOG_GUARD {
        return Err(Error::IllConditioned(format!(
            "RPR denominator ln‖x*−x‖₂ = {denom:e} (perturbation norm ≈ 1)"
        )));
    }
    Ok(l2_diff(y_star_en, y_en).ln() / denom)
}

/// `F(y*) − F(y)` in percentage points.
pub fn de(wer_adv: f64, wer_orig: f64) -> f64 {
    100.0 * wer_adv - 100.0 * wer_orig
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationStats {
    pub l2: f64,
    pub linf: f64,
    /// `None` when the perturbation is exactly zero.
    pub snr_db: Option<f64>,
}

pub fn perturbation_stats<T: Scalar>(x: &[T], x_star: &[T]) -> Result<PerturbationStats> {
    if x.len() != x_star.len() {
        return Err(Error::Shape(format!(
            "perturbation_stats: {} vs {} samples",
            x.len(),
            x_star.len()
        )));
    }
    let l2 = l2_diff(x_star, x);
    let linf = x
        .iter()
        .zip(x_star)
        .map(|(&a, &b)| (b - a).as_f64().abs())
        .fold(0.0, f64::max);
    let snr_db = (l2 > 0.0).then(|| {
        let signal = x.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
        20.0 * (signal / l2).log10()
    });
    Ok(PerturbationStats { l2, linf, snr_db })
}

/// Per-example metric bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub wer_noisy: f64,
    pub wer_enh_orig: f64,
    pub wer_enh_adv: f64,
    pub wer_vs_target: Option<f64>,
    /// `None` when undefined or ill-conditioned; see `rpr_error`.
    pub rpr: Option<f64>,
    pub rpr_error: Option<String>,
    pub de: f64,
    pub l2_pert: f64,
    pub linf_pert: f64,
    pub pert_snr_db: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(w: &[usize]) -> Transcript {
        Transcript::new(w.to_vec())
    }

    #[test]
    fn wer_examples() {
        assert_eq!(wer(&t(&[1, 2, 3]), &t(&[1, 2, 3])).unwrap(), 0.0);
        assert!((wer(&t(&[0, 1, 2]), &t(&[0, 9, 2])).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(wer(&t(&[0, 1]), &t(&[0, 7, 8, 1])).unwrap(), 1.0);
        assert_eq!(wer(&t(&[0, 1]), &t(&[])).unwrap(), 1.0);
        assert_eq!(wer(&t(&[0]), &t(&[3, 4, 5])).unwrap(), 3.0);
        assert!(matches!(wer(&t(&[]), &t(&[1])), Err(Error::UndefinedMetric(_))));
    }

    fn buffers_with_norms(dx: f64, dy: f64) -> [Vec<f64>; 4] {
        let x = vec![0.1, -0.2, 0.3, 0.0];
        let x_star = vec![0.1 + dx, -0.2, 0.3, 0.0];
        let y = vec![0.0, 0.5, 0.0, 0.0];
        let y_star = vec![0.0, 0.5, -dy, 0.0];
        [x, x_star, y, y_star]
    }

    #[test]
    fn rpr_examples() {
        let e = std::f64::consts::E;
        let [x, xs, y, ys] = buffers_with_norms(e, e * e);
        assert!((rpr(&x, &xs, &y, &ys).unwrap() - 2.0).abs() < 1e-12);
        let [x, xs, y, ys] = buffers_with_norms(e, e);
        assert!((rpr(&x, &xs, &y, &ys).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rpr_errors() {
        let [x, _, y, ys] = buffers_with_norms(1.0, 2.0);
        assert!(matches!(rpr(&x, &x, &y, &ys), Err(Error::UndefinedMetric(_))));
        let [x, xs, y, ys] = buffers_with_norms(1.0, 2.0);
        assert!(matches!(rpr(&x, &xs, &y, &ys), Err(Error::IllConditioned(_))));
        assert!(matches!(rpr(&x[..3], &xs, &y, &ys), Err(Error::Shape(_))));
    }

    #[test]
    fn de_examples() {
        assert!((de(0.90, 0.05) - 85.0).abs() < 1e-12);
        assert_eq!(de(0.4, 0.4), 0.0);
        assert_eq!(de(0.3, 0.7), -de(0.7, 0.3));
    }

    #[test]
    fn perturbation_examples() {
        let s = perturbation_stats(&[0.2, -0.1], &[0.2, -0.1]).unwrap();
        assert_eq!((s.l2, s.linf, s.snr_db), (0.0, 0.0, None));
        let s = perturbation_stats(&[0.3], &[0.4]).unwrap();
        assert!((s.l2 - 0.1).abs() < 1e-12 && (s.linf - 0.1).abs() < 1e-12);
        assert!((s.snr_db.unwrap() - 20.0 * 3.0f64.log10()).abs() < 1e-9);
    }
}
