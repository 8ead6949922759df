use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Bindings, Graph, NodeId};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Maximum relative error between the reverse-mode gradient and central
/// differences over every coordinate of `wrt`.
pub fn finite_diff_check<T: Scalar>(
    graph: &Graph<T>,
    bindings: &Bindings<T>,
    wrt: NodeId,
) -> Result<f64> {
    let n = graph.shape(wrt).iter().product();
    let all: Vec<usize> = (0..n).collect();
    finite_diff_check_at(graph, bindings, wrt, &all)
}

/// As [`finite_diff_check`], restricted to the listed flat coordinates.
///
/// Relative error per coordinate is `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn finite_diff_check_at<T: Scalar>(
    graph: &Graph<T>,
    bindings: &Bindings<T>,
    wrt: NodeId,
    coords: &[usize],
) -> Result<f64> {
    let analytic = graph.gradient(bindings, wrt)?;
    let base = bindings
        .get(wrt)
        .ok_or_else(|| Error::Binding(format!("node {}", wrt.index())))?;
    let h = T::lit(FD_STEP);
    let mut worst = 0.0f64;
    let mut probe = base.clone();
    for &c in coords {
        if c >= probe.len() {
            return Err(Error::Shape(format!("coordinate {c} out of range {}", probe.len())));
        }
        let orig = probe.data()[c];
        probe.data_mut()[c] = orig + h;
        let plus = graph.forward(&bindings.overriding(wrt, &probe))?.item();
        probe.data_mut()[c] = orig - h;
        let minus = graph.forward(&bindings.overriding(wrt, &probe))?.item();
        probe.data_mut()[c] = orig;
        let numeric = ((plus - minus) / (h + h)).as_f64();
        let exact = analytic.data()[c].as_f64();
        let denom = exact.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((exact - numeric).abs() / denom);
    }
    Ok(worst)
}
