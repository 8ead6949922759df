use std::collections::BTreeMap;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{GraphBuilder, NodeId, Tensor};
use crate::scalar::Scalar;
use crate::signal::{DftBasis, StftConfig};

use super::glorot;

/// Mask-estimating MLP over `±context` frames of STFT magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskNetArch {
    pub stft: StftConfig,
    pub hidden: usize,
    /// Fixed multiplier applied to magnitudes before the first layer.
    pub feature_scale: f64,
}

impl Default for MaskNetArch {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            hidden: 64,
            feature_scale: 0.1,
        }
    }
}

impl MaskNetArch {
    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if self.hidden == 0 || !(self.feature_scale > 0.0) {
            return Err(Error::Config("masknet needs hidden > 0 and feature_scale > 0".into()));
        }
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        3 * self.stft.bins()
    }

    /// Weights plus biases of the three dense layers.
    pub fn param_count(&self) -> usize {
        let (i, h, k) = (self.inputs(), self.hidden, self.stft.bins());
        i * h + h + h * h + h + h * k + k
    }

    pub(super) fn init_params<T: Scalar>(&self, rng: &mut ChaCha8Rng) -> BTreeMap<String, Tensor<T>> {
        let (i, h, k) = (self.inputs(), self.hidden, self.stft.bins());
        let mut p = BTreeMap::new();
        p.insert("w1".to_string(), glorot(rng, &[i, h], i, h));
        p.insert("w2".to_string(), glorot(rng, &[h, h], h, h));
        p.insert("w3".to_string(), glorot(rng, &[h, k], h, k));
        p.insert("b1".to_string(), Tensor::zeros(&[h]));
        p.insert("b2".to_string(), Tensor::zeros(&[h]));
        p.insert("b3".to_string(), Tensor::zeros(&[k]));
        p
    }
}

fn matrix_const<T: Scalar>(b: &mut GraphBuilder<T>, rows: usize, cols: usize, data: &[T]) -> Result<NodeId> {
    Ok(b.constant(Tensor::matrix(rows, cols, data.to_vec())?))
}

pub(super) fn splice<T: Scalar>(
    arch: &MaskNetArch,
    b: &mut GraphBuilder<T>,
    x: NodeId,
    len: usize,
    p: &BTreeMap<String, NodeId>,
) -> Result<NodeId> {
    let cfg = arch.stft;
    let basis = Arc::new(DftBasis::<T>::new(cfg)?);
    let (l, k) = (cfg.frame_len, cfg.bins());
    let f = cfg.num_frames(len);

    let frames = b.frame(x, cfg)?;
    let c_re = matrix_const(b, l, k, &basis.analysis_re)?;
    let c_im = matrix_const(b, l, k, &basis.analysis_im)?;
    let re = b.matmul(frames, c_re)?;
    let im = b.matmul(frames, c_im)?;
    let mag = b.magnitude(re, im)?;
    let feat = b.scalar_mul(mag, T::lit(arch.feature_scale))?;

    let zero_row = b.constant(Tensor::zeros(&[1, k]));
    let head = b.slice(feat, 0, 0, f - 1)?;
    let prev = b.concat(&[zero_row, head], 0)?;
    let tail = b.slice(feat, 0, 1, f)?;
    let next = b.concat(&[tail, zero_row], 0)?;
    let input = b.concat(&[prev, feat, next], 1)?;

    let z1 = b.matmul(input, p["w1"])?;
    let z1 = b.bias_add(z1, p["b1"], 1)?;
    let h1 = b.tanh(z1)?;
    let z2 = b.matmul(h1, p["w2"])?;
    let z2 = b.bias_add(z2, p["b2"], 1)?;
    let h2 = b.tanh(z2)?;
    let z3 = b.matmul(h2, p["w3"])?;
    let z3 = b.bias_add(z3, p["b3"], 1)?;
    let mask = b.sigmoid(z3)?;

    // mask · |X| · X/|X|: the noisy phase is kept
    let re_m = b.mul(mask, re)?;
    let im_m = b.mul(mask, im)?;
    let s_re = matrix_const(b, k, l, &basis.synthesis_re)?;
    let s_im = matrix_const(b, k, l, &basis.synthesis_im)?;
    let rec_re = b.matmul(re_m, s_re)?;
    let rec_im = b.matmul(im_m, s_im)?;
    let rec = b.add(rec_re, rec_im)?;
    b.overlap_add(rec, basis, len)
}
