use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{GraphBuilder, NodeId, Tensor};
use crate::scalar::Scalar;

use super::glorot;

/// Two stride-2 conv encoder layers, a bottleneck conv, and two
/// upsample-then-conv decoder layers with tanh output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveAeArch {
    pub channels1: usize,
    pub channels2: usize,
    pub kernel: usize,
    pub bottleneck_kernel: usize,
    /// Concatenate encoder activations (and the input) into the decoder.
    pub skips: bool,
}

impl Default for WaveAeArch {
    fn default() -> Self {
        Self {
            channels1: 8,
            channels2: 16,
            kernel: 9,
            bottleneck_kernel: 5,
            skips: true,
        }
    }
}

impl WaveAeArch {
    pub fn validate(&self) -> Result<()> {
        if self.channels1 == 0 || self.channels2 == 0 {
            return Err(Error::Config("waveae channels must be positive".into()));
        }
        if self.kernel % 2 == 0 || self.bottleneck_kernel % 2 == 0 {
            return Err(Error::Config("waveae kernels must be odd".into()));
        }
        Ok(())
    }

    fn layer_shapes(&self) -> Vec<(&'static str, usize, usize, usize)> {
        let (c1, c2, k, kb) = (self.channels1, self.channels2, self.kernel, self.bottleneck_kernel);
        let (d1_in, d2_in) = if self.skips { (c2 + c1, c1 + 1) } else { (c2, c1) };
        vec![
            ("enc1", c1, 1, k),
            ("enc2", c2, c1, k),
            ("bottleneck", c2, c2, kb),
            ("dec1", c1, d1_in, k),
            ("dec2", 1, d2_in, k),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(_, co, ci, k)| co * ci * k + co)
            .sum()
    }

    pub(super) fn init_params<T: Scalar>(&self, rng: &mut ChaCha8Rng) -> BTreeMap<String, Tensor<T>> {
        let mut p = BTreeMap::new();
        for (name, co, ci, k) in self.layer_shapes() {
            p.insert(format!("{name}.w"), glorot(rng, &[co, ci, k], ci * k, co * k));
            p.insert(format!("{name}.b"), Tensor::zeros(&[co]));
        }
        p
    }
}

fn conv<T: Scalar>(
    b: &mut GraphBuilder<T>,
    p: &BTreeMap<String, NodeId>,
    name: &str,
    x: NodeId,
    stride: usize,
    kernel: usize,
) -> Result<NodeId> {
    let y = b.conv1d(x, p[&format!("{name}.w")], stride, kernel / 2)?;
    b.bias_add(y, p[&format!("{name}.b")], 0)
}

pub(super) fn splice<T: Scalar>(
    arch: &WaveAeArch,
    b: &mut GraphBuilder<T>,
    x: NodeId,
    len: usize,
    p: &BTreeMap<String, NodeId>,
) -> Result<NodeId> {
    let padded = len.div_ceil(4) * 4;
    let xp = if padded > len {
        let zeros = b.constant(Tensor::zeros(&[padded - len]));
        b.concat(&[x, zeros], 0)?
    } else {
        x
    };
    let r = b.reshape(xp, &[1, padded])?;
    let (k, kb) = (arch.kernel, arch.bottleneck_kernel);

    let e1 = conv(b, p, "enc1", r, 2, k)?;
    let e1 = b.relu(e1)?;
    let e2 = conv(b, p, "enc2", e1, 2, k)?;
    let e2 = b.relu(e2)?;
    let z = conv(b, p, "bottleneck", e2, 1, kb)?;
    let z = b.relu(z)?;

    let u1 = b.upsample(z, 2)?;
    let u1 = if arch.skips { b.concat(&[u1, e1], 0)? } else { u1 };
    let d1 = conv(b, p, "dec1", u1, 1, k)?;
    let d1 = b.relu(d1)?;
    let u2 = b.upsample(d1, 2)?;
    let u2 = if arch.skips { b.concat(&[u2, r], 0)? } else { u2 };
    let d2 = conv(b, p, "dec2", u2, 1, k)?;
    let y = b.tanh(d2)?;

    let y = b.reshape(y, &[padded])?;
    b.slice(y, 0, 0, len)
}
