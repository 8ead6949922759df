//! Binary model file.
//!
//! Layout (little-endian):
//! `"ADVSE"` · version `u16` · kind `u8` · arch table · train meta · params.
//! The arch table is `u32` count then `(u16 len, utf8 key, f64 value)` entries.
//! Train meta is `seed u64, epochs u64, initial_loss f64, final_loss f64`.
//! Params are `u32` count then `(u16 len, utf8 name, u8 rank, rank × u64 dims,
//! f64 data)` entries.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grad::Tensor;
use crate::scalar::Scalar;
use crate::signal::{StftConfig, Window};

use super::{ArchConfig, EnhancerModel, MaskNetArch, ModelKind, TrainMeta, WaveAeArch};

pub const MAGIC: &[u8; 5] = b"ADVSE";
pub const FORMAT_VERSION: u16 = 1;

fn arch_table(arch: &ArchConfig) -> Vec<(&'static str, f64)> {
    match arch {
        ArchConfig::MaskNet(a) => vec![
            ("frame_len", a.stft.frame_len as f64),
            ("hop", a.stft.hop as f64),
            ("hidden", a.hidden as f64),
            ("feature_scale", a.feature_scale),
        ],
        ArchConfig::WaveAe(a) => vec![
            ("channels1", a.channels1 as f64),
            ("channels2", a.channels2 as f64),
            ("kernel", a.kernel as f64),
            ("bottleneck_kernel", a.bottleneck_kernel as f64),
            ("skips", if a.skips { 1.0 } else { 0.0 }),
        ],
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn to_bytes<T: Scalar>(model: &EnhancerModel<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(model.kind().tag());
    let table = arch_table(&model.arch);
    out.extend_from_slice(&(table.len() as u32).to_le_bytes());
    for (k, v) in table {
        put_str(&mut out, k);
        out.extend_from_slice(&v.to_le_bytes());
    }
    let m = &model.train_meta;
    out.extend_from_slice(&m.seed.to_le_bytes());
    out.extend_from_slice(&m.epochs.to_le_bytes());
    out.extend_from_slice(&m.initial_loss.to_le_bytes());
    out.extend_from_slice(&m.final_loss.to_le_bytes());
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (name, t) in &model.params {
        put_str(&mut out, name);
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("model file truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("non-utf8 name in model file".into()))
    }
}

fn lookup(table: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    table
        .get(key)
        .copied()
        .ok_or_else(|| Error::Format(format!("arch table missing `{key}`")))
}

fn as_size(v: f64, key: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e12 {
        Ok(v as usize)
    } else {
        Err(Error::Format(format!("arch entry `{key}` = {v} is not a size")))
    }
}

fn arch_from_table(kind: ModelKind, t: &BTreeMap<String, f64>) -> Result<ArchConfig> {
    let size = |k: &str| lookup(t, k).and_then(|v| as_size(v, k));
    let arch = match kind {
        ModelKind::MaskNet => ArchConfig::MaskNet(MaskNetArch {
            stft: StftConfig {
                frame_len: size("frame_len")?,
                hop: size("hop")?,
                window: Window::SqrtHann,
            },
            hidden: size("hidden")?,
            feature_scale: lookup(t, "feature_scale")?,
        }),
        ModelKind::WaveAe => ArchConfig::WaveAe(WaveAeArch {
            channels1: size("channels1")?,
            channels2: size("channels2")?,
            kernel: size("kernel")?,
            bottleneck_kernel: size("bottleneck_kernel")?,
            skips: lookup(t, "skips")? != 0.0,
        }),
    };
    match &arch {
        ArchConfig::MaskNet(a) => a.validate(),
        ArchConfig::WaveAe(a) => a.validate(),
    }
    .map_err(|e| Error::Format(format!("invalid architecture: {e}")))?;
    Ok(arch)
}

pub fn from_bytes<T: Scalar>(buf: &[u8]) -> Result<EnhancerModel<T>> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "model format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let tag = r.u8()?;
    let kind = ModelKind::from_tag(tag)
        .ok_or_else(|| Error::Format(format!("unknown model kind tag {tag}")))?;
    let entries = r.u32()?;
    let mut table = BTreeMap::new();
    for _ in 0..entries {
        let k = r.string()?;
        let v = r.f64()?;
        table.insert(k, v);
    }
    let arch = arch_from_table(kind, &table)?;
    let train_meta = TrainMeta {
        seed: r.u64()?,
        epochs: r.u64()?,
        initial_loss: r.f64()?,
        final_loss: r.f64()?,
    };
    let count = r.u32()?;
    let mut params = BTreeMap::new();
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u8()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Format("param too big".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        params.insert(name, Tensor::new(shape, data)?);
    }
    if r.pos != buf.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after model",
            buf.len() - r.pos
        )));
    }
    let model = EnhancerModel {
        arch,
        params,
        train_meta,
    };
    // parameter names and shapes must match a fresh build of the same arch
    let fresh = EnhancerModel::<T>::build(arch, 0)?;
    let compatible = fresh.params.len() == model.params.len()
        && fresh
            .params
            .iter()
            .all(|(k, t)| model.params.get(k).map(|p| p.shape()) == Some(t.shape()));
    if !compatible {
        return Err(Error::Format("parameter set does not match architecture".into()));
    }
    Ok(model)
}

pub fn save_model<T: Scalar>(model: &EnhancerModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<EnhancerModel<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_both_kinds() {
        for arch in [
            ArchConfig::MaskNet(MaskNetArch::default()),
            ArchConfig::WaveAe(WaveAeArch::default()),
        ] {
            let m = EnhancerModel::<f64>::build(arch, 3).unwrap();
            let back: EnhancerModel<f64> = from_bytes(&to_bytes(&m)).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let m = EnhancerModel::<f64>::build(ArchConfig::WaveAe(WaveAeArch::default()), 3).unwrap();
        let good = to_bytes(&m);
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(from_bytes::<f64>(&bad_magic), Err(Error::Format(_))));
        let mut bad_version = good.clone();
        bad_version[5] = 9;
        assert!(matches!(from_bytes::<f64>(&bad_version), Err(Error::Format(_))));
        assert!(matches!(
            from_bytes::<f64>(&good[..good.len() - 3]),
            Err(Error::Format(_))
        ));
        let mut trailing = good;
        trailing.push(0);
        assert!(matches!(from_bytes::<f64>(&trailing), Err(Error::Format(_))));
    }
}
