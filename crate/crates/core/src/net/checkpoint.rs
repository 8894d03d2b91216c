//! Binary checkpoint layout (all integers little-endian `u32`):
//!
//! ```text
//! magic "PCTXCKPT" | version
//! num_layers num_heads hidden_dim ffn_dim vocab_size max_positions num_classes
//! dropout: f64 | layer_norm_eps: f64
//! tensor_count
//! repeated: name_len name_bytes ndim dims... data as f32, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"PCTXCKPT";
const VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: usize) -> std::io::Result<()> {
    let v = u32::try_from(v).map_err(|_| std::io::Error::other("value exceeds u32"))?;
    w.write_all(&v.to_le_bytes())
}

pub fn write_checkpoint<T: Scalar>(params: &ModelParams<T>, w: &mut impl Write) -> std::io::Result<()> {
    let c = &params.config;
    w.write_all(MAGIC)?;
    put_u32(w, VERSION as usize)?;
    for v in [
        c.num_layers,
        c.num_heads,
        c.hidden_dim,
        c.ffn_dim,
        c.vocab_size,
        c.max_positions,
        c.num_classes,
    ] {
        put_u32(w, v)?;
    }
    w.write_all(&c.dropout.to_le_bytes())?;
    w.write_all(&c.layer_norm_eps.to_le_bytes())?;
    let tensors = params.tensors();
    put_u32(w, tensors.len())?;
    for t in tensors {
        put_u32(w, t.name.len())?;
        w.write_all(t.name.as_bytes())?;
        put_u32(w, t.shape.len())?;
        for &d in &t.shape {
            put_u32(w, d)?;
        }
        for &v in t.data {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    w.flush()
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

pub fn read_checkpoint<T: Scalar>(r: impl Read) -> Result<ModelParams<T>> {
    let mut r = Reader { inner: r };
    if &r.bytes::<8>()? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let config = ModelConfig {
        num_layers: r.u32()?,
        num_heads: r.u32()?,
        hidden_dim: r.u32()?,
        ffn_dim: r.u32()?,
        vocab_size: r.u32()?,
        max_positions: r.u32()?,
        num_classes: r.u32()?,
        dropout: r.f64()?,
        layer_norm_eps: r.f64()?,
    };
    config.validate()?;
    let mut params = ModelParams::<T>::zeros(&config);
    let count = r.u32()?;
    let mut slots = params.tensors_mut();
    if count != slots.len() {
        return Err(Error::Checkpoint(format!("expected {} tensors, found {count}", slots.len())));
    }
    for slot in slots.iter_mut() {
        let name_len = r.u32()?;
        if name_len > 1024 {
            return Err(Error::Checkpoint("tensor name too long".into()));
        }
        let mut name = vec![0u8; name_len];
        r.inner
            .read_exact(&mut name)
            .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
        if name != slot.name.as_bytes() {
            return Err(Error::Checkpoint(format!(
                "expected tensor {}, found {}",
                slot.name,
                String::from_utf8_lossy(&name)
            )));
        }
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if shape != slot.shape {
            return Err(Error::Checkpoint(format!(
                "tensor {} has shape {shape:?}, expected {:?}",
                slot.name, slot.shape
            )));
        }
        for v in slot.data.iter_mut() {
            *v = T::of(f32::from_le_bytes(r.bytes()?) as f64);
        }
    }
    drop(slots);
    if let Some(name) = params.first_non_finite() {
        return Err(Error::Checkpoint(format!("non-finite values in {name}")));
    }
    Ok(params)
}

pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(params, &mut BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ModelParams<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}
