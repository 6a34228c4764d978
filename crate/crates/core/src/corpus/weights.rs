//! Binary weight files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "GCAWGHTS"
//! version      u32      1
//! config       7 × u64  seq_len vocab_size embedding_dim sentence_dim
//!                       disc_sentence_dim context_utterances hidden_dim
//! count        u32      number of parameter blocks
//! block*       name_len u32, name (UTF-8), trainable u8, ndim u32,
//!              dims ndim × u64, values (product of dims) × f64
//! ```

use std::path::Path;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Parameter, Tensor};

pub const MAGIC: &[u8; 8] = b"GCAWGHTS";
pub const VERSION: u32 = 1;

pub fn encode_weights<'a>(params: impl IntoIterator<Item = &'a Parameter>, config: &ModelConfig) -> Vec<u8> {
    let params: Vec<&Parameter> = params.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for w in config.to_words() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(u8::from(p.trainable));
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                format!("byte offset {}", self.pos),
                format!("truncated file while reading {what}"),
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn err(&self, at: usize, message: impl Into<String>) -> Error {
        Error::format(format!("byte offset {at}"), message)
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<(Vec<Parameter>, ModelConfig)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(r.err(0, "bad magic"));
    }
    let version_at = r.pos;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.err(version_at, format!("unsupported version {version}")));
    }
    let mut words = [0u64; 7];
    for w in &mut words {
        *w = r.u64("config")?;
    }
    let config = ModelConfig::from_words(words);
    let count = r.u32("parameter count")?;

    let mut params = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let block_at = r.pos;
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| r.err(block_at, "parameter name is not UTF-8"))?
            .to_owned();
        let trainable = match r.take(1, "trainable flag")?[0] {
            0 => false,
            1 => true,
            other => return Err(r.err(r.pos - 1, format!("invalid trainable flag {other}"))),
        };
        let ndim = r.u32("rank")? as usize;
        if ndim == 0 || ndim > 4 {
            return Err(r.err(r.pos - 4, format!("invalid rank {ndim} for {name}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64("shape")? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n > 0)
            .ok_or_else(|| r.err(block_at, format!("invalid shape {shape:?} for {name}")))?;
        let data_at = r.pos;
        let raw = r.take(len.checked_mul(8).ok_or_else(|| r.err(data_at, "shape overflow"))?, "values")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut p = Parameter::new(name, Tensor::new(shape, data)?);
        p.trainable = trainable;
        params.push(p);
    }
    if r.pos != bytes.len() {
        return Err(r.err(r.pos, "trailing bytes after the last block"));
    }
    Ok((params, config))
}

pub fn save_weights<'a>(
    params: impl IntoIterator<Item = &'a Parameter>,
    config: &ModelConfig,
    path: &Path,
) -> Result<()> {
    super::write_atomic(path, &encode_weights(params, config))
}

pub fn load_weights(path: &Path) -> Result<(Vec<Parameter>, ModelConfig)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes).map_err(|e| match e {
        Error::Format { location, message } => Error::Format {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

/// Loads a file and checks that it was written for `expected`.
pub fn load_weights_for(path: &Path, expected: &ModelConfig) -> Result<Vec<Parameter>> {
    let (params, found) = load_weights(path)?;
    if found != *expected {
        return Err(Error::ConfigMismatch {
            found: found.to_string(),
            expected: expected.to_string(),
        });
    }
    Ok(params)
}
