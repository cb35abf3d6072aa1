//! Binary checkpoint container for [`ToyModel`].
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "PG2PCKPT"
//! version    u32       FORMAT_VERSION
//! header_len u64
//! header     JSON      {"config": ..., "vocab": ..., "tensors": [{"name", "shape"}, ...]}
//! data       f64 × N   tensors in header order, row-major
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelParams, ToyGlmConfig};
use super::tokenizer::Vocabulary;
use super::toy::ToyModel;
use super::GenerationError;

pub const MAGIC: &[u8; 8] = b"PG2PCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ToyGlmConfig,
    vocab: Vocabulary,
    tensors: Vec<TensorHeader>,
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

fn corrupt(msg: impl Into<String>) -> GenerationError {
    GenerationError::Checkpoint(msg.into())
}

pub fn to_bytes(model: &ToyModel) -> Vec<u8> {
    let tensors = model.params.tensors();
    let header = Header {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        tensors: tensors
            .iter()
            .map(|t| TensorHeader {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let n: usize = tensors.iter().map(|t| t.data.len()).sum();
    let mut out = Vec::with_capacity(20 + header.len() + 8 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in &tensors {
        for x in t.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<ToyModel, GenerationError> {
    let rest = bytes
        .strip_prefix(MAGIC.as_slice())
        .ok_or_else(|| corrupt("not a polyg2p checkpoint (bad magic)"))?;
    let (version, rest) = split_array::<4>(rest)?;
    let version = u32::from_le_bytes(version);
    if version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let (len, rest) = split_array::<8>(rest)?;
    let len = usize::try_from(u64::from_le_bytes(len)).map_err(|_| corrupt("header too large"))?;
    if rest.len() < len {
        return Err(corrupt("truncated header"));
    }
    let (header, mut data) = rest.split_at(len);
    let header: Header =
        serde_json::from_slice(header).map_err(|e| corrupt(format!("bad header: {e}")))?;
    header.config.validate()?;
    if header.config.vocab_size != header.vocab.len() {
        return Err(corrupt("vocabulary size does not match config"));
    }

    let mut params = ModelParams::zeros(&header.config);
    {
        let mut tensors = params.tensors_mut();
        if tensors.len() != header.tensors.len() {
            return Err(corrupt("tensor count does not match config"));
        }
        for (t, h) in tensors.iter_mut().zip(&header.tensors) {
            if t.name != h.name || t.shape != h.shape {
                return Err(corrupt(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    h.name, h.shape, t.name, t.shape
                )));
            }
            for x in t.data.iter_mut() {
                let (raw, tail) = split_array::<8>(data)?;
                *x = f64::from_le_bytes(raw);
                data = tail;
            }
        }
    }
    if !data.is_empty() {
        return Err(corrupt("trailing bytes after tensor data"));
    }
    Ok(ToyModel {
        config: header.config,
        vocab: header.vocab,
        params,
    })
}

fn split_array<const N: usize>(bytes: &[u8]) -> Result<([u8; N], &[u8]), GenerationError> {
    if bytes.len() < N {
        return Err(corrupt("unexpected end of checkpoint"));
    }
    let (head, tail) = bytes.split_at(N);
    Ok((head.try_into().expect("length checked"), tail))
}

pub fn save(model: &ToyModel, path: impl AsRef<Path>) -> Result<(), GenerationError> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)).map_err(|e| corrupt(format!("{}: {e}", path.display())))
}

pub fn load(path: impl AsRef<Path>) -> Result<ToyModel, GenerationError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| corrupt(format!("{}: {e}", path.display())))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ToyModel {
        let cfg = ToyGlmConfig {
            d_model: 8,
            n_heads: 2,
            d_ff: 8,
            max_seq_len: 12,
            prefix_len: 3,
            seed: 9,
            ..ToyGlmConfig::new(0)
        };
        ToyModel::new(cfg, Vocabulary::build(["红女"])).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let bytes = to_bytes(&m);
        assert_eq!(&bytes[..8], MAGIC);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn rejects_damaged_input() {
        let bytes = to_bytes(&model());
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(from_bytes(b"nope").is_err());
        let mut versioned = bytes.clone();
        versioned[8] = 99;
        let err = from_bytes(&versioned).unwrap_err().to_string();
        assert!(err.contains("version 99"), "{err}");
        let mut extra = bytes;
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
    }
}
