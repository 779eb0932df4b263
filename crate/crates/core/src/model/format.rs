//! Canonical on-disk model format.
//!
//! A model directory holds four files:
//!
//! - `config.json`: the [`ModelConfig`] as pretty-printed JSON.
//! - `manifest.json`: one entry per tensor with `name`, `shape`, `dtype`
//!   (`"f32"` or `"f64"`), byte `offset` and `nbytes` into the blob.
//! - `weights.bin`: every tensor back to back, row-major, little-endian.
//! - `vocab.txt`: `vocab_size` UTF-8 strings, one per line.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::weights::{ModelWeights, NamedTensor};
use crate::model::{ModelBundle, Vocab};

pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "weights.bin";
pub const VOCAB_FILE: &str = "vocab.txt";

pub const FORMAT_NAME: &str = "provlens-weights";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub offset: u64,
    pub nbytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
}

/// Writes `bundle` into `dir`, creating it if needed.
pub fn save_model(bundle: &ModelBundle, dir: &Path, dtype: DType) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut blob = Vec::new();
    let mut entries = Vec::new();
    for (name, tensor) in bundle.weights.to_named() {
        let offset = blob.len() as u64;
        for &v in &tensor.data {
            match dtype {
                DType::F32 => blob.extend_from_slice(&(v as f32).to_le_bytes()),
                DType::F64 => blob.extend_from_slice(&v.to_le_bytes()),
            }
        }
        entries.push(TensorEntry {
            name,
            shape: tensor.shape,
            dtype,
            offset,
            nbytes: blob.len() as u64 - offset,
        });
    }
    let manifest = Manifest {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        blob: BLOB_FILE.into(),
        tensors: entries,
    };

    let mut vocab = String::new();
    for tok in bundle.vocab.tokens() {
        if tok.contains('\n') {
            return Err(Error::malformed("vocabulary", format!("token {tok:?} contains a newline")));
        }
        vocab.push_str(tok);
        vocab.push('\n');
    }

    write(dir, CONFIG_FILE, to_json(&bundle.config)?.as_bytes())?;
    write(dir, MANIFEST_FILE, to_json(&manifest)?.as_bytes())?;
    write(dir, BLOB_FILE, &blob)?;
    write(dir, VOCAB_FILE, vocab.as_bytes())?;
    Ok(())
}

/// Loads and validates a model directory.
pub fn load_model(dir: &Path) -> Result<ModelBundle> {
    let config: ModelConfig = read_json(&dir.join(CONFIG_FILE), "config")?;
    config.validate()?;
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE), "manifest")?;
    if manifest.format != FORMAT_NAME || manifest.version != FORMAT_VERSION {
        return Err(Error::malformed(
            "manifest",
            format!("unsupported format {} v{}", manifest.format, manifest.version),
        ));
    }
    let blob_path = dir.join(&manifest.blob);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;

    let mut tensors = BTreeMap::new();
    for entry in &manifest.tensors {
        let numel: usize = entry.shape.iter().product();
        let expected_bytes = (numel * entry.dtype.size()) as u64;
        if entry.nbytes != expected_bytes {
            return Err(Error::malformed(
                "manifest",
                format!(
                    "tensor {} declares {} bytes but shape {:?} needs {}",
                    entry.name, entry.nbytes, entry.shape, expected_bytes
                ),
            ));
        }
        let end = entry.offset.checked_add(entry.nbytes);
        let bytes = match end {
            Some(end) if end <= blob.len() as u64 => &blob[entry.offset as usize..end as usize],
            _ => {
                return Err(Error::malformed(
                    "manifest",
                    format!("tensor {} runs past the end of the blob", entry.name),
                ))
            }
        };
        let data = decode(bytes, entry.dtype);
        if tensors
            .insert(entry.name.clone(), NamedTensor::new(entry.shape.clone(), data))
            .is_some()
        {
            return Err(Error::malformed(
                "manifest",
                format!("duplicate tensor {}", entry.name),
            ));
        }
    }
    let weights = ModelWeights::from_named(&config, tensors)?;

    let vocab_path = dir.join(VOCAB_FILE);
    let text = fs::read_to_string(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
    let body = text.strip_suffix('\n').unwrap_or(&text);
    let tokens: Vec<String> = if body.is_empty() && config.vocab_size == 0 {
        Vec::new()
    } else {
        body.split('\n').map(str::to_string).collect()
    };
    if tokens.len() != config.vocab_size {
        return Err(Error::malformed(
            "vocabulary",
            format!("{} entries, config says {}", tokens.len(), config.vocab_size),
        ));
    }

    ModelBundle::new(config, weights, Vocab::new(tokens))
}

fn decode(bytes: &[u8], dtype: DType) -> Vec<f64> {
    match dtype {
        DType::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        DType::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::malformed("json", e))?;
    s.push('\n');
    Ok(s)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::malformed(what, e))
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}
