//! Checkpoint file format.
//!
//! ```text
//! BGEN1\n
//! {"version":1,"config":{…},"tensors":[{"name":…,"shape":[…]},…],"meta":{…}}\n
//! <little-endian f64 values, tensor by tensor in manifest order>
//! ```
//!
//! The manifest lists tensors sorted by name.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::params::{ModelConfig, Parameters};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::tasks::Direction;

pub const MAGIC: &[u8; 5] = b"BGEN1";
pub const FORMAT_VERSION: u32 = 1;

/// Training provenance stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Optimizer steps taken to produce the weights.
    #[serde(default)]
    pub step: usize,
    #[serde(default)]
    pub epoch: usize,
    /// Directions the model was trained on.
    #[serde(default)]
    pub directions: Vec<Direction>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    tensors: Vec<ManifestEntry>,
    #[serde(default)]
    meta: CheckpointMeta,
}

/// A loaded checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: CheckpointMeta,
}

pub fn to_bytes(model: &Model, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let header = Header {
        version: FORMAT_VERSION,
        config: model.config.clone(),
        tensors: model
            .params
            .iter()
            .map(|(name, t)| ManifestEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let mut out = Vec::with_capacity(model.params.num_scalars() * 8 + 4096);
    out.extend_from_slice(MAGIC);
    out.push(b'\n');
    serde_json::to_writer(&mut out, &header)?;
    out.push(b'\n');
    for (_, t) in model.params.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 1
        || &bytes[..MAGIC.len()] != MAGIC
        || bytes[MAGIC.len()] != b'\n'
    {
        return Err(Error::Checkpoint("bad magic (expected BGEN1)".into()));
    }
    let rest = &bytes[MAGIC.len() + 1..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&rest[..nl])
        .map_err(|e| Error::Checkpoint(format!("unreadable header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {} (expected {FORMAT_VERSION})",
            header.version
        )));
    }
    header.config.validate()?;
    let mut body = &rest[nl + 1..];
    let expected: usize = header
        .tensors
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    if body.len() != expected * 8 {
        return Err(Error::Checkpoint(format!(
            "payload has {} bytes, manifest needs {}",
            body.len(),
            expected * 8
        )));
    }
    let mut tensors = BTreeMap::new();
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        let (chunk, tail) = body.split_at(n * 8);
        body = tail;
        let data = chunk
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let t = Tensor::new(entry.shape, data)?;
        if tensors.insert(entry.name.clone(), t).is_some() {
            return Err(Error::Checkpoint(format!(
                "duplicate tensor `{}`",
                entry.name
            )));
        }
    }
    let params = Parameters::from_tensors(&header.config, tensors)?;
    if !params.is_finite() {
        return Err(Error::Checkpoint("non-finite parameter values".into()));
    }
    Ok(Checkpoint {
        model: Model {
            config: header.config,
            params,
        },
        meta: header.meta,
    })
}

pub fn save_checkpoint(model: &Model, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let bytes = to_bytes(model, meta)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile {
            path: path.to_path_buf(),
            what: "checkpoint".into(),
        },
        _ => Error::Io(e),
    })?;
    from_bytes(&bytes)
}
