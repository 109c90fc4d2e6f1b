//! Checkpoints: an 8-byte little-endian header length, a JSON header
//! (names, shapes, offsets, model config, metadata) and the raw
//! little-endian `f32` payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unispoof_core::model::ModelConfig;
use unispoof_core::nn::ParamStore;
use unispoof_core::Tensor;

use crate::error::{CliError, Result};

pub const FORMAT: &str = "unispoof-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in values.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub tensors: Vec<TensorEntry>,
    pub model: ModelConfig,
    /// Free-form: checkpoint kind, class ids, tap, training history.
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub params: ParamStore<f32>,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::with_capacity(self.params.len());
        let mut payload = Vec::with_capacity(self.params.numel() * 4);
        let mut offset = 0;
        for (name, t) in self.params.iter() {
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset,
            });
            offset += t.numel();
            for v in t.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            dtype: "f32".into(),
            tensors,
            model: self.model.clone(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| CliError::Failed(e.to_string()))?;
        let mut out = Vec::with_capacity(8 + json.len() + payload.len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: &str| CliError::format(path, msg);
        let len = bytes
            .get(..8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")) as usize)
            .ok_or_else(|| bad("truncated header length"))?;
        let json = bytes.get(8..8 + len).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(json).map_err(|e| CliError::format(path, e))?;
        if header.format != FORMAT || header.version != VERSION || header.dtype != "f32" {
            return Err(bad("not a version-1 f32 unispoof checkpoint"));
        }
        let payload = &bytes[8 + len..];
        if payload.len() % 4 != 0 {
            return Err(bad("payload is not a whole number of f32 values"));
        }
        let values: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let mut params = ParamStore::new();
        let mut expected = 0;
        for e in &header.tensors {
            let n: usize = e.shape.iter().product();
            if e.offset != expected || e.offset + n > values.len() {
                return Err(bad("tensor offsets do not tile the payload"));
            }
            expected += n;
            let t = Tensor::new(&e.shape, values[e.offset..e.offset + n].to_vec())?;
            params.insert(e.name.clone(), t);
        }
        if expected != values.len() {
            return Err(bad("payload has trailing values"));
        }
        Ok(Self {
            model: header.model,
            params,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
