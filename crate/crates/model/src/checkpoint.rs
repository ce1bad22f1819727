//! Checkpoint file: an 8-byte little-endian header length, a JSON header
//! and a flat little-endian f32 payload.

use std::path::Path;

use repsense_core::{AxisScaler, Exercise, MetricKind};
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::network::Model;
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Offset into the payload, in f32 elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    scaler: AxisScaler,
    exercise: Option<Exercise>,
    metric: Option<MetricKind>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub scaler: AxisScaler,
    pub exercise: Option<Exercise>,
    pub metric: Option<MetricKind>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::with_capacity(self.model.params.len());
        let mut payload = Vec::with_capacity(self.model.num_params() * 4);
        let mut offset = 0;
        for (name, t) in self.model.params.iter() {
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape: t.shape(),
                offset,
            });
            offset += t.len();
            for &v in &t.data {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let header = Header {
            version: CHECKPOINT_VERSION,
            config: self.model.cfg.clone(),
            scaler: self.scaler.clone(),
            exercise: self.exercise,
            metric: self.metric,
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + json.len() + payload.len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| ModelError::Checkpoint(m.to_string());
        let len_bytes: [u8; 8] = bytes.get(..8).ok_or_else(|| corrupt("truncated header length"))?.try_into().unwrap();
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let json = bytes
            .get(8..8 + header_len)
            .ok_or_else(|| corrupt("truncated header"))?;
        let version: serde_json::Value = serde_json::from_slice(json)?;
        let found = version.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != CHECKPOINT_VERSION {
            return Err(ModelError::Version {
                found,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header: Header = serde_json::from_slice(json)?;
        let payload = &bytes[8 + header_len..];
        if payload.len() % 4 != 0 {
            return Err(corrupt("payload is not a whole number of f32 values"));
        }
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let mut params = ParamStore::default();
        for entry in &header.tensors {
            let [r, c] = entry.shape;
            let data = values
                .get(entry.offset..entry.offset + r * c)
                .ok_or_else(|| corrupt(&format!("tensor {} runs past the payload", entry.name)))?;
            params.insert(entry.name.clone(), Tensor::from_vec(r, c, data.to_vec()));
        }
        let model = Model::from_params(header.config, params)?;
        Ok(Self {
            model,
            scaler: header.scaler,
            exercise: header.exercise,
            metric: header.metric,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

/// Rounds every parameter to f32 precision, matching what a checkpoint
/// stores.
pub fn round_to_f32(params: &mut ParamStore) {
    for i in 0..params.len() {
        for v in &mut params.tensor_mut(i).data {
            *v = *v as f32 as f64;
        }
    }
}
