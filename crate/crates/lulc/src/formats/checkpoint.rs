//! Model checkpoints.
//!
//! ```text
//! offset  size  content
//! 0       4     magic "LCMK"
//! 4       4     header length N, u32 little-endian
//! 8       N     UTF-8 JSON header (model spec, class scheme, input
//!               standardization, parameter count)
//! 8+N     4*P   parameters as little-endian f32, layer by layer: weights
//!               (row-major, output-major) then biases
//! ```

use std::path::Path;

use lulc_core::model::{Model, ModelSpec, Standardizer};
use lulc_core::ClassScheme;
use serde::{Deserialize, Serialize};

use super::scheme::SchemeFile;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LCMK";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub version: u32,
    pub radius: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub bands: usize,
    pub seed: u64,
    pub scheme: SchemeFile,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub param_count: usize,
}

pub fn write(path: &Path, model: &Model, scheme: &ClassScheme) -> Result<()> {
    let params = model.params();
    let header = Header {
        version: 1,
        radius: model.spec.radius,
        hidden: model.spec.hidden.clone(),
        classes: model.spec.classes,
        bands: model.spec.bands,
        seed: model.spec.seed,
        scheme: SchemeFile::from_scheme(scheme),
        mean: model.norm.mean.clone(),
        std: model.norm.std.clone(),
        param_count: params.len(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::format(path, e))?;
    let mut out = Vec::with_capacity(8 + json.len() + 4 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in params {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Stored parameters are f32; the returned model computes in f64 from them.
pub fn read(path: &Path) -> Result<(Model, ClassScheme)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "not a model checkpoint"));
    }
    let n = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    let json = bytes.get(8..8 + n).ok_or_else(|| Error::format(path, "truncated header"))?;
    let h: Header = serde_json::from_slice(json).map_err(|e| Error::format(path, format!("bad header: {e}")))?;
    if h.version != 1 {
        return Err(Error::format(path, format!("unsupported checkpoint version {}", h.version)));
    }
    let body = &bytes[8 + n..];
    if body.len() != 4 * h.param_count {
        return Err(Error::format(path, "parameter block has the wrong length"));
    }
    let params: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    let spec = ModelSpec {
        radius: h.radius,
        hidden: h.hidden,
        classes: h.classes,
        bands: h.bands,
        seed: h.seed,
    };
    let norm = Standardizer { mean: h.mean, std: h.std };
    let model = Model::from_params(spec, norm, &params).map_err(|e| Error::format(path, e))?;
    let scheme = h.scheme.to_scheme().map_err(|e| Error::format(path, e))?;
    if scheme.num_classes() != model.spec.classes {
        return Err(Error::format(path, "scheme and model disagree on class count"));
    }
    Ok((model, scheme))
}
