//! Plain raster container used when no GeoTIFF is wanted.
//!
//! ```text
//! offset  size  content
//! 0       4     magic "LCRS"
//! 4       4     header length N, u32 little-endian
//! 8       N     UTF-8 JSON header (see `Header`)
//! 8+N     ...   payload: bands one after another, each row-major,
//!               little-endian `dtype` samples
//! ```

use std::io::{Read, Write};
use std::path::Path;

use lulc_core::model::ProbRaster;
use lulc_core::{BandRaster, Grid, MaskRaster};
use serde::{Deserialize, Serialize};

use super::{GridJson, RasterKind};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LCRS";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub version: u32,
    pub kind: RasterKind,
    pub grid: GridJson,
    pub bands: usize,
    /// `u8`, `f32` or `f64`.
    pub dtype: String,
    pub nodata: Option<f64>,
}

impl Header {
    fn sample_size(&self) -> Option<usize> {
        match self.dtype.as_str() {
            "u8" => Some(1),
            "f32" => Some(4),
            "f64" => Some(8),
            _ => None,
        }
    }
}

fn encode(path: &Path, header: &Header, payload: &[u8]) -> Result<()> {
    let json = serde_json::to_vec(header).map_err(|e| Error::format(path, e))?;
    let mut out = Vec::with_capacity(8 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(payload);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_header(path: &Path) -> Result<Header> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = [0u8; 8];
    f.read_exact(&mut head).map_err(|e| Error::io(path, e))?;
    parse_prefix(path, &head)?;
    let n = u32::from_le_bytes([head[4], head[5], head[6], head[7]]) as usize;
    let mut json = vec![0u8; n];
    f.read_exact(&mut json).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&json).map_err(|e| Error::format(path, format!("bad header: {e}")))
}

fn parse_prefix(path: &Path, bytes: &[u8]) -> Result<usize> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "not an LCRS raster"));
    }
    Ok(u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize)
}

fn decode(path: &Path) -> Result<(Header, Grid, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let n = parse_prefix(path, &bytes)?;
    let body = bytes.get(8..8 + n).ok_or_else(|| Error::format(path, "truncated header"))?;
    let header: Header =
        serde_json::from_slice(body).map_err(|e| Error::format(path, format!("bad header: {e}")))?;
    if header.version != VERSION {
        return Err(Error::format(path, format!("unsupported version {}", header.version)));
    }
    let grid = header.grid.to_grid().map_err(|e| Error::format(path, e))?;
    let size = header
        .sample_size()
        .ok_or_else(|| Error::format(path, format!("unknown dtype `{}`", header.dtype)))?;
    let payload = bytes[8 + n..].to_vec();
    if payload.len() != grid.len() * header.bands * size {
        return Err(Error::format(
            path,
            format!("payload is {} bytes, expected {}", payload.len(), grid.len() * header.bands * size),
        ));
    }
    Ok((header, grid, payload))
}

fn expect(path: &Path, header: &Header, kind: RasterKind, dtype: &str) -> Result<()> {
    if header.kind != kind || header.dtype != dtype {
        return Err(Error::format(
            path,
            format!("expected a {kind:?} raster of {dtype}, found {:?} of {}", header.kind, header.dtype),
        ));
    }
    Ok(())
}

pub fn write_mask(path: &Path, mask: &MaskRaster) -> Result<()> {
    let header = Header {
        version: VERSION,
        kind: RasterKind::Mask,
        grid: GridJson::from(&mask.grid),
        bands: 1,
        dtype: "u8".into(),
        nodata: None,
    };
    encode(path, &header, &mask.values)
}

pub fn read_mask(path: &Path) -> Result<MaskRaster> {
    let (header, grid, payload) = decode(path)?;
    expect(path, &header, RasterKind::Mask, "u8")?;
    Ok(MaskRaster::new(grid, payload)?)
}

pub fn write_image(path: &Path, image: &BandRaster) -> Result<()> {
    let header = Header {
        version: VERSION,
        kind: RasterKind::Image,
        grid: GridJson::from(&image.grid),
        bands: image.bands,
        dtype: "f32".into(),
        nodata: image.nodata.map(f64::from),
    };
    let payload: Vec<u8> = image.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    encode(path, &header, &payload)
}

pub fn read_image(path: &Path) -> Result<BandRaster> {
    let (header, grid, payload) = decode(path)?;
    expect(path, &header, RasterKind::Image, "f32")?;
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut image = BandRaster::new(grid, header.bands, values)?;
    image.nodata = header.nodata.map(|v| v as f32);
    Ok(image)
}

/// Probabilities are stored one class plane per band, as f64.
pub fn write_prob(path: &Path, probs: &ProbRaster) -> Result<()> {
    let header = Header {
        version: VERSION,
        kind: RasterKind::Prob,
        grid: GridJson::from(&probs.grid),
        bands: probs.classes,
        dtype: "f64".into(),
        nodata: None,
    };
    let k = probs.classes;
    let mut payload = Vec::with_capacity(probs.values.len() * 8);
    for plane in 0..k {
        for px in probs.pixels() {
            payload.extend_from_slice(&px[plane].to_le_bytes());
        }
    }
    encode(path, &header, &payload)
}

pub fn read_prob(path: &Path) -> Result<ProbRaster> {
    let (header, grid, payload) = decode(path)?;
    expect(path, &header, RasterKind::Prob, "f64")?;
    let (k, n) = (header.bands, grid.len());
    let planes: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut values = vec![0.0; n * k];
    for plane in 0..k {
        for i in 0..n {
            values[i * k + plane] = planes[plane * n + i];
        }
    }
    Ok(ProbRaster::new(grid, k, values)?)
}
