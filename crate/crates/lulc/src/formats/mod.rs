//! On-disk formats. Rasters go to GeoTIFF when the path ends in `.tif` or
//! `.tiff` and to the LCRS container otherwise.

pub mod checkpoint;
pub mod geojson;
pub mod geotiff;
pub mod lcrs;
pub mod report;
pub mod scheme;

use std::path::Path;

use lulc_core::model::ProbRaster;
use lulc_core::{BandRaster, Extent, Grid, MaskRaster};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RasterKind {
    Mask,
    Image,
    Prob,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridJson {
    pub origin_x: f64,
    pub origin_y: f64,
    pub res: f64,
    pub width: usize,
    pub height: usize,
}

impl From<&Grid> for GridJson {
    fn from(g: &Grid) -> Self {
        GridJson {
            origin_x: g.origin_x,
            origin_y: g.origin_y,
            res: g.res,
            width: g.width,
            height: g.height,
        }
    }
}

impl GridJson {
    pub fn to_grid(&self) -> lulc_core::Result<Grid> {
        Grid::new(self.origin_x, self.origin_y, self.res, self.width, self.height)
    }
}

fn is_tiff(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("tif") || e.eq_ignore_ascii_case("tiff"))
}

pub fn write_mask(path: &Path, mask: &MaskRaster) -> Result<()> {
    if is_tiff(path) {
        geotiff::write_mask(path, mask)
    } else {
        lcrs::write_mask(path, mask)
    }
}

pub fn read_mask(path: &Path) -> Result<MaskRaster> {
    if is_tiff(path) {
        geotiff::read_mask(path)
    } else {
        lcrs::read_mask(path)
    }
}

pub fn write_image(path: &Path, image: &BandRaster) -> Result<()> {
    if is_tiff(path) {
        geotiff::write_image(path, image)
    } else {
        lcrs::write_image(path, image)
    }
}

pub fn read_image(path: &Path) -> Result<BandRaster> {
    if is_tiff(path) {
        geotiff::read_image(path)
    } else {
        lcrs::read_image(path)
    }
}

pub fn write_prob(path: &Path, probs: &ProbRaster) -> Result<()> {
    if is_tiff(path) {
        geotiff::write_prob(path, probs)
    } else {
        lcrs::write_prob(path, probs)
    }
}

pub fn read_prob(path: &Path) -> Result<ProbRaster> {
    if is_tiff(path) {
        geotiff::read_prob(path)
    } else {
        lcrs::read_prob(path)
    }
}

/// Grid of any raster file, without reading more than needed.
pub fn read_grid(path: &Path) -> Result<Grid> {
    if is_tiff(path) {
        geotiff::read_grid(path)
    } else {
        let h = lcrs::read_header(path)?;
        h.grid.to_grid().map_err(|e| Error::format(path, e))
    }
}

/// Parses `origin_x,origin_y,res,width,height`.
pub fn parse_grid(spec: &str) -> Result<Grid> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let bad = || Error::usage(format!("grid `{spec}` is not origin_x,origin_y,res,width,height"));
    if parts.len() != 5 {
        return Err(bad());
    }
    let f = |s: &str| s.parse::<f64>().map_err(|_| bad());
    let u = |s: &str| s.parse::<usize>().map_err(|_| bad());
    Grid::new(f(parts[0])?, f(parts[1])?, f(parts[2])?, u(parts[3])?, u(parts[4])?)
        .map_err(|e| Error::usage(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtentFile {
    pub col0: usize,
    pub row0: usize,
    pub cols: usize,
    pub rows: usize,
    pub grid_width: usize,
    pub grid_height: usize,
}

pub fn write_extent(path: &Path, extent: &Extent, grid: &Grid) -> Result<()> {
    let e = ExtentFile {
        col0: extent.col0,
        row0: extent.row0,
        cols: extent.cols,
        rows: extent.rows,
        grid_width: grid.width,
        grid_height: grid.height,
    };
    write_json(path, &e)
}

/// Reads an extent and checks it was cut from a grid of `grid`'s size.
pub fn read_extent(path: &Path, grid: &Grid) -> Result<Extent> {
    let e: ExtentFile = read_json(path)?;
    if (e.grid_width, e.grid_height) != (grid.width, grid.height) {
        return Err(Error::format(
            path,
            format!(
                "extent was cut from a {}x{} grid, not {}x{}",
                e.grid_width, e.grid_height, grid.width, grid.height
            ),
        ));
    }
    let extent = Extent::new(e.col0, e.row0, e.cols, e.rows);
    grid.check_extent(&extent).map_err(|err| Error::format(path, err))?;
    Ok(extent)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}
