//! Pixel grids, raster containers and categorical resampling.
//!
//! Grids are north-up with square pixels. Pixel `(col, row)` covers the world
//! rectangle `[origin_x + col*res, origin_x + (col+1)*res)` horizontally and
//! `(origin_y - (row+1)*res, origin_y - row*res]` vertically.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::floor;
use crate::{Error, Result};

/// North-up pixel grid anchored at its north-west corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    /// West edge, in meters.
    pub origin_x: f64,
    /// North edge, in meters.
    pub origin_y: f64,
    /// Meters per pixel.
    pub res: f64,
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub fn new(origin_x: f64, origin_y: f64, res: f64, width: usize, height: usize) -> Result<Self> {
        let grid = Grid {
            origin_x,
            origin_y,
            res,
            width,
            height,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.res > 0.0) || !self.res.is_finite() {
            return Err(Error::InvalidGrid(format!("resolution must be positive, got {}", self.res)));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total covered area in square meters.
    pub fn area(&self) -> f64 {
        (self.width * self.height) as f64 * self.res * self.res
    }

    pub fn max_x(&self) -> f64 {
        self.origin_x + self.width as f64 * self.res
    }

    pub fn min_y(&self) -> f64 {
        self.origin_y - self.height as f64 * self.res
    }

    /// Pixel containing world point `(x, y)`, or `None` when the point falls
    /// outside the grid.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let c = floor((x - self.origin_x) / self.res);
        let r = floor((self.origin_y - y) / self.res);
        if !(c >= 0.0 && r >= 0.0) {
            return None;
        }
        if c >= self.width as f64 || r >= self.height as f64 {
            return None;
        }
        Some((c as usize, r as usize))
    }

    #[inline]
    pub fn center_x(&self, col: usize) -> f64 {
        self.origin_x + (col as f64 + 0.5) * self.res
    }

    #[inline]
    pub fn center_y(&self, row: usize) -> f64 {
        self.origin_y - (row as f64 + 0.5) * self.res
    }

    #[inline]
    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        (self.center_x(col), self.center_y(row))
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn full_extent(&self) -> Extent {
        Extent {
            col0: 0,
            row0: 0,
            cols: self.width,
            rows: self.height,
        }
    }

    /// Grid covering `extent` of this grid at the same resolution.
    pub fn subgrid(&self, extent: &Extent) -> Result<Grid> {
        self.check_extent(extent)?;
        Grid::new(
            self.origin_x + extent.col0 as f64 * self.res,
            self.origin_y - extent.row0 as f64 * self.res,
            self.res,
            extent.cols,
            extent.rows,
        )
    }

    pub fn check_extent(&self, extent: &Extent) -> Result<()> {
        if extent.cols == 0 || extent.rows == 0 {
            return Err(Error::InvalidArgument("empty extent".into()));
        }
        if extent.col0 + extent.cols > self.width || extent.row0 + extent.rows > self.height {
            return Err(Error::InvalidArgument(format!(
                "extent {extent:?} exceeds {}x{} grid",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Same origin, scaled resolution, dimensions divided by `factor`
    /// (trailing partial blocks dropped).
    pub fn coarsen(&self, factor: usize) -> Result<Grid> {
        if factor == 0 {
            return Err(Error::InvalidArgument("factor must be >= 1".into()));
        }
        Grid::new(
            self.origin_x,
            self.origin_y,
            self.res * factor as f64,
            self.width / factor,
            self.height / factor,
        )
    }

    /// Same origin and extent at `factor` times finer resolution.
    pub fn refine(&self, factor: usize) -> Result<Grid> {
        if factor == 0 {
            return Err(Error::InvalidArgument("factor must be >= 1".into()));
        }
        Grid::new(
            self.origin_x,
            self.origin_y,
            self.res / factor as f64,
            self.width * factor,
            self.height * factor,
        )
    }

    /// Area of the world-space intersection between two grids, in m².
    pub fn overlap_area(&self, other: &Grid) -> f64 {
        let w = self.max_x().min(other.max_x()) - self.origin_x.max(other.origin_x);
        let h = self.origin_y.min(other.origin_y) - self.min_y().max(other.min_y());
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }
}

/// Rectangular window of a grid in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Extent {
    pub col0: usize,
    pub row0: usize,
    pub cols: usize,
    pub rows: usize,
}

impl Extent {
    pub fn new(col0: usize, row0: usize, cols: usize, rows: usize) -> Self {
        Extent { col0, row0, cols, rows }
    }

    #[inline]
    pub fn contains(&self, col: usize, row: usize) -> bool {
        col >= self.col0 && col < self.col0 + self.cols && row >= self.row0 && row < self.row0 + self.rows
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same window expressed on a grid `factor` times coarser. Partial
    /// coarse pixels on the trailing edges are dropped.
    pub fn coarsen(&self, factor: usize) -> Extent {
        let col0 = self.col0.div_ceil(factor);
        let row0 = self.row0.div_ceil(factor);
        let col1 = (self.col0 + self.cols) / factor;
        let row1 = (self.row0 + self.rows) / factor;
        Extent {
            col0,
            row0,
            cols: col1.saturating_sub(col0),
            rows: row1.saturating_sub(row0),
        }
    }
}

/// Single-band class-index raster. Value 0 always means unlabeled.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskRaster {
    pub grid: Grid,
    pub values: Vec<u8>,
}

impl MaskRaster {
    pub fn new(grid: Grid, values: Vec<u8>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "mask has {} values for a {}x{} grid",
                values.len(),
                grid.width,
                grid.height
            )));
        }
        Ok(MaskRaster { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        MaskRaster {
            grid,
            values: vec![0; grid.len()],
        }
    }

    pub fn filled(grid: Grid, class: u8) -> Self {
        MaskRaster {
            grid,
            values: vec![class; grid.len()],
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.values[row * self.grid.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: u8) {
        let w = self.grid.width;
        self.values[row * w + col] = value;
    }

    pub fn row(&self, row: usize) -> &[u8] {
        let w = self.grid.width;
        &self.values[row * w..(row + 1) * w]
    }

    pub fn labeled_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    pub fn window(&self, extent: &Extent) -> Result<MaskRaster> {
        let grid = self.grid.subgrid(extent)?;
        let mut values = Vec::with_capacity(extent.len());
        for r in extent.row0..extent.row0 + extent.rows {
            values.extend_from_slice(&self.row(r)[extent.col0..extent.col0 + extent.cols]);
        }
        Ok(MaskRaster { grid, values })
    }

    /// Copy with every pixel outside `extent` set to 0.
    pub fn restrict(&self, extent: &Extent) -> Result<MaskRaster> {
        self.grid.check_extent(extent)?;
        let mut out = self.clone();
        for r in 0..self.grid.height {
            for c in 0..self.grid.width {
                if !extent.contains(c, r) {
                    out.set(c, r, 0);
                }
            }
        }
        Ok(out)
    }

    pub fn max_value(&self) -> u8 {
        self.values.iter().copied().max().unwrap_or(0)
    }
}

/// Multi-band image. Values are band-sequential: band `b`, pixel `(col,row)`
/// lives at `b * width * height + row * width + col`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRaster {
    pub grid: Grid,
    pub bands: usize,
    pub values: Vec<f32>,
    pub nodata: Option<f32>,
}

impl BandRaster {
    pub fn new(grid: Grid, bands: usize, values: Vec<f32>) -> Result<Self> {
        grid.validate()?;
        if bands == 0 {
            return Err(Error::InvalidArgument("image needs at least one band".into()));
        }
        if values.len() != bands * grid.len() {
            return Err(Error::InvalidArgument(format!(
                "image has {} values, expected {} bands x {} pixels",
                values.len(),
                bands,
                grid.len()
            )));
        }
        Ok(BandRaster {
            grid,
            bands,
            values,
            nodata: None,
        })
    }

    pub fn zeros(grid: Grid, bands: usize) -> Self {
        BandRaster {
            grid,
            bands,
            values: vec![0.0; bands * grid.len()],
            nodata: None,
        }
    }

    #[inline]
    pub fn get(&self, band: usize, col: usize, row: usize) -> f32 {
        self.values[band * self.grid.len() + row * self.grid.width + col]
    }

    #[inline]
    pub fn set(&mut self, band: usize, col: usize, row: usize, value: f32) {
        let n = self.grid.len();
        let w = self.grid.width;
        self.values[band * n + row * w + col] = value;
    }

    pub fn band(&self, band: usize) -> &[f32] {
        let n = self.grid.len();
        &self.values[band * n..(band + 1) * n]
    }

    pub fn window(&self, extent: &Extent) -> Result<BandRaster> {
        let grid = self.grid.subgrid(extent)?;
        let mut values = Vec::with_capacity(extent.len() * self.bands);
        for b in 0..self.bands {
            let plane = self.band(b);
            for r in extent.row0..extent.row0 + extent.rows {
                let start = r * self.grid.width + extent.col0;
                values.extend_from_slice(&plane[start..start + extent.cols]);
            }
        }
        Ok(BandRaster {
            grid,
            bands: self.bands,
            values,
            nodata: self.nodata,
        })
    }
}

/// Nearest-neighbour resampling of a class mask onto `target`. Each target
/// pixel takes the class of the source pixel containing its center; centers
/// outside the source become 0.
pub fn resample_nearest(src: &MaskRaster, target: &Grid) -> Result<MaskRaster> {
    target.validate()?;
    if src.grid == *target {
        return Ok(src.clone());
    }
    let mut out = MaskRaster::zeros(*target);
    for row in 0..target.height {
        let y = target.center_y(row);
        for col in 0..target.width {
            let x = target.center_x(col);
            if let Some((c, r)) = src.grid.world_to_pixel(x, y) {
                out.set(col, row, src.get(c, r));
            }
        }
    }
    Ok(out)
}

/// Categorical block reduction. Each `factor`×`factor` block becomes its most
/// frequent nonzero class (lowest index on ties) when nonzero pixels cover
/// at least `min_coverage` of the block, 0 otherwise.
pub fn downsample_majority(src: &MaskRaster, factor: usize, min_coverage: f64) -> Result<MaskRaster> {
    if factor == 0 {
        return Err(Error::InvalidArgument("downsample factor must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&min_coverage) {
        return Err(Error::InvalidArgument(format!(
            "min_coverage must lie in [0,1], got {min_coverage}"
        )));
    }
    let grid = src.grid.coarsen(factor)?;
    let block = (factor * factor) as f64;
    let mut out = MaskRaster::zeros(grid);
    let mut counts = [0u32; 256];
    for orow in 0..grid.height {
        for ocol in 0..grid.width {
            counts.fill(0);
            let mut labeled = 0u32;
            for r in orow * factor..(orow + 1) * factor {
                let line = src.row(r);
                for &v in &line[ocol * factor..(ocol + 1) * factor] {
                    if v != 0 {
                        counts[v as usize] += 1;
                        labeled += 1;
                    }
                }
            }
            if labeled == 0 || (labeled as f64) < min_coverage * block {
                continue;
            }
            let mut best = 0usize;
            for (class, &n) in counts.iter().enumerate().skip(1) {
                if n > counts[best] {
                    best = class;
                }
            }
            out.set(ocol, orow, best as u8);
        }
    }
    Ok(out)
}
