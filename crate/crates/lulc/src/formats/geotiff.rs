//! GeoTIFF reading and writing for north-up grids.
//!
//! The georeference is carried by `ModelPixelScale` and a single
//! `ModelTiepoint` anchoring pixel corner (0,0) at the grid origin. Files
//! with a `ModelTransformation` (rotation or shear) are rejected. Multi-band
//! rasters are written one single-sample page per band.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use lulc_core::model::ProbRaster;
use lulc_core::{BandRaster, Grid, MaskRaster};
use tiff::decoder::{Decoder, DecodingResult, Limits};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::tags::Tag;

use crate::{Error, Result};

const GDAL_NODATA: u16 = 42113;
/// GeoKey directory: version 1.1.0, one key, GTRasterTypeGeoKey = PixelIsArea.
const GEO_KEYS: [u16; 8] = [1, 1, 0, 1, 1025, 0, 1, 1];

fn fail(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::format(path, e)
}

enum Pages<'a> {
    U8(&'a [u8]),
    F32(Vec<&'a [f32]>),
    F64(Vec<Vec<f64>>),
}

fn write(path: &Path, grid: &Grid, pages: Pages<'_>, nodata: Option<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = TiffEncoder::new(BufWriter::new(file)).map_err(|e| fail(path, e))?;
    let (w, h) = (grid.width as u32, grid.height as u32);
    let scale = [grid.res, grid.res, 0.0];
    let tie = [0.0, 0.0, 0.0, grid.origin_x, grid.origin_y, 0.0];
    let nodata_text = nodata.map(|v| v.to_string());

    macro_rules! page {
        ($ct:ty, $data:expr) => {{
            let mut img = enc.new_image::<$ct>(w, h).map_err(|e| fail(path, e))?;
            let dir = img.encoder();
            dir.write_tag(Tag::ModelPixelScaleTag, &scale[..]).map_err(|e| fail(path, e))?;
            dir.write_tag(Tag::ModelTiepointTag, &tie[..]).map_err(|e| fail(path, e))?;
            dir.write_tag(Tag::GeoKeyDirectoryTag, &GEO_KEYS[..]).map_err(|e| fail(path, e))?;
            if let Some(t) = &nodata_text {
                dir.write_tag(Tag::Unknown(GDAL_NODATA), t.as_str()).map_err(|e| fail(path, e))?;
            }
            img.write_data($data).map_err(|e| fail(path, e))?;
        }};
    }

    match pages {
        Pages::U8(data) => page!(colortype::Gray8, data),
        Pages::F32(bands) => {
            for b in bands {
                page!(colortype::Gray32Float, b);
            }
        }
        Pages::F64(planes) => {
            for p in &planes {
                page!(colortype::Gray64Float, p);
            }
        }
    }
    Ok(())
}

pub fn write_mask(path: &Path, mask: &MaskRaster) -> Result<()> {
    write(path, &mask.grid, Pages::U8(&mask.values), None)
}

pub fn write_image(path: &Path, image: &BandRaster) -> Result<()> {
    let bands = (0..image.bands).map(|b| image.band(b)).collect();
    write(path, &image.grid, Pages::F32(bands), image.nodata.map(f64::from))
}

pub fn write_prob(path: &Path, probs: &ProbRaster) -> Result<()> {
    let planes = (0..probs.classes)
        .map(|k| probs.pixels().map(|p| p[k]).collect())
        .collect();
    write(path, &probs.grid, Pages::F64(planes), None)
}

struct Page {
    grid: Grid,
    data: DecodingResult,
    nodata: Option<f64>,
}

fn read_pages(path: &Path) -> Result<Vec<Page>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = Decoder::new(std::io::BufReader::new(file))
        .map_err(|e| fail(path, e))?
        .with_limits(Limits::unlimited());
    let mut pages = Vec::new();
    loop {
        let (w, h) = dec.dimensions().map_err(|e| fail(path, e))?;
        if dec.find_tag(Tag::ModelTransformationTag).map_err(|e| fail(path, e))?.is_some() {
            return Err(fail(path, "rotated or sheared geotransforms are not supported"));
        }
        let scale = dec
            .find_tag(Tag::ModelPixelScaleTag)
            .map_err(|e| fail(path, e))?
            .ok_or_else(|| fail(path, "missing ModelPixelScale tag"))?
            .into_f64_vec()
            .map_err(|e| fail(path, e))?;
        let tie = dec
            .find_tag(Tag::ModelTiepointTag)
            .map_err(|e| fail(path, e))?
            .ok_or_else(|| fail(path, "missing ModelTiepoint tag"))?
            .into_f64_vec()
            .map_err(|e| fail(path, e))?;
        if scale.len() < 2 || tie.len() < 6 {
            return Err(fail(path, "malformed georeference tags"));
        }
        if (scale[0] - scale[1]).abs() > 1e-9 * scale[0].abs() {
            return Err(fail(path, format!("non-square pixels {}x{}", scale[0], scale[1])));
        }
        let res = scale[0];
        let grid = Grid::new(
            tie[3] - tie[0] * res,
            tie[4] + tie[1] * res,
            res,
            w as usize,
            h as usize,
        )
        .map_err(|e| fail(path, e))?;
        let nodata = match dec.find_tag(Tag::Unknown(GDAL_NODATA)).map_err(|e| fail(path, e))? {
            Some(v) => v.into_string().ok().and_then(|s| s.trim_matches('\0').trim().parse().ok()),
            None => None,
        };
        let data = dec.read_image().map_err(|e| fail(path, e))?;
        pages.push(Page { grid, data, nodata });
        if !dec.more_images() {
            break;
        }
        dec.next_image().map_err(|e| fail(path, e))?;
    }
    if let Some(p) = pages.iter().find(|p| p.grid != pages[0].grid) {
        return Err(fail(path, format!("pages disagree on grid: {:?}", p.grid)));
    }
    Ok(pages)
}

pub fn read_grid(path: &Path) -> Result<Grid> {
    Ok(read_pages(path)?[0].grid)
}

pub fn read_mask(path: &Path) -> Result<MaskRaster> {
    let mut pages = read_pages(path)?;
    if pages.len() != 1 {
        return Err(fail(path, "a class mask must have exactly one band"));
    }
    let page = pages.remove(0);
    match page.data {
        DecodingResult::U8(v) if v.len() == page.grid.len() => Ok(MaskRaster::new(page.grid, v)?),
        _ => Err(fail(path, "a class mask must be single-sample 8-bit unsigned")),
    }
}

fn to_f64(path: &Path, data: DecodingResult, n: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = match data {
        DecodingResult::U8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F64(v) => v,
        _ => return Err(fail(path, "unsupported sample format")),
    };
    if v.len() != n {
        return Err(fail(path, "only single-sample pages are supported; write one page per band"));
    }
    Ok(v)
}

pub fn read_image(path: &Path) -> Result<BandRaster> {
    let pages = read_pages(path)?;
    let grid = pages[0].grid;
    let nodata = pages[0].nodata;
    let bands = pages.len();
    let mut values = Vec::with_capacity(grid.len() * bands);
    for p in pages {
        values.extend(to_f64(path, p.data, grid.len())?.into_iter().map(|v| v as f32));
    }
    let mut image = BandRaster::new(grid, bands, values)?;
    image.nodata = nodata.map(|v| v as f32);
    Ok(image)
}

pub fn read_prob(path: &Path) -> Result<ProbRaster> {
    let pages = read_pages(path)?;
    let grid = pages[0].grid;
    let k = pages.len();
    let n = grid.len();
    let mut values = vec![0.0; n * k];
    for (plane, p) in pages.into_iter().enumerate() {
        for (i, v) in to_f64(path, p.data, n)?.into_iter().enumerate() {
            values[i * k + plane] = v;
        }
    }
    Ok(ProbRaster::new(grid, k, values)?)
}
