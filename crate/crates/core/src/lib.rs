//! Land-use / land-cover pipeline core.
//!
//! Everything in this crate is a pure function over in-memory rasters and
//! polygons: pixel grids and resampling, class schemes and rasterization of
//! sparse annotations, patch sampling and augmentation, a reference windowed
//! pixel classifier with masked weighted cross-entropy, teacher-to-student
//! label distillation, and the evaluation machinery (confusion matrices,
//! one-vs-all metrics, agreement matrices, area tables).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, threading and
//! the command line live in the companion `lulc` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
mod math;

pub mod dataset;
pub mod distill;
pub mod eval;
pub mod labels;
pub mod model;
pub mod raster;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use labels::{ClassScheme, LabelPolygon, Provenance, RemapTable};
pub use raster::{BandRaster, Extent, Grid, MaskRaster};
