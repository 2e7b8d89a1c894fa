//! File formats, configuration, tiling and the command-line driver for the
//! `lulc-core` pipeline.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod tiles;

pub use error::{Error, Result};
