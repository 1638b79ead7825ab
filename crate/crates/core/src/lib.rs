//! Kriging-based soft classification (KBSC) of coarse multispectral rasters.

pub mod assess;
pub mod baselines;
pub mod cli;
pub mod config;
pub mod error;
pub mod kbsc;
pub mod kriging;
pub mod linalg;
pub mod radiometry;
pub mod raster;
pub mod scalar;
pub mod signatures;
pub mod synth;
pub mod variogram;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Grid = raster::RasterGrid<f64>;
pub type Stack = raster::BandStack<f64>;
pub type Model = variogram::VariogramModel<f64>;
pub type Map = kbsc::ProbabilityMap<f64>;
