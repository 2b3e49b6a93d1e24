//! Layered cloth reconstruction on a parametric body: latent unsigned
//! distance fields per garment, DensePose-style weak supervision, fitting,
//! meshing and evaluation.

pub mod body;
pub mod clothfield;
pub mod constants;
pub mod densepose;
pub mod error;
pub mod evaluation;
pub mod fitting;
pub mod geometry;
pub mod grid;
pub mod mesh;
pub mod meshing;
pub mod raster;
pub mod scene;
pub mod supervision;

pub use error::{Error, Result};
