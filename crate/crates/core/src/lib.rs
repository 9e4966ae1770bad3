//! Reconstruction of open and closed surfaces from posed images through an
//! unsigned distance field (UDF) and differentiable volume rendering.
//!
//! Module map:
//!
//! - [`fields`]: analytic UDFs used as ground truth,
//! - [`neural`]: encodings, the UDF/color MLPs, exact gradients, Adam,
//! - [`rendering`]: UDF-induced density, visibility indicator, ray rendering
//!   and hierarchical sampling,
//! - [`losses`]: training objectives,
//! - [`extraction`]: open-surface marching cubes and mesh export,
//! - [`evaluation`]: Chamfer distance and PSNR,
//! - [`pipeline`]: datasets, training, reconstruction and rendering drivers.

pub mod error;
pub mod evaluation;
pub mod extraction;
pub mod fields;
pub mod geometry;
pub mod losses;
pub mod neural;
pub mod pipeline;
pub mod rendering;

pub use error::{Error, Result};
pub use geometry::{Direction3, Mat3, Point3, Vec3};
