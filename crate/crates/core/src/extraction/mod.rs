//! Triangle-mesh extraction from unsigned distance grids, keeping open
//! boundaries open.

pub mod grid;
pub mod marching;
pub mod mesh;
mod tables;

pub use grid::{sample_grid, sample_grid_batch, ScalarGrid};
pub use marching::{default_surface_eps, udf_marching_cubes, ExtractionReport};
pub use mesh::{TriangleMesh, MIN_TRIANGLE_AREA};
