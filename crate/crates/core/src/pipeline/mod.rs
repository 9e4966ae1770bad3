//! End-to-end drivers: scenes and synthetic datasets, training,
//! reconstruction, rendering and diagnostics.

pub mod camera;
pub mod config;
pub mod dataset;
pub mod images;
pub mod neural_field;
pub mod reconstruct;
pub mod scene;
pub mod train;

pub use camera::{camera_ring, load_cameras, save_cameras, Camera};
pub use config::KeyValues;
pub use dataset::{generate_dataset, render_dataset, sphere_trace, Dataset};
pub use images::RgbImage;
pub use scene::{SceneConfig, SceneField, Texture};
pub use neural_field::{render_rays, NeuralField, RenderedRay};
pub use train::{loss_and_grad, train, TrainBatch, TrainConfig, Trainer};
pub use reconstruct::{evaluate_mesh, extract_mesh, reconstruct, render_views, RenderOptions};
