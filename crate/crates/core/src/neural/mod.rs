//! Trainable machinery: frequency encodings, the UDF and color MLPs with
//! exact reverse-mode gradients, Adam, and checkpoint files.

pub mod adam;
pub mod checkpoint;
pub mod encoding;
pub mod network;
pub mod real;

pub use adam::{adam_step, cosine_lr, AdamState, ParamGroup};
pub use checkpoint::Checkpoint;
pub use encoding::PositionalEncoding;
pub use network::{
    color_forward, udf_forward, udf_gradient, Architecture, ColorTape, NetworkParams, ParamLayout, UdfAdjoint,
    UdfOutput, UdfTape,
};
pub use real::Real;
