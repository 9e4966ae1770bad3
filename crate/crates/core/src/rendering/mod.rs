//! UDF volume rendering: density from unsigned distances, the visibility
//! indicator that switches between the outside and occluded branches,
//! compositing, and hierarchical sampling.

pub mod density;
pub mod ray;
pub mod sampling;

pub use density::{
    existence_prob, logistic_pdf, sdf_induced_density, sigmoid_cdf, udf_density, DensityParams, IndicatorMode,
};
pub use ray::{
    composite, evaluate_ray, ray_backward, render_ray, visibility_indicator, Ray, RayAdjoint, RayGrads, RaySampleSet,
};
pub use sampling::{hierarchical_sample, hierarchical_sample_batch, HierarchicalSamples, SamplingConfig};
