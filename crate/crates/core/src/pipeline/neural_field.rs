//! Forward evaluation of the learned field: batched UDF queries, sample
//! placement and inference-time ray rendering.

use crate::error::Result;
use crate::fields::{DistanceField, FieldSample};
use crate::geometry::{Point3, Vec3};
use crate::neural::{NetworkParams, Real};
use crate::rendering::{
    composite, evaluate_ray, hierarchical_sample_batch, DensityParams, IndicatorMode, Ray, RaySampleSet, SamplingConfig,
};

/// Points per network call when only values and gradients are needed.
pub const EVAL_CHUNK: usize = 4096;

pub fn to_real<T: Real>(p: Point3) -> [T; 3] {
    [T::of(p.x), T::of(p.y), T::of(p.z)]
}

pub fn from_real<T: Real>(v: [T; 3]) -> Vec3 {
    Vec3::new(v[0].f64(), v[1].f64(), v[2].f64())
}

/// `(udf, ∇udf)` at each point.
pub fn udf_eval<T: Real>(params: &NetworkParams<T>, pts: &[Point3]) -> Result<Vec<(f64, Vec3)>> {
    let mut out = Vec::with_capacity(pts.len());
    for chunk in pts.chunks(EVAL_CHUNK) {
        let x: Vec<[T; 3]> = chunk.iter().map(|&p| to_real(p)).collect();
        let tape = params.udf_forward_batch(&x)?;
        for i in 0..chunk.len() {
            out.push((tape.udf(i).f64(), from_real(tape.udf_gradient(i))));
        }
    }
    Ok(out)
}

/// Learned density parameters with the given indicator mode.
pub fn learned_density<T: Real>(params: &NetworkParams<T>, mode: IndicatorMode) -> DensityParams {
    DensityParams::new(params.kappa(), params.beta()).with_mode(mode)
}

/// Hierarchical sample positions for each ray under the learned field.
pub fn place_samples<T: Real>(
    params: &NetworkParams<T>,
    rays: &[Ray],
    sampling: &SamplingConfig,
    mode: IndicatorMode,
) -> Result<Vec<Vec<f64>>> {
    let learned = learned_density(params, mode);
    let hs = hierarchical_sample_batch(rays, sampling, &learned, |pts| udf_eval(params, pts))?;
    Ok(hs.into_iter().map(|h| h.t).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedRay {
    pub rgb: [f64; 3],
    pub opacity: f64,
    pub samples: RaySampleSet,
}

/// Forward rendering of rays at fixed sample positions.
pub fn render_at_samples<T: Real>(
    params: &NetworkParams<T>,
    rays: &[Ray],
    samples: &[Vec<f64>],
    density: &DensityParams,
    background: [f64; 3],
) -> Result<Vec<RenderedRay>> {
    let mut pts = Vec::new();
    let mut dirs = Vec::new();
    for (ray, ts) in rays.iter().zip(samples) {
        let d = to_real(ray.direction.vec());
        for &t in ts {
            pts.push(to_real(ray.at(t)));
            dirs.push(d);
        }
    }
    let tape = params.udf_forward_batch(&pts)?;
    let ctape = params.color_forward_batch(&pts, &dirs, tape.features())?;
    let mut out = Vec::with_capacity(rays.len());
    let mut base = 0;
    for (r, (ray, ts)) in rays.iter().zip(samples).enumerate() {
        let n = ts.len();
        let udf: Vec<f64> = (base..base + n).map(|i| tape.udf(i).f64()).collect();
        let grad: Vec<Vec3> = (base..base + n).map(|i| from_real(tape.udf_gradient(i))).collect();
        let colors: Vec<[f64; 3]> = (base..base + n).map(|i| ctape.rgb[i].map(|c| c.f64())).collect();
        let mut set = evaluate_ray(r, ray.direction.vec(), ts, &udf, &grad, density)?;
        let rgb = composite(&set, &colors, background);
        set.color = colors;
        out.push(RenderedRay { rgb, opacity: set.weight_sum(), samples: set });
        base += n;
    }
    Ok(out)
}

/// Samples and renders rays in chunks of `chunk` rays.
pub fn render_rays<T: Real>(
    params: &NetworkParams<T>,
    rays: &[Ray],
    sampling: &SamplingConfig,
    mode: IndicatorMode,
    background: [f64; 3],
    chunk: usize,
) -> Result<Vec<RenderedRay>> {
    let density = learned_density(params, mode);
    let mut out = Vec::with_capacity(rays.len());
    for group in rays.chunks(chunk.max(1)) {
        let ts = place_samples(params, group, sampling, mode)?;
        out.extend(render_at_samples(params, group, &ts, &density, background)?);
    }
    Ok(out)
}

/// The learned UDF as a [`DistanceField`], one network call per query.
pub struct NeuralField<'a, T> {
    pub params: &'a NetworkParams<T>,
}

impl<T: Real> DistanceField for NeuralField<'_, T> {
    fn sample(&self, p: Point3) -> FieldSample {
        match udf_eval(self.params, &[p]) {
            Ok(v) => FieldSample { distance: v[0].0, gradient: v[0].1, degenerate: false },
            Err(_) => FieldSample { distance: f64::NAN, gradient: Vec3::ZERO, degenerate: true },
        }
    }
}
