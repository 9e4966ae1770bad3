//! Coarse-to-fine sample placement along rays.

use serde::{Deserialize, Serialize};

use super::density::DensityParams;
use super::ray::{evaluate_ray, Ray};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};

/// Samples closer than this after merging are dropped.
pub const DEDUP_EPS: f64 = 1e-9;
/// Total weight below which a round falls back to uniform placement.
const DEGENERATE_WEIGHT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n_uniform: usize,
    pub n_importance: usize,
    pub rounds: usize,
    /// Round `i < rounds − 1` uses `κ = base·2^i`, `β = base·2^{i+1}`.
    pub base_sharpness: f64,
}

impl SamplingConfig {
    /// 64 uniform + 5 × 16 importance samples.
    pub fn paper() -> Self {
        SamplingConfig { n_uniform: 64, n_importance: 16, rounds: 5, base_sharpness: 32.0 }
    }

    pub fn desk() -> Self {
        SamplingConfig { n_uniform: 32, n_importance: 8, rounds: 3, base_sharpness: 32.0 }
    }

    pub fn max_samples(&self) -> usize {
        self.n_uniform + self.rounds * self.n_importance
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_uniform < 2 || (self.rounds > 0 && self.n_importance == 0) || !(self.base_sharpness > 0.0) {
            return Err(Error::Config(format!("invalid sampling config {self:?}")));
        }
        Ok(())
    }

    /// Density parameters for importance round `round`.
    pub fn round_params(&self, round: usize, learned: &DensityParams) -> DensityParams {
        if round + 1 >= self.rounds {
            *learned
        } else {
            let k = self.base_sharpness * (1u64 << round) as f64;
            DensityParams { kappa: k, beta: 2.0 * k, ..*learned }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HierarchicalSamples {
    /// Final sorted, deduplicated positions.
    pub t: Vec<f64>,
    /// Positions proposed in each importance round.
    pub rounds: Vec<Vec<f64>>,
    /// Rounds that fell back to uniform placement.
    pub fallback_rounds: Vec<usize>,
}

/// Hierarchical sampling of many rays at once. `eval` receives all new
/// points of a round and returns `(udf, gradient)` for each.
pub fn hierarchical_sample_batch<F>(
    rays: &[Ray],
    config: &SamplingConfig,
    learned: &DensityParams,
    mut eval: F,
) -> Result<Vec<HierarchicalSamples>>
where
    F: FnMut(&[Point3]) -> Result<Vec<(f64, Vec3)>>,
{
    config.validate()?;
    let mut out: Vec<HierarchicalSamples> = Vec::with_capacity(rays.len());
    let mut cache: Vec<Vec<(f64, f64, Vec3)>> = Vec::with_capacity(rays.len());

    let mut pts = Vec::with_capacity(rays.len() * config.n_uniform);
    for ray in rays {
        pts.extend(ray.uniform_ts(config.n_uniform).into_iter().map(|t| ray.at(t)));
    }
    let vals = eval(&pts)?;
    check_len(&vals, pts.len())?;
    for (r, ray) in rays.iter().enumerate() {
        let ts = ray.uniform_ts(config.n_uniform);
        let base = r * config.n_uniform;
        cache.push(ts.iter().enumerate().map(|(k, &t)| (t, vals[base + k].0, vals[base + k].1)).collect());
        out.push(HierarchicalSamples::default());
    }

    for round in 0..config.rounds {
        let params = config.round_params(round, learned);
        let mut proposals = Vec::with_capacity(rays.len());
        for (r, ray) in rays.iter().enumerate() {
            let samples = &cache[r];
            let t: Vec<f64> = samples.iter().map(|s| s.0).collect();
            let udf: Vec<f64> = samples.iter().map(|s| s.1).collect();
            let grad: Vec<Vec3> = samples.iter().map(|s| s.2).collect();
            let set = evaluate_ray(r, ray.direction.vec(), &t, &udf, &grad, &params)?;
            let bins = &set.weight[..set.len() - 1];
            let proposal = match inverse_cdf(&t, bins, config.n_importance) {
                Some(p) => p,
                None => {
                    out[r].fallback_rounds.push(round);
                    stratified(ray.t_near, ray.t_far, config.n_importance)
                }
            };
            proposals.push(proposal);
        }
        let pts: Vec<Point3> = rays
            .iter()
            .zip(&proposals)
            .flat_map(|(ray, p)| p.iter().map(move |&t| ray.at(t)))
            .collect();
        let vals = eval(&pts)?;
        check_len(&vals, pts.len())?;
        let mut k = 0;
        for (r, proposal) in proposals.into_iter().enumerate() {
            for &t in &proposal {
                cache[r].push((t, vals[k].0, vals[k].1));
                k += 1;
            }
            merge(&mut cache[r]);
            out[r].rounds.push(proposal);
        }
    }
    for (r, o) in out.iter_mut().enumerate() {
        o.t = cache[r].iter().map(|s| s.0).collect();
    }
    Ok(out)
}

/// Single-ray convenience wrapper over [`hierarchical_sample_batch`].
pub fn hierarchical_sample<F>(field: F, ray: &Ray, config: &SamplingConfig, learned: &DensityParams) -> Result<HierarchicalSamples>
where
    F: Fn(Point3) -> (f64, Vec3),
{
    let mut v = hierarchical_sample_batch(std::slice::from_ref(ray), config, learned, |pts| {
        Ok(pts.iter().map(|&p| field(p)).collect())
    })?;
    Ok(v.pop().unwrap())
}

fn check_len<T>(vals: &[T], want: usize) -> Result<()> {
    if vals.len() != want {
        return Err(Error::Contract(format!("sampler: evaluator returned {} values for {want} points", vals.len())));
    }
    Ok(())
}

fn merge(samples: &mut Vec<(f64, f64, Vec3)>) {
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    samples.dedup_by(|b, a| b.0 - a.0 <= DEDUP_EPS);
}

/// `n` midpoints `(k + ½)/n` mapped linearly onto `[a, b]`.
pub fn stratified(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * (k as f64 + 0.5) / n as f64).collect()
}

/// Deterministic inverse-CDF sampling with `u_k = (k + ½)/n`; bin `j` spans
/// `[t_j, t_{j+1}]` with mass `w_j`. `None` when the total mass is negligible.
pub fn inverse_cdf(t: &[f64], w: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(w.len() + 1, t.len());
    let total: f64 = w.iter().sum();
    if !(total > DEGENERATE_WEIGHT) {
        return None;
    }
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    let mut below = 0.0;
    for k in 0..n {
        let target = total * (k as f64 + 0.5) / n as f64;
        while j + 1 < w.len() && below + w[j] < target {
            below += w[j];
            j += 1;
        }
        let frac = if w[j] > 0.0 { ((target - below) / w[j]).clamp(0.0, 1.0) } else { 0.5 };
        out.push(t[j] + frac * (t[j + 1] - t[j]));
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{plane_udf, DistanceField, AnalyticShape};
    use crate::geometry::Direction3;

    fn z_ray() -> Ray {
        Ray::new(Vec3::ZERO, Direction3::from_unit(Vec3::Z).unwrap(), 0.0, 2.0).unwrap()
    }

    fn plane(p: Point3) -> (f64, Vec3) {
        let s = plane_udf(p, Vec3::Z, 1.0);
        (s.distance, if s.degenerate { Vec3::ZERO } else { s.gradient })
    }

    #[test]
    fn paper_preset_yields_144() {
        let h = hierarchical_sample(plane, &z_ray(), &SamplingConfig::paper(), &DensityParams::new(64.0, 64.0)).unwrap();
        assert_eq!(h.t.len(), 144);
        assert!(h.t.windows(2).all(|w| w[1] - w[0] > DEDUP_EPS));
        assert!(h.fallback_rounds.is_empty());
    }

    #[test]
    fn far_field_falls_back_to_uniform() {
        let far = |_: Point3| (10.0, Vec3::Z);
        let cfg = SamplingConfig::paper();
        let h = hierarchical_sample(far, &z_ray(), &cfg, &DensityParams::new(20.0, 20.0)).unwrap();
        assert_eq!(h.fallback_rounds, (0..cfg.rounds).collect::<Vec<_>>());
        // Stratified proposals repeat every round, so only one copy survives.
        assert_eq!(h.t.len(), cfg.n_uniform + cfg.n_importance);
        let gaps: Vec<f64> = h.t.windows(2).map(|w| w[1] - w[0]).collect();
        let max = gaps.iter().cloned().fold(0.0, f64::max);
        assert!(max <= 2.0 / 63.0 + 1e-12);
    }

    #[test]
    fn importance_concentrates_at_plane() {
        let learned = DensityParams::new(400.0, 400.0);
        let h = hierarchical_sample(plane, &z_ray(), &SamplingConfig::paper(), &learned).unwrap();
        let last = h.rounds.last().unwrap();
        let near = last.iter().filter(|&&t| (t - 1.0).abs() <= 5.0 / learned.beta).count();
        assert!(2 * near >= last.len(), "{near} of {} near t*", last.len());
    }

    #[test]
    fn inverse_cdf_basics() {
        assert!(inverse_cdf(&[0.0, 1.0, 2.0], &[0.0, 0.0], 4).is_none());
        let s = inverse_cdf(&[0.0, 1.0, 2.0], &[0.0, 1.0], 4).unwrap();
        assert_eq!(s, vec![1.125, 1.375, 1.625, 1.875]);
        let s = inverse_cdf(&[0.0, 1.0, 2.0], &[1.0, 1.0], 2).unwrap();
        assert_eq!(s, vec![0.5, 1.5]);
    }

    #[test]
    fn batch_matches_single_ray() {
        let sphere = AnalyticShape::sphere(Vec3::ZERO, 0.5).unwrap();
        let f = |p: Point3| {
            let s = sphere.sample(p);
            (s.distance, s.gradient)
        };
        let rays: Vec<Ray> = (0..3)
            .map(|i| {
                let o = Vec3::new(0.1 * i as f64, -0.05, -2.0);
                Ray::through_unit_sphere(o, Direction3::from_unit(Vec3::Z).unwrap()).unwrap()
            })
            .collect();
        let cfg = SamplingConfig::desk();
        let learned = DensityParams::new(20.0, 20.0);
        let batch = hierarchical_sample_batch(&rays, &cfg, &learned, |pts| Ok(pts.iter().map(|&p| f(p)).collect())).unwrap();
        for (r, ray) in rays.iter().enumerate() {
            assert_eq!(batch[r], hierarchical_sample(f, ray, &cfg, &learned).unwrap());
        }
    }
}
