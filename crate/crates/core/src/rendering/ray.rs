//! Per-ray evaluation: density, visibility indicator, transmittance, weights,
//! compositing, and the matching reverse pass.

use std::io::Write;

use super::density::{
    existence_prob_partials, sdf_induced_density_partials, DensityParams, IndicatorMode,
};
use crate::error::{Error, Result};
use crate::fields::DistanceField;
use crate::geometry::{Direction3, Point3, Vec3};

/// Gradients shorter than this give `cos θ = +1`.
pub const MIN_GRADIENT_NORM: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3,
    pub direction: Direction3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn new(origin: Point3, direction: Direction3, t_near: f64, t_far: f64) -> Result<Self> {
        if !(t_near >= 0.0 && t_near < t_far && t_far.is_finite() && origin.is_finite()) {
            return Err(Error::Contract(format!("ray needs 0 <= t_near < t_far, got [{t_near}, {t_far}]")));
        }
        Ok(Ray { origin, direction, t_near, t_far })
    }

    /// Ray through the unit bounding sphere: `[m − 1, m + 1]` around the
    /// closest approach `m` to the origin, clamped at zero.
    pub fn through_unit_sphere(origin: Point3, direction: Direction3) -> Result<Self> {
        let mid = -origin.dot(direction.vec());
        Ray::new(origin, direction, (mid - 1.0).max(0.0), (mid + 1.0).max(1e-3))
    }

    pub fn at(&self, t: f64) -> Point3 {
        self.origin + t * self.direction.vec()
    }

    pub fn uniform_ts(&self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![0.5 * (self.t_near + self.t_far)];
        }
        let step = (self.t_far - self.t_near) / (n - 1) as f64;
        (0..n).map(|k| self.t_near + k as f64 * step).collect()
    }
}

/// Per-sample diagnostics of one rendered ray.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RaySampleSet {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub udf: Vec<f64>,
    pub gradient: Vec<Vec3>,
    pub cos_theta: Vec<f64>,
    pub mask: Vec<bool>,
    pub h: Vec<f64>,
    pub psi: Vec<f64>,
    pub sigma: Vec<f64>,
    pub alpha: Vec<f64>,
    pub transmittance: Vec<f64>,
    pub weight: Vec<f64>,
    /// Empty when the set was built without colors.
    pub color: Vec<[f64; 3]>,
}

impl RaySampleSet {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight.iter().sum()
    }

    pub fn argmax_weight(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weight.iter().enumerate() {
            if w > self.weight[best] {
                best = i;
            }
        }
        best
    }

    /// Checks the ordering and range invariants; returns the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        const TOL: f64 = 1e-12;
        let n = self.len();
        for i in 0..n {
            let vals = [self.udf[i], self.h[i], self.psi[i], self.sigma[i], self.alpha[i], self.transmittance[i], self.weight[i]];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(format!("non-finite value at sample {i}"));
            }
            if i > 0 {
                if self.t[i] <= self.t[i - 1] {
                    return Err(format!("t not increasing at {i}"));
                }
                if self.psi[i] > self.psi[i - 1] + TOL {
                    return Err(format!("psi increases at {i}"));
                }
                if self.transmittance[i] > self.transmittance[i - 1] + TOL {
                    return Err(format!("transmittance increases at {i}"));
                }
            }
            if !(0.0..1.0).contains(&self.h[i]) || !(0.0..=1.0).contains(&self.alpha[i]) {
                return Err(format!("h or alpha out of range at {i}"));
            }
            if !(0.0..=1.0).contains(&self.psi[i]) || !(0.0..=1.0).contains(&self.transmittance[i]) {
                return Err(format!("psi or T out of [0,1] at {i}"));
            }
            if self.sigma[i] < 0.0 || self.weight[i] < 0.0 || self.udf[i] < 0.0 {
                return Err(format!("negative sigma, weight or udf at {i}"));
            }
        }
        if self.weight_sum() > 1.0 + 1e-9 {
            return Err(format!("weights sum to {}", self.weight_sum()));
        }
        Ok(())
    }

    /// CSV with columns `t,udf,cos_theta,m,h,psi,sigma,T,w`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,udf,cos_theta,m,h,psi,sigma,T,w")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                self.t[i],
                self.udf[i],
                self.cos_theta[i],
                u8::from(self.mask[i]),
                self.h[i],
                self.psi[i],
                self.sigma[i],
                self.transmittance[i],
                self.weight[i]
            )?;
        }
        Ok(())
    }
}

fn cosine(gradient: Vec3, dir: Vec3) -> f64 {
    let n = gradient.norm();
    if n < MIN_GRADIENT_NORM {
        1.0
    } else {
        gradient.dot(dir) / n
    }
}

/// Builds the full sample set (without colors) from UDF values and
/// gradients at ascending positions `t`.
pub fn evaluate_ray(
    ray_id: usize,
    direction: Vec3,
    t: &[f64],
    udf: &[f64],
    gradient: &[Vec3],
    params: &DensityParams,
) -> Result<RaySampleSet> {
    let n = t.len();
    if n < 2 || udf.len() != n || gradient.len() != n {
        return Err(Error::Contract(format!(
            "ray {ray_id}: need >= 2 samples with matching udf/gradient lengths (t {n}, udf {}, gradient {})",
            udf.len(),
            gradient.len()
        )));
    }
    if let Some(i) = (1..n).find(|&i| t[i] <= t[i - 1]) {
        return Err(Error::Contract(format!("ray {ray_id}: sample positions not ascending at {i}")));
    }
    let mut s = RaySampleSet {
        t: t.to_vec(),
        udf: udf.to_vec(),
        gradient: gradient.to_vec(),
        ..Default::default()
    };
    s.delta = (0..n).map(|i| if i + 1 < n { t[i + 1] - t[i] } else { t[n - 1] - t[n - 2] }).collect();
    s.cos_theta = gradient.iter().map(|&g| cosine(g, direction)).collect();
    s.mask = (0..n)
        .map(|j| match params.indicator_mode {
            IndicatorMode::Naive => true,
            IndicatorMode::GradientAware => s.cos_theta[(j + 1).min(n - 1)] >= 0.0,
        })
        .collect();
    s.h = (0..n).map(|i| existence_prob_partials(udf[i], s.delta[i], params).0).collect();
    s.psi = visibility_indicator(&s.h, &s.mask);
    s.sigma = Vec::with_capacity(n);
    s.alpha = Vec::with_capacity(n);
    s.transmittance = Vec::with_capacity(n);
    s.weight = Vec::with_capacity(n);
    let mut trans = 1.0;
    for i in 0..n {
        let front = sdf_induced_density_partials(udf[i], s.cos_theta[i], params.kappa, params.cos_floor).value;
        let back = sdf_induced_density_partials(-udf[i], s.cos_theta[i], params.kappa, params.cos_floor).value;
        let sigma = s.psi[i] * front + (1.0 - s.psi[i]) * back;
        let alpha = -(-sigma * s.delta[i]).exp_m1();
        if !sigma.is_finite() || !alpha.is_finite() {
            return Err(Error::NonFinite(format!("ray {ray_id}: density at sample {i} (udf {})", udf[i])));
        }
        s.sigma.push(sigma);
        s.alpha.push(alpha);
        s.transmittance.push(trans);
        s.weight.push(trans * alpha);
        trans *= 1.0 - alpha;
    }
    Ok(s)
}

/// `Ψ_i = Π_{j<i} (1 − h_j m_j)`
pub fn visibility_indicator(h: &[f64], mask: &[bool]) -> Vec<f64> {
    let mut out = Vec::with_capacity(h.len());
    let mut psi = 1.0;
    for (&hj, &mj) in h.iter().zip(mask) {
        out.push(psi);
        if mj {
            psi *= 1.0 - hj;
        }
    }
    out
}

/// `Σ w_i c_i + (1 − Σ w) · background`
pub fn composite(set: &RaySampleSet, colors: &[[f64; 3]], background: [f64; 3]) -> [f64; 3] {
    let mut rgb = [0.0; 3];
    for (w, c) in set.weight.iter().zip(colors) {
        for k in 0..3 {
            rgb[k] += w * c[k];
        }
    }
    let rest = 1.0 - set.weight_sum();
    for k in 0..3 {
        rgb[k] += rest * background[k];
    }
    rgb
}

/// Renders a ray through an analytic field. Degenerate field samples get a
/// zero gradient, which the cosine treats as `+1`.
pub fn render_ray<F, C>(
    field: &F,
    color_fn: C,
    ray: &Ray,
    sample_ts: &[f64],
    params: &DensityParams,
    background: [f64; 3],
) -> Result<([f64; 3], RaySampleSet)>
where
    F: DistanceField + ?Sized,
    C: Fn(Point3, Vec3) -> [f64; 3],
{
    if sample_ts.first().is_some_and(|&t| t < ray.t_near - 1e-12) || sample_ts.last().is_some_and(|&t| t > ray.t_far + 1e-12) {
        return Err(Error::Contract("render_ray: samples outside [t_near, t_far]".into()));
    }
    let dir = ray.direction.vec();
    let mut udf = Vec::with_capacity(sample_ts.len());
    let mut grad = Vec::with_capacity(sample_ts.len());
    let mut colors = Vec::with_capacity(sample_ts.len());
    for &t in sample_ts {
        let p = ray.at(t);
        let fs = field.sample(p);
        udf.push(fs.distance);
        grad.push(if fs.degenerate { Vec3::ZERO } else { fs.gradient });
        colors.push(color_fn(p, dir));
    }
    let mut set = evaluate_ray(0, dir, sample_ts, &udf, &grad, params)?;
    let rgb = composite(&set, &colors, background);
    set.color = colors;
    Ok((rgb, set))
}

/// Upstream gradients of one ray: w.r.t. the composited color and the
/// accumulated opacity `Σ w`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RayAdjoint {
    pub color: [f64; 3],
    pub opacity: f64,
}

/// Gradients w.r.t. per-sample inputs and the two sharpness parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RayGrads {
    pub udf: Vec<f64>,
    pub gradient: Vec<Vec3>,
    pub color: Vec<[f64; 3]>,
    pub kappa: f64,
    pub beta: f64,
}

/// Reverse pass of [`evaluate_ray`] + [`composite`]. The mask is piecewise
/// constant and contributes no gradient.
pub fn ray_backward(
    set: &RaySampleSet,
    direction: Vec3,
    colors: &[[f64; 3]],
    background: [f64; 3],
    params: &DensityParams,
    adj: &RayAdjoint,
) -> RayGrads {
    let n = set.len();
    let mut g = RayGrads {
        udf: vec![0.0; n],
        gradient: vec![Vec3::ZERO; n],
        color: vec![[0.0; 3]; n],
        kappa: 0.0,
        beta: 0.0,
    };
    let mut w_bar = vec![0.0; n];
    for i in 0..n {
        let c = colors[i];
        w_bar[i] = adj.opacity;
        for k in 0..3 {
            w_bar[i] += adj.color[k] * (c[k] - background[k]);
            g.color[i][k] = set.weight[i] * adj.color[k];
        }
    }

    // w_i = T_i α_i with T_i = Π_{j<i} (1 − α_j)
    let mut psi_bar = vec![0.0; n];
    let mut cos_bar = vec![0.0; n];
    let mut suffix = 0.0;
    for i in (0..n).rev() {
        let a = set.alpha[i];
        let alpha_bar = set.transmittance[i] * (w_bar[i] - suffix);
        suffix = w_bar[i] * a + (1.0 - a) * suffix;
        let sigma_bar = alpha_bar * set.delta[i] * (1.0 - a);
        let (u, c, psi) = (set.udf[i], set.cos_theta[i], set.psi[i]);
        let front = sdf_induced_density_partials(u, c, params.kappa, params.cos_floor);
        let back = sdf_induced_density_partials(-u, c, params.kappa, params.cos_floor);
        psi_bar[i] = sigma_bar * (front.value - back.value);
        g.udf[i] += sigma_bar * (psi * front.d_distance - (1.0 - psi) * back.d_distance);
        cos_bar[i] = sigma_bar * (psi * front.d_cos + (1.0 - psi) * back.d_cos);
        g.kappa += sigma_bar * (psi * front.d_kappa + (1.0 - psi) * back.d_kappa);
    }

    // Ψ_i = Π_{j<i} (1 − q_j), q_j = h_j m_j
    let mut r = 0.0;
    for j in (0..n).rev() {
        let q = if set.mask[j] { set.h[j] } else { 0.0 };
        let q_bar = -set.psi[j] * r;
        r = psi_bar[j] + (1.0 - q) * r;
        if set.mask[j] {
            let (_, dh_du, dh_dbeta) = existence_prob_partials(set.udf[j], set.delta[j], params);
            g.udf[j] += q_bar * dh_du;
            g.beta += q_bar * dh_dbeta;
        }
    }

    for i in 0..n {
        let grad = set.gradient[i];
        let norm = grad.norm();
        if norm >= MIN_GRADIENT_NORM {
            g.gradient[i] = (cos_bar[i] / norm) * (direction - set.cos_theta[i] * (grad / norm));
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::AnalyticShape;
    use crate::rendering::density::{existence_prob, udf_density};

    fn plane_ray() -> (AnalyticShape, Ray) {
        // Plane z = 1, ray along +z from the origin: t* = 1.
        let plane = AnalyticShape::plane(Vec3::Z, 1.0).unwrap();
        let ray = Ray::new(Vec3::ZERO, Direction3::from_unit(Vec3::Z).unwrap(), 0.0, 2.0).unwrap();
        (plane, ray)
    }

    fn white(_: Point3, _: Vec3) -> [f64; 3] {
        [1.0; 3]
    }

    #[test]
    fn ray_validation() {
        let d = Direction3::from_unit(Vec3::X).unwrap();
        assert!(Ray::new(Vec3::ZERO, d, 1.0, 1.0).is_err());
        assert!(Ray::new(Vec3::ZERO, d, -0.1, 1.0).is_err());
        let r = Ray::through_unit_sphere(Vec3::new(-3.0, 0.0, 0.0), d).unwrap();
        assert!((r.t_near - 2.0).abs() < 1e-12 && (r.t_far - 4.0).abs() < 1e-12);
    }

    #[test]
    fn far_field_renders_background() {
        struct Far;
        impl DistanceField for Far {
            fn sample(&self, _: Point3) -> crate::fields::FieldSample {
                crate::fields::FieldSample { distance: 10.0, gradient: Vec3::Z, degenerate: false }
            }
        }
        let (_, ray) = plane_ray();
        let bg = [0.2, 0.4, 0.6];
        let (rgb, set) = render_ray(&Far, white, &ray, &ray.uniform_ts(64), &DensityParams::new(20.0, 20.0), bg).unwrap();
        assert!(set.weight_sum() < 1e-6);
        for k in 0..3 {
            assert!((rgb[k] - bg[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn opaque_first_sample_dominates() {
        // udf = 0 with Ψ = 1 gives σ = κ/2; with κ = 1e6 and δ = 0.1, α_1 ≈ 1.
        let t = [0.0, 0.1, 0.2, 0.3];
        let s = evaluate_ray(0, Vec3::Z, &t, &[0.0, 0.6, 0.7, 0.8], &[Vec3::Z; 4], &DensityParams::new(1e6, 20.0)).unwrap();
        assert!(s.weight[0] > 1.0 - 1e-9);
        let colors = [[0.9, 0.1, 0.3], [0.0; 3], [0.0; 3], [0.0; 3]];
        let rgb = composite(&s, &colors, [0.5; 3]);
        for k in 0..3 {
            assert!((rgb[k] - colors[0][k]).abs() < 1e-6);
        }
    }

    #[test]
    fn indicator_examples() {
        assert_eq!(visibility_indicator(&[0.0; 5], &[true; 5]), vec![1.0; 5]);
        let h = [1.0 - 1e-7, 0.0, 0.0];
        let psi = visibility_indicator(&h, &[true; 3]);
        assert!(psi[1] < 1e-6 && psi[2] < 1e-6);
        let psi = visibility_indicator(&h, &[false, true, true]);
        assert_eq!(psi, vec![1.0; 3]);
    }

    #[test]
    fn plane_indicator_drops_at_surface() {
        let (plane, ray) = plane_ray();
        let ts = ray.uniform_ts(512);
        let dt = ts[1] - ts[0];
        let p = DensityParams::new(400.0, 400.0);
        let first_below = |mode| {
            let (_, s) = render_ray(&plane, white, &ray, &ts, &p.with_mode(mode), [0.0; 3]).unwrap();
            s.t[s.psi.iter().position(|&v| v < 0.5).unwrap()]
        };
        assert!(first_below(IndicatorMode::Naive) < 1.0);
        assert!(first_below(IndicatorMode::GradientAware) >= 1.0 - dt / 2.0);
    }

    #[test]
    fn plane_weight_peaks_at_intersection() {
        let (plane, ray) = plane_ray();
        let ts = ray.uniform_ts(512);
        let dt = ts[1] - ts[0];
        let p = DensityParams::new(400.0, 400.0);
        let (_, aware) = render_ray(&plane, white, &ray, &ts, &p, [0.0; 3]).unwrap();
        let (_, naive) = render_ray(&plane, white, &ray, &ts, &p.with_mode(IndicatorMode::Naive), [0.0; 3]).unwrap();
        let ta = aware.t[aware.argmax_weight()];
        let tn = naive.t[naive.argmax_weight()];
        assert!((ta - 1.0).abs() <= dt, "aware argmax {ta}");
        assert!(tn <= ta - 2.0 * dt, "naive argmax {tn} vs {ta}");
        aware.check_invariants().unwrap();
        naive.check_invariants().unwrap();
    }

    #[test]
    fn csv_has_header_and_rows() {
        let (plane, ray) = plane_ray();
        let (_, s) = render_ray(&plane, white, &ray, &ray.uniform_ts(8), &DensityParams::new(20.0, 20.0), [0.0; 3]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("t,udf,cos_theta,m,h,psi,sigma,T,w\n"));
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = DensityParams::new(20.0, 20.0);
        assert!(evaluate_ray(3, Vec3::Z, &[0.0], &[0.1], &[Vec3::Z], &p).is_err());
        assert!(evaluate_ray(3, Vec3::Z, &[0.0, 0.0], &[0.1; 2], &[Vec3::Z; 2], &p).is_err());
        let e = evaluate_ray(7, Vec3::Z, &[0.0, 1.0], &[f64::NAN; 2], &[Vec3::Z; 2], &p).unwrap_err();
        assert!(e.to_string().contains("ray 7"));
    }

    /// Scalar loss used to check the reverse pass: a fixed linear functional
    /// of color and opacity.
    fn scalar_loss(t: &[f64], udf: &[f64], grad: &[Vec3], colors: &[[f64; 3]], p: &DensityParams, adj: &RayAdjoint) -> f64 {
        let dir = Vec3::new(0.36, -0.48, 0.8);
        let s = evaluate_ray(0, dir, t, udf, grad, p).unwrap();
        let rgb = composite(&s, colors, [0.1, 0.2, 0.3]);
        (0..3).map(|k| adj.color[k] * rgb[k]).sum::<f64>() + adj.opacity * s.weight_sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let dir = Vec3::new(0.36, -0.48, 0.8);
        let n = 12;
        let t: Vec<f64> = (0..n).map(|i| 0.1 * i as f64 + 0.013 * (i * i % 5) as f64).collect();
        let udf: Vec<f64> = (0..n).map(|i| (0.02 * i as f64 - 0.11).abs() + 0.003).collect();
        let grad: Vec<Vec3> = (0..n)
            .map(|i| Vec3::new(0.3 * (i as f64).sin(), 0.2, if i < 6 { -0.9 } else { 0.95 }))
            .collect();
        let colors: Vec<[f64; 3]> = (0..n).map(|i| [0.1 * i as f64 % 1.0, 0.5, 0.9 - 0.05 * i as f64]).collect();
        let adj = RayAdjoint { color: [0.7, -0.4, 1.1], opacity: 0.35 };
        for mode in [IndicatorMode::Naive, IndicatorMode::GradientAware] {
            let p = DensityParams::new(18.0, 25.0).with_mode(mode);
            let s = evaluate_ray(0, dir, &t, &udf, &grad, &p).unwrap();
            let g = ray_backward(&s, dir, &colors, [0.1, 0.2, 0.3], &p, &adj);
            let h = 1e-6;
            let check = |analytic: f64, plus: f64, minus: f64, what: &str| {
                let numeric = (plus - minus) / (2.0 * h);
                let err = (analytic - numeric).abs() / (1e-3 + analytic.abs().max(numeric.abs()));
                assert!(err < 1e-4, "{what}: analytic {analytic} numeric {numeric}");
            };
            for i in 0..n {
                let mut up = udf.clone();
                let mut um = udf.clone();
                up[i] += h;
                um[i] -= h;
                check(g.udf[i], scalar_loss(&t, &up, &grad, &colors, &p, &adj), scalar_loss(&t, &um, &grad, &colors, &p, &adj), "udf");
                for c in 0..3 {
                    let mut gp = grad.clone();
                    let mut gm = grad.clone();
                    let mut ap = gp[i].to_array();
                    let mut am = gm[i].to_array();
                    ap[c] += h;
                    am[c] -= h;
                    gp[i] = Vec3::from_array(ap);
                    gm[i] = Vec3::from_array(am);
                    // Keep every cosine away from the mask switch.
                    check(g.gradient[i][c], scalar_loss(&t, &udf, &gp, &colors, &p, &adj), scalar_loss(&t, &udf, &gm, &colors, &p, &adj), "gradient");
                    let mut cp = colors.clone();
                    let mut cm = colors.clone();
                    cp[i][c] += h;
                    cm[i][c] -= h;
                    check(g.color[i][c], scalar_loss(&t, &udf, &grad, &cp, &p, &adj), scalar_loss(&t, &udf, &grad, &cm, &p, &adj), "color");
                }
            }
            let pk = |k: f64| DensityParams { kappa: k, ..p };
            check(g.kappa, scalar_loss(&t, &udf, &grad, &colors, &pk(p.kappa + h), &adj), scalar_loss(&t, &udf, &grad, &colors, &pk(p.kappa - h), &adj), "kappa");
            let pb = |b: f64| DensityParams { beta: b, ..p };
            check(g.beta, scalar_loss(&t, &udf, &grad, &colors, &pb(p.beta + h), &adj), scalar_loss(&t, &udf, &grad, &colors, &pb(p.beta - h), &adj), "beta");
        }
    }

    #[test]
    fn density_consistent_with_scalar_kernels() {
        let (plane, ray) = plane_ray();
        let p = DensityParams::new(30.0, 30.0);
        let (_, s) = render_ray(&plane, white, &ray, &ray.uniform_ts(32), &p, [0.0; 3]).unwrap();
        for i in 0..s.len() {
            assert!((s.sigma[i] - udf_density(s.udf[i], s.cos_theta[i], s.psi[i], &p)).abs() < 1e-12);
            assert!((s.h[i] - existence_prob(s.udf[i], s.delta[i], &p)).abs() < 1e-15);
        }
    }
}
