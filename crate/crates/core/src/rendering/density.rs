//! Scalar kernels: the sigmoid CDF, the logistic density, the SDF-induced
//! density and its UDF counterpart, and the surface existence probability.
//!
//! The `*_partials` variants return derivatives alongside values; the ray
//! backward pass is assembled from them.

use serde::{Deserialize, Serialize};

/// Largest allowed surface existence probability.
pub const H_MAX: f64 = 1.0 - 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndicatorMode {
    /// Accumulate existence probabilities of every earlier sample.
    Naive,
    /// Ignore samples whose successor's UDF gradient still faces the ray.
    GradientAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityParams {
    /// Sharpness of the sigmoid in the SDF-induced density.
    pub kappa: f64,
    /// Sharpness of the logistic kernel behind the existence probability.
    pub beta: f64,
    /// Constant scale of the existence probability.
    pub alpha: f64,
    /// Lower bound applied to `|cos θ|`.
    pub cos_floor: f64,
    pub indicator_mode: IndicatorMode,
}

impl DensityParams {
    pub const DEFAULT_ALPHA: f64 = 20.0;
    pub const DEFAULT_COS_FLOOR: f64 = 1e-4;

    pub fn new(kappa: f64, beta: f64) -> Self {
        DensityParams {
            kappa,
            beta,
            alpha: Self::DEFAULT_ALPHA,
            cos_floor: Self::DEFAULT_COS_FLOOR,
            indicator_mode: IndicatorMode::GradientAware,
        }
    }

    pub fn with_mode(self, indicator_mode: IndicatorMode) -> Self {
        DensityParams { indicator_mode, ..self }
    }

    pub fn is_valid(&self) -> bool {
        self.kappa > 0.0
            && self.beta > 0.0
            && self.alpha > 0.0
            && (0.0..=0.1).contains(&self.cos_floor)
            && self.kappa.is_finite()
            && self.beta.is_finite()
    }
}

/// `1 / (1 + e^{-x})` without overflow.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `Φ_κ(x) = (1 + e^{-κx})^{-1}`
#[inline]
pub fn sigmoid_cdf(x: f64, kappa: f64) -> f64 {
    logistic(kappa * x)
}

/// `φ_β(x) = β e^{-βx} / (1 + e^{-βx})²`
#[inline]
pub fn logistic_pdf(x: f64, beta: f64) -> f64 {
    let e = (-beta * x.abs()).exp();
    beta * e / ((1.0 + e) * (1.0 + e))
}

/// `(φ, ∂φ/∂x, ∂φ/∂β)`
#[inline]
pub fn logistic_pdf_partials(x: f64, beta: f64) -> (f64, f64, f64) {
    let e = (-beta * x.abs()).exp();
    let q = e / ((1.0 + e) * (1.0 + e)); // s(1-s), s = logistic(βx)
    let one_minus_2s = if x >= 0.0 { (e - 1.0) / (1.0 + e) } else { (1.0 - e) / (1.0 + e) };
    let phi = beta * q;
    let d_x = beta * beta * q * one_minus_2s;
    let d_beta = q + beta * x * q * one_minus_2s;
    (phi, d_x, d_beta)
}

/// `κ · max(|cos θ|, floor) · (1 − Φ_κ(d))`. `d` is a signed distance; the
/// UDF density feeds `−f_u` on its occluded branch.
#[inline]
pub fn sdf_induced_density(distance: f64, cos_theta: f64, kappa: f64, cos_floor: f64) -> f64 {
    kappa * cos_theta.abs().max(cos_floor) * logistic(-kappa * distance)
}

/// Value and partials of [`sdf_induced_density`].
#[derive(Debug, Clone, Copy)]
pub struct OmegaPartials {
    pub value: f64,
    pub d_distance: f64,
    pub d_cos: f64,
    pub d_kappa: f64,
}

#[inline]
pub fn sdf_induced_density_partials(distance: f64, cos_theta: f64, kappa: f64, cos_floor: f64) -> OmegaPartials {
    let abs_c = cos_theta.abs();
    let (c_eff, dc) = if abs_c > cos_floor { (abs_c, cos_theta.signum()) } else { (cos_floor, 0.0) };
    let s = logistic(-kappa * distance);
    let q = s * (1.0 - s);
    OmegaPartials {
        value: kappa * c_eff * s,
        d_distance: -kappa * kappa * c_eff * q,
        d_cos: kappa * s * dc,
        d_kappa: c_eff * (s - kappa * distance * q),
    }
}

/// `h = 1 − exp(−α φ_β(f_u) δ)`, clamped to `[0, H_MAX]`.
#[inline]
pub fn existence_prob(udf: f64, delta: f64, params: &DensityParams) -> f64 {
    let x = params.alpha * logistic_pdf(udf, params.beta) * delta;
    (-(-x).exp_m1()).clamp(0.0, H_MAX)
}

/// `(h, ∂h/∂f_u, ∂h/∂β)`; derivatives vanish where the clamp is active.
#[inline]
pub fn existence_prob_partials(udf: f64, delta: f64, params: &DensityParams) -> (f64, f64, f64) {
    let (phi, d_x, d_beta) = logistic_pdf_partials(udf, params.beta);
    let x = params.alpha * phi * delta;
    let h = -(-x).exp_m1();
    if h >= H_MAX {
        return (H_MAX, 0.0, 0.0);
    }
    let dh_dphi = params.alpha * delta * (-x).exp();
    (h.max(0.0), dh_dphi * d_x, dh_dphi * d_beta)
}

/// `σ_u = Ψ Ω(f_u) + (1 − Ψ) Ω(−f_u)`
#[inline]
pub fn udf_density(udf: f64, cos_theta: f64, psi: f64, params: &DensityParams) -> f64 {
    let front = sdf_induced_density(udf, cos_theta, params.kappa, params.cos_floor);
    let back = sdf_induced_density(-udf, cos_theta, params.kappa, params.cos_floor);
    psi * front + (1.0 - psi) * back
}
