//! Training objectives and their gradients w.r.t. the rendered quantities.
//!
//! Every `*_with_grad` function returns the loss value together with the
//! derivative of that (unweighted) value w.r.t. each input element.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Clamp applied to accumulated opacities before the cross entropy.
pub const OPACITY_CLAMP: f64 = 1e-6;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Patch SSIM.
    pub lambda0: f64,
    /// Eikonal.
    pub lambda1: f64,
    /// Iso-surface regularizer.
    pub lambda2: f64,
    /// Mask cross entropy.
    pub gamma: f64,
    /// Decay rate inside the iso-surface regularizer.
    pub tau: f64,
}

impl LossWeights {
    pub const DEFAULT_TAU: f64 = 25000.0;

    /// Multi-view scan setting, no masks.
    pub fn dtu() -> Self {
        LossWeights { lambda0: 0.1, lambda1: 0.1, lambda2: 0.0, gamma: 0.0, tau: Self::DEFAULT_TAU }
    }

    /// Garment setting, with masks.
    pub fn garment() -> Self {
        LossWeights { lambda0: 0.0, lambda1: 0.01, lambda2: 0.01, gamma: 0.1, tau: Self::DEFAULT_TAU }
    }

    pub fn validate(&self) -> Result<()> {
        let ws = [self.lambda0, self.lambda1, self.lambda2, self.gamma];
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("invalid loss weights {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub color: f64,
    pub patch: f64,
    pub eikonal: f64,
    pub iso_reg: f64,
    pub mask: f64,
    pub total: f64,
}

/// Unweighted loss components. `mask` is `None` when no masks are supplied.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub color: f64,
    pub patch: f64,
    pub eikonal: f64,
    pub iso_reg: f64,
    pub mask: Option<f64>,
}

pub fn total_loss(parts: &LossParts, w: &LossWeights) -> LossBreakdown {
    let mask = parts.mask.unwrap_or(0.0);
    let mut total = parts.color + w.lambda0 * parts.patch + w.lambda1 * parts.eikonal + w.lambda2 * parts.iso_reg;
    if parts.mask.is_some() {
        total += w.gamma * mask;
    }
    LossBreakdown {
        color: parts.color,
        patch: parts.patch,
        eikonal: parts.eikonal,
        iso_reg: parts.iso_reg,
        mask,
        total,
    }
}

fn same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::Contract(format!("{what}: batch sizes {a} and {b} must match and be non-zero")));
    }
    Ok(())
}

pub fn color_l1(rendered: &[[f64; 3]], truth: &[[f64; 3]]) -> Result<f64> {
    color_l1_with_grad(rendered, truth).map(|(v, _)| v)
}

/// Mean over rays of the channel-mean absolute error; the derivative at a
/// zero residual is taken as 0.
pub fn color_l1_with_grad(rendered: &[[f64; 3]], truth: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
    same_len(rendered.len(), truth.len(), "color_l1")?;
    let scale = 1.0 / (3.0 * rendered.len() as f64);
    let mut sum = 0.0;
    let mut grad = vec![[0.0; 3]; rendered.len()];
    for (i, (r, t)) in rendered.iter().zip(truth).enumerate() {
        for c in 0..3 {
            let d = r[c] - t[c];
            sum += d.abs();
            grad[i][c] = if d > 0.0 { scale } else if d < 0.0 { -scale } else { 0.0 };
        }
    }
    Ok((sum * scale, grad))
}

pub fn eikonal_loss(gradients: &[Vec3]) -> f64 {
    eikonal_with_grad(gradients).0
}

/// Mean of `(‖g‖ − 1)²`. A zero gradient gets a zero derivative.
pub fn eikonal_with_grad(gradients: &[Vec3]) -> (f64, Vec<Vec3>) {
    if gradients.is_empty() {
        return (0.0, Vec::new());
    }
    let inv = 1.0 / gradients.len() as f64;
    let mut sum = 0.0;
    let grad = gradients
        .iter()
        .map(|g| {
            let n = g.norm();
            sum += (n - 1.0) * (n - 1.0);
            if n > 0.0 {
                (2.0 * (n - 1.0) * inv / n) * *g
            } else {
                Vec3::ZERO
            }
        })
        .collect();
    (sum * inv, grad)
}

pub fn iso_surface_regularizer(udf: &[f64], tau: f64) -> f64 {
    iso_surface_with_grad(udf, tau).0
}

/// Mean of `exp(−τ f_u)` over all sample points.
pub fn iso_surface_with_grad(udf: &[f64], tau: f64) -> (f64, Vec<f64>) {
    if udf.is_empty() {
        return (0.0, Vec::new());
    }
    let inv = 1.0 / udf.len() as f64;
    let mut sum = 0.0;
    let grad = udf
        .iter()
        .map(|&u| {
            let e = (-tau * u).exp();
            sum += e;
            -tau * e * inv
        })
        .collect();
    (sum * inv, grad)
}

pub fn mask_bce(weight_sums: &[f64], masks: &[f64]) -> Result<f64> {
    mask_bce_with_grad(weight_sums, masks).map(|(v, _)| v)
}

/// Mean binary cross entropy between masks and clamped opacities; the
/// derivative is zero where the clamp is active.
pub fn mask_bce_with_grad(weight_sums: &[f64], masks: &[f64]) -> Result<(f64, Vec<f64>)> {
    same_len(weight_sums.len(), masks.len(), "mask_bce")?;
    let inv = 1.0 / weight_sums.len() as f64;
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(weight_sums.len());
    for (&o, &m) in weight_sums.iter().zip(masks) {
        let oc = o.clamp(OPACITY_CLAMP, 1.0 - OPACITY_CLAMP);
        sum -= m * oc.ln() + (1.0 - m) * (1.0 - oc).ln();
        grad.push(if oc == o { -(m / oc - (1.0 - m) / (1.0 - oc)) * inv } else { 0.0 });
    }
    Ok((sum * inv, grad))
}

pub fn patch_ssim_loss(rendered: &[[f64; 3]], truth: &[[f64; 3]]) -> Result<f64> {
    patch_ssim_with_grad(rendered, truth).map(|(v, _)| v)
}

/// `1 − SSIM` over a single window covering the patch, per channel, averaged
/// over channels. The gradient is w.r.t. `rendered`.
pub fn patch_ssim_with_grad(rendered: &[[f64; 3]], truth: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
    same_len(rendered.len(), truth.len(), "patch_ssim")?;
    let n = rendered.len() as f64;
    let mut grad = vec![[0.0; 3]; rendered.len()];
    let mut ssim_sum = 0.0;
    for c in 0..3 {
        let mx = rendered.iter().map(|p| p[c]).sum::<f64>() / n;
        let my = truth.iter().map(|p| p[c]).sum::<f64>() / n;
        let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
        for (x, y) in rendered.iter().zip(truth) {
            let (dx, dy) = (x[c] - mx, y[c] - my);
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
        }
        let (vx, vy, cxy) = (vx / n, vy / n, cxy / n);
        let a1 = 2.0 * mx * my + SSIM_C1;
        let a2 = 2.0 * cxy + SSIM_C2;
        let b1 = mx * mx + my * my + SSIM_C1;
        let b2 = vx + vy + SSIM_C2;
        let s = a1 * a2 / (b1 * b2);
        ssim_sum += s;
        for (i, (x, y)) in rendered.iter().zip(truth).enumerate() {
            let da1 = 2.0 * my / n;
            let da2 = 2.0 * (y[c] - my) / n;
            let db1 = 2.0 * mx / n;
            let db2 = 2.0 * (x[c] - mx) / n;
            let ds = (da1 * a2 + a1 * da2) / (b1 * b2) - s * (db1 / b1 + db2 / b2);
            grad[i][c] = -ds / 3.0;
        }
    }
    Ok((1.0 - ssim_sum / 3.0, grad))
}
