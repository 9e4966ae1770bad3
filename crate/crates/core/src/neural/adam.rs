use std::f64::consts::PI;
use std::ops::Range;

use super::real::Real;
use crate::error::{Error, Result};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps: DEFAULT_EPS,
        }
    }
}

/// A contiguous slice of parameters sharing one learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub range: Range<usize>,
    pub lr: f64,
}

/// One bias-corrected Adam update. Parameters outside every group keep
/// their values (their moments are still updated).
pub fn adam_step<T: Real>(params: &mut [T], grads: &[T], state: &mut AdamState<T>, groups: &[ParamGroup]) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Contract("adam_step: parameter, gradient and state sizes differ".into()));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient of parameter {i}")));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2) = (T::of(state.beta1), T::of(state.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - state.beta1), T::of(1.0 - state.beta2));
    for (m, (v, &g)) in state.m.iter_mut().zip(state.v.iter_mut().zip(grads)) {
        *m = b1 * *m + one_b1 * g;
        *v = b2 * *v + one_b2 * g * g;
    }
    let eps = T::of(state.eps);
    let inv_sqrt_bc2 = T::of(1.0 / bc2.sqrt());
    for group in groups {
        if group.range.end > params.len() {
            return Err(Error::Contract("adam_step: group range out of bounds".into()));
        }
        let step_size = T::of(group.lr / bc1);
        for i in group.range.clone() {
            let denom = state.v[i].sqrt() * inv_sqrt_bc2 + eps;
            params[i] -= step_size * state.m[i] / denom;
        }
    }
    Ok(())
}

/// Cosine decay to zero over `total` iterations after a linear warm-up
/// covering `warmup_fraction` of them.
pub fn cosine_lr(base: f64, iter: u64, total: u64, warmup_fraction: f64) -> f64 {
    if total == 0 {
        return base;
    }
    let warmup = (warmup_fraction * total as f64).round() as u64;
    if iter < warmup {
        return base * (iter + 1) as f64 / warmup as f64;
    }
    let span = (total - warmup).max(1) as f64;
    let progress = ((iter - warmup) as f64 / span).min(1.0);
    base * 0.5 * (1.0 + (PI * progress).cos())
}
