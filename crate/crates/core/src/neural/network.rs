//! The UDF and color MLPs over a flat parameter buffer.
//!
//! Both networks work on row-major batches (one row per point) and keep a
//! tape of every intermediate needed for exact reverse-mode gradients. The
//! UDF network additionally computes its input gradient during the forward
//! pass and supports differentiating *through* that gradient, which is what
//! the eikonal loss and the cosine term of the density require.
//!
//! Flat parameter order:
//!
//! 1. UDF hidden layers `1..=H`, each as weight (`out×in`, row-major) then bias,
//! 2. UDF output layer (`1×width`) and bias,
//! 3. color hidden layers, then the color output layer (`3×width`) and bias,
//! 4. `log_kappa`, then `log_beta`.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::encoding::PositionalEncoding;
use super::real::{gemm, Op, Real};
use crate::error::{Error, Result};

/// Sharpness of the softplus used in the UDF network.
pub const SOFTPLUS_BETA: f64 = 100.0;
/// Radius of the sphere targeted by the geometric initialization.
pub const INIT_SPHERE_RADIUS: f64 = 0.5;
/// Initial value of both sharpness parameters.
pub const INIT_SHARPNESS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub udf_layers: usize,
    pub udf_width: usize,
    /// 1-based hidden layer whose output is concatenated with the encoded
    /// input before entering the next layer; 0 disables the skip.
    pub skip_after: usize,
    pub color_layers: usize,
    pub color_width: usize,
    pub pos_frequencies: usize,
    pub dir_frequencies: usize,
}

impl Architecture {
    /// 8×256 networks, skip after layer 4, 6/4 encoding frequencies.
    pub fn paper() -> Self {
        Architecture {
            udf_layers: 8,
            udf_width: 256,
            skip_after: 4,
            color_layers: 8,
            color_width: 256,
            pos_frequencies: 6,
            dir_frequencies: 4,
        }
    }

    /// 4×128 networks for desk-scale runs.
    pub fn desk() -> Self {
        Architecture {
            udf_layers: 4,
            udf_width: 128,
            skip_after: 2,
            color_layers: 4,
            color_width: 128,
            pos_frequencies: 6,
            dir_frequencies: 4,
        }
    }

    /// Tiny networks used by gradient checks.
    pub fn tiny(layers: usize, width: usize) -> Self {
        Architecture {
            udf_layers: layers,
            udf_width: width,
            skip_after: layers / 2,
            color_layers: layers,
            color_width: width,
            pos_frequencies: 2,
            dir_frequencies: 1,
        }
    }

    pub fn pos_encoding(&self) -> PositionalEncoding {
        PositionalEncoding::new(self.pos_frequencies, true)
    }

    pub fn dir_encoding(&self) -> PositionalEncoding {
        PositionalEncoding::new(self.dir_frequencies, true)
    }

    pub fn feature_dim(&self) -> usize {
        self.udf_width
    }

    fn has_skip(&self, layer: usize) -> bool {
        self.skip_after > 0 && layer == self.skip_after && layer < self.udf_layers
    }

    pub fn validate(&self) -> Result<()> {
        if self.udf_layers == 0 || self.color_layers == 0 || self.udf_width == 0 || self.color_width == 0
        {
            return Err(Error::Config("network layers and widths must be positive".into()));
        }
        Ok(())
    }
}

/// Offsets of one dense layer inside the flat buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseShape {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: usize,
    pub bias: usize,
}

impl DenseShape {
    fn weights<'a, T>(&self, p: &'a [T]) -> &'a [T] {
        &p[self.weight..self.weight + self.in_dim * self.out_dim]
    }

    fn biases<'a, T>(&self, p: &'a [T]) -> &'a [T] {
        &p[self.bias..self.bias + self.out_dim]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    /// Hidden layers followed by the output layer.
    pub udf: Vec<DenseShape>,
    pub color: Vec<DenseShape>,
    pub log_kappa: usize,
    pub log_beta: usize,
    pub len: usize,
}

impl ParamLayout {
    pub fn new(arch: &Architecture) -> Self {
        let mut cursor = 0;
        let mut dense = |in_dim: usize, out_dim: usize| {
            let shape = DenseShape { in_dim, out_dim, weight: cursor, bias: cursor + in_dim * out_dim };
            cursor += in_dim * out_dim + out_dim;
            shape
        };
        let e_pos = arch.pos_encoding().output_dim();
        let e_dir = arch.dir_encoding().output_dim();
        let w = arch.udf_width;

        let mut udf = Vec::with_capacity(arch.udf_layers + 1);
        for l in 0..arch.udf_layers {
            let in_dim = if l == 0 {
                e_pos
            } else if arch.has_skip(l) {
                w + e_pos
            } else {
                w
            };
            udf.push(dense(in_dim, w));
        }
        udf.push(dense(w, 1));

        let cw = arch.color_width;
        let mut color = Vec::with_capacity(arch.color_layers + 1);
        for l in 0..arch.color_layers {
            let in_dim = if l == 0 { e_pos + e_dir + arch.feature_dim() } else { cw };
            color.push(dense(in_dim, cw));
        }
        color.push(dense(cw, 3));

        let log_kappa = cursor;
        let log_beta = cursor + 1;
        ParamLayout { udf, color, log_kappa, log_beta, len: cursor + 2 }
    }

    /// Parameters owned by the UDF network (its own learning-rate group).
    pub fn udf_range(&self) -> Range<usize> {
        0..self.color[0].weight
    }

    /// Color network plus the two sharpness parameters.
    pub fn other_range(&self) -> Range<usize> {
        self.color[0].weight..self.len
    }
}

/// All trainable values of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub arch: Architecture,
    pub layout: ParamLayout,
    pub values: Vec<T>,
}

impl<T: Real> NetworkParams<T> {
    pub fn zeros(arch: Architecture) -> Self {
        let layout = ParamLayout::new(&arch);
        let values = vec![T::zero(); layout.len];
        NetworkParams { arch, layout, values }
    }

    /// Geometric initialization: the UDF network starts as (approximately)
    /// the signed distance to a sphere of radius 0.5, whose absolute value
    /// is a valid UDF. The color network uses the usual fan-in uniform init.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut p = NetworkParams::<f64>::zeros(arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = p.layout.clone();
        let e_pos = arch.pos_encoding().output_dim();
        let n_hidden = arch.udf_layers;

        for (l, shape) in layout.udf.iter().enumerate() {
            let w = &mut p.values[shape.weight..shape.weight + shape.in_dim * shape.out_dim];
            if l == n_hidden {
                let mean = std::f64::consts::PI.sqrt() / (shape.in_dim as f64).sqrt();
                let normal = Normal::new(mean, 1e-4).unwrap();
                w.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
                p.values[shape.bias] = -INIT_SPHERE_RADIUS;
                continue;
            }
            let std = 2f64.sqrt() / (shape.out_dim as f64).sqrt();
            let normal = Normal::new(0.0, std).unwrap();
            w.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
            // Only the raw xyz part of the encoding starts connected.
            let enc_start = if l == 0 {
                Some(0)
            } else if arch.has_skip(l) {
                Some(shape.in_dim - e_pos)
            } else {
                None
            };
            if let Some(start) = enc_start {
                for row in 0..shape.out_dim {
                    let r = &mut w[row * shape.in_dim..(row + 1) * shape.in_dim];
                    r[start + 3..start + e_pos].iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }

        for shape in &layout.color {
            let bound = 1.0 / (shape.in_dim as f64).sqrt();
            let uni = Uniform::new_inclusive(-bound, bound);
            for v in &mut p.values[shape.weight..shape.bias + shape.out_dim] {
                *v = uni.sample(&mut rng);
            }
        }

        p.values[layout.log_kappa] = INIT_SHARPNESS.ln();
        p.values[layout.log_beta] = INIT_SHARPNESS.ln();
        p.cast()
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        NetworkParams {
            arch: self.arch,
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    pub fn kappa(&self) -> f64 {
        self.values[self.layout.log_kappa].f64().exp()
    }

    pub fn beta(&self) -> f64 {
        self.values[self.layout.log_beta].f64().exp()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn zero_grads(&self) -> Vec<T> {
        vec![T::zero(); self.layout.len]
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Second derivative of softplus from its first.
#[inline]
fn softplus_d2<T: Real>(s: T) -> T {
    T::of(SOFTPLUS_BETA) * s * (T::one() - s)
}

fn ensure_finite<T: Real>(values: &[T], what: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what()))
    }
}

/// `out (n×out_dim) = input (n×in_dim) · Wᵀ + b`
fn dense_forward<T: Real>(shape: &DenseShape, params: &[T], input: &[T], n: usize, out: &mut Vec<T>) {
    out.clear();
    let b = shape.biases(params);
    for _ in 0..n {
        out.extend_from_slice(b);
    }
    gemm(n, shape.in_dim, shape.out_dim, input, Op::N, shape.weights(params), Op::T, out, T::one());
}

/// Accumulates `Wᵀ`-grad `adj_outᵀ · input` and the bias gradient.
fn dense_param_grad<T: Real>(shape: &DenseShape, adj_out: &[T], input: &[T], n: usize, grads: &mut [T]) {
    let (wg, rest) = grads[shape.weight..].split_at_mut(shape.in_dim * shape.out_dim);
    gemm(shape.out_dim, n, shape.in_dim, adj_out, Op::T, input, Op::N, wg, T::one());
    let bg = &mut rest[..shape.out_dim];
    for row in adj_out.chunks_exact(shape.out_dim) {
        for (g, a) in bg.iter_mut().zip(row) {
            *g += *a;
        }
    }
}

/// `out (n×in_dim) = adj (n×out_dim) · W`
fn dense_input_grad<T: Real>(shape: &DenseShape, params: &[T], adj: &[T], n: usize, out: &mut Vec<T>) {
    out.resize(n * shape.in_dim, T::zero());
    gemm(n, shape.out_dim, shape.in_dim, adj, Op::N, shape.weights(params), Op::N, out, T::zero());
}

/// Everything a batched UDF forward pass keeps for the backward pass.
#[derive(Debug, Clone)]
pub struct UdfTape<T> {
    pub n: usize,
    /// Encoded inputs, `n × E`.
    enc: Vec<T>,
    /// Input matrix of each hidden layer, plus the output layer input (the
    /// last hidden activation, which doubles as the feature vector).
    inputs: Vec<Vec<T>>,
    /// Softplus derivative at each hidden pre-activation.
    slope: Vec<Vec<T>>,
    /// `∂raw/∂a_l` for each hidden activation.
    grad_act: Vec<Vec<T>>,
    /// `∂raw/∂z_l` for each hidden pre-activation.
    grad_pre: Vec<Vec<T>>,
    /// Signed network output.
    pub raw: Vec<T>,
    /// `∇_x raw` per point.
    pub grad_raw: Vec<[T; 3]>,
}

impl<T: Real> UdfTape<T> {
    /// `|raw|`
    pub fn udf(&self, i: usize) -> T {
        self.raw[i].abs()
    }

    /// `sign(raw)` with `sign(0) = +1`.
    pub fn sign(&self, i: usize) -> T {
        if self.raw[i] >= T::zero() {
            T::one()
        } else {
            -T::one()
        }
    }

    /// Gradient of `|raw|`.
    pub fn udf_gradient(&self, i: usize) -> [T; 3] {
        let s = self.sign(i);
        let g = self.grad_raw[i];
        [s * g[0], s * g[1], s * g[2]]
    }

    /// Feature vectors, `n × width`.
    pub fn features(&self) -> &[T] {
        self.inputs.last().unwrap()
    }

    pub fn feature(&self, i: usize) -> &[T] {
        let f = self.features();
        let w = f.len() / self.n.max(1);
        &f[i * w..(i + 1) * w]
    }
}

/// Upstream adjoints for [`NetworkParams::udf_backward`], expressed w.r.t.
/// the unsigned value `|raw|` and its gradient.
pub struct UdfAdjoint<'a, T> {
    pub udf: &'a [T],
    /// `n × width`, or `None` when the features are unused.
    pub feature: Option<&'a [T]>,
    /// Per-point adjoint of the UDF gradient, or `None`.
    pub gradient: Option<&'a [[T; 3]]>,
}

#[derive(Debug, Clone)]
pub struct ColorTape<T> {
    pub n: usize,
    inputs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    pub rgb: Vec<[T; 3]>,
}

impl<T: Real> NetworkParams<T> {
    /// Batched UDF forward pass with input gradients.
    pub fn udf_forward_batch(&self, points: &[[T; 3]]) -> Result<UdfTape<T>> {
        let arch = &self.arch;
        let p = &self.values;
        let n = points.len();
        let enc_def = arch.pos_encoding();
        let e = enc_def.output_dim();
        let w = arch.udf_width;
        let h = arch.udf_layers;
        let inv_sqrt2 = T::of(std::f64::consts::FRAC_1_SQRT_2);

        let mut enc = vec![T::zero(); n * e];
        for (row, x) in enc.chunks_exact_mut(e).zip(points) {
            enc_def.encode_into(*x, row);
        }

        let mut inputs: Vec<Vec<T>> = Vec::with_capacity(h + 1);
        let mut slope: Vec<Vec<T>> = Vec::with_capacity(h);
        inputs.push(enc.clone());
        for l in 0..h {
            let shape = &self.layout.udf[l];
            let mut z = Vec::new();
            dense_forward(shape, p, &inputs[l], n, &mut z);
            ensure_finite(&z, || format!("udf hidden layer {}", l + 1))?;
            let mut act = vec![T::zero(); z.len()];
            let mut sl = vec![T::zero(); z.len()];
            T::softplus_into(&z, SOFTPLUS_BETA, &mut act, &mut sl);
            let next = if arch.has_skip(l + 1) {
                let mut cat = Vec::with_capacity(n * (w + e));
                for (a_row, e_row) in act.chunks_exact(w).zip(enc.chunks_exact(e)) {
                    cat.extend(a_row.iter().map(|&v| v * inv_sqrt2));
                    cat.extend(e_row.iter().map(|&v| v * inv_sqrt2));
                }
                cat
            } else {
                act
            };
            inputs.push(next);
            slope.push(sl);
        }

        let out_shape = &self.layout.udf[h];
        let mut raw = Vec::new();
        dense_forward(out_shape, p, &inputs[h], n, &mut raw);
        ensure_finite(&raw, || "udf output layer".to_string())?;

        // Input gradient: backpropagate d raw / d (.) with unit seed.
        let w_out = out_shape.weights(p);
        let mut grad_act: Vec<Vec<T>> = vec![Vec::new(); h];
        let mut grad_pre: Vec<Vec<T>> = vec![Vec::new(); h];
        let mut ga0 = vec![T::zero(); n * e];
        let mut ga: Vec<T> = w_out.iter().copied().cycle().take(n * w).collect();
        let mut gin = Vec::new();
        for l in (0..h).rev() {
            let gz: Vec<T> = ga.iter().zip(&slope[l]).map(|(&g, &d)| g * d).collect();
            dense_input_grad(&self.layout.udf[l], p, &gz, n, &mut gin);
            grad_act[l] = std::mem::take(&mut ga);
            grad_pre[l] = gz;
            if l == 0 {
                for (a, b) in ga0.iter_mut().zip(&gin) {
                    *a += *b;
                }
            } else if arch.has_skip(l) {
                let width = w + e;
                let mut next = Vec::with_capacity(n * w);
                for (row, acc) in gin.chunks_exact(width).zip(ga0.chunks_exact_mut(e)) {
                    next.extend(row[..w].iter().map(|&v| v * inv_sqrt2));
                    for (a, &b) in acc.iter_mut().zip(&row[w..]) {
                        *a += b * inv_sqrt2;
                    }
                }
                ga = next;
            } else {
                ga = gin.clone();
            }
        }
        let grad_raw: Vec<[T; 3]> = enc
            .chunks_exact(e)
            .zip(ga0.chunks_exact(e))
            .map(|(er, gr)| enc_def.pullback(er, gr))
            .collect();
        if grad_raw.iter().any(|g| !g.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("udf input gradient".into()));
        }

        Ok(UdfTape { n, enc, inputs, slope, grad_act, grad_pre, raw, grad_raw })
    }

    /// Accumulates into `grads` the parameter gradient of a scalar loss given
    /// its adjoints w.r.t. `|raw|`, the features and `∇|raw|`.
    pub fn udf_backward(&self, tape: &UdfTape<T>, adj: &UdfAdjoint<'_, T>, grads: &mut [T]) -> Result<()> {
        let n = tape.n;
        let w = self.arch.udf_width;
        if adj.udf.len() != n
            || adj.feature.is_some_and(|f| f.len() != n * w)
            || adj.gradient.is_some_and(|g| g.len() != n)
            || grads.len() != self.layout.len
        {
            return Err(Error::Contract("udf_backward: adjoint shapes do not match the tape".into()));
        }
        let raw_bar: Vec<T> = (0..n).map(|i| tape.sign(i) * adj.udf[i]).collect();
        let gx_bar: Option<Vec<[T; 3]>> = adj.gradient.map(|g| {
            (0..n)
                .map(|i| {
                    let s = tape.sign(i);
                    [s * g[i][0], s * g[i][1], s * g[i][2]]
                })
                .collect()
        });
        self.udf_backward_raw(tape, &raw_bar, adj.feature, gx_bar.as_deref(), grads);
        Ok(())
    }

    /// Same as [`Self::udf_backward`] but with adjoints w.r.t. the signed
    /// output and its gradient.
    pub fn udf_backward_raw(
        &self,
        tape: &UdfTape<T>,
        raw_bar: &[T],
        feat_bar: Option<&[T]>,
        gx_bar: Option<&[[T; 3]]>,
        grads: &mut [T],
    ) {
        let arch = &self.arch;
        let p = &self.values;
        let n = tape.n;
        let h = arch.udf_layers;
        let w = arch.udf_width;
        let enc_def = arch.pos_encoding();
        let e = enc_def.output_dim();
        let inv_sqrt2 = T::of(std::f64::consts::FRAC_1_SQRT_2);
        let out_shape = self.layout.udf[h];

        // Adjoints of the pre-activations, filled by both passes below.
        let mut z_bar: Vec<Vec<T>> = vec![vec![T::zero(); n * w]; h];

        if let Some(gx_bar) = gx_bar {
            // Reverse of the input-gradient pass, visiting layers bottom-up.
            let mut ga0_bar = vec![T::zero(); n * e];
            for ((er, gb), out) in tape.enc.chunks_exact(e).zip(gx_bar).zip(ga0_bar.chunks_exact_mut(e)) {
                enc_def.pushforward(er, *gb, out);
            }
            let mut ga_bar_prev: Vec<T> = Vec::new();
            let mut gz_bar = Vec::new();
            for l in 0..h {
                let shape = &self.layout.udf[l];
                let gin_bar: Vec<T> = if l == 0 {
                    ga0_bar.clone()
                } else if arch.has_skip(l) {
                    let mut cat = Vec::with_capacity(n * (w + e));
                    for (a, b) in ga_bar_prev.chunks_exact(w).zip(ga0_bar.chunks_exact(e)) {
                        cat.extend(a.iter().map(|&v| v * inv_sqrt2));
                        cat.extend(b.iter().map(|&v| v * inv_sqrt2));
                    }
                    cat
                } else {
                    std::mem::take(&mut ga_bar_prev)
                };
                // gin = gz · W
                gz_bar.resize(n * w, T::zero());
                gemm(n, shape.in_dim, w, &gin_bar, Op::N, shape.weights(p), Op::T, &mut gz_bar, T::zero());
                let wg = &mut grads[shape.weight..shape.weight + shape.in_dim * w];
                gemm(w, n, shape.in_dim, &tape.grad_pre[l], Op::T, &gin_bar, Op::N, wg, T::one());
                // gz = ga ⊙ sp'(z)
                let mut ga_bar = Vec::with_capacity(n * w);
                for (((&gzb, &d1), &ga), zb) in
                    gz_bar.iter().zip(&tape.slope[l]).zip(&tape.grad_act[l]).zip(z_bar[l].iter_mut())
                {
                    let d2 = softplus_d2(d1);
                    ga_bar.push(gzb * d1);
                    *zb += gzb * ga * d2;
                }
                ga_bar_prev = ga_bar;
            }
            // ga_H is the broadcast output weight row.
            let wg = &mut grads[out_shape.weight..out_shape.weight + w];
            for row in ga_bar_prev.chunks_exact(w) {
                for (g, &v) in wg.iter_mut().zip(row) {
                    *g += v;
                }
            }
        }

        // Reverse of the value pass.
        let w_out = out_shape.weights(p);
        let a_h = &tape.inputs[h];
        let mut a_bar = vec![T::zero(); n * w];
        for i in 0..n {
            let rb = raw_bar[i];
            let row = &mut a_bar[i * w..(i + 1) * w];
            for (j, v) in row.iter_mut().enumerate() {
                *v = rb * w_out[j];
            }
            if let Some(f) = feat_bar {
                for (v, &fb) in row.iter_mut().zip(&f[i * w..(i + 1) * w]) {
                    *v += fb;
                }
            }
        }
        dense_param_grad(&out_shape, raw_bar, a_h, n, grads);

        let mut in_bar = Vec::new();
        for l in (0..h).rev() {
            let shape = &self.layout.udf[l];
            let zb = &mut z_bar[l];
            for ((v, &ab), &d) in zb.iter_mut().zip(&a_bar).zip(&tape.slope[l]) {
                *v += ab * d;
            }
            dense_param_grad(shape, zb, &tape.inputs[l], n, grads);
            if l == 0 {
                break;
            }
            dense_input_grad(shape, p, zb, n, &mut in_bar);
            if arch.has_skip(l) {
                let width = w + e;
                a_bar.clear();
                for row in in_bar.chunks_exact(width) {
                    a_bar.extend(row[..w].iter().map(|&v| v * inv_sqrt2));
                }
            } else {
                std::mem::swap(&mut a_bar, &mut in_bar);
            }
        }
    }

    /// Batched color forward pass. `dirs` are unit view directions and
    /// `features` is `n × width` from the UDF network.
    pub fn color_forward_batch(&self, points: &[[T; 3]], dirs: &[[T; 3]], features: &[T]) -> Result<ColorTape<T>> {
        let arch = &self.arch;
        let p = &self.values;
        let n = points.len();
        let fd = arch.feature_dim();
        if dirs.len() != n || features.len() != n * fd {
            return Err(Error::Contract("color_forward: input batch sizes differ".into()));
        }
        let pe = arch.pos_encoding();
        let de = arch.dir_encoding();
        let (ep, ed) = (pe.output_dim(), de.output_dim());
        let in_dim = ep + ed + fd;
        let mut input = vec![T::zero(); n * in_dim];
        for (i, row) in input.chunks_exact_mut(in_dim).enumerate() {
            pe.encode_into(points[i], &mut row[..ep]);
            de.encode_into(dirs[i], &mut row[ep..ep + ed]);
            row[ep + ed..].copy_from_slice(&features[i * fd..(i + 1) * fd]);
        }

        let hc = arch.color_layers;
        let mut inputs = Vec::with_capacity(hc + 1);
        let mut pre = Vec::with_capacity(hc);
        inputs.push(input);
        for l in 0..hc {
            let mut z = Vec::new();
            dense_forward(&self.layout.color[l], p, &inputs[l], n, &mut z);
            ensure_finite(&z, || format!("color hidden layer {}", l + 1))?;
            inputs.push(z.iter().map(|&v| v.max(T::zero())).collect());
            pre.push(z);
        }
        let mut logits = Vec::new();
        dense_forward(&self.layout.color[hc], p, &inputs[hc], n, &mut logits);
        ensure_finite(&logits, || "color output layer".to_string())?;
        let rgb = logits.chunks_exact(3).map(|c| [sigmoid(c[0]), sigmoid(c[1]), sigmoid(c[2])]).collect();
        Ok(ColorTape { n, inputs, pre, rgb })
    }

    /// Accumulates color-network parameter gradients and returns the
    /// adjoint of the feature input (`n × width`).
    pub fn color_backward(&self, tape: &ColorTape<T>, rgb_bar: &[[T; 3]], grads: &mut [T]) -> Result<Vec<T>> {
        let n = tape.n;
        if rgb_bar.len() != n || grads.len() != self.layout.len {
            return Err(Error::Contract("color_backward: adjoint shapes do not match the tape".into()));
        }
        let p = &self.values;
        let hc = self.arch.color_layers;
        let logit_bar: Vec<T> = tape
            .rgb
            .iter()
            .zip(rgb_bar)
            .flat_map(|(c, b)| (0..3).map(move |k| b[k] * c[k] * (T::one() - c[k])))
            .collect();
        let out_shape = &self.layout.color[hc];
        dense_param_grad(out_shape, &logit_bar, &tape.inputs[hc], n, grads);
        let mut a_bar = Vec::new();
        dense_input_grad(out_shape, p, &logit_bar, n, &mut a_bar);
        let mut in_bar = Vec::new();
        for l in (0..hc).rev() {
            let shape = &self.layout.color[l];
            for (v, &z) in a_bar.iter_mut().zip(&tape.pre[l]) {
                if z <= T::zero() {
                    *v = T::zero();
                }
            }
            dense_param_grad(shape, &a_bar, &tape.inputs[l], n, grads);
            dense_input_grad(shape, p, &a_bar, n, &mut in_bar);
            std::mem::swap(&mut a_bar, &mut in_bar);
        }
        let in_dim = self.layout.color[0].in_dim;
        let fd = self.arch.feature_dim();
        let mut feat_bar = Vec::with_capacity(n * fd);
        for row in a_bar.chunks_exact(in_dim) {
            feat_bar.extend_from_slice(&row[in_dim - fd..]);
        }
        Ok(feat_bar)
    }
}

/// Single-point UDF evaluation.
pub struct UdfOutput<T> {
    pub raw: T,
    pub udf: T,
    pub feature: Vec<T>,
    pub tape: UdfTape<T>,
}

pub fn udf_forward<T: Real>(params: &NetworkParams<T>, p: [T; 3]) -> Result<UdfOutput<T>> {
    let tape = params.udf_forward_batch(&[p])?;
    Ok(UdfOutput { raw: tape.raw[0], udf: tape.udf(0), feature: tape.feature(0).to_vec(), tape })
}

/// Exact gradient of `|raw|` w.r.t. the query point (`sign(0) = +1`).
pub fn udf_gradient<T: Real>(params: &NetworkParams<T>, p: [T; 3]) -> Result<[T; 3]> {
    Ok(params.udf_forward_batch(&[p])?.udf_gradient(0))
}

pub fn color_forward<T: Real>(params: &NetworkParams<T>, p: [T; 3], v: [T; 3], feature: &[T]) -> Result<[T; 3]> {
    Ok(params.color_forward_batch(&[p], &[v], feature)?.rgb[0])
}
