//! Training: pixel batches, the full objective with exact parameter
//! gradients, Adam with cosine schedules, CSV logging and checkpoints.
//!
//! Each iteration draws its randomness from a ChaCha8 stream selected by the
//! iteration number, and all reductions run in a fixed order, so a run is a
//! pure function of dataset, configuration and seed.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::KeyValues;
use super::dataset::Dataset;
use super::neural_field::{from_real, learned_density, place_samples, to_real};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::losses::{
    color_l1_with_grad, eikonal_with_grad, iso_surface_with_grad, mask_bce_with_grad, patch_ssim_with_grad, total_loss,
    LossBreakdown, LossParts, LossWeights,
};
use crate::neural::checkpoint::digest;
use crate::neural::{adam_step, cosine_lr, Architecture, Checkpoint, NetworkParams, ParamGroup, Real, UdfAdjoint};
use crate::rendering::{composite, evaluate_ray, ray_backward, IndicatorMode, Ray, RayAdjoint, SamplingConfig};

pub const CSV_HEADER: &str = "iter,color,patch,eikonal,iso_reg,mask,total,kappa,beta,lr";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub rays_per_batch: usize,
    pub sampling: SamplingConfig,
    pub weights: LossWeights,
    /// Learning rate of everything outside the UDF network.
    pub lr: f64,
    pub lr_udf: f64,
    pub warmup_fraction: f64,
    pub seed: u64,
    /// 0 writes a checkpoint only at the end.
    pub checkpoint_every: u64,
    /// Training always runs single-threaded with fixed reduction order; the
    /// flag is recorded for provenance.
    pub deterministic: bool,
    pub arch: Architecture,
    /// Side of the square pixel patches drawn when the patch loss is on.
    pub patch_size: usize,
    pub indicator: IndicatorMode,
    /// Rays per forward/backward chunk.
    pub chunk_rays: usize,
    /// Overrides the dataset background when set.
    pub background: Option<[f64; 3]>,
}

const TRAIN_KEYS: &[&str] = &[
    "preset",
    "iterations",
    "rays",
    "n_uniform",
    "n_importance",
    "rounds",
    "base_sharpness",
    "lambda0",
    "lambda1",
    "lambda2",
    "gamma",
    "tau",
    "lr",
    "lr_udf",
    "warmup",
    "seed",
    "checkpoint_every",
    "deterministic",
    "udf_layers",
    "udf_width",
    "skip_after",
    "color_layers",
    "color_width",
    "pos_frequencies",
    "dir_frequencies",
    "patch_size",
    "indicator",
    "chunk_rays",
    "background",
];

impl TrainConfig {
    /// 24-view 64×64 scale: 256 rays, 32 + 3×8 samples, 4×128 networks,
    /// 20k iterations, mask supervision on.
    pub fn desk() -> Self {
        TrainConfig {
            iterations: 20_000,
            rays_per_batch: 256,
            sampling: SamplingConfig::desk(),
            weights: LossWeights::garment(),
            lr: 5e-4,
            lr_udf: 1e-4,
            warmup_fraction: 0.05,
            seed: 42,
            checkpoint_every: 1000,
            deterministic: true,
            arch: Architecture::desk(),
            patch_size: 3,
            indicator: IndicatorMode::GradientAware,
            chunk_rays: 64,
            background: None,
        }
    }

    /// 512 rays, 144 samples, 8×256 networks, 300k iterations.
    pub fn paper() -> Self {
        TrainConfig {
            iterations: 300_000,
            rays_per_batch: 512,
            sampling: SamplingConfig::paper(),
            arch: Architecture::paper(),
            checkpoint_every: 10_000,
            ..Self::desk()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.reject_unknown(TRAIN_KEYS)?;
        let mut c = match kv.raw("preset")? {
            None | Some("desk") => Self::desk(),
            Some("paper") => Self::paper(),
            Some(other) => return Err(Error::Config(format!("unknown preset `{other}`"))),
        };
        c.iterations = kv.get_or("iterations", c.iterations)?;
        c.rays_per_batch = kv.get_or("rays", c.rays_per_batch)?;
        c.sampling.n_uniform = kv.get_or("n_uniform", c.sampling.n_uniform)?;
        c.sampling.n_importance = kv.get_or("n_importance", c.sampling.n_importance)?;
        c.sampling.rounds = kv.get_or("rounds", c.sampling.rounds)?;
        c.sampling.base_sharpness = kv.get_or("base_sharpness", c.sampling.base_sharpness)?;
        c.weights.lambda0 = kv.get_or("lambda0", c.weights.lambda0)?;
        c.weights.lambda1 = kv.get_or("lambda1", c.weights.lambda1)?;
        c.weights.lambda2 = kv.get_or("lambda2", c.weights.lambda2)?;
        c.weights.gamma = kv.get_or("gamma", c.weights.gamma)?;
        c.weights.tau = kv.get_or("tau", c.weights.tau)?;
        c.lr = kv.get_or("lr", c.lr)?;
        c.lr_udf = kv.get_or("lr_udf", c.lr_udf)?;
        c.warmup_fraction = kv.get_or("warmup", c.warmup_fraction)?;
        c.seed = kv.get_or("seed", c.seed)?;
        c.checkpoint_every = kv.get_or("checkpoint_every", c.checkpoint_every)?;
        c.deterministic = kv.get_or("deterministic", c.deterministic)?;
        c.arch.udf_layers = kv.get_or("udf_layers", c.arch.udf_layers)?;
        c.arch.udf_width = kv.get_or("udf_width", c.arch.udf_width)?;
        c.arch.skip_after = kv.get_or("skip_after", c.arch.skip_after)?;
        c.arch.color_layers = kv.get_or("color_layers", c.arch.color_layers)?;
        c.arch.color_width = kv.get_or("color_width", c.arch.color_width)?;
        c.arch.pos_frequencies = kv.get_or("pos_frequencies", c.arch.pos_frequencies)?;
        c.arch.dir_frequencies = kv.get_or("dir_frequencies", c.arch.dir_frequencies)?;
        c.patch_size = kv.get_or("patch_size", c.patch_size)?;
        c.indicator = match kv.raw("indicator")? {
            None => c.indicator,
            Some("aware") => IndicatorMode::GradientAware,
            Some("naive") => IndicatorMode::Naive,
            Some(other) => return Err(Error::Config(format!("indicator must be `aware` or `naive`, got `{other}`"))),
        };
        c.chunk_rays = kv.get_or("chunk_rays", c.chunk_rays)?;
        c.background = match kv.get_vec("background")? {
            None => None,
            Some(v) if v.len() == 3 => Some([v[0], v[1], v[2]]),
            Some(_) => return Err(Error::Config("`background` needs three values".into())),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.sampling.validate()?;
        self.weights.validate()?;
        self.arch.validate()?;
        if self.rays_per_batch == 0 || self.patch_size == 0 || self.chunk_rays == 0 {
            return Err(Error::Config("rays, patch_size and chunk_rays must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr_udf > 0.0) || !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config("learning rates must be positive and warmup in [0, 1)".into()));
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back the same configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = &self.weights;
        let a = &self.arch;
        let mode = match self.indicator {
            IndicatorMode::GradientAware => "aware",
            IndicatorMode::Naive => "naive",
        };
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "rays = {}", self.rays_per_batch);
        let _ = writeln!(s, "n_uniform = {}", self.sampling.n_uniform);
        let _ = writeln!(s, "n_importance = {}", self.sampling.n_importance);
        let _ = writeln!(s, "rounds = {}", self.sampling.rounds);
        let _ = writeln!(s, "base_sharpness = {:?}", self.sampling.base_sharpness);
        let _ = writeln!(s, "lambda0 = {:?}", w.lambda0);
        let _ = writeln!(s, "lambda1 = {:?}", w.lambda1);
        let _ = writeln!(s, "lambda2 = {:?}", w.lambda2);
        let _ = writeln!(s, "gamma = {:?}", w.gamma);
        let _ = writeln!(s, "tau = {:?}", w.tau);
        let _ = writeln!(s, "lr = {:?}", self.lr);
        let _ = writeln!(s, "lr_udf = {:?}", self.lr_udf);
        let _ = writeln!(s, "warmup = {:?}", self.warmup_fraction);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "checkpoint_every = {}", self.checkpoint_every);
        let _ = writeln!(s, "deterministic = {}", self.deterministic);
        let _ = writeln!(s, "udf_layers = {}", a.udf_layers);
        let _ = writeln!(s, "udf_width = {}", a.udf_width);
        let _ = writeln!(s, "skip_after = {}", a.skip_after);
        let _ = writeln!(s, "color_layers = {}", a.color_layers);
        let _ = writeln!(s, "color_width = {}", a.color_width);
        let _ = writeln!(s, "pos_frequencies = {}", a.pos_frequencies);
        let _ = writeln!(s, "dir_frequencies = {}", a.dir_frequencies);
        let _ = writeln!(s, "patch_size = {}", self.patch_size);
        let _ = writeln!(s, "indicator = {mode}");
        let _ = writeln!(s, "chunk_rays = {}", self.chunk_rays);
        if let Some(b) = self.background {
            let _ = writeln!(s, "background = {:?} {:?} {:?}", b[0], b[1], b[2]);
        }
        s
    }

    fn patches_enabled(&self) -> bool {
        self.weights.lambda0 > 0.0 && self.patch_size > 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRef {
    pub view: usize,
    pub x: usize,
    pub y: usize,
}

/// Uniform pixels over all views, or whole `k×k` patches (raster order
/// inside each patch) when `patch > 1`. Patches round the batch up.
pub fn select_pixels(ds: &Dataset, count: usize, patch: usize, rng: &mut ChaCha8Rng) -> Result<Vec<PixelRef>> {
    let k = patch.max(1);
    let slots: Vec<usize> = ds
        .cameras
        .iter()
        .map(|c| if c.width >= k && c.height >= k { (c.width - k + 1) * (c.height - k + 1) } else { 0 })
        .collect();
    let total: usize = slots.iter().sum();
    if total == 0 {
        return Err(Error::Contract(format!("no view is large enough for {k}×{k} patches")));
    }
    let groups = count.div_ceil(k * k);
    let mut out = Vec::with_capacity(groups * k * k);
    for _ in 0..groups {
        let mut g = rng.gen_range(0..total);
        let mut view = 0;
        while g >= slots[view] {
            g -= slots[view];
            view += 1;
        }
        let span = ds.cameras[view].width - k + 1;
        let (x0, y0) = (g % span, g / span);
        for dy in 0..k {
            for dx in 0..k {
                out.push(PixelRef { view, x: x0 + dx, y: y0 + dy });
            }
        }
    }
    Ok(out)
}

/// Rays with fixed sample positions and their supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub rays: Vec<Ray>,
    pub samples: Vec<Vec<f64>>,
    pub truth: Vec<[f64; 3]>,
    pub mask: Option<Vec<f64>>,
    /// Consecutive runs of this many rays form one SSIM patch; 0 disables
    /// the patch term.
    pub patch_len: usize,
    pub background: [f64; 3],
}

/// Total loss and its parameter gradient (accumulated into `grads`) for a
/// batch whose sample positions are held fixed.
pub fn loss_and_grad<T: Real>(
    params: &NetworkParams<T>,
    batch: &TrainBatch,
    weights: &LossWeights,
    mode: IndicatorMode,
    chunk_rays: usize,
    grads: &mut [T],
) -> Result<LossBreakdown> {
    let m = batch.rays.len();
    if m == 0 || batch.samples.len() != m || batch.truth.len() != m || batch.mask.as_ref().is_some_and(|v| v.len() != m) {
        return Err(Error::Contract("loss_and_grad: batch arrays differ in length".into()));
    }
    let use_patch = weights.lambda0 > 0.0 && batch.patch_len > 1;
    if use_patch && m % batch.patch_len != 0 {
        return Err(Error::Contract("loss_and_grad: batch is not a whole number of patches".into()));
    }
    let use_eik = weights.lambda1 > 0.0;
    let use_iso = weights.lambda2 > 0.0;
    let use_mask = weights.gamma > 0.0 && batch.mask.is_some();
    let group = if use_patch { batch.patch_len } else { 1 };
    let chunk = (chunk_rays / group).max(1) * group;
    let n_patches = if use_patch { m / group } else { 0 };
    let total_points: usize = batch.samples.iter().map(Vec::len).sum();
    let density = learned_density(params, mode);
    let (kappa, beta) = (density.kappa, density.beta);
    let mut parts = LossParts::default();
    let mut mask_sum = 0.0;
    let (mut kappa_bar, mut beta_bar) = (0.0, 0.0);

    let mut start = 0;
    while start < m {
        let end = (start + chunk).min(m);
        let rays = &batch.rays[start..end];
        let samples = &batch.samples[start..end];
        let mc = end - start;
        let mut pts = Vec::new();
        let mut dirs = Vec::new();
        for (ray, ts) in rays.iter().zip(samples) {
            let d = to_real(ray.direction.vec());
            for &t in ts {
                pts.push(to_real(ray.at(t)));
                dirs.push(d);
            }
        }
        let nc = pts.len();
        let tape = params.udf_forward_batch(&pts)?;
        let ctape = params.color_forward_batch(&pts, &dirs, tape.features())?;
        let udf: Vec<f64> = (0..nc).map(|i| tape.udf(i).f64()).collect();
        let grad: Vec<Vec3> = (0..nc).map(|i| from_real(tape.udf_gradient(i))).collect();
        let colors: Vec<[f64; 3]> = ctape.rgb.iter().map(|c| c.map(|v| v.f64())).collect();

        let mut sets = Vec::with_capacity(mc);
        let mut rendered = Vec::with_capacity(mc);
        let mut base = 0;
        for (r, (ray, ts)) in rays.iter().zip(samples).enumerate() {
            let n = ts.len();
            let set = evaluate_ray(start + r, ray.direction.vec(), ts, &udf[base..base + n], &grad[base..base + n], &density)?;
            rendered.push(composite(&set, &colors[base..base + n], batch.background));
            sets.push(set);
            base += n;
        }

        // Per-ray adjoints, normalized to batch-wide means.
        let ray_share = mc as f64 / m as f64;
        let truth = &batch.truth[start..end];
        let (c_val, c_grad) = color_l1_with_grad(&rendered, truth)?;
        parts.color += c_val * ray_share;
        let mut adj: Vec<RayAdjoint> =
            c_grad.iter().map(|g| RayAdjoint { color: g.map(|v| v * ray_share), opacity: 0.0 }).collect();
        if use_patch {
            for p in (0..mc).step_by(group) {
                let (v, g) = patch_ssim_with_grad(&rendered[p..p + group], &truth[p..p + group])?;
                parts.patch += v / n_patches as f64;
                for (a, gi) in adj[p..p + group].iter_mut().zip(&g) {
                    for k in 0..3 {
                        a.color[k] += weights.lambda0 * gi[k] / n_patches as f64;
                    }
                }
            }
        }
        if use_mask {
            let opac: Vec<f64> = sets.iter().map(|s| s.weight_sum()).collect();
            let (v, g) = mask_bce_with_grad(&opac, &batch.mask.as_ref().unwrap()[start..end])?;
            mask_sum += v * ray_share;
            for (a, gi) in adj.iter_mut().zip(&g) {
                a.opacity = weights.gamma * gi * ray_share;
            }
        }

        let point_share = nc as f64 / total_points as f64;
        let mut udf_bar = vec![T::zero(); nc];
        let mut grad_bar = vec![[T::zero(); 3]; nc];
        let mut color_bar = vec![[T::zero(); 3]; nc];
        if use_eik {
            let (v, g) = eikonal_with_grad(&grad);
            parts.eikonal += v * point_share;
            for (b, gi) in grad_bar.iter_mut().zip(&g) {
                *b = to_real(weights.lambda1 * point_share * *gi);
            }
        }
        if use_iso {
            let (v, g) = iso_surface_with_grad(&udf, weights.tau);
            parts.iso_reg += v * point_share;
            for (b, gi) in udf_bar.iter_mut().zip(&g) {
                *b = T::of(weights.lambda2 * point_share * gi);
            }
        }
        let mut base = 0;
        for (r, set) in sets.iter().enumerate() {
            let n = set.len();
            let rg = ray_backward(set, rays[r].direction.vec(), &colors[base..base + n], batch.background, &density, &adj[r]);
            for j in 0..n {
                udf_bar[base + j] += T::of(rg.udf[j]);
                let g = to_real::<T>(rg.gradient[j]);
                for k in 0..3 {
                    grad_bar[base + j][k] += g[k];
                    color_bar[base + j][k] = T::of(rg.color[j][k]);
                }
            }
            kappa_bar += rg.kappa;
            beta_bar += rg.beta;
            base += n;
        }
        let feat_bar = params.color_backward(&ctape, &color_bar, grads)?;
        params.udf_backward(
            &tape,
            &UdfAdjoint { udf: &udf_bar, feature: Some(&feat_bar), gradient: Some(&grad_bar) },
            grads,
        )?;
        start = end;
    }
    // κ = exp(log κ), β = exp(log β)
    grads[params.layout.log_kappa] += T::of(kappa_bar * kappa);
    grads[params.layout.log_beta] += T::of(beta_bar * beta);
    if use_mask {
        parts.mask = Some(mask_sum);
    }
    Ok(total_loss(&parts, weights))
}

/// Which loss columns a configuration fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnabledTerms {
    pub patch: bool,
    pub eikonal: bool,
    pub iso_reg: bool,
    pub mask: bool,
}

impl EnabledTerms {
    pub fn of(config: &TrainConfig, has_masks: bool) -> Self {
        EnabledTerms {
            patch: config.patches_enabled(),
            eikonal: config.weights.lambda1 > 0.0,
            iso_reg: config.weights.lambda2 > 0.0,
            mask: config.weights.gamma > 0.0 && has_masks,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iter: u64,
    pub loss: LossBreakdown,
    pub kappa: f64,
    pub beta: f64,
    pub lr: f64,
}

impl LogRow {
    /// Disabled terms are left empty; numbers use the shortest form that
    /// parses back exactly.
    pub fn to_csv(&self, on: &EnabledTerms) -> String {
        let opt = |enabled: bool, v: f64| if enabled { format!("{v:?}") } else { String::new() };
        let l = &self.loss;
        format!(
            "{},{:?},{},{},{},{},{:?},{:?},{:?},{:?}",
            self.iter,
            l.color,
            opt(on.patch, l.patch),
            opt(on.eikonal, l.eikonal),
            opt(on.iso_reg, l.iso_reg),
            opt(on.mask, l.mask),
            l.total,
            self.kappa,
            self.beta,
            self.lr
        )
    }
}

/// Stateful trainer over one dataset.
pub struct Trainer<'a> {
    pub dataset: &'a Dataset,
    pub config: TrainConfig,
    pub checkpoint: Checkpoint,
    pub background: [f64; 3],
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        dataset.validate()?;
        let params = NetworkParams::<f32>::init(config.arch, config.seed);
        let checkpoint = Checkpoint::fresh(params, digest(&config.to_text()));
        let background = config.background.unwrap_or(dataset.background);
        Ok(Trainer { dataset, config, checkpoint, background })
    }

    pub fn enabled_terms(&self) -> EnabledTerms {
        EnabledTerms::of(&self.config, self.dataset.masks.is_some())
    }

    /// Draws the batch for iteration `iter` and places its samples under
    /// the current field.
    pub fn make_batch(&self, iter: u64) -> Result<TrainBatch> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(iter);
        let patch = if self.config.patches_enabled() { self.config.patch_size } else { 1 };
        let pixels = select_pixels(self.dataset, self.config.rays_per_batch, patch, &mut rng)?;
        let mut rays = Vec::with_capacity(pixels.len());
        let mut truth = Vec::with_capacity(pixels.len());
        let mut mask = self.dataset.masks.as_ref().map(|_| Vec::with_capacity(pixels.len()));
        for p in &pixels {
            let cam = &self.dataset.cameras[p.view];
            let (o, d) = cam.pixel_ray(p.x, p.y);
            rays.push(Ray::through_unit_sphere(o, d)?);
            truth.push(self.dataset.images[p.view].get(p.x, p.y));
            if let (Some(out), Some(ms)) = (mask.as_mut(), self.dataset.masks.as_ref()) {
                out.push(if ms[p.view][p.y * cam.width + p.x] { 1.0 } else { 0.0 });
            }
        }
        let samples = place_samples(&self.checkpoint.params, &rays, &self.config.sampling, self.config.indicator)?;
        Ok(TrainBatch { rays, samples, truth, mask, patch_len: patch * patch, background: self.background })
    }

    /// One optimization step. On failure the parameters are left as they
    /// were before the step.
    pub fn step(&mut self) -> Result<LogRow> {
        let iter = self.checkpoint.iteration;
        let batch = self.make_batch(iter)?;
        let params = &self.checkpoint.params;
        let mut grads = params.zero_grads();
        let loss = loss_and_grad(params, &batch, &self.config.weights, self.config.indicator, self.config.chunk_rays, &mut grads)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFinite(format!("total loss at iteration {iter}: {loss:?}")));
        }
        let scale = cosine_lr(1.0, iter, self.config.iterations, self.config.warmup_fraction);
        let groups = [
            ParamGroup { range: params.layout.udf_range(), lr: self.config.lr_udf * scale },
            ParamGroup { range: params.layout.other_range(), lr: self.config.lr * scale },
        ];
        let row = LogRow { iter, loss, kappa: params.kappa(), beta: params.beta(), lr: self.config.lr * scale };
        let before = (self.checkpoint.params.values.clone(), self.checkpoint.adam.clone());
        let ck = &mut self.checkpoint;
        let updated = adam_step(&mut ck.params.values, &grads, &mut ck.adam, &groups);
        if updated.is_err() || !ck.params.is_finite() {
            (ck.params.values, ck.adam) = before;
            updated?;
            return Err(Error::NonFinite(format!("parameters after iteration {iter}")));
        }
        ck.iteration += 1;
        Ok(row)
    }
}

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOSS_FILE: &str = "loss.csv";
pub const CONFIG_FILE: &str = "train_config.txt";

/// Trains from initialization, writing `loss.csv`, `train_config.txt` and
/// `checkpoint.bin` into `out_dir`. On a non-finite loss the last good
/// checkpoint is written before the error is returned.
pub fn train(dataset: &Dataset, config: &TrainConfig, out_dir: &Path) -> Result<Checkpoint> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut trainer = Trainer::new(dataset, config.clone())?;
    let mut effective = config.clone();
    effective.background = Some(trainer.background);
    let cfg_path = out_dir.join(CONFIG_FILE);
    fs::write(&cfg_path, effective.to_text()).map_err(|e| Error::io(&cfg_path, e))?;
    let ckpt_path = out_dir.join(CHECKPOINT_FILE);
    let csv_path = out_dir.join(LOSS_FILE);
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut csv = BufWriter::new(file);
    writeln!(csv, "{CSV_HEADER}").map_err(|e| Error::io(&csv_path, e))?;
    let terms = trainer.enabled_terms();
    while trainer.checkpoint.iteration < config.iterations {
        let row = match trainer.step() {
            Ok(r) => r,
            Err(e) => {
                csv.flush().map_err(|e| Error::io(&csv_path, e))?;
                trainer.checkpoint.save(&ckpt_path)?;
                return Err(e);
            }
        };
        writeln!(csv, "{}", row.to_csv(&terms)).map_err(|e| Error::io(&csv_path, e))?;
        if row.iter % 100 == 0 {
            log::info!("iter {} total {:.5} color {:.5}", row.iter, row.loss.total, row.loss.color);
        }
        let done = trainer.checkpoint.iteration;
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.iterations {
            csv.flush().map_err(|e| Error::io(&csv_path, e))?;
            trainer.checkpoint.save(&ckpt_path)?;
        }
    }
    csv.flush().map_err(|e| Error::io(&csv_path, e))?;
    trainer.checkpoint.save(&ckpt_path)?;
    Ok(trainer.checkpoint)
}
