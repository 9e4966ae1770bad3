//! Post-training drivers: mesh extraction, novel-view rendering, single-ray
//! diagnostics and metric evaluation.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::camera::Camera;
use super::dataset::Dataset;
use super::images::RgbImage;
use super::neural_field::{learned_density, place_samples, render_at_samples, render_rays, udf_eval};
use super::scene::SceneConfig;
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::evaluation::{chamfer_distance, psnr, sample_mesh, MetricsReport};
use crate::extraction::{default_surface_eps, sample_grid_batch, udf_marching_cubes, ExtractionReport, TriangleMesh};
use crate::geometry::{Direction3, Point3, Vec3};
use crate::neural::{Checkpoint, NetworkParams, Real};
use crate::rendering::{IndicatorMode, Ray, RaySampleSet, SamplingConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionDiagnostics {
    pub resolution: usize,
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
    pub extraction: ExtractionReport,
}

/// Samples the learned UDF on a `resolution³` grid over `[min, max]` and
/// runs open-surface marching cubes.
pub fn extract_mesh<T: Real>(
    params: &NetworkParams<T>,
    resolution: usize,
    min: Point3,
    max: Point3,
) -> Result<(TriangleMesh, ExtractionReport)> {
    let grid = sample_grid_batch([resolution; 3], min, max, |pts| udf_eval(params, pts))?;
    udf_marching_cubes(&grid, default_surface_eps(&grid))
}

/// [`extract_mesh`] plus the mesh file and a JSON report next to it
/// (same stem, `.json`).
pub fn reconstruct(ckpt: &Checkpoint, resolution: usize, min: Point3, max: Point3, out: &Path) -> Result<(TriangleMesh, ExtractionReport)> {
    let (mesh, report) = extract_mesh(&ckpt.params, resolution, min, max)?;
    mesh.save(out)?;
    let diag = ReconstructionDiagnostics {
        resolution,
        bounds_min: min.to_array(),
        bounds_max: max.to_array(),
        extraction: report.clone(),
    };
    let json_path = out.with_extension("json");
    fs::write(&json_path, serde_json::to_string_pretty(&diag)?).map_err(|e| Error::io(&json_path, e))?;
    Ok((mesh, report))
}

/// Rendering settings taken from training.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub sampling: SamplingConfig,
    pub indicator: IndicatorMode,
    pub background: [f64; 3],
    pub chunk_rays: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions::from_config(&TrainConfig::desk())
    }
}

impl RenderOptions {
    pub fn from_config(c: &TrainConfig) -> Self {
        RenderOptions {
            sampling: c.sampling,
            indicator: c.indicator,
            background: c.background.unwrap_or([0.0; 3]),
            chunk_rays: 256,
        }
    }

    /// Reads `train_config.txt` beside a checkpoint, if there is one.
    pub fn beside(ckpt_path: &Path) -> Result<Self> {
        let p = ckpt_path.with_file_name(super::train::CONFIG_FILE);
        match fs::read_to_string(&p) {
            Ok(text) => Ok(Self::from_config(&TrainConfig::parse(&text)?)),
            Err(_) => Ok(Self::default()),
        }
    }
}

pub fn render_image<T: Real>(params: &NetworkParams<T>, camera: &Camera, opts: &RenderOptions) -> Result<RgbImage> {
    let mut rays = Vec::with_capacity(camera.pixel_count());
    for y in 0..camera.height {
        for x in 0..camera.width {
            let (o, d) = camera.pixel_ray(x, y);
            rays.push(Ray::through_unit_sphere(o, d)?);
        }
    }
    let out = render_rays(params, &rays, &opts.sampling, opts.indicator, opts.background, opts.chunk_rays)?;
    Ok(RgbImage { width: camera.width, height: camera.height, pixels: out.into_iter().map(|r| r.rgb).collect() })
}

/// Renders every camera into `out_dir` (`view_000.png` / `.pfm`) and writes
/// `metrics.json`. PSNR is reported against `reference` when given.
pub fn render_views<T: Real>(
    params: &NetworkParams<T>,
    cameras: &[Camera],
    opts: &RenderOptions,
    reference: Option<&Dataset>,
    out_dir: &Path,
) -> Result<(Vec<RgbImage>, MetricsReport)> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    if reference.is_some_and(|r| r.view_count() != cameras.len()) {
        return Err(Error::Contract("reference dataset and camera list differ in length".into()));
    }
    let mut images = Vec::with_capacity(cameras.len());
    let mut report = MetricsReport::default();
    for (i, cam) in cameras.iter().enumerate() {
        let img = render_image(params, cam, opts)?;
        img.save_png(&out_dir.join(format!("view_{i:03}.png")))?;
        img.save_pfm(&out_dir.join(format!("view_{i:03}.pfm")))?;
        if let Some(r) = reference {
            report.psnr_per_view.push(psnr(&img.flat(), &r.images[i].flat())?);
        }
        images.push(img);
    }
    let mp = out_dir.join("metrics.json");
    fs::write(&mp, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&mp, e))?;
    Ok((images, report))
}

/// Samples one ray the way training does and returns its diagnostics.
pub fn trace_ray<T: Real>(params: &NetworkParams<T>, origin: Point3, direction: Vec3, opts: &RenderOptions) -> Result<RaySampleSet> {
    let ray = Ray::through_unit_sphere(origin, Direction3::normalize(direction)?)?;
    let ts = place_samples(params, std::slice::from_ref(&ray), &opts.sampling, opts.indicator)?;
    let density = learned_density(params, opts.indicator);
    let mut r = render_at_samples(params, std::slice::from_ref(&ray), &ts, &density, opts.background)?;
    Ok(r.pop().unwrap().samples)
}

pub fn ray_dump<T: Real>(params: &NetworkParams<T>, origin: Point3, direction: Vec3, opts: &RenderOptions, out: &Path) -> Result<RaySampleSet> {
    let set = trace_ray(params, origin, direction, opts)?;
    let mut buf = Vec::new();
    set.write_csv(&mut buf).map_err(|e| Error::io(out, e))?;
    fs::write(out, buf).map_err(|e| Error::io(out, e))?;
    Ok(set)
}

/// Chamfer distance between area-weighted samples of `mesh` and of the
/// scene's analytic surfaces.
pub fn evaluate_mesh(mesh: &TriangleMesh, scene: &SceneConfig, points: usize, seed: u64) -> Result<MetricsReport> {
    let a = sample_mesh(mesh, points, seed)?;
    let b = scene.sample_surface(points, seed.wrapping_add(1))?;
    Ok(MetricsReport { chamfer: Some(chamfer_distance(&a, &b)?), psnr_per_view: Vec::new(), points_used: points, seed })
}

/// Sign changes of `cos θ = ∇f·d / ‖∇f‖` over `n` evenly spaced points of
/// `[t_star − half_width, t_star + half_width]`.
pub fn cos_sign_changes<T: Real>(params: &NetworkParams<T>, ray: &Ray, t_star: f64, half_width: f64, n: usize) -> Result<usize> {
    let d = ray.direction.vec();
    let pts: Vec<Point3> = (0..n)
        .map(|k| ray.at(t_star - half_width + 2.0 * half_width * k as f64 / (n - 1).max(1) as f64))
        .collect();
    let signs: Vec<bool> = udf_eval(params, &pts)?.iter().map(|(_, g)| g.dot(d) >= 0.0).collect();
    Ok(signs.windows(2).filter(|w| w[0] != w[1]).count())
}
