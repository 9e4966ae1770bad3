//! Reconstruction metrics: symmetric Chamfer distance between point sets
//! and image PSNR.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rstar::RTree;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::TriangleMesh;
use crate::geometry::Point3;

pub const PSNR_CAP: f64 = 99.0;
pub const DEFAULT_CHAMFER_POINTS: usize = 100_000;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSet {
    pub points: Vec<Point3>,
    pub source: Option<String>,
}

impl PointSet {
    pub fn new(points: Vec<Point3>) -> Self {
        PointSet { points, source: None }
    }

    pub fn tagged(points: Vec<Point3>, source: impl Into<String>) -> Self {
        PointSet { points, source: Some(source.into()) }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Area-weighted uniform samples on the mesh surface.
pub fn sample_mesh(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointSet> {
    if mesh.is_empty() || n == 0 {
        return Err(Error::Contract("sample_mesh needs a non-empty mesh and n >= 1".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Contract("sample_mesh: mesh has zero area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.gen::<f64>() * total;
        let t = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle(t);
        let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
        let s = r1.sqrt();
        points.push((1.0 - s) * a + (s * (1.0 - r2)) * b + (s * r2) * c);
    }
    Ok(PointSet::tagged(points, "mesh"))
}

fn mean_nn_distance(from: &[Point3], to: &[Point3]) -> f64 {
    let tree = RTree::bulk_load(to.iter().map(|p| p.to_array()).collect());
    let sum: f64 = from
        .iter()
        .map(|p| {
            let q = tree.nearest_neighbor(&p.to_array()).expect("non-empty tree");
            p.distance(Point3::from_array(*q))
        })
        .sum();
    sum / from.len() as f64
}

/// `½ (mean_a min_b ‖p − q‖ + mean_b min_a ‖p − q‖)`
pub fn chamfer_distance(a: &PointSet, b: &PointSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("chamfer_distance needs two non-empty point sets".into()));
    }
    Ok(0.5 * (mean_nn_distance(&a.points, &b.points) + mean_nn_distance(&b.points, &a.points)))
}

/// `10 log10(1 / MSE)` over flat intensity buffers, capped at [`PSNR_CAP`].
pub fn psnr(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Contract(format!("psnr: image sizes {} and {} differ or are empty", a.len(), b.len())));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub chamfer: Option<f64>,
    pub psnr_per_view: Vec<f64>,
    pub points_used: usize,
    pub seed: u64,
}

impl MetricsReport {
    pub fn mean_psnr(&self) -> Option<f64> {
        if self.psnr_per_view.is_empty() {
            None
        } else {
            Some(self.psnr_per_view.iter().sum::<f64>() / self.psnr_per_view.len() as f64)
        }
    }
}
