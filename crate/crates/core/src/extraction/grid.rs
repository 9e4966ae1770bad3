use crate::error::{Error, Result};
use crate::fields::DistanceField;
use crate::geometry::{Point3, Vec3};

/// UDF values and gradients on a regular lattice. Node `(i, j, k)` sits at
/// `min + (i, j, k) · spacing`; storage is x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub resolution: [usize; 3],
    pub min: Point3,
    pub max: Point3,
    pub values: Vec<f64>,
    pub gradients: Vec<Vec3>,
}

impl ScalarGrid {
    pub fn spacing(&self) -> Vec3 {
        spacing(self.resolution, self.min, self.max)
    }

    pub fn node_count(&self) -> usize {
        self.resolution.iter().product()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution[0] * (j + self.resolution[1] * k)
    }

    pub fn position(&self, i: usize, j: usize, k: usize) -> Point3 {
        node_position(self.resolution, self.min, self.max, i, j, k)
    }

    pub fn min_spacing(&self) -> f64 {
        let s = self.spacing();
        s.x.min(s.y).min(s.z)
    }
}

fn spacing(res: [usize; 3], min: Point3, max: Point3) -> Vec3 {
    let d = max - min;
    Vec3::new(d.x / (res[0] - 1) as f64, d.y / (res[1] - 1) as f64, d.z / (res[2] - 1) as f64)
}

fn node_position(res: [usize; 3], min: Point3, max: Point3, i: usize, j: usize, k: usize) -> Point3 {
    let s = spacing(res, min, max);
    Vec3::new(min.x + i as f64 * s.x, min.y + j as f64 * s.y, min.z + k as f64 * s.z)
}

fn validate(res: [usize; 3], min: Point3, max: Point3) -> Result<()> {
    if res.iter().any(|&r| r < 2) {
        return Err(Error::Contract(format!("grid resolution must be >= 2 per axis, got {res:?}")));
    }
    let d = max - min;
    if !(d.x > 0.0 && d.y > 0.0 && d.z > 0.0) || !d.is_finite() {
        return Err(Error::Contract("grid bounds must satisfy min < max".into()));
    }
    Ok(())
}

/// Samples a field with a batch evaluator returning `(udf, gradient)` per
/// point. Points are passed one z-slab at a time.
pub fn sample_grid_batch<F>(resolution: [usize; 3], min: Point3, max: Point3, mut eval: F) -> Result<ScalarGrid>
where
    F: FnMut(&[Point3]) -> Result<Vec<(f64, Vec3)>>,
{
    validate(resolution, min, max)?;
    let [nx, ny, nz] = resolution;
    let mut values = Vec::with_capacity(nx * ny * nz);
    let mut gradients = Vec::with_capacity(nx * ny * nz);
    let mut slab = Vec::with_capacity(nx * ny);
    for k in 0..nz {
        slab.clear();
        for j in 0..ny {
            for i in 0..nx {
                slab.push(node_position(resolution, min, max, i, j, k));
            }
        }
        let vals = eval(&slab)?;
        if vals.len() != slab.len() {
            return Err(Error::Contract("grid evaluator returned the wrong number of values".into()));
        }
        for (n, (u, g)) in vals.into_iter().enumerate() {
            if !(u.is_finite() && g.is_finite()) {
                let (i, j) = (n % nx, n / nx);
                return Err(Error::NonFinite(format!("field at grid node ({i}, {j}, {k})")));
            }
            values.push(u.max(0.0));
            gradients.push(g);
        }
    }
    Ok(ScalarGrid { resolution, min, max, values, gradients })
}

/// Samples an analytic field; degenerate samples store a zero gradient.
pub fn sample_grid<F: DistanceField + ?Sized>(field: &F, resolution: [usize; 3], min: Point3, max: Point3) -> Result<ScalarGrid> {
    sample_grid_batch(resolution, min, max, |pts| {
        Ok(pts
            .iter()
            .map(|&p| {
                let s = field.sample(p);
                (s.distance, if s.degenerate { Vec3::ZERO } else { s.gradient })
            })
            .collect())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::AnalyticShape;

    #[test]
    fn corners_of_unit_cube() {
        let f = AnalyticShape::sphere(Vec3::ZERO, 0.1).unwrap();
        let g = sample_grid(&f, [2, 2, 2], Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(g.node_count(), 8);
        assert_eq!(g.position(1, 1, 1), Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(g.position(1, 0, 1), Vec3::new(1.0, 0.0, 1.0));
        assert!(sample_grid(&f, [1, 2, 2], Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn plane_minimum_on_middle_slab() {
        let f = AnalyticShape::plane(Vec3::Z, 0.5).unwrap();
        let g = sample_grid(&f, [33, 33, 33], Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)).unwrap();
        for j in 0..33 {
            for i in 0..33 {
                assert_eq!(g.values[g.index(i, j, 16)], 0.0);
            }
        }
        let min = g.values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(min, 0.0);
    }

    #[test]
    fn sphere_minimum_near_radius() {
        let f = AnalyticShape::sphere(Vec3::ZERO, 0.5).unwrap();
        let g = sample_grid(&f, [40, 40, 40], Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0)).unwrap();
        let half_diag = 0.5 * g.spacing().norm();
        let min = g.values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min <= half_diag);
        // Brute-force: the node nearest the surface has exactly that value.
        let mut best = f64::INFINITY;
        for k in 0..40 {
            for j in 0..40 {
                for i in 0..40 {
                    best = best.min((g.position(i, j, k).norm() - 0.5).abs());
                }
            }
        }
        assert!((best - min).abs() < 1e-15);
    }

    #[test]
    fn non_finite_reports_node() {
        let e = sample_grid_batch([2, 2, 2], Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0), |pts| {
            Ok(pts.iter().map(|p| (if p.x > 0.5 && p.z > 0.5 { f64::NAN } else { 1.0 }, Vec3::Z)).collect())
        })
        .unwrap_err();
        assert!(e.to_string().contains("(1, 0, 1)"), "{e}");
    }
}
