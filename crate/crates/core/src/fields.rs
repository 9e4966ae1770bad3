//! Analytic unsigned distance fields.
//!
//! These are the ground-truth surfaces used for dataset generation, for the
//! rendering property tests and for checking mesh extraction. Every field
//! returns a [`FieldSample`]: the unsigned distance, its gradient, and a flag
//! marking points where the gradient is undefined (on the zero set or on the
//! medial axis). Flagged samples carry the placeholder gradient `(0, 0, 1)`;
//! callers must check the flag instead of trusting the vector.

use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};

/// Distance below which a point counts as lying on a degenerate locus.
pub const DEGENERATE_EPS: f64 = 1e-12;

const NORMAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub distance: f64,
    pub gradient: Vec3,
    pub degenerate: bool,
}

impl FieldSample {
    fn regular(distance: f64, gradient: Vec3) -> Self {
        FieldSample { distance, gradient, degenerate: false }
    }

    fn degenerate(distance: f64) -> Self {
        FieldSample { distance, gradient: Vec3::Z, degenerate: true }
    }
}

/// Anything that can be queried for an unsigned distance and its gradient.
pub trait DistanceField: Sync {
    fn sample(&self, p: Point3) -> FieldSample;

    fn distance(&self, p: Point3) -> f64 {
        self.sample(p).distance
    }
}

impl<F: DistanceField + ?Sized> DistanceField for &F {
    fn sample(&self, p: Point3) -> FieldSample {
        (**self).sample(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticShape {
    /// The plane `{p : n·p = offset}`.
    Plane { normal: Vec3, offset: f64 },
    Sphere { center: Point3, radius: f64 },
    /// A flat disc with a free boundary: the canonical open surface.
    OpenDisc { center: Point3, normal: Vec3, radius: f64 },
    Union(Vec<AnalyticShape>),
}

fn check_unit(normal: Vec3) -> Result<()> {
    if !normal.is_finite() || (normal.norm() - 1.0).abs() > NORMAL_TOLERANCE {
        return Err(Error::Contract(format!("normal {normal:?} is not unit length")));
    }
    Ok(())
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Contract(format!("radius must be positive, got {radius}")));
    }
    Ok(())
}

impl AnalyticShape {
    pub fn plane(normal: Vec3, offset: f64) -> Result<Self> {
        check_unit(normal)?;
        Ok(AnalyticShape::Plane { normal, offset })
    }

    pub fn sphere(center: Point3, radius: f64) -> Result<Self> {
        check_radius(radius)?;
        Ok(AnalyticShape::Sphere { center, radius })
    }

    pub fn open_disc(center: Point3, normal: Vec3, radius: f64) -> Result<Self> {
        check_unit(normal)?;
        check_radius(radius)?;
        Ok(AnalyticShape::OpenDisc { center, normal, radius })
    }

    pub fn union(members: Vec<AnalyticShape>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Contract("union needs at least one member".into()));
        }
        Ok(AnalyticShape::Union(members))
    }

    /// Radius of the smallest origin-centred ball containing the shape
    /// (infinite for planes).
    pub fn bounding_radius(&self) -> f64 {
        match self {
            AnalyticShape::Plane { .. } => f64::INFINITY,
            AnalyticShape::Sphere { center, radius } => center.norm() + radius,
            AnalyticShape::OpenDisc { center, radius, .. } => center.norm() + radius,
            AnalyticShape::Union(members) => {
                members.iter().map(|m| m.bounding_radius()).fold(0.0, f64::max)
            }
        }
    }
}

impl DistanceField for AnalyticShape {
    fn sample(&self, p: Point3) -> FieldSample {
        match self {
            AnalyticShape::Plane { normal, offset } => plane_udf(p, *normal, *offset),
            AnalyticShape::Sphere { center, radius } => sphere_udf(p, *center, *radius),
            AnalyticShape::OpenDisc { center, normal, radius } => {
                open_disc_udf(p, *center, *normal, *radius)
            }
            AnalyticShape::Union(members) => union_udf(p, members),
        }
    }
}

pub fn plane_udf(p: Point3, normal: Vec3, offset: f64) -> FieldSample {
    let signed = normal.dot(p) - offset;
    if signed.abs() < DEGENERATE_EPS {
        return FieldSample::degenerate(signed.abs());
    }
    let gradient = if signed > 0.0 { normal } else { -normal };
    FieldSample::regular(signed.abs(), gradient)
}

pub fn sphere_udf(p: Point3, center: Point3, radius: f64) -> FieldSample {
    let q = p - center;
    let len = q.norm();
    let signed = len - radius;
    if len < DEGENERATE_EPS || signed.abs() < DEGENERATE_EPS {
        return FieldSample::degenerate(signed.abs());
    }
    let outward = q / len;
    let gradient = if signed > 0.0 { outward } else { -outward };
    FieldSample::regular(signed.abs(), gradient)
}

pub fn open_disc_udf(p: Point3, center: Point3, normal: Vec3, radius: f64) -> FieldSample {
    let q = p - center;
    let height = normal.dot(q);
    let radial = q - normal * height;
    let rho = radial.norm();

    if rho <= radius {
        if height.abs() < DEGENERATE_EPS {
            return FieldSample::degenerate(height.abs());
        }
        let gradient = if height > 0.0 { normal } else { -normal };
        return FieldSample::regular(height.abs(), gradient);
    }

    // Nearest point is on the rim circle.
    let out = rho - radius;
    let distance = (out * out + height * height).sqrt();
    if distance < DEGENERATE_EPS {
        return FieldSample::degenerate(distance);
    }
    let radial_dir = radial / rho;
    let gradient = (radial_dir * out + normal * height) / distance;
    FieldSample::regular(distance, gradient)
}

/// Minimum over members; ties go to the lowest index.
pub fn union_udf(p: Point3, members: &[AnalyticShape]) -> FieldSample {
    let mut best = members[0].sample(p);
    for m in &members[1..] {
        let s = m.sample(p);
        if s.distance < best.distance {
            best = s;
        }
    }
    best
}

/// Central-difference gradient of a scalar field.
pub fn gradient_fd(field: impl Fn(Point3) -> f64, p: Point3, eps: f64) -> Vec3 {
    let axis = |e: Vec3| (field(p + e * eps) - field(p - e * eps)) / (2.0 * eps);
    Vec3::new(axis(Vec3::X), axis(Vec3::Y), axis(Vec3::Z))
}
