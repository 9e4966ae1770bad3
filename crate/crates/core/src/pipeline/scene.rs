//! Synthetic scene description: analytic shapes, a procedural texture and
//! a ring of cameras.
//!
//! ```text
//! shape = sphere 0.3 0 0 0.35          # cx cy cz r
//! shape = disc -0.35 0 0 0.6 0 0.8 0.4 # cx cy cz nx ny nz r
//! shape = plane 0 0 1 0.2              # nx ny nz offset
//! texture = stripes 2.0 1 1 0          # frequency, direction
//! color_a = 0.9 0.55 0.2
//! color_b = 0.15 0.35 0.8
//! cameras = 24
//! camera_radius = 3.0
//! elevation_deg = 25
//! alternate_elevation = true
//! width = 64
//! height = 64
//! fov_deg = 40
//! background = 0 0 0
//! ```

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::camera::{camera_ring, Camera};
use super::config::{parse_numbers, KeyValues};
use crate::error::{Error, Result};
use crate::evaluation::PointSet;
use crate::fields::{AnalyticShape, DistanceField, FieldSample};
use crate::geometry::{Point3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    Constant,
    /// 3D checkerboard with cells of size `1 / frequency`.
    Checker { frequency: f64 },
    /// Smooth sinusoidal bands along `direction`.
    Stripes { frequency: f64, direction: Vec3 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub shapes: Vec<AnalyticShape>,
    pub texture: Texture,
    pub color_a: [f64; 3],
    pub color_b: [f64; 3],
    pub cameras: usize,
    pub camera_radius: f64,
    pub elevation_deg: f64,
    pub alternate_elevation: bool,
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    pub background: [f64; 3],
}

const SCENE_KEYS: &[&str] = &[
    "shape",
    "texture",
    "color_a",
    "color_b",
    "cameras",
    "camera_radius",
    "elevation_deg",
    "alternate_elevation",
    "width",
    "height",
    "fov_deg",
    "background",
];

fn rgb(key: &str, v: Option<Vec<f64>>, default: [f64; 3]) -> Result<[f64; 3]> {
    match v {
        None => Ok(default),
        Some(v) if v.len() == 3 && v.iter().all(|c| (0.0..=1.0).contains(c)) => Ok([v[0], v[1], v[2]]),
        Some(_) => Err(Error::Config(format!("`{key}` needs three values in [0, 1]"))),
    }
}

fn vec3(v: &[f64]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

pub fn parse_shape(text: &str) -> Result<AnalyticShape> {
    let mut it = text.splitn(2, char::is_whitespace);
    let kind = it.next().unwrap_or("");
    let nums = parse_numbers("shape", it.next().unwrap_or(""))?;
    let need = |n: usize| {
        if nums.len() == n {
            Ok(())
        } else {
            Err(Error::Config(format!("shape `{kind}` takes {n} numbers, got {}", nums.len())))
        }
    };
    let unit = |v: Vec3| v.try_normalize().ok_or_else(|| Error::Config("shape normal is zero".into()));
    match kind {
        "sphere" => {
            need(4)?;
            AnalyticShape::sphere(vec3(&nums[..3]), nums[3])
        }
        "disc" => {
            need(7)?;
            AnalyticShape::open_disc(vec3(&nums[..3]), unit(vec3(&nums[3..6]))?, nums[6])
        }
        "plane" => {
            need(4)?;
            AnalyticShape::plane(unit(vec3(&nums[..3]))?, nums[3])
        }
        other => Err(Error::Config(format!("unknown shape kind `{other}`"))),
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            shapes: Vec::new(),
            texture: Texture::Checker { frequency: 3.0 },
            color_a: [0.9, 0.55, 0.2],
            color_b: [0.15, 0.35, 0.8],
            cameras: 24,
            camera_radius: 3.0,
            elevation_deg: 25.0,
            alternate_elevation: true,
            width: 64,
            height: 64,
            fov_deg: 40.0,
            background: [0.0; 3],
        }
    }
}

impl SceneConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.reject_unknown(SCENE_KEYS)?;
        let d = SceneConfig::default();
        let shapes = kv.all("shape").into_iter().map(parse_shape).collect::<Result<Vec<_>>>()?;
        let texture = match kv.raw("texture")? {
            None => d.texture,
            Some(t) => {
                let mut it = t.splitn(2, char::is_whitespace);
                let kind = it.next().unwrap_or("");
                let nums = parse_numbers("texture", it.next().unwrap_or(""))?;
                match (kind, nums.len()) {
                    ("constant", 0) => Texture::Constant,
                    ("checker", 1) => Texture::Checker { frequency: nums[0] },
                    ("stripes", 4) => Texture::Stripes {
                        frequency: nums[0],
                        direction: vec3(&nums[1..4])
                            .try_normalize()
                            .ok_or_else(|| Error::Config("stripe direction is zero".into()))?,
                    },
                    _ => return Err(Error::Config(format!("bad texture `{t}`"))),
                }
            }
        };
        let scene = SceneConfig {
            shapes,
            texture,
            color_a: rgb("color_a", kv.get_vec("color_a")?, d.color_a)?,
            color_b: rgb("color_b", kv.get_vec("color_b")?, d.color_b)?,
            cameras: kv.get_or("cameras", d.cameras)?,
            camera_radius: kv.get_or("camera_radius", d.camera_radius)?,
            elevation_deg: kv.get_or("elevation_deg", d.elevation_deg)?,
            alternate_elevation: kv.get_or("alternate_elevation", d.alternate_elevation)?,
            width: kv.get_or("width", d.width)?,
            height: kv.get_or("height", d.height)?,
            fov_deg: kv.get_or("fov_deg", d.fov_deg)?,
            background: rgb("background", kv.get_vec("background")?, d.background)?,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cameras < 3 {
            return Err(Error::Config("a scene needs at least 3 cameras".into()));
        }
        if self.width == 0 || self.height == 0 || !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::Config("bad image size or field of view".into()));
        }
        if !(self.camera_radius > 1.0) {
            return Err(Error::Config("cameras must sit outside the unit sphere".into()));
        }
        for s in &self.shapes {
            match s {
                AnalyticShape::Plane { offset, .. } if offset.abs() >= 1.0 => {
                    return Err(Error::Config("plane misses the unit sphere".into()))
                }
                AnalyticShape::Plane { .. } => {}
                other if other.bounding_radius() > 1.0 => {
                    return Err(Error::Config("shape does not fit the unit sphere".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn field(&self) -> SceneField {
        SceneField { shape: if self.shapes.is_empty() { None } else { Some(AnalyticShape::Union(self.shapes.clone())) } }
    }

    pub fn camera_list(&self) -> Result<Vec<Camera>> {
        camera_ring(
            self.cameras,
            self.camera_radius,
            self.elevation_deg,
            self.alternate_elevation,
            self.width,
            self.height,
            self.fov_deg,
        )
    }

    /// Unshaded surface color at `p`.
    pub fn albedo(&self, p: Point3) -> [f64; 3] {
        let t = match self.texture {
            Texture::Constant => 0.0,
            Texture::Checker { frequency } => {
                // Quarter-cell phase keeps axis-aligned planes through the
                // origin away from cell borders.
                let cell = |x: f64| (frequency * x + 0.25).floor() as i64;
                ((cell(p.x) + cell(p.y) + cell(p.z)).rem_euclid(2)) as f64
            }
            Texture::Stripes { frequency, direction } => 0.5 + 0.5 * (2.0 * PI * frequency * p.dot(direction)).sin(),
        };
        let mut c = [0.0; 3];
        for k in 0..3 {
            c[k] = (1.0 - t) * self.color_a[k] + t * self.color_b[k];
        }
        c
    }

    /// Area-weighted points on the analytic surfaces; planes are clipped to
    /// the unit sphere.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Result<PointSet> {
        if self.shapes.is_empty() || n == 0 {
            return Err(Error::Contract("sample_surface needs shapes and n >= 1".into()));
        }
        let areas: Vec<f64> = self.shapes.iter().map(shape_area).collect();
        let total: f64 = areas.iter().sum();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let mut pick = rng.gen::<f64>() * total;
            let mut idx = areas.len() - 1;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    idx = i;
                    break;
                }
                pick -= a;
            }
            points.push(sample_on_shape(&self.shapes[idx], &mut rng));
        }
        Ok(PointSet::tagged(points, "analytic"))
    }
}

fn shape_area(s: &AnalyticShape) -> f64 {
    match s {
        AnalyticShape::Sphere { radius, .. } => 4.0 * PI * radius * radius,
        AnalyticShape::OpenDisc { radius, .. } => PI * radius * radius,
        AnalyticShape::Plane { offset, .. } => PI * (1.0 - offset * offset),
        AnalyticShape::Union(m) => m.iter().map(shape_area).sum(),
    }
}

fn orthonormal_basis(n: Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
    let a = n.cross(helper).try_normalize().unwrap();
    (a, n.cross(a))
}

fn disc_point(center: Point3, normal: Vec3, radius: f64, rng: &mut ChaCha8Rng) -> Point3 {
    let (a, b) = orthonormal_basis(normal);
    let r = radius * rng.gen::<f64>().sqrt();
    let phi = 2.0 * PI * rng.gen::<f64>();
    center + (r * phi.cos()) * a + (r * phi.sin()) * b
}

fn sample_on_shape(s: &AnalyticShape, rng: &mut ChaCha8Rng) -> Point3 {
    match s {
        AnalyticShape::Sphere { center, radius } => {
            let z: f64 = rng.gen_range(-1.0..1.0);
            let phi = 2.0 * PI * rng.gen::<f64>();
            let r = (1.0 - z * z).sqrt();
            *center + *radius * Vec3::new(r * phi.cos(), r * phi.sin(), z)
        }
        AnalyticShape::OpenDisc { center, normal, radius } => disc_point(*center, *normal, *radius, rng),
        AnalyticShape::Plane { normal, offset } => {
            disc_point(*offset * *normal, *normal, (1.0 - offset * offset).sqrt(), rng)
        }
        AnalyticShape::Union(m) => {
            let areas: Vec<f64> = m.iter().map(shape_area).collect();
            let mut pick = rng.gen::<f64>() * areas.iter().sum::<f64>();
            for (i, a) in areas.iter().enumerate() {
                if pick < *a || i + 1 == m.len() {
                    return sample_on_shape(&m[i], rng);
                }
                pick -= a;
            }
            unreachable!()
        }
    }
}

/// Scene UDF; an empty scene is infinitely far from every point.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneField {
    pub shape: Option<AnalyticShape>,
}

impl DistanceField for SceneField {
    fn sample(&self, p: Point3) -> FieldSample {
        match &self.shape {
            Some(s) => s.sample(p),
            None => FieldSample { distance: f64::INFINITY, gradient: Vec3::Z, degenerate: true },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_scene() {
        let s = SceneConfig::parse(
            "shape = sphere 0.3 0 0 0.35\nshape = disc -0.35 0 0 0 0 2 0.4\ntexture = stripes 2 1 0 0\ncameras = 6\nwidth = 16\nheight = 12\n",
        )
        .unwrap();
        assert_eq!(s.shapes.len(), 2);
        assert!(matches!(s.shapes[1], AnalyticShape::OpenDisc { normal, .. } if normal == Vec3::Z));
        assert_eq!(s.camera_list().unwrap().len(), 6);
        assert_eq!((s.width, s.height), (16, 12));
        assert!(SceneConfig::parse("shape = cube 1\n").is_err());
        assert!(SceneConfig::parse("shape = sphere 0.9 0 0 0.5\n").is_err());
        assert!(SceneConfig::parse("cameras = 2\n").is_err());
        assert!(SceneConfig::parse("colour = 1\n").is_err());
    }

    #[test]
    fn surface_samples_lie_on_shapes() {
        let s = SceneConfig::parse("shape = sphere 0.3 0 0 0.35\nshape = disc -0.35 0 0 0.6 0 0.8 0.4\nshape = plane 0 0 1 0.5\n").unwrap();
        let f = s.field();
        let pts = s.sample_surface(3000, 1).unwrap();
        for p in &pts.points {
            assert!(f.distance(*p) < 1e-12);
        }
        assert_eq!(pts, s.sample_surface(3000, 1).unwrap());
    }

    #[test]
    fn checker_is_stable_on_axis_planes() {
        let s = SceneConfig { texture: Texture::Checker { frequency: 3.0 }, ..Default::default() };
        let a = s.albedo(Vec3::new(0.1, 0.1, 1e-7));
        let b = s.albedo(Vec3::new(0.1, 0.1, -1e-7));
        assert_eq!(a, b);
    }
}
