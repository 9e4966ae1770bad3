use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Direction3, Mat3, Point3, Vec3};

/// Pinhole camera, OpenCV axes: x right, y down, z forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-from-camera rotation.
    pub rotation: Mat3,
    /// Camera center in world coordinates.
    pub translation: Vec3,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(intrinsics: [f64; 4], rotation: Mat3, translation: Vec3, width: usize, height: usize) -> Result<Self> {
        let [fx, fy, cx, cy] = intrinsics;
        if !(fx > 0.0 && fy > 0.0) || width == 0 || height == 0 {
            return Err(Error::Contract("camera needs positive focal lengths and image size".into()));
        }
        if rotation.orthonormality_error() > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::Contract("camera rotation is not a proper rotation".into()));
        }
        Ok(Camera { fx, fy, cx, cy, rotation, translation, width, height })
    }

    /// Camera at `eye` looking at `target`, with world `up` pointing towards
    /// the top of the image and a horizontal field of view in degrees.
    pub fn look_at(eye: Point3, target: Point3, up: Vec3, width: usize, height: usize, fov_deg: f64) -> Result<Self> {
        let f = (target - eye)
            .try_normalize()
            .ok_or_else(|| Error::Contract("look_at: eye equals target".into()))?;
        let r = f
            .cross(up)
            .try_normalize()
            .ok_or_else(|| Error::Contract("look_at: up is parallel to the view direction".into()))?;
        let d = f.cross(r);
        let fx = 0.5 * width as f64 / (0.5 * fov_deg.to_radians()).tan();
        Camera::new(
            [fx, fx, 0.5 * width as f64, 0.5 * height as f64],
            Mat3::from_columns(r, d, f),
            eye,
            width,
            height,
        )
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Ray through the center of pixel `(x, y)`.
    pub fn pixel_ray(&self, x: usize, y: usize) -> (Point3, Direction3) {
        let u = x as f64 + 0.5;
        let v = y as f64 + 0.5;
        let d_cam = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        let d = self.rotation.mul_vec(d_cam);
        (self.translation, Direction3::normalize(d).expect("pixel direction has z = 1"))
    }

    /// Projects a world point to pixel coordinates; `None` behind the camera.
    pub fn project(&self, p: Point3) -> Option<(f64, f64)> {
        let c = self.rotation.transpose().mul_vec(p - self.translation);
        if c.z <= 0.0 {
            return None;
        }
        Some((self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy))
    }

    /// `fx fy cx cy r00 .. r22 tx ty tz`
    pub fn to_line(&self) -> String {
        let mut s = String::new();
        let mut nums = vec![self.fx, self.fy, self.cx, self.cy];
        nums.extend(self.rotation.to_row_major());
        nums.extend(self.translation.to_array());
        for (i, v) in nums.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{v:?}");
        }
        s
    }

    /// Parses one cameras-file line. The image size is `2 cx × 2 cy`.
    pub fn from_line(line: &str) -> std::result::Result<Self, String> {
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| format!("bad number {t:?}")))
            .collect::<std::result::Result<_, _>>()?;
        if nums.len() != 16 {
            return Err(format!("expected 16 numbers, found {}", nums.len()));
        }
        let mut r = [0.0; 9];
        r.copy_from_slice(&nums[4..13]);
        let width = (2.0 * nums[2]).round() as usize;
        let height = (2.0 * nums[3]).round() as usize;
        Camera::new(
            [nums[0], nums[1], nums[2], nums[3]],
            Mat3::from_row_major(r),
            Vec3::new(nums[13], nums[14], nums[15]),
            width,
            height,
        )
        .map_err(|e| e.to_string())
    }
}

/// Cameras spaced evenly in azimuth on a circle of `radius` around the
/// origin, at `elevation_deg` above the xy-plane. With `alternate`, every
/// other camera sits below the plane instead.
pub fn camera_ring(
    count: usize,
    radius: f64,
    elevation_deg: f64,
    alternate: bool,
    width: usize,
    height: usize,
    fov_deg: f64,
) -> Result<Vec<Camera>> {
    (0..count)
        .map(|k| {
            let az = 2.0 * PI * k as f64 / count as f64;
            let el = if alternate && k % 2 == 1 { -elevation_deg } else { elevation_deg }.to_radians();
            let eye = Vec3::new(radius * el.cos() * az.cos(), radius * el.cos() * az.sin(), radius * el.sin());
            Camera::look_at(eye, Vec3::ZERO, Vec3::Z, width, height, fov_deg)
        })
        .collect()
}

pub fn save_cameras(cameras: &[Camera], path: &Path) -> Result<()> {
    let mut text = String::new();
    for c in cameras {
        text.push_str(&c.to_line());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_cameras(path: &Path) -> Result<Vec<Camera>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| Camera::from_line(l).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1))))
        .collect()
}
