//! Synthetic multi-view datasets rendered by sphere tracing analytic scenes.
//!
//! Directory layout:
//!
//! ```text
//! cameras.txt          one camera per line
//! dataset.txt          `views = N` and `background = r g b`
//! images/view_000.png  8-bit color
//! images/view_000.pfm  float color (preferred when loading)
//! masks/view_000.png   hit mask
//! ```

use std::fs;
use std::path::Path;

use super::camera::{load_cameras, save_cameras, Camera};
use super::config::KeyValues;
use super::images::{load_mask, save_mask, RgbImage};
use super::scene::SceneConfig;
use crate::error::{Error, Result};
use crate::fields::DistanceField;
use crate::geometry::{Direction3, Point3};
use crate::rendering::Ray;

pub const TRACE_EPS: f64 = 1e-5;
pub const TRACE_MAX_STEPS: usize = 256;
/// Offset towards the camera at which the shading normal is taken.
const NORMAL_BACKOFF: f64 = 1e-4;
const SHADING_FLOOR: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub cameras: Vec<Camera>,
    pub images: Vec<RgbImage>,
    pub masks: Option<Vec<Vec<bool>>>,
    pub background: [f64; 3],
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.cameras.len() < 3 || self.images.len() != self.cameras.len() {
            return Err(Error::Contract(format!(
                "dataset needs >= 3 views with one image each ({} cameras, {} images)",
                self.cameras.len(),
                self.images.len()
            )));
        }
        for (i, (c, img)) in self.cameras.iter().zip(&self.images).enumerate() {
            if (c.width, c.height) != (img.width, img.height) {
                return Err(Error::Contract(format!("view {i}: image size does not match its camera")));
            }
            if let Some(m) = &self.masks {
                if m[i].len() != c.pixel_count() {
                    return Err(Error::Contract(format!("view {i}: mask size does not match its camera")));
                }
            }
        }
        if self.masks.as_ref().is_some_and(|m| m.len() != self.cameras.len()) {
            return Err(Error::Contract("mask count differs from view count".into()));
        }
        Ok(())
    }

    pub fn view_count(&self) -> usize {
        self.cameras.len()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        let images = dir.join("images");
        let masks = dir.join("masks");
        for d in [dir, &images, &masks] {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        save_cameras(&self.cameras, &dir.join("cameras.txt"))?;
        let b = self.background;
        let meta = format!("views = {}\nbackground = {:?} {:?} {:?}\n", self.view_count(), b[0], b[1], b[2]);
        let meta_path = dir.join("dataset.txt");
        fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;
        for (i, img) in self.images.iter().enumerate() {
            img.save_png(&images.join(format!("view_{i:03}.png")))?;
            img.save_pfm(&images.join(format!("view_{i:03}.pfm")))?;
            if let Some(m) = &self.masks {
                save_mask(&m[i], img.width, img.height, &masks.join(format!("view_{i:03}.png")))?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cameras = load_cameras(&dir.join("cameras.txt"))?;
        let meta_path = dir.join("dataset.txt");
        let background = match fs::read_to_string(&meta_path) {
            Ok(text) => {
                let kv = KeyValues::parse(&text)?;
                match kv.get_vec("background")? {
                    Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
                    Some(_) => return Err(Error::format(&meta_path, "background needs three values")),
                    None => [0.0; 3],
                }
            }
            Err(_) => [0.0; 3],
        };
        let mut images = Vec::with_capacity(cameras.len());
        let mut masks = Vec::with_capacity(cameras.len());
        for i in 0..cameras.len() {
            let pfm = dir.join("images").join(format!("view_{i:03}.pfm"));
            let img = if pfm.exists() {
                RgbImage::load_pfm(&pfm)?
            } else {
                RgbImage::load_png(&dir.join("images").join(format!("view_{i:03}.png")))?
            };
            images.push(img);
            let mp = dir.join("masks").join(format!("view_{i:03}.png"));
            if mp.exists() {
                masks.push(load_mask(&mp)?.0);
            }
        }
        let masks = if masks.len() == cameras.len() { Some(masks) } else { None };
        let ds = Dataset { cameras, images, masks, background };
        ds.validate()?;
        Ok(ds)
    }
}

/// First surface hit inside the unit sphere, by sphere tracing.
pub fn sphere_trace<F: DistanceField + ?Sized>(field: &F, origin: Point3, dir: Direction3) -> Option<f64> {
    let ray = Ray::through_unit_sphere(origin, dir).ok()?;
    let mut t = ray.t_near;
    for _ in 0..TRACE_MAX_STEPS {
        let d = field.distance(ray.at(t));
        if d < TRACE_EPS {
            return Some(t);
        }
        t += d;
        if t > ray.t_far {
            return None;
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewRender {
    pub image: RgbImage,
    pub mask: Vec<bool>,
    /// Hit distance along the ray, `None` for misses.
    pub depth: Vec<Option<f64>>,
}

pub fn render_analytic_view(scene: &SceneConfig, camera: &Camera) -> ViewRender {
    let field = scene.field();
    let mut image = RgbImage::filled(camera.width, camera.height, scene.background);
    let mut mask = vec![false; camera.pixel_count()];
    let mut depth = vec![None; camera.pixel_count()];
    for y in 0..camera.height {
        for x in 0..camera.width {
            let (o, d) = camera.pixel_ray(x, y);
            let Some(t) = sphere_trace(&field, o, d) else { continue };
            let v = d.vec();
            let p = o + t * v;
            let n = field.sample(o + (t - NORMAL_BACKOFF) * v).gradient;
            let shade = SHADING_FLOOR.max(n.dot(v).abs());
            image.set(x, y, scene.albedo(p).map(|c| c * shade));
            mask[y * camera.width + x] = true;
            depth[y * camera.width + x] = Some(t);
        }
    }
    ViewRender { image, mask, depth }
}

pub fn render_dataset(scene: &SceneConfig) -> Result<Dataset> {
    scene.validate()?;
    let cameras = scene.camera_list()?;
    let mut images = Vec::with_capacity(cameras.len());
    let mut masks = Vec::with_capacity(cameras.len());
    for c in &cameras {
        let v = render_analytic_view(scene, c);
        images.push(v.image);
        masks.push(v.mask);
    }
    Ok(Dataset { cameras, images, masks: Some(masks), background: scene.background })
}

pub fn generate_dataset(scene: &SceneConfig, out_dir: &Path) -> Result<Dataset> {
    let ds = render_dataset(scene)?;
    ds.save(out_dir)?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    #[test]
    fn plane_depth_matches_intersection() {
        let scene = SceneConfig::parse("shape = plane 0 0 1 0.1\ncameras = 3\nwidth = 9\nheight = 9\n").unwrap();
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::ZERO, Vec3::Y, 9, 9, 40.0).unwrap();
        let v = render_analytic_view(&scene, &cam);
        let (_, d) = cam.pixel_ray(4, 4);
        assert!((d.vec() + Vec3::Z).norm() < 1e-12);
        assert!((v.depth[4 * 9 + 4].unwrap() - 2.9).abs() < 1e-4);
    }

    #[test]
    fn empty_scene_is_background() {
        let scene = SceneConfig::parse("cameras = 3\nwidth = 6\nheight = 4\nbackground = 0.2 0.3 0.4\n").unwrap();
        let ds = render_dataset(&scene).unwrap();
        for (img, m) in ds.images.iter().zip(ds.masks.as_ref().unwrap()) {
            assert!(img.pixels.iter().all(|p| *p == [0.2, 0.3, 0.4]));
            assert!(m.iter().all(|&b| !b));
        }
    }

    #[test]
    fn disc_mask_matches_ray_disc_test() {
        let scene = SceneConfig::parse("shape = disc 0.1 0 0 0.6 0 0.8 0.5\ncameras = 4\nwidth = 32\nheight = 32\n").unwrap();
        let (c, n, r) = (Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.6, 0.0, 0.8), 0.5);
        let mut checked = 0;
        for cam in scene.camera_list().unwrap() {
            let v = render_analytic_view(&scene, &cam);
            for y in 0..32 {
                for x in 0..32 {
                    let (o, d) = cam.pixel_ray(x, y);
                    let denom = d.vec().dot(n);
                    let t = (c - o).dot(n) / denom;
                    let radial = (o + t * d.vec() - c).norm();
                    // Skip grazing rays and rays within a hair of the rim.
                    if denom.abs() < 0.1 || (radial - r).abs() < 1e-3 {
                        continue;
                    }
                    assert_eq!(v.mask[y * 32 + x], radial < r, "pixel ({x}, {y})");
                    checked += 1;
                }
            }
        }
        assert!(checked > 3000);
    }

    #[test]
    fn save_load_round_trip() {
        let scene = SceneConfig::parse("shape = sphere 0 0 0 0.5\ncameras = 3\nwidth = 8\nheight = 6\nbackground = 0.1 0.1 0.1\n").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_dataset(&scene, dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.cameras, ds.cameras);
        assert_eq!(back.masks, ds.masks);
        assert_eq!(back.background, ds.background);
        for (a, b) in ds.images.iter().zip(&back.images) {
            for (p, q) in a.pixels.iter().zip(&b.pixels) {
                assert_eq!(p.map(|v| v as f32 as f64), *q);
            }
        }
    }
}
