//! RGB images in `[0, 1]`, 8-bit PNG and float PFM files, binary masks.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub pixels: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Self {
        RgbImage { width, height, pixels: vec![color; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: [f64; 3]) {
        self.pixels[y * self.width + x] = c;
    }

    pub fn flat(&self) -> Vec<f64> {
        self.pixels.iter().flatten().copied().collect()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.flat().iter().map(|v| to_u8(*v)).collect();
        image::save_buffer(path, &bytes, self.width as u32, self.height as u32, image::ColorType::Rgb8)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0.map(|c| c as f64 / 255.0)).collect();
        Ok(RgbImage { width: w as usize, height: h as usize, pixels })
    }

    /// Little-endian PFM; rows are stored bottom-up as the format requires.
    pub fn save_pfm(&self, path: &Path) -> Result<()> {
        let mut out = format!("PF\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                for c in self.get(x, y) {
                    out.extend_from_slice(&(c as f32).to_le_bytes());
                }
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load_pfm(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |r: &str| Error::format(path, r.to_string());
        // Three newline-terminated header lines.
        let mut pos = 0;
        let mut header = Vec::new();
        for _ in 0..3 {
            let end = bytes[pos..].iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated PFM header"))?;
            header.push(String::from_utf8_lossy(&bytes[pos..pos + end]).trim().to_string());
            pos += end + 1;
        }
        if header[0] != "PF" {
            return Err(bad("only colour PFM (`PF`) is supported"));
        }
        let dims: Vec<usize> = header[1].split_whitespace().filter_map(|t| t.parse().ok()).collect();
        let scale: f64 = header[2].parse().map_err(|_| bad("bad PFM scale"))?;
        if dims.len() != 2 || scale == 0.0 {
            return Err(bad("bad PFM dimensions"));
        }
        let (w, h) = (dims[0], dims[1]);
        let body = &bytes[pos..];
        if body.len() != w * h * 12 {
            return Err(bad("PFM payload size does not match its dimensions"));
        }
        let read = |i: usize| {
            let b = [body[4 * i], body[4 * i + 1], body[4 * i + 2], body[4 * i + 3]];
            if scale < 0.0 {
                f32::from_le_bytes(b) as f64
            } else {
                f32::from_be_bytes(b) as f64
            }
        };
        let mut img = RgbImage::filled(w, h, [0.0; 3]);
        for (row, y) in (0..h).rev().enumerate() {
            for x in 0..w {
                let i = 3 * (row * w + x);
                img.set(x, y, [read(i), read(i + 1), read(i + 2)]);
            }
        }
        Ok(img)
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_mask(mask: &[bool], width: usize, height: usize, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    image::save_buffer(path, &bytes, width as u32, height as u32, image::ColorType::L8)?;
    Ok(())
}

pub fn load_mask(path: &Path) -> Result<(Vec<bool>, usize, usize)> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Ok((img.pixels().map(|p| p.0[0] >= 128).collect(), w as usize, h as usize))
}
