//! Binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! | field                | type                                   |
//! |----------------------|----------------------------------------|
//! | magic                | 8 bytes `UDFCKPT1`                     |
//! | format version       | u32 (currently 1)                      |
//! | architecture         | 7 × u32 (see [`Architecture`] order)   |
//! | iteration            | u64                                    |
//! | config digest        | 32 bytes (SHA-256 of the config text)  |
//! | parameter count `P`  | u64                                    |
//! | parameters           | `P` × f32, flat order of [`super::ParamLayout`] |
//! | Adam step            | u64                                    |
//! | Adam β₁, β₂, ε       | 3 × f64                                |
//! | Adam first moments   | `P` × f32                              |
//! | Adam second moments  | `P` × f32                              |
//!
//! `log_kappa` and `log_beta` are the last two parameters.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::adam::AdamState;
use super::network::{Architecture, NetworkParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"UDFCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams<f32>,
    pub adam: AdamState<f32>,
    pub iteration: u64,
    pub config_digest: [u8; 32],
}

pub fn digest(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

impl Checkpoint {
    pub fn fresh(params: NetworkParams<f32>, config_digest: [u8; 32]) -> Self {
        let adam = AdamState::new(params.values.len());
        Checkpoint { params, adam, iteration: 0, config_digest }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let a = &self.params.arch;
        let n = self.params.values.len();
        let mut out = Vec::with_capacity(128 + 12 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for v in [
            a.udf_layers,
            a.udf_width,
            a.skip_after,
            a.color_layers,
            a.color_width,
            a.pos_frequencies,
            a.dir_frequencies,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&self.config_digest);
        out.extend_from_slice(&(n as u64).to_le_bytes());
        for v in &self.params.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.adam.step.to_le_bytes());
        for h in [self.adam.beta1, self.adam.beta2, self.adam.eps] {
            out.extend_from_slice(&h.to_le_bytes());
        }
        for v in self.adam.m.iter().chain(&self.adam.v) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(8)? != MAGIC {
            return Err(Error::format(path, "bad magic, not a checkpoint"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
        }
        let mut dims = [0usize; 7];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let arch = Architecture {
            udf_layers: dims[0],
            udf_width: dims[1],
            skip_after: dims[2],
            color_layers: dims[3],
            color_width: dims[4],
            pos_frequencies: dims[5],
            dir_frequencies: dims[6],
        };
        arch.validate().map_err(|e| Error::format(path, e.to_string()))?;
        let iteration = r.u64()?;
        let config_digest: [u8; 32] = r.take(32)?.try_into().unwrap();
        let n = r.u64()? as usize;
        let mut params = NetworkParams::<f32>::zeros(arch);
        if params.values.len() != n {
            return Err(Error::format(
                path,
                format!("parameter count {n} does not match architecture ({})", params.values.len()),
            ));
        }
        r.f32s(&mut params.values)?;
        let mut adam = AdamState::new(n);
        adam.step = r.u64()?;
        adam.beta1 = r.f64()?;
        adam.beta2 = r.f64()?;
        adam.eps = r.f64()?;
        r.f32s(&mut adam.m)?;
        r.f32s(&mut adam.v)?;
        if r.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes after checkpoint payload"));
        }
        Ok(Checkpoint { params, adam, iteration, config_digest })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
            f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        }
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.path, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, out: &mut [f32]) -> Result<()> {
        let raw = self.take(4 * out.len())?;
        for (v, c) in out.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(c.try_into().unwrap());
        }
        Ok(())
    }
}
