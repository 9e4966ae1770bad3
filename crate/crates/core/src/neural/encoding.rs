//! Frequency (positional) encoding of 3-vectors.

use std::f64::consts::PI;

use super::real::Real;

/// `x ↦ [x] ⊕ [sin(2^k π x), cos(2^k π x)]_{k < L}`, applied per component.
///
/// Output layout: the raw input (if included), then for each frequency `k`
/// the three sines followed by the three cosines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositionalEncoding {
    pub num_frequencies: usize,
    pub include_input: bool,
}

impl PositionalEncoding {
    pub fn new(num_frequencies: usize, include_input: bool) -> Self {
        PositionalEncoding { num_frequencies, include_input }
    }

    pub fn output_dim(&self) -> usize {
        3 * usize::from(self.include_input) + 6 * self.num_frequencies
    }

    fn input_offset(&self) -> usize {
        3 * usize::from(self.include_input)
    }

    fn frequency(k: usize) -> f64 {
        (1u64 << k) as f64 * PI
    }

    pub fn encode_into<T: Real>(&self, x: [T; 3], out: &mut [T]) {
        debug_assert_eq!(out.len(), self.output_dim());
        if self.include_input {
            out[..3].copy_from_slice(&x);
        }
        let base = self.input_offset();
        for k in 0..self.num_frequencies {
            let f = Self::frequency(k);
            let o = base + 6 * k;
            for c in 0..3 {
                let arg = x[c].f64() * f;
                out[o + c] = T::of(arg.sin());
                out[o + 3 + c] = T::of(arg.cos());
            }
        }
    }

    pub fn encode<T: Real>(&self, x: [T; 3]) -> Vec<T> {
        let mut out = vec![T::zero(); self.output_dim()];
        self.encode_into(x, &mut out);
        out
    }

    /// `J^T g`: pulls a gradient w.r.t. the encoding back to the input.
    /// `enc` must be the encoding of the same input.
    pub fn pullback<T: Real>(&self, enc: &[T], g: &[T]) -> [T; 3] {
        let mut out = [T::zero(); 3];
        if self.include_input {
            out.copy_from_slice(&g[..3]);
        }
        let base = self.input_offset();
        for k in 0..self.num_frequencies {
            let f = T::of(Self::frequency(k));
            let o = base + 6 * k;
            for c in 0..3 {
                // d sin(fx)/dx = f cos(fx), d cos(fx)/dx = -f sin(fx)
                out[c] += f * (enc[o + 3 + c] * g[o + c] - enc[o + c] * g[o + 3 + c]);
            }
        }
        out
    }

    /// `J v`: pushes an input-space vector forward to encoding space.
    pub fn pushforward<T: Real>(&self, enc: &[T], v: [T; 3], out: &mut [T]) {
        if self.include_input {
            out[..3].copy_from_slice(&v);
        }
        let base = self.input_offset();
        for k in 0..self.num_frequencies {
            let f = T::of(Self::frequency(k));
            let o = base + 6 * k;
            for c in 0..3 {
                out[o + c] = f * enc[o + 3 + c] * v[c];
                out[o + 3 + c] = -f * enc[o + c] * v[c];
            }
        }
    }
}
