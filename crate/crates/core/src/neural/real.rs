use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type the networks run in: `f32` for training, `f64` for
/// gradient checks.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    /// `c = alpha * a * b + beta * c` on raw strided buffers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    /// Softplus `ln(1 + e^{βz}) / β` and its slope `sigmoid(βz)`,
    /// elementwise.
    fn softplus_into(z: &[Self], beta: f64, value: &mut [Self], slope: &mut [Self]) {
        let b = Self::of(beta);
        for ((&zi, v), s) in z.iter().zip(value.iter_mut()).zip(slope.iter_mut()) {
            let y = zi * b;
            let e = (-y.abs()).exp();
            let inv = Self::one() / (Self::one() + e);
            *s = if y >= Self::zero() { inv } else { e * inv };
            *v = (y.max(Self::zero()) + e.ln_1p()) / b;
        }
    }

    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Real for f32 {
    /// Branch-free polynomial `exp` and `ln(1 + x)` so the loop vectorizes;
    /// both are accurate to a few ulp.
    fn softplus_into(z: &[f32], beta: f64, value: &mut [f32], slope: &mut [f32]) {
        let b = beta as f32;
        let inv_b = 1.0 / b;
        for ((&zi, v), s) in z.iter().zip(value.iter_mut()).zip(slope.iter_mut()) {
            let y = zi * b;
            let e = exp_nonpositive_f32(-y.abs());
            let inv = 1.0 / (1.0 + e);
            *s = if y >= 0.0 { inv } else { e * inv };
            *v = (y.max(0.0) + ln_1p_unit_f32(e)) * inv_b;
        }
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Storage layout of a row-major matrix operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    /// Stored as the logical shape.
    N,
    /// Stored transposed.
    T,
}

/// `c (m×n) = a (m×k) · b (k×n) + beta · c`, all row-major.
///
/// With `Op::T` the operand is stored as its transpose (`k×m` for `a`,
/// `n×k` for `b`). `beta == 0` overwrites `c` without reading it.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    op_a: Op,
    b: &[T],
    op_b: Op,
    c: &mut [T],
    beta: T,
) {
    assert!(a.len() >= m * k, "gemm: lhs too small");
    assert!(b.len() >= k * n, "gemm: rhs too small");
    assert!(c.len() >= m * n, "gemm: output too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c[..m * n].iter_mut() {
            *v = if beta == T::zero() { T::zero() } else { *v * beta };
        }
        return;
    }
    let (rsa, csa) = match op_a {
        Op::N => (k as isize, 1),
        Op::T => (1, m as isize),
    };
    let (rsb, csb) = match op_b {
        Op::N => (n as isize, 1),
        Op::T => (1, k as isize),
    };
    // SAFETY: bounds asserted above; strides describe dense row-major storage.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}


/// `e^x` for `x <= 0` (Cephes polynomial, range-reduced by powers of two).
#[inline(always)]
fn exp_nonpositive_f32(x: f32) -> f32 {
    const MAGIC: f32 = 12_582_912.0; // 1.5 · 2²³: adding it rounds to an integer
    let x = x.max(-87.0);
    let t = x * std::f32::consts::LOG2_E + MAGIC;
    let n = t - MAGIC;
    let k = t.to_bits() as i32 - MAGIC.to_bits() as i32;
    let r = x - n * 0.693_359_4 - n * -2.121_944_4e-4;
    let mut p = 1.987_569_1e-4f32;
    p = p * r + 1.398_199_9e-3;
    p = p * r + 8.333_452e-3;
    p = p * r + 4.166_579_6e-2;
    p = p * r + 1.666_666_5e-1;
    p = p * r + 5.000_000_1e-1;
    let scale = f32::from_bits(((k + 127) << 23) as u32);
    (p * r * r + r + 1.0) * scale
}

/// `ln(1 + x)` for `0 <= x <= 1` (Cephes `logf` polynomial).
#[inline(always)]
fn ln_1p_unit_f32(x: f32) -> f32 {
    let big = x > std::f32::consts::SQRT_2 - 1.0;
    let u = if big { (x - 1.0) * 0.5 } else { x };
    let y = u * u;
    let mut p = 7.037_683_6e-2f32;
    p = p * u - 1.151_461e-1;
    p = p * u + 1.167_699_9e-1;
    p = p * u - 1.242_014_1e-1;
    p = p * u + 1.424_932_3e-1;
    p = p * u - 1.666_805_8e-1;
    p = p * u + 2.000_071_5e-1;
    p = p * u - 2.499_999_4e-1;
    p = p * u + 3.333_333_1e-1;
    let r = p * u * y - 0.5 * y + u;
    if big {
        r + std::f32::consts::LN_2
    } else {
        r
    }
}
