//! Dense linear-algebra kernels: GEMM dispatch, im2col/col2im and the scalar trait that
//! lets the same network run in `f32` (training, inference) or `f64` (gradient checks).

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Sub, SubAssign};

pub trait Scalar:
    Copy
    + Send
    + Sync
    + Default
    + PartialOrd
    + Debug
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `C = alpha * A B + beta * C` with explicit row/column strides.
    ///
    /// # Safety
    /// Pointers and strides must describe valid `m x k`, `k x n` and `m x n` matrices.
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
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
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
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
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
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major matrix operand; `trans` reads the stored matrix transposed.
#[derive(Clone, Copy)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub trans: bool,
}

impl<'a, T> MatRef<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            trans: false,
        }
    }

    pub fn t(self) -> Self {
        Self {
            trans: !self.trans,
            ..self
        }
    }

    fn shape(&self) -> (usize, usize) {
        if self.trans {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.trans {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `c = a b` (or `c += a b` when `accumulate`), `c` row-major `m x n`.
pub fn gemm<T: Scalar>(a: MatRef<'_, T>, b: MatRef<'_, T>, c: &mut [T], accumulate: bool) {
    let (m, k) = a.shape();
    let (kb, n) = b.shape();
    assert_eq!(k, kb, "inner dimensions differ");
    assert!(a.data.len() >= a.rows * a.cols && b.data.len() >= b.rows * b.cols);
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { T::ONE } else { T::ZERO };
    if k == 0 {
        if !accumulate {
            c[..m * n].fill(T::ZERO);
        }
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: shapes and lengths checked above
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::ONE,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// Geometry of one convolution over a CHW tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn col_rows(&self) -> usize {
        self.in_c * self.k * self.k
    }

    /// Output rows/columns whose receptive window intersects input rows `[lo, hi)`.
    /// Returns an empty range when nothing is affected.
    pub fn affected(&self, lo: usize, hi: usize, out_len: usize) -> (usize, usize) {
        if lo >= hi {
            return (0, 0);
        }
        // window of output o covers input [o*s - p, o*s - p + k - 1]
        let first = (lo + self.pad + 1).saturating_sub(self.k);
        let first = first.div_ceil(self.stride);
        let last = (hi - 1 + self.pad) / self.stride;
        let end = (last + 1).min(out_len);
        if first >= end {
            (0, 0)
        } else {
            (first, end)
        }
    }
}

/// Output columns `[lo, hi)` whose tap at kernel offset `kx` lands inside the input.
fn valid_span(g: &ConvGeom, kx: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    // ix = ox * s + kx - p must lie in [0, in_len)
    let lo = g.pad.saturating_sub(kx).div_ceil(g.stride);
    let hi = if in_len + g.pad > kx {
        ((in_len + g.pad - kx - 1) / g.stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Unfold the output rectangle `[oy0, oy1) x [ox0, ox1)` of a convolution into a
/// `(in_c * k * k) x (rect area)` column matrix.
#[allow(clippy::too_many_arguments)]
pub fn im2col_rect<T: Scalar>(
    input: &[T],
    g: &ConvGeom,
    oy0: usize,
    oy1: usize,
    ox0: usize,
    ox1: usize,
    col: &mut [T],
) {
    let rw = ox1 - ox0;
    let area = (oy1 - oy0) * rw;
    debug_assert!(col.len() >= g.col_rows() * area);
    let (h, w) = (g.in_h, g.in_w);
    let s = g.stride;
    let mut row = 0;
    for c in 0..g.in_c {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for ky in 0..g.k {
            let (vy0, vy1) = valid_span(g, ky, h, usize::MAX);
            for kx in 0..g.k {
                let (vx0, vx1) = valid_span(g, kx, w, usize::MAX);
                let (a, b) = (vx0.clamp(ox0, ox1), vx1.clamp(ox0, ox1));
                let dst = &mut col[row * area..(row + 1) * area];
                for (r, oy) in (oy0..oy1).enumerate() {
                    let d = &mut dst[r * rw..(r + 1) * rw];
                    if oy < vy0 || oy >= vy1 || a >= b {
                        d.fill(T::ZERO);
                        continue;
                    }
                    let iy = oy * s + ky - g.pad;
                    let src = &plane[iy * w..(iy + 1) * w];
                    d[..a - ox0].fill(T::ZERO);
                    d[b - ox0..].fill(T::ZERO);
                    let start = a * s + kx - g.pad;
                    let d = &mut d[a - ox0..b - ox0];
                    if s == 1 {
                        d.copy_from_slice(&src[start..start + d.len()]);
                    } else {
                        for (v, x) in d.iter_mut().zip(src[start..].iter().step_by(s)) {
                            *v = *x;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

pub fn im2col<T: Scalar>(input: &[T], g: &ConvGeom, col: &mut [T]) {
    im2col_rect(input, g, 0, g.out_h(), 0, g.out_w(), col)
}

/// Adjoint of [`im2col`]: scatter-add columns back into a CHW gradient.
pub fn col2im<T: Scalar>(col: &[T], g: &ConvGeom, out: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let area = oh * ow;
    let (h, w) = (g.in_h, g.in_w);
    let s = g.stride;
    let mut row = 0;
    for c in 0..g.in_c {
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for ky in 0..g.k {
            let (vy0, vy1) = valid_span(g, ky, h, oh);
            for kx in 0..g.k {
                let (vx0, vx1) = valid_span(g, kx, w, ow);
                let src = &col[row * area..(row + 1) * area];
                row += 1;
                if vx0 >= vx1 {
                    continue;
                }
                for oy in vy0..vy1 {
                    let iy = oy * s + ky - g.pad;
                    let dst = &mut plane[iy * w..(iy + 1) * w];
                    let start = vx0 * s + kx - g.pad;
                    let srow = &src[oy * ow + vx0..oy * ow + vx1];
                    for (d, v) in dst[start..].iter_mut().step_by(s).zip(srow) {
                        *d += *v;
                    }
                }
            }
        }
    }
}
