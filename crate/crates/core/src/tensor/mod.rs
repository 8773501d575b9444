//! Dense row-major matrices and the reverse-mode tape built on them.

mod graph;

pub use graph::{AttentionSpec, Gradients, Graph, Var};

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Floating-point element type of every tensor. Implemented for `f32`
/// (training and inference) and `f64` (gradient verification).
pub trait Scalar:
    Float + AddAssign + SubAssign + MulAssign + DivAssign + Debug + Default + Send + Sync + 'static
{
    const DTYPE: &'static str;

    fn of(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` over strided views.
    ///
    /// # Safety
    /// The strides must describe in-bounds views of the three buffers.
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
    const DTYPE: &'static str = "f32";

    fn of(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
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
    const DTYPE: &'static str = "f64";

    fn of(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
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

/// A read-only strided view used as a GEMM operand.
#[derive(Clone, Copy)]
pub(crate) struct View<'a, S> {
    pub data: &'a [S],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, S> View<'a, S> {
    pub fn new(data: &'a [S], rows: usize, cols: usize) -> Self {
        View { data, rows, cols, rs: cols, cs: 1 }
    }

    pub fn t(self) -> Self {
        View { data: self.data, rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }

    fn fits(&self) -> bool {
        self.rows == 0
            || self.cols == 0
            || (self.rows - 1) * self.rs + (self.cols - 1) * self.cs < self.data.len()
    }
}

/// `out (+)= a * b` with `out` a dense row-major `a.rows x b.cols` block.
pub(crate) fn gemm<S: Scalar>(a: View<'_, S>, b: View<'_, S>, out: &mut [S], accumulate: bool) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    assert!(a.fits() && b.fits(), "gemm operand out of bounds");
    assert!(out.len() >= a.rows * b.cols, "gemm output too small");
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    let beta = if accumulate { S::one() } else { S::zero() };
    if a.cols == 0 {
        if !accumulate {
            out[..a.rows * b.cols].iter_mut().for_each(|x| *x = S::zero());
        }
        return;
    }
    // SAFETY: bounds of all three views were asserted above.
    unsafe {
        S::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            S::one(),
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            out.as_mut_ptr(),
            b.cols as isize,
            1,
        );
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Converts element type, e.g. f32 checkpoints into f64 for verification.
    pub fn cast<T: Scalar>(&self) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| T::of(x.as_f64())).collect(),
        }
    }

    pub(crate) fn view(&self) -> View<'_, S> {
        View::new(&self.data, self.rows, self.cols)
    }

    pub fn matmul(&self, other: &Matrix<S>) -> Matrix<S> {
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(self.view(), other.view(), &mut out.data, false);
        out
    }
}

/// Max-subtracted softmax in place. An empty slice is left untouched.
pub fn softmax_in_place<S: Scalar>(xs: &mut [S]) {
    let Some(max) = xs.iter().copied().reduce(S::max) else {
        return;
    };
    let mut total = S::zero();
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

/// Logistic function, kept inside the open interval `(0, 1)` even where
/// the float type would round it to an endpoint.
pub fn sigmoid<S: Scalar>(x: S) -> S {
    let y = if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    };
    let eps = S::epsilon();
    y.max(eps).min(S::one() - eps)
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_two_logits() {
        let mut p = [1.0f64, 0.0];
        softmax_in_place(&mut p);
        assert!((p[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((p[1] - 0.268_941_421_369_995_1).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_stable() {
        let mut p = [1000.0f32, 1000.0];
        softmax_in_place(&mut p);
        assert_eq!(p, [0.5, 0.5]);
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        assert!((sigmoid(20.0f64) - 1.0).abs() < 1e-8);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert_eq!(sigmoid(0.0f64), 0.5);
        for x in [17.0f32, 40.0, 1e4, -120.0, -1e4] {
            let y = sigmoid(x);
            assert!(y > 0.0 && y < 1.0, "{x} -> {y}");
        }
    }

    #[test]
    fn gemm_transposed_views() {
        let a = Matrix::from_vec(2, 3, alloc::vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut out = [0.0f64; 4];
        // a * a^T
        gemm(a.view(), a.view().t(), &mut out, false);
        assert_eq!(out, [14.0, 32.0, 32.0, 77.0]);
        gemm(a.view(), a.view().t(), &mut out, true);
        assert_eq!(out, [28.0, 64.0, 64.0, 154.0]);
    }
}
