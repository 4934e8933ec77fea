//! Scalar abstraction and the small set of numeric kernels shared by the
//! metric, loss and projection code.
//!
//! Everything numeric in the crate is generic over [`Scalar`], implemented for
//! `f32` and `f64`. Reductions go through [`pairwise_sum`] so that a fixed
//! input order always produces the same bits, whatever the thread count.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar usable by the numeric kernels: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

const PAIRWISE_BLOCK: usize = 8;

/// Pairwise (cascade) summation in a fixed order.
pub fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    if xs.len() <= PAIRWISE_BLOCK {
        return xs.iter().fold(T::zero(), |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Arithmetic mean via [`pairwise_sum`]; `None` for an empty slice.
pub fn mean<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        None
    } else {
        Some(pairwise_sum(xs) / T::of_usize(xs.len()))
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let na = norm(a);
    let nb = norm(b);
    if na == T::zero() || nb == T::zero() {
        return T::zero();
    }
    dot(a, b) / (na * nb)
}

/// Scales `a` to unit norm in place and returns the original norm.
/// Zero vectors are left untouched.
pub fn normalize_in_place<T: Scalar>(a: &mut [T]) -> T {
    let n = norm(a);
    if n > T::zero() {
        for x in a.iter_mut() {
            *x = *x / n;
        }
    }
    n
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Wraps row-major data. Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    /// Builds a matrix from equally sized rows. Returns `None` on ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Option<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Some(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    /// Elementwise scalar multiple.
    pub fn scaled(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    /// Converts every entry to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::of(x.as_f64())).collect(),
        }
    }
}

/// Derivative of `cos(a, b)` with respect to `a`, accumulated into `out`
/// scaled by `coeff`: `out += coeff * (b / (|a||b|) - cos * a / |a|^2)`.
pub(crate) fn add_cosine_grad<T: Scalar>(a: &[T], b: &[T], coeff: T, out: &mut [T]) {
    let na = norm(a);
    let nb = norm(b);
    if na == T::zero() || nb == T::zero() {
        return;
    }
    let c = dot(a, b) / (na * nb);
    let inv = T::one() / (na * nb);
    let self_term = c / (na * na);
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = *o + coeff * (y * inv - self_term * x);
    }
}
