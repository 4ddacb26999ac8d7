//! 2×2 real matrices acting on I/Q pairs.
//!
//! An I/Q pair is carried as a [`Complex`] whose real part is the in-phase
//! rail and whose imaginary part is the quadrature rail, so a `Matrix2`
//! acts on it as on the column vector `[re, im]^T`.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex;

use crate::scalar::Real;

/// Row-major 2×2 real matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix2<T> {
    pub m: [[T; 2]; 2],
}

impl<T: Real> Matrix2<T> {
    pub const fn new(a: T, b: T, c: T, d: T) -> Self {
        Self { m: [[a, b], [c, d]] }
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::one())
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn diag(a: T, d: T) -> Self {
        Self::new(a, T::zero(), T::zero(), d)
    }

    /// Counter-clockwise rotation by `theta` radians.
    pub fn rotation(theta: T) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c, -s, s, c)
    }

    pub fn det(&self) -> T {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    /// Inverse, or `None` when the determinant is zero or not finite.
    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == T::zero() || !det.is_finite() {
            return None;
        }
        let inv = det.recip();
        Some(Self::new(
            self.m[1][1] * inv,
            -self.m[0][1] * inv,
            -self.m[1][0] * inv,
            self.m[0][0] * inv,
        ))
    }

    pub fn frobenius(&self) -> T {
        self.entries().map(|x| x * x).sum::<T>().sqrt()
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &Self) -> T {
        self.entries().zip(other.entries()).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> T {
        self.entries().fold(T::zero(), |acc, x| acc.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.entries().all(|x| x.is_finite())
    }

    pub fn entries(&self) -> impl Iterator<Item = T> {
        let m = self.m;
        (0..4).map(move |k| m[k / 2][k % 2])
    }

    pub fn scale(&self, k: T) -> Self {
        Self::new(
            self.m[0][0] * k,
            self.m[0][1] * k,
            self.m[1][0] * k,
            self.m[1][1] * k,
        )
    }

    #[inline]
    pub fn apply(&self, v: Complex<T>) -> Complex<T> {
        Complex::new(
            self.m[0][0] * v.re + self.m[0][1] * v.im,
            self.m[1][0] * v.re + self.m[1][1] * v.im,
        )
    }

    /// Outer product `u · v^T` of two I/Q pairs viewed as column vectors.
    pub fn outer(u: Complex<T>, v: Complex<T>) -> Self {
        Self::new(u.re * v.re, u.re * v.im, u.im * v.re, u.im * v.im)
    }

    /// True when the matrix is orthogonal with determinant +1 within `tol`.
    pub fn is_rotation(&self, tol: T) -> bool {
        let g = *self * self.transpose() - Self::identity();
        g.max_abs() <= tol && (self.det() - T::one()).abs() <= tol
    }

    pub fn cast<U: Real>(&self) -> Matrix2<U> {
        Matrix2::new(
            U::lit(self.m[0][0].as_f64()),
            U::lit(self.m[0][1].as_f64()),
            U::lit(self.m[1][0].as_f64()),
            U::lit(self.m[1][1].as_f64()),
        )
    }
}

impl<T: Real> Default for Matrix2<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Mul for Matrix2<T> {
    type Output = Self;

    fn mul(self, o: Self) -> Self {
        let a = &self.m;
        let b = &o.m;
        Self::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

impl<T: Real> Mul<Complex<T>> for Matrix2<T> {
    type Output = Complex<T>;

    fn mul(self, v: Complex<T>) -> Complex<T> {
        self.apply(v)
    }
}

impl<T: Real> Add for Matrix2<T> {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(
            self.m[0][0] + o.m[0][0],
            self.m[0][1] + o.m[0][1],
            self.m[1][0] + o.m[1][0],
            self.m[1][1] + o.m[1][1],
        )
    }
}

impl<T: Real> Sub for Matrix2<T> {
    type Output = Self;

    fn sub(self, o: Self) -> Self {
        self + o.scale(-T::one())
    }
}
