//! Scalar abstraction shared by plain `f64` evaluation and forward-mode dual
//! numbers, so one shading routine yields both values and exact derivatives.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + std::fmt::Debug
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// Replaces the value while keeping derivative information.
    fn with_value(self, v: f64) -> Self;

    fn scale(self, k: f64) -> Self {
        self * Self::cst(k)
    }

    fn max_c(self, c: f64) -> Self {
        if self.value() > c {
            self
        } else {
            Self::cst(c)
        }
    }

    fn min_c(self, c: f64) -> Self {
        if self.value() < c {
            self
        } else {
            Self::cst(c)
        }
    }

    fn clamp01(self) -> Self {
        self.max_c(0.0).min_c(1.0)
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn with_value(self, v: f64) -> Self {
        v
    }
}

/// Dual number carrying `N` partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Jet<N> {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; N] }
    }

    /// The `i`-th independent variable with value `v`.
    pub fn var(v: f64, i: usize) -> Self {
        let mut d = [0.0; N];
        d[i] = 1.0;
        Self { v, d }
    }

    #[inline]
    fn chain(self, v: f64, dv: f64) -> Self {
        Self { v, d: self.d.map(|x| x * dv) }
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d) {
            *a += b;
        }
        Self { v: self.v + o.v, d }
    }
}

impl<const N: usize> AddAssign for Jet<N> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d) {
            *a -= b;
        }
        Self { v: self.v - o.v, d }
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] * o.v + self.v * o.d[i];
        }
        Self { v: self.v * o.v, d }
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        // same rounding as the plain f64 path
        let v = self.v / o.v;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (self.d[i] - v * o.d[i]) * inv;
        }
        Self { v, d }
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self { v: -self.v, d: self.d.map(|x| -x) }
    }
}

impl<const N: usize> Real for Jet<N> {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    #[inline]
    fn value(self) -> f64 {
        self.v
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let ds = if s > 0.0 { 0.5 / s } else { 0.0 };
        self.chain(s, ds)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        let v = self.v.powi(n);
        let dv = if n == 0 { 0.0 } else { n as f64 * self.v.powi(n - 1) };
        self.chain(v, dv)
    }
    #[inline]
    fn with_value(self, v: f64) -> Self {
        Self { v, d: self.d }
    }
}

/// Three-vector over any [`Real`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct V3<R>(pub [R; 3]);

impl<R: Real> V3<R> {
    pub fn cst(v: [f64; 3]) -> Self {
        V3(v.map(R::cst))
    }

    pub fn dot(&self, o: &V3<R>) -> R {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn norm(&self) -> R {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, k: R) -> V3<R> {
        V3(self.0.map(|c| c * k))
    }

    pub fn add(&self, o: &V3<R>) -> V3<R> {
        V3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }

    pub fn normalize(&self) -> V3<R> {
        let n = self.norm();
        V3(self.0.map(|c| c / n))
    }

    pub fn values(&self) -> [f64; 3] {
        self.0.map(|c| c.value())
    }
}
