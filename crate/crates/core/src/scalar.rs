//! Scalar abstraction used by the projection pipeline.
//!
//! The geometric projection of a splat (camera transform, ray-space Jacobian,
//! covariance projection, plane coefficients, normal) is written once over a
//! generic scalar. Instantiated with `f64` it is the fast forward path;
//! instantiated with [`Dual`] it yields exact forward-mode derivatives with
//! respect to a chosen set of inputs, which the backward pass consumes.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Minimal scalar interface for the projection math.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    fn from_f64(v: f64) -> Self;
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    /// Primal value, discarding derivative content.
    fn val(self) -> f64;
    fn sqrt(self) -> Self;
    fn recip(self) -> Self {
        Self::one() / self
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// Forward-mode dual number carrying `N` partial derivatives.
#[derive(Clone, Copy, Debug)]
pub struct Dual<const N: usize> {
    pub re: f64,
    pub eps: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(v: f64) -> Self {
        Dual { re: v, eps: [0.0; N] }
    }

    /// A variable seeded so that `eps[slot] = 1`.
    pub fn var(v: f64, slot: usize) -> Self {
        let mut eps = [0.0; N];
        eps[slot] = 1.0;
        Dual { re: v, eps }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps.iter()) {
            *e += r;
        }
        Dual { re: self.re + rhs.re, eps }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps.iter()) {
            *e -= r;
        }
        Dual { re: self.re - rhs.re, eps }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; N];
        for i in 0..N {
            eps[i] = self.eps[i] * rhs.re + self.re * rhs.eps[i];
        }
        Dual { re: self.re * rhs.re, eps }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        let re = self.re * inv;
        let mut eps = [0.0; N];
        for i in 0..N {
            eps[i] = (self.eps[i] - re * rhs.eps[i]) * inv;
        }
        Dual { re, eps }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e = -*e;
        }
        Dual { re: -self.re, eps }
    }
}

impl<const N: usize> AddAssign for Dual<N> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const N: usize> SubAssign for Dual<N> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<const N: usize> Real for Dual<N> {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }
    #[inline]
    fn val(self) -> f64 {
        self.re
    }
    #[inline]
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        let d = 0.5 / r;
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e *= d;
        }
        Dual { re: r, eps }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_product_rule() {
        // f(x) = x^2 at x = 3 has derivative 6.
        let x = Dual::<1>::var(3.0, 0);
        let y = x * x;
        assert_eq!(y.re, 9.0);
        assert_eq!(y.eps[0], 6.0);
    }

    #[test]
    fn dual_quotient_and_sqrt() {
        // f(x) = sqrt(1 / x) at x = 4: f = 0.5, f' = -1/(2 x^{3/2} * x^0) ...
        // directly: f = x^{-1/2}, f' = -0.5 x^{-3/2} = -0.0625.
        let x = Dual::<1>::var(4.0, 0);
        let y = (Dual::constant(1.0) / x).sqrt();
        assert!((y.re - 0.5).abs() < 1e-15);
        assert!((y.eps[0] + 0.0625).abs() < 1e-15);
    }

    #[test]
    fn dual_multi_slot_independence() {
        let x = Dual::<2>::var(2.0, 0);
        let y = Dual::<2>::var(5.0, 1);
        let z = x * y + x;
        assert_eq!(z.re, 12.0);
        assert_eq!(z.eps[0], 6.0); // d/dx (xy + x) = y + 1
        assert_eq!(z.eps[1], 2.0); // d/dy (xy + x) = x
    }
}
