//! Scalar types shared by the geometry, assembly and solver code.
//!
//! Every routine whose output must be differentiated with respect to a
//! level-set value is written against [`Scalar`]. Three instantiations are
//! provided: `f64` for ordinary evaluation, [`ComplexScalar`] for the
//! complex-step check and [`HyperDual`] for exact first and mixed second
//! derivatives.
//!
//! Only the four field operations and a sign query are generic. Anything
//! transcendental lives on `f64` in the optimizer.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;
use thiserror::Error;

/// Complex scalar used for complex-step differentiation.
pub type ComplexScalar = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ScalarError {
    #[error("division by a hyper-dual number with vanishing real part ({0:e})")]
    DivisionByZeroRealPart(f64),
}

/// Number type accepted by the generic numerical kernels.
pub trait Scalar:
    Copy
    + fmt::Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn from_real(x: f64) -> Self;

    /// Real part.
    fn re(&self) -> f64;

    /// Sign of the first nonzero component, in the order real part first,
    /// then the infinitesimal parts. Returns -1, 0 or +1.
    fn sign(&self) -> i8;

    /// Multiply by a real constant.
    fn scale(self, c: f64) -> Self;

    fn zero() -> Self {
        Self::from_real(0.0)
    }

    fn one() -> Self {
        Self::from_real(1.0)
    }

    /// True when the value lies strictly inside the level-set domain, with
    /// zero counted as non-negative.
    fn is_negative(&self) -> bool {
        self.sign() < 0
    }
}

fn real_sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_real(x: f64) -> Self {
        x
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn sign(&self) -> i8 {
        real_sign(*self)
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }
}

impl Scalar for Complex64 {
    #[inline]
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    #[inline]
    fn re(&self) -> f64 {
        self.re
    }
    fn sign(&self) -> i8 {
        match real_sign(self.re) {
            0 => real_sign(self.im),
            s => s,
        }
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }
}

/// Hyper-dual number `re + e1·E1 + e2·E2 + e12·E1E2` with
/// `E1² = E2² = (E1E2)² = 0`.
///
/// Evaluating `f(x + h·E1 + h·E2)` yields `h·f'(x)` in both first
/// infinitesimal parts and `h²·f''(x)` in the mixed part, with no truncation
/// error.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct HyperDual {
    pub re: f64,
    pub e1: f64,
    pub e2: f64,
    pub e12: f64,
}

impl HyperDual {
    pub const fn new(re: f64, e1: f64, e2: f64, e12: f64) -> Self {
        HyperDual { re, e1, e2, e12 }
    }

    pub const fn real(re: f64) -> Self {
        HyperDual::new(re, 0.0, 0.0, 0.0)
    }

    /// The perturbation `h·E1 + h·E2` used by the derivative checks.
    pub const fn step(h: f64) -> Self {
        HyperDual::new(0.0, h, h, 0.0)
    }

    pub fn recip(self) -> Self {
        let inv = 1.0 / self.re;
        let inv2 = inv * inv;
        HyperDual {
            re: inv,
            e1: -self.e1 * inv2,
            e2: -self.e2 * inv2,
            e12: 2.0 * self.e1 * self.e2 * inv2 * inv - self.e12 * inv2,
        }
    }

    /// Division that refuses divisors with a vanishing real part.
    pub fn checked_div(self, rhs: HyperDual) -> Result<HyperDual, ScalarError> {
        if rhs.re.abs() < f64::MIN_POSITIVE {
            return Err(ScalarError::DivisionByZeroRealPart(rhs.re));
        }
        Ok(self * rhs.recip())
    }
}

impl fmt::Debug for HyperDual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "HyperDual({:e} + {:e}E1 + {:e}E2 + {:e}E1E2)",
            self.re, self.e1, self.e2, self.e12
        )
    }
}

impl fmt::Display for HyperDual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} + {}E1 + {}E2 + {}E1E2",
            self.re, self.e1, self.e2, self.e12
        )
    }
}

impl Add for HyperDual {
    type Output = HyperDual;
    #[inline]
    fn add(self, o: HyperDual) -> HyperDual {
        HyperDual::new(
            self.re + o.re,
            self.e1 + o.e1,
            self.e2 + o.e2,
            self.e12 + o.e12,
        )
    }
}

impl Sub for HyperDual {
    type Output = HyperDual;
    #[inline]
    fn sub(self, o: HyperDual) -> HyperDual {
        HyperDual::new(
            self.re - o.re,
            self.e1 - o.e1,
            self.e2 - o.e2,
            self.e12 - o.e12,
        )
    }
}

impl Mul for HyperDual {
    type Output = HyperDual;
    #[inline]
    fn mul(self, o: HyperDual) -> HyperDual {
        HyperDual {
            re: self.re * o.re,
            e1: self.re * o.e1 + self.e1 * o.re,
            e2: self.re * o.e2 + self.e2 * o.re,
            e12: self.re * o.e12 + self.e1 * o.e2 + self.e2 * o.e1 + self.e12 * o.re,
        }
    }
}

impl Div for HyperDual {
    type Output = HyperDual;
    /// Unchecked division; a zero real part in the divisor produces
    /// non-finite components. Use [`HyperDual::checked_div`] where the
    /// divisor is not known to be safe.
    #[inline]
    fn div(self, o: HyperDual) -> HyperDual {
        self * o.recip()
    }
}

impl Neg for HyperDual {
    type Output = HyperDual;
    #[inline]
    fn neg(self) -> HyperDual {
        HyperDual::new(-self.re, -self.e1, -self.e2, -self.e12)
    }
}

impl AddAssign for HyperDual {
    #[inline]
    fn add_assign(&mut self, o: HyperDual) {
        *self = *self + o;
    }
}

impl SubAssign for HyperDual {
    #[inline]
    fn sub_assign(&mut self, o: HyperDual) {
        *self = *self - o;
    }
}

impl MulAssign for HyperDual {
    #[inline]
    fn mul_assign(&mut self, o: HyperDual) {
        *self = *self * o;
    }
}

impl Scalar for HyperDual {
    #[inline]
    fn from_real(x: f64) -> Self {
        HyperDual::real(x)
    }
    #[inline]
    fn re(&self) -> f64 {
        self.re
    }
    fn sign(&self) -> i8 {
        [self.re, self.e1, self.e2, self.e12]
            .into_iter()
            .map(real_sign)
            .find(|&s| s != 0)
            .unwrap_or(0)
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        HyperDual::new(self.re * c, self.e1 * c, self.e2 * c, self.e12 * c)
    }
}
