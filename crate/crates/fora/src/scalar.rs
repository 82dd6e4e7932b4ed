//! Arithmetic abstraction so the calibration dynamic program and the
//! enumeration oracle can run either in `f64` or in exact rational
//! arithmetic.
//!
//! The rational mode embeds every input probability exactly (a finite
//! double is a dyadic rational), so identities such as the per-arrival
//! conditional expectation equal to `j / (1 + R)` hold with zero error
//! over the numbers actually stored in the instance.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

/// Numeric field used by the probability computations.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_int(n: u64) -> Self;
    /// Embeds a finite `f64` exactly.
    fn from_prob(p: f64) -> Self;
    fn to_f64(&self) -> f64;

    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }

    fn clamp01(self) -> Self {
        if self < Self::zero() {
            Self::zero()
        } else if self > Self::one() {
            Self::one()
        } else {
            self
        }
    }

    fn max_zero(self) -> Self {
        if self < Self::zero() {
            Self::zero()
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }

    fn one() -> Self {
        1.0
    }

    fn from_int(n: u64) -> Self {
        n as f64
    }

    fn from_prob(p: f64) -> Self {
        p
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        <BigRational as Zero>::zero()
    }

    fn one() -> Self {
        <BigRational as One>::one()
    }

    fn from_int(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn from_prob(p: f64) -> Self {
        BigRational::from_float(p).expect("probability must be finite")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            // Out-of-range ratios only arise from pathological inputs; fall
            // back to a sign-correct infinity.
            if self.is_negative() {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        })
    }
}
