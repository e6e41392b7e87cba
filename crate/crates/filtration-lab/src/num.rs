//! Scalar arithmetic abstraction: exact rationals or tolerance-guarded floats.
//!
//! Every quantity in the library is generic over a [`Scalar`]. Two backends are
//! provided: [`Rat`] (arbitrary-precision rationals, comparisons are exact and
//! the default tolerance is zero) and `f64` (comparisons go through an explicit
//! tolerance, default `1e-9`). Scenario loading picks the backend: rational
//! when every number in the file parses as a rational, float otherwise.

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arbitrary-precision rational scalar.
pub type Rat = Ratio<BigInt>;

/// Arithmetic required of every number the library touches.
///
/// The bound set is deliberately small: field operations, signed comparison
/// and a handful of constructors. Anything else (matrix solves, Gram-Schmidt,
/// conditional expectations) is built on top of these.
pub trait Scalar:
    Clone
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + Signed
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_int(n: i64) -> Self;

    /// The exact value `num/den`. Panics if `den == 0`.
    fn from_ratio(num: i64, den: i64) -> Self;

    /// Lossy conversion for reporting only; never used in a comparison.
    fn to_f64(&self) -> f64;

    /// Exact embedding of a float (every finite f64 is rational). Used to
    /// carry user-supplied tolerances into the exact backend.
    fn from_f64_exact(x: f64) -> Option<Self>;

    /// Embedding of an arbitrary-precision rational: exact for the rational
    /// backend, rounded once for floats.
    fn from_rat(r: &Rat) -> Self;

    /// Default comparison tolerance: `0` for exact backends, `1e-9` for floats.
    fn default_tol() -> Self;

    /// True when arithmetic in this backend is exact.
    fn is_exact() -> bool;

    /// Short backend name used in reports ("rational" / "float").
    fn mode_name() -> &'static str;
}

impl Scalar for f64 {
    fn from_int(n: i64) -> Self {
        n as f64
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        num as f64 / den as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_f64_exact(x: f64) -> Option<Self> {
        x.is_finite().then_some(x)
    }

    fn from_rat(r: &Rat) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }

    fn default_tol() -> Self {
        1e-9
    }

    fn is_exact() -> bool {
        false
    }

    fn mode_name() -> &'static str {
        "float"
    }
}

impl Scalar for Rat {
    fn from_int(n: i64) -> Self {
        Ratio::from_integer(BigInt::from(n))
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Ratio::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn from_f64_exact(x: f64) -> Option<Self> {
        Ratio::from_float(x)
    }

    fn from_rat(r: &Rat) -> Self {
        r.clone()
    }

    fn default_tol() -> Self {
        Self::zero()
    }

    fn is_exact() -> bool {
        true
    }

    fn mode_name() -> &'static str {
        "rational"
    }
}

/// `|a - b| <= tol`.
pub fn within<S: Scalar>(a: &S, b: &S, tol: &S) -> bool {
    (a.clone() - b.clone()).abs() <= *tol
}

/// `|a| <= tol`.
pub fn near_zero<S: Scalar>(a: &S, tol: &S) -> bool {
    a.abs() <= *tol
}

/// Sum of a slice.
pub fn sum<S: Scalar>(values: &[S]) -> S {
    values.iter().fold(S::zero(), |acc, v| acc + v.clone())
}

/// Dot product of two equally long slices.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(S::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}
