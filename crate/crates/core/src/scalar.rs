//! Scalar abstractions shared by the numeric modules.
//!
//! Budget arithmetic only needs a field ([`Scalar`]), so it runs on `f32`,
//! `f64` and exact [`BigRational`]. The concentration bounds and the wealth
//! process need `sqrt`/`ln`/`exp` and therefore require [`Real`].

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// A number the error-budget arithmetic can run on.
pub trait Scalar: Num + Clone + PartialOrd + Debug + FromPrimitive + ToPrimitive {
    /// Slack allowed when comparing cumulative spend against the global level.
    ///
    /// Zero for exact types.
    fn budget_slack() -> Self;

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }
}

impl Scalar for f64 {
    fn budget_slack() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn budget_slack() -> Self {
        1e-6
    }
}

impl Scalar for BigRational {
    fn budget_slack() -> Self {
        BigRational::from_integer(BigInt::from(0))
    }

    fn from_count(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
}

/// Floating-point scalar used by the certification tests.
pub trait Real: Scalar + Float {
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("literal representable")
    }
}

impl Real for f64 {}
impl Real for f32 {}

/// Exact rational from a numerator/denominator pair, e.g. `ratio(1, 10)` for δ = 0.1.
pub fn ratio(numer: i64, denom: i64) -> BigRational {
    BigRational::new(BigInt::from(numer), BigInt::from(denom))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slack_is_zero_for_rationals() {
        assert_eq!(BigRational::budget_slack(), ratio(0, 1));
        assert_eq!(BigRational::from_count(7), ratio(7, 1));
    }

    #[test]
    fn literal_round_trips() {
        assert_eq!(f64::lit(0.25), 0.25);
        assert_eq!(f32::lit(0.25), 0.25f32);
    }
}
