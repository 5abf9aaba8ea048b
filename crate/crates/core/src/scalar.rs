use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point type the network and risk estimators are generic over.
///
/// Implemented for `f32` and `f64`. Everything downstream of the estimators
/// (environments, agents, the training driver) runs on `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + FromStr
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold,
    /// which never happens for the constants used in this crate.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Logistic sigmoid `1 / (1 + exp(-s))`, evaluated without overflow for large `|s|`.
#[inline]
pub fn sigmoid<S: Scalar>(s: S) -> S {
    if s >= S::zero() {
        S::one() / (S::one() + (-s).exp())
    } else {
        let e = s.exp();
        e / (S::one() + e)
    }
}

/// `ln(1 + exp(s))` in the stable form `max(s, 0) + ln(1 + exp(-|s|))`.
#[inline]
pub fn softplus<S: Scalar>(s: S) -> S {
    s.max(S::zero()) + (-s.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_closed_forms() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!((sigmoid(3.0f64.ln()) - 0.75).abs() < 1e-15);
        assert!((sigmoid(500.0f64) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-500.0f64) >= 0.0);
        assert!(sigmoid(-500.0f64).is_finite());
        assert_eq!(sigmoid(0.0f32), 0.5);
    }

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for &s in &[-20.0f64, -3.0, -0.5, 0.0, 0.5, 3.0, 20.0] {
            let naive = (1.0 + s.exp()).ln();
            assert!((softplus(s) - naive).abs() < 1e-12, "s={s}");
        }
        assert_eq!(softplus(1000.0f64), 1000.0);
        assert!(softplus(-1000.0f64) >= 0.0);
    }
}
