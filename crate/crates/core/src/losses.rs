//! Surrogate losses of the margin `m = t * g(x)` and their derivatives.

use alloc::format;

use crate::error::{Error, Result};

/// Loss applied to a margin.
///
/// `ZeroOne` is for evaluation only and has no derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LossKind {
    Sigmoid,
    Logistic,
    ZeroOne,
}

impl LossKind {
    /// Rejects `ZeroOne` where a differentiable surrogate is required.
    pub fn require_surrogate(self) -> Result<Self> {
        match self {
            LossKind::ZeroOne => Err(Error::Unsupported("zero-one loss cannot be differentiated")),
            k => Ok(k),
        }
    }

    /// Loss at a raw margin. Callers are responsible for finiteness.
    #[inline]
    pub fn value(self, m: f64) -> f64 {
        match self {
            LossKind::Sigmoid => sigmoid_raw(-m),
            LossKind::Logistic => softplus(-m),
            LossKind::ZeroOne => zero_one_raw(m),
        }
    }

    /// Derivative with respect to the raw margin. `ZeroOne` yields 0.
    #[inline]
    pub(crate) fn derivative(self, m: f64) -> f64 {
        match self {
            LossKind::Sigmoid => -sigmoid_raw(m) * sigmoid_raw(-m),
            LossKind::Logistic => -sigmoid_raw(-m),
            LossKind::ZeroOne => 0.0,
        }
    }
}

/// A finite margin `t * g(x)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Margin(f64);

impl Margin {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Margin(value))
        } else {
            Err(Error::InvalidArgument(format!("margin must be finite, got {value}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Margin {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Margin::new(value)
    }
}

/// Logistic sigmoid `1 / (1 + exp(-z))`, evaluated without overflow.
#[inline]
pub(crate) fn sigmoid_raw(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(z))` in the form `max(z, 0) + ln(1 + exp(-|z|))`.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-z.abs()))
}

#[inline]
fn zero_one_raw(m: f64) -> f64 {
    if m < 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `1 / (1 + exp(m))`, in (0, 1) and strictly decreasing.
pub fn sigmoid_loss(m: Margin) -> f64 {
    LossKind::Sigmoid.value(m.0)
}

/// `ln(1 + exp(-m))`, unbounded above as `m -> -inf`.
pub fn logistic_loss(m: Margin) -> f64 {
    LossKind::Logistic.value(m.0)
}

/// Derivative of a surrogate loss with respect to the margin. Always negative.
pub fn loss_grad(kind: LossKind, m: Margin) -> Result<f64> {
    Ok(kind.require_surrogate()?.derivative(m.0))
}

/// 1 for a misclassification (`m < 0`), 0 otherwise. A zero margin counts as correct.
pub fn zero_one_loss(m: Margin) -> f64 {
    zero_one_raw(m.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn m(v: f64) -> Margin {
        Margin::new(v).unwrap()
    }

    #[test]
    fn sigmoid_reference_values() {
        assert_eq!(sigmoid_loss(m(0.0)), 0.5);
        assert_relative_eq!(sigmoid_loss(m(1.0)), 0.268_941_421_369_995_1, max_relative = 1e-15);
        assert_relative_eq!(sigmoid_loss(m(-1.0)), 0.731_058_578_630_004_9, max_relative = 1e-15);
    }

    #[test]
    fn logistic_reference_values() {
        assert_relative_eq!(logistic_loss(m(0.0)), core::f64::consts::LN_2, max_relative = 1e-15);
        let tail = logistic_loss(m(50.0));
        assert!(tail > 0.0);
        assert_relative_eq!(tail, 1.928_749_847_963_917_8e-22, max_relative = 1e-12);
        assert!((logistic_loss(m(-50.0)) - 50.0).abs() < 1e-9);
        assert!(logistic_loss(m(-1e6)).is_finite());
    }

    #[test]
    fn gradient_reference_values() {
        assert_eq!(loss_grad(LossKind::Logistic, m(0.0)).unwrap(), -0.5);
        assert_eq!(loss_grad(LossKind::Sigmoid, m(0.0)).unwrap(), -0.25);
        let g = loss_grad(LossKind::Logistic, m(50.0)).unwrap();
        assert_relative_eq!(g, -1.928_749_847_963_917_8e-22, max_relative = 1e-12);
        assert_eq!(
            loss_grad(LossKind::ZeroOne, m(0.0)),
            Err(Error::Unsupported("zero-one loss cannot be differentiated"))
        );
    }

    #[test]
    fn zero_one_ties_count_as_correct() {
        assert_eq!(zero_one_loss(m(-0.3)), 1.0);
        assert_eq!(zero_one_loss(m(0.3)), 0.0);
        assert_eq!(zero_one_loss(m(0.0)), 0.0);
    }

    #[test]
    fn non_finite_margins_are_rejected() {
        assert!(matches!(Margin::new(f64::NAN), Err(Error::InvalidArgument(_))));
        assert!(matches!(Margin::try_from(f64::INFINITY), Err(Error::InvalidArgument(_))));
    }

    fn central_difference(kind: LossKind, x: f64) -> f64 {
        let h = 1e-5 * x.abs().max(1.0);
        (kind.value(x + h) - kind.value(x - h)) / (2.0 * h)
    }

    proptest! {
        #[test]
        fn logistic_gradient_matches_finite_difference(x in -30.0f64..30.0) {
            let analytic = loss_grad(LossKind::Logistic, m(x)).unwrap();
            let numeric = central_difference(LossKind::Logistic, x);
            prop_assert!((analytic - numeric).abs() <= 1e-6 * analytic.abs());
        }

        // Beyond |m| ~ 8 the sigmoid loss sits within 1e-4 of 0 or 1 and the
        // difference quotient is dominated by rounding.
        #[test]
        fn sigmoid_gradient_matches_finite_difference(x in -8.0f64..8.0) {
            let analytic = loss_grad(LossKind::Sigmoid, m(x)).unwrap();
            let numeric = central_difference(LossKind::Sigmoid, x);
            prop_assert!((analytic - numeric).abs() <= 1e-6 * analytic.abs());
        }

        #[test]
        fn sigmoid_is_symmetric(x in -700.0f64..700.0) {
            prop_assert!((sigmoid_loss(m(x)) + sigmoid_loss(m(-x)) - 1.0).abs() <= 1e-15);
        }

        #[test]
        fn logistic_softplus_identity(x in -500.0f64..500.0) {
            prop_assert!((logistic_loss(m(x)) - logistic_loss(m(-x)) + x).abs() <= 1e-9);
        }

        #[test]
        fn surrogates_are_decreasing(a in -20.0f64..20.0, d in 1e-3f64..5.0) {
            let b = a + d;
            prop_assert!(sigmoid_loss(m(a)) > sigmoid_loss(m(b)));
            prop_assert!(logistic_loss(m(a)) > logistic_loss(m(b)));
        }

        #[test]
        fn surrogate_gradients_are_negative(x in -30.0f64..30.0) {
            prop_assert!(loss_grad(LossKind::Logistic, m(x)).unwrap() < 0.0);
            prop_assert!(loss_grad(LossKind::Sigmoid, m(x)).unwrap() < 0.0);
        }
    }
}
