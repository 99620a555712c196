//! Scalar kernels shared by every loss: an overflow-safe sigmoid, probability
//! clamping and a guarded negative log.
//!
//! All arithmetic is `f64`. Probabilities that feed a logarithm or a rational
//! term are clamped to `[PROB_EPS, 1 - PROB_EPS]` first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Global clamping constant for probabilities.
pub const PROB_EPS: f64 = 1e-12;

/// Pre-activation score. Always finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Logit(f64);

impl Logit {
    pub fn new(z: f64) -> Result<Self> {
        if z.is_finite() {
            Ok(Self(z))
        } else {
            Err(Error::NonFiniteLogit(z))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(p: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&p) {
            Ok(Self(p))
        } else {
            Err(Error::InvalidProbability(p))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `1 - p`.
    pub fn complement(self) -> f64 {
        1.0 - self.0
    }
}

/// Binary target of a one-vs-rest subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryTarget {
    Negative,
    Positive,
}

impl BinaryTarget {
    pub fn from_u8(y: u8) -> Result<Self> {
        match y {
            0 => Ok(Self::Negative),
            1 => Ok(Self::Positive),
            other => Err(Error::InvalidTarget(format!(
                "expected 0 or 1, got {other}"
            ))),
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Self::Positive)
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Self::Negative => 0.0,
            Self::Positive => 1.0,
        }
    }
}

impl From<bool> for BinaryTarget {
    fn from(positive: bool) -> Self {
        if positive {
            Self::Positive
        } else {
            Self::Negative
        }
    }
}

/// Logistic function, using separate branches for the two signs of `z` so
/// that `exp` is only ever evaluated at a non-positive argument.
pub fn sigmoid(z: Logit) -> Probability {
    let z = z.value();
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    Probability(p)
}

/// Clamps `p` into `[eps, 1 - eps]`.
pub fn clamp_prob(p: f64, eps: f64) -> Result<Probability> {
    if p.is_nan() {
        return Err(Error::InvalidProbability(p));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidEpsilon(eps));
    }
    Ok(Probability(p.max(eps).min(1.0 - eps)))
}

/// `-ln(p)` for an already clamped probability.
pub fn safe_neg_log(p: Probability) -> Result<f64> {
    if p.value() <= 0.0 {
        return Err(Error::LogSingularity(p.value()));
    }
    // max(0.0) turns -ln(1) = -0.0 into +0.0
    Ok((-p.value().ln()).max(0.0))
}

/// Sigmoid followed by clamping at [`PROB_EPS`]; the path every loss takes
/// from a logit to a probability.
pub fn clamped_sigmoid(z: Logit) -> Probability {
    let p = sigmoid(z).value();
    Probability(p.clamp(PROB_EPS, 1.0 - PROB_EPS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(z: f64) -> f64 {
        sigmoid(Logit::new(z).unwrap()).value()
    }

    #[test]
    fn sigmoid_reference_points() {
        assert_eq!(sig(0.0), 0.5);
        // 1 / (1 + e^-2), 20 digits from an arbitrary-precision evaluation
        let expected = 0.880_797_077_977_882_4_f64;
        assert!((sig(2.0) - expected).abs() <= 2.0 * f64::EPSILON * expected);
        let tiny = sig(-40.0);
        assert!(tiny > 0.0 && tiny < 1e-17);
        // e^-40 / (1 + e^-40) = 4.248354255291589e-18
        assert!((tiny - 4.248_354_255_291_589e-18).abs() / tiny < 1e-14);
    }

    #[test]
    fn logit_rejects_non_finite() {
        assert!(Logit::new(f64::NAN).is_err());
        assert!(Logit::new(f64::INFINITY).is_err());
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_prob(0.0, 1e-12).unwrap().value(), 1e-12);
        assert_eq!(clamp_prob(0.5, 1e-12).unwrap().value(), 0.5);
        assert_eq!(clamp_prob(1.0, 1e-12).unwrap().value(), 1.0 - 1e-12);
        assert!(matches!(
            clamp_prob(f64::NAN, 1e-12),
            Err(Error::InvalidProbability(_))
        ));
        assert!(matches!(
            clamp_prob(0.3, 0.5),
            Err(Error::InvalidEpsilon(_))
        ));
    }

    #[test]
    fn neg_log_examples() {
        let near_one = Probability::new(1.0 - 1e-12).unwrap();
        let v = safe_neg_log(near_one).unwrap();
        assert!((v - 1e-12).abs() < 1e-15);
        let half = safe_neg_log(Probability::new(0.5).unwrap()).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-16);
        let inv_e = Probability::new((-1.0f64).exp()).unwrap();
        assert!((safe_neg_log(inv_e).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            safe_neg_log(Probability::new(0.0).unwrap()),
            Err(Error::LogSingularity(_))
        ));
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-6;
        let mut z = -10.0;
        while z <= 10.0 {
            let p = sig(z);
            let analytic = p * (1.0 - p);
            // p(1-p) is even in z; differencing on the negative side keeps the
            // sampled values small and avoids cancellation against 1
            let u = -f64::abs(z);
            let fd = (sig(u + h) - sig(u - h)) / (2.0 * h);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs());
            assert!(rel <= 1e-6, "z = {z}: analytic {analytic}, fd {fd}");
            z += 0.25;
        }
    }

    proptest! {
        #[test]
        fn sigmoid_strictly_increasing(a in -30.0f64..30.0, b in -30.0f64..30.0) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(sig(lo) < sig(hi));
        }

        #[test]
        fn sigmoid_reflection(z in -30.0f64..30.0) {
            prop_assert!((sig(z) + sig(-z) - 1.0).abs() <= 1e-15);
        }

        #[test]
        fn neg_log_non_negative(p in 0.0f64..=1.0) {
            let clamped = clamp_prob(p, PROB_EPS).unwrap();
            prop_assert!(safe_neg_log(clamped).unwrap() >= 0.0);
        }
    }
}
