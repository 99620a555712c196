//! Padé approximants built from Taylor coefficients, plus the fixed
//! first-order coefficients used by the ALPA loss terms.
//!
//! A `[m/n]` approximant `P(t)/Q(t)` with `t = x - x0` is chosen so that its
//! power series agrees with the input series through order `m + n`.
//! Cross-multiplying `P = A·Q` gives `n` linear equations for the denominator
//! (orders `m+1 ..= m+n`), after which the numerator is a truncated
//! convolution of `A` and `Q`.
//!
//! The loss terms do not use the solver: the canonical constants in
//! [`CANONICAL_ALPA`] are stored verbatim. Applying `[1/1]` order matching to
//! the second-order BCE series gives `b1 = ±0.5`, not `0`, so the solver is kept
//! as an independent instrument for re-deriving and comparing coefficients.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::Probability;

/// Degeneracy threshold on the 1-norm condition estimate of the denominator system.
pub const MAX_CONDITION: f64 = 1e12;

/// Threshold on `|Q(t)|` below which evaluation reports a pole.
pub const POLE_TOLERANCE: f64 = 1e-12;

/// Truncated power series `Σ coeffs[k]·(x - expansion_point)^k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaylorSeries {
    expansion_point: f64,
    coeffs: Vec<f64>,
}

impl TaylorSeries {
    pub fn new(expansion_point: f64, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidSeries("no coefficients".into()));
        }
        if !expansion_point.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidSeries("non-finite coefficient".into()));
        }
        Ok(Self {
            expansion_point,
            coeffs,
        })
    }

    pub fn expansion_point(&self) -> f64 {
        self.expansion_point
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Highest power present.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    fn coeff(&self, k: isize) -> f64 {
        if k < 0 {
            0.0
        } else {
            self.coeffs.get(k as usize).copied().unwrap_or(0.0)
        }
    }
}

/// Series of the positive BCE term around `ŷ = 1`, in `t = ŷ - 1`:
/// `coeffs[k] = (-1)^(k+1) / k`, i.e. the expansion of `ln(1 + t)`.
pub fn taylor_pos_bce(order: usize) -> Result<TaylorSeries> {
    if order < 1 {
        return Err(Error::OrderTooSmall(order));
    }
    let coeffs = (0..=order)
        .map(|k| match k {
            0 => 0.0,
            k if k % 2 == 1 => 1.0 / k as f64,
            k => -1.0 / k as f64,
        })
        .collect();
    TaylorSeries::new(1.0, coeffs)
}

/// Series of the negative BCE term around `ŷ = 0`: `coeffs[k] = -1 / k`,
/// i.e. the expansion of `ln(1 - ŷ)`.
pub fn taylor_neg_bce(order: usize) -> Result<TaylorSeries> {
    if order < 1 {
        return Err(Error::OrderTooSmall(order));
    }
    let coeffs = (0..=order)
        .map(|k| if k == 0 { 0.0 } else { -1.0 / k as f64 })
        .collect();
    TaylorSeries::new(0.0, coeffs)
}

/// Rational function `P(t) / Q(t)`, `t = x - expansion_point`, with
/// `den[0] == 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PadeApproximant {
    m: usize,
    n: usize,
    num: Vec<f64>,
    den: Vec<f64>,
    expansion_point: f64,
}

impl PadeApproximant {
    /// Builds an approximant from explicit coefficients. `den` must start with 1.
    pub fn new(num: Vec<f64>, den: Vec<f64>, expansion_point: f64) -> Result<Self> {
        if num.is_empty() || den.is_empty() {
            return Err(Error::InvalidSeries(
                "empty numerator or denominator".into(),
            ));
        }
        if den[0] != 1.0 {
            return Err(Error::InvalidSeries(format!(
                "denominator must be normalized to den[0] = 1, got {}",
                den[0]
            )));
        }
        if num.iter().chain(&den).any(|c| !c.is_finite()) || !expansion_point.is_finite() {
            return Err(Error::InvalidSeries("non-finite coefficient".into()));
        }
        Ok(Self {
            m: num.len() - 1,
            n: den.len() - 1,
            num,
            den,
            expansion_point,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn expansion_point(&self) -> f64 {
        self.expansion_point
    }
}

/// Solves the order-matching conditions for the `[m/n]` approximant of `series`.
pub fn pade_from_taylor(series: &TaylorSeries, m: usize, n: usize) -> Result<PadeApproximant> {
    let needed = m + n + 1;
    if series.coeffs().len() < needed {
        return Err(Error::SeriesTooShort {
            m,
            n,
            needed,
            got: series.coeffs().len(),
        });
    }

    let mut den = vec![1.0];
    if n > 0 {
        // Row r enforces the t^(m+1+r) coefficient of A·Q to vanish:
        // Σ_{j=1..n} q_j c_{m+1+r-j} = -c_{m+1+r}
        let matrix: Vec<Vec<f64>> = (0..n)
            .map(|r| {
                (1..=n)
                    .map(|j| series.coeff((m + 1 + r) as isize - j as isize))
                    .collect()
            })
            .collect();
        let rhs: Vec<f64> = (0..n)
            .map(|r| -series.coeff((m + 1 + r) as isize))
            .collect();
        let lu = LuDecomposition::factor(matrix)?;
        let condition = lu.condition_estimate();
        if condition.is_nan() || condition > MAX_CONDITION {
            return Err(Error::DegeneratePade { condition });
        }
        den.extend(lu.solve(&rhs));
    }

    let num = (0..=m)
        .map(|i| {
            (0..=i.min(n))
                .map(|j| den[j] * series.coeff((i - j) as isize))
                .sum()
        })
        .collect();

    PadeApproximant::new(num, den, series.expansion_point())
}

/// Evaluates `P(t)/Q(t)` by nested multiplication.
pub fn eval_pade(approx: &PadeApproximant, x: f64) -> Result<f64> {
    let t = x - approx.expansion_point;
    let q = horner(&approx.den, t);
    if q.is_nan() || q.abs() < POLE_TOLERANCE {
        return Err(Error::PoleEncountered(q.abs()));
    }
    Ok(horner(&approx.num, t) / q)
}

fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

/// Gaussian elimination with partial pivoting; keeps the factors so the
/// inverse's 1-norm can be estimated column by column.
struct LuDecomposition {
    lu: Vec<Vec<f64>>,
    perm: Vec<usize>,
    norm_one: f64,
}

impl LuDecomposition {
    fn factor(mut a: Vec<Vec<f64>>) -> Result<Self> {
        let n = a.len();
        let norm_one = (0..n)
            .map(|j| a.iter().map(|row| row[j].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap_or(col);
            if a[pivot][col] == 0.0 {
                return Err(Error::DegeneratePade {
                    condition: f64::INFINITY,
                });
            }
            a.swap(col, pivot);
            perm.swap(col, pivot);
            let (upper, lower) = a.split_at_mut(col + 1);
            let pivot_row = &upper[col];
            for row in lower.iter_mut() {
                let factor = row[col] / pivot_row[col];
                row[col] = factor;
                for (x, &p) in row[col + 1..].iter_mut().zip(&pivot_row[col + 1..]) {
                    *x -= factor * p;
                }
            }
        }
        Ok(Self {
            lu: a,
            perm,
            norm_one,
        })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[i][k] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] -= self.lu[i][k] * x[k];
            }
            x[i] /= self.lu[i][i];
        }
        x
    }

    /// `‖A‖₁ · ‖A⁻¹‖₁`, with the inverse formed explicitly (systems here are tiny).
    fn condition_estimate(&self) -> f64 {
        let n = self.lu.len();
        let mut inv_norm = 0.0f64;
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = self.solve(&e);
            inv_norm = inv_norm.max(col.iter().map(|v| v.abs()).sum());
        }
        self.norm_one * inv_norm
    }
}

/// First-order Padé coefficients of the ALPA loss terms:
/// `L⁺ ≈ (a0 + a1·ŷ) / (1 + b1·ŷ)` and
/// `L⁻ ≈ (c0 + c1·(1-ŷ)) / (1 + d1·(1-ŷ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlpaCoefficients {
    pub a0: f64,
    pub a1: f64,
    pub b1: f64,
    pub c0: f64,
    pub c1: f64,
    pub d1: f64,
}

pub const CANONICAL_ALPA: AlpaCoefficients = AlpaCoefficients {
    a0: -1.5,
    a1: 1.5,
    b1: 0.0,
    c0: -1.0,
    c1: 1.0,
    d1: 0.0,
};

impl AlpaCoefficients {
    /// Positive term as a non-negative loss: `-(a0 + a1·p) / (1 + b1·p)`.
    pub fn pos(&self, p: f64) -> f64 {
        -(self.a0 + self.a1 * p) / (1.0 + self.b1 * p)
    }

    /// `d pos / dp`.
    pub fn pos_dp(&self, p: f64) -> f64 {
        let d = 1.0 + self.b1 * p;
        -(self.a1 - self.a0 * self.b1) / (d * d)
    }

    /// Negative term as a non-negative loss: `-(c0 + c1·s) / (1 + d1·s)` with
    /// `s = 1 - p`. The numerator is regrouped as `c1·p - (c0 + c1)` so the
    /// canonical constants give exactly `p`.
    pub fn neg(&self, p: f64) -> f64 {
        let s = 1.0 - p;
        (self.c1 * p - (self.c0 + self.c1)) / (1.0 + self.d1 * s)
    }

    /// `d neg / dp`.
    pub fn neg_dp(&self, p: f64) -> f64 {
        let d = 1.0 + self.d1 * (1.0 - p);
        (self.c1 - self.d1 * self.c0) / (d * d)
    }
}

pub type ProbabilityTerm = fn(Probability) -> f64;

/// The two canonical ALPA core terms, `L⁺(ŷ) = 1.5·(1-ŷ)` and `L⁻(ŷ) = ŷ`.
pub fn canonical_alpa_terms() -> (ProbabilityTerm, ProbabilityTerm) {
    fn pos(p: Probability) -> f64 {
        CANONICAL_ALPA.pos(p.value())
    }
    fn neg(p: Probability) -> f64 {
        CANONICAL_ALPA.neg(p.value())
    }
    (pos, neg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_series() -> TaylorSeries {
        TaylorSeries::new(0.0, vec![1.0, 1.0, 0.5]).unwrap()
    }

    #[test]
    fn bce_series_coefficients() {
        assert_eq!(taylor_pos_bce(2).unwrap().coeffs(), &[0.0, 1.0, -0.5]);
        assert_eq!(taylor_pos_bce(1).unwrap().coeffs(), &[0.0, 1.0]);
        assert_eq!(
            taylor_pos_bce(4).unwrap().coeffs(),
            &[0.0, 1.0, -0.5, 1.0 / 3.0, -0.25]
        );
        assert_eq!(taylor_pos_bce(2).unwrap().expansion_point(), 1.0);

        assert_eq!(taylor_neg_bce(2).unwrap().coeffs(), &[0.0, -1.0, -0.5]);
        assert_eq!(taylor_neg_bce(1).unwrap().coeffs(), &[0.0, -1.0]);
        assert_eq!(
            taylor_neg_bce(3).unwrap().coeffs(),
            &[0.0, -1.0, -0.5, -1.0 / 3.0]
        );
        assert_eq!(taylor_neg_bce(3).unwrap().expansion_point(), 0.0);

        assert!(matches!(taylor_pos_bce(0), Err(Error::OrderTooSmall(0))));
        assert!(matches!(taylor_neg_bce(0), Err(Error::OrderTooSmall(0))));
    }

    #[test]
    fn exponential_one_one() {
        let approx = pade_from_taylor(&exp_series(), 1, 1).unwrap();
        assert_eq!(approx.num(), &[1.0, 0.5]);
        assert_eq!(approx.den(), &[1.0, -0.5]);
        assert_eq!(eval_pade(&approx, 0.0).unwrap(), 1.0);
        assert!((eval_pade(&approx, 1.0).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn log_series_one_one() {
        let series = TaylorSeries::new(0.0, vec![0.0, 1.0, 0.5]).unwrap();
        let approx = pade_from_taylor(&series, 1, 1).unwrap();
        assert_eq!(approx.num(), &[0.0, 1.0]);
        assert_eq!(approx.den(), &[1.0, -0.5]);
    }

    #[test]
    fn constant_denominator_is_truncation() {
        let series = taylor_pos_bce(5).unwrap();
        for k in 0..=5 {
            let approx = pade_from_taylor(&series, k, 0).unwrap();
            assert_eq!(approx.num(), &series.coeffs()[..=k]);
            assert_eq!(approx.den(), &[1.0]);
        }
    }

    #[test]
    fn bce_targets_do_not_reproduce_canonical_b1() {
        let pos = pade_from_taylor(&taylor_pos_bce(2).unwrap(), 1, 1).unwrap();
        assert_eq!(pos.den(), &[1.0, 0.5]);
        let neg = pade_from_taylor(&taylor_neg_bce(2).unwrap(), 1, 1).unwrap();
        assert_eq!(neg.den(), &[1.0, -0.5]);
        assert_ne!(pos.den()[1], CANONICAL_ALPA.b1);
    }

    #[test]
    fn error_paths() {
        assert!(matches!(
            pade_from_taylor(&exp_series(), 2, 1),
            Err(Error::SeriesTooShort {
                needed: 4,
                got: 3,
                ..
            })
        ));
        let flat = TaylorSeries::new(0.0, vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            pade_from_taylor(&flat, 1, 1),
            Err(Error::DegeneratePade { .. })
        ));
        // nearly rank-deficient 2x2 system
        let near = TaylorSeries::new(0.0, vec![1.0, 1.0, 1.0, 1.0 + 1e-14, 1.0]).unwrap();
        assert!(matches!(
            pade_from_taylor(&near, 1, 2),
            Err(Error::DegeneratePade { .. })
        ));
        let pole = PadeApproximant::new(vec![1.0], vec![1.0, -1.0], 0.0).unwrap();
        assert!(matches!(
            eval_pade(&pole, 1.0),
            Err(Error::PoleEncountered(_))
        ));
        assert!(TaylorSeries::new(0.0, vec![]).is_err());
        assert!(TaylorSeries::new(0.0, vec![f64::NAN]).is_err());
        assert!(PadeApproximant::new(vec![1.0], vec![2.0], 0.0).is_err());
    }

    #[test]
    fn canonical_terms() {
        let (pos, neg) = canonical_alpa_terms();
        let p = |v| Probability::new(v).unwrap();
        assert_eq!(pos(p(1.0)), 0.0);
        assert_eq!(pos(p(0.5)), 0.75);
        assert_eq!(neg(p(0.5)), 0.5);
        assert_eq!(CANONICAL_ALPA.pos_dp(0.3), -1.5);
        assert_eq!(CANONICAL_ALPA.neg_dp(0.3), 1.0);
    }

    #[test]
    fn canonical_terms_monotone_and_exact() {
        let (pos, neg) = canonical_alpa_terms();
        let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        for w in grid.windows(2) {
            let (a, b) = (
                Probability::new(w[0]).unwrap(),
                Probability::new(w[1]).unwrap(),
            );
            assert!(pos(a) > pos(b));
            assert!(neg(a) < neg(b));
        }
        for &v in &grid {
            let p = Probability::new(v).unwrap();
            assert!(pos(p) >= 0.0 && neg(p) >= 0.0);
            for gamma in [0.0, 1.0, 2.0, 4.0, 0.5] {
                assert_eq!(v.powf(gamma) * neg(p), v.powf(gamma) * v);
            }
        }
    }
}
