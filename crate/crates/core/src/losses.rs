//! The loss zoo: BCE, one-vs-rest CE, Focal, ASL, Class-Balanced and ALPA.
//!
//! Every per-element term returns its value together with the exact
//! derivative with respect to the logit `z`, where `p = sigmoid(z)` and
//! `dp/dz = p(1 - p)`. All values are non-negative quantities to minimize.
//!
//! ALPA for one sample-class pair, with `pt = y·p + (1-y)(1-p)` and
//! `W = (1 - pt)^(γ₊ + γ₋)`:
//!
//! ```text
//! L = [ α·y·(1-p)^γ₊·L⁺(p) + β·(1-y)·p^γ₋·L⁻(p) ] · W
//! L⁺(p) = 1.5·(1 - p)      L⁻(p) = p      (× (λ - p) for the Hill variant)
//! ```

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{clamp_prob, safe_neg_log, BinaryTarget, Probability, PROB_EPS};
use crate::pade::CANONICAL_ALPA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Bce,
    Ce,
    Focal,
    Asl,
    Cb,
    Alpa,
}

/// ALPA hyperparameter presets from the ablation study, plus `Custom`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlpaVariant {
    V1,
    V2,
    V3,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CbMode {
    /// Effective-number weighting `(1-β)/(1-β^n)`, renormalized to mean 1.
    #[default]
    Standard,
    /// The scalar `(1-β^γ)/(1-β)` applied to every class.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    MeanOverSamples,
    SumOverSamples,
}

/// Fully resolved ALPA hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlpaParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_pos: f64,
    pub gamma_neg: f64,
    /// Hill factor `λ`; `None` disables the `(λ - p)` term.
    pub lambda: Option<f64>,
}

impl AlpaVariant {
    pub fn preset(self) -> Option<AlpaParams> {
        match self {
            Self::V1 => Some(AlpaParams {
                alpha: 1.0,
                beta: 1.0,
                gamma_pos: 0.0,
                gamma_neg: 4.0,
                lambda: None,
            }),
            Self::V2 => Some(AlpaParams {
                alpha: 0.875,
                beta: 1.625,
                gamma_pos: 0.0,
                gamma_neg: 4.0,
                lambda: None,
            }),
            Self::V3 => Some(AlpaParams {
                alpha: 1.25,
                beta: 2.0,
                gamma_pos: 3.0,
                gamma_neg: 2.0,
                lambda: Some(1.5),
            }),
            Self::Custom => None,
        }
    }
}

/// Tagged loss configuration.
///
/// Optional fields default per kind (`alpha`/`beta` to 1, focusing exponents
/// to 0) except for ALPA `Custom`, where all four of `alpha`, `beta`,
/// `gamma_pos` and `gamma_neg` must be given. ALPA presets pin their values;
/// a preset spec carrying different values is rejected.
///
/// For Focal, `alpha`/`beta` are the positive/negative balancing factors and
/// the single focusing parameter is stored in both `gamma_pos` and `gamma_neg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<AlpaVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_pos: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_neg: Option<f64>,
    #[serde(default)]
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub cb_beta: f64,
    #[serde(default)]
    pub cb_mode: CbMode,
    #[serde(default)]
    pub reduction: Reduction,
}

impl LossSpec {
    fn base(kind: LossKind) -> Self {
        Self {
            kind,
            variant: None,
            alpha: None,
            beta: None,
            gamma_pos: None,
            gamma_neg: None,
            margin: 0.0,
            lambda: None,
            cb_beta: 0.0,
            cb_mode: CbMode::Standard,
            reduction: Reduction::MeanOverSamples,
        }
    }

    pub fn bce() -> Self {
        Self::base(LossKind::Bce)
    }

    pub fn ce() -> Self {
        Self::base(LossKind::Ce)
    }

    pub fn focal(gamma: f64) -> Self {
        Self::focal_balanced(gamma, 1.0, 1.0)
    }

    pub fn focal_balanced(gamma: f64, alpha_pos: f64, alpha_neg: f64) -> Self {
        Self {
            alpha: Some(alpha_pos),
            beta: Some(alpha_neg),
            gamma_pos: Some(gamma),
            gamma_neg: Some(gamma),
            ..Self::base(LossKind::Focal)
        }
    }

    pub fn asl(gamma_pos: f64, gamma_neg: f64, margin: f64) -> Self {
        Self {
            gamma_pos: Some(gamma_pos),
            gamma_neg: Some(gamma_neg),
            margin,
            ..Self::base(LossKind::Asl)
        }
    }

    pub fn cb(cb_beta: f64) -> Self {
        Self {
            cb_beta,
            ..Self::base(LossKind::Cb)
        }
    }

    /// A preset variant; `AlpaVariant::Custom` yields an incomplete spec to
    /// be filled field by field.
    pub fn alpa(variant: AlpaVariant) -> Self {
        let mut spec = Self {
            variant: Some(variant),
            ..Self::base(LossKind::Alpa)
        };
        if let Some(p) = variant.preset() {
            spec.alpha = Some(p.alpha);
            spec.beta = Some(p.beta);
            spec.gamma_pos = Some(p.gamma_pos);
            spec.gamma_neg = Some(p.gamma_neg);
            spec.lambda = p.lambda;
        }
        spec
    }

    pub fn alpa_custom(params: AlpaParams) -> Self {
        Self {
            variant: Some(AlpaVariant::Custom),
            alpha: Some(params.alpha),
            beta: Some(params.beta),
            gamma_pos: Some(params.gamma_pos),
            gamma_neg: Some(params.gamma_neg),
            lambda: params.lambda,
            ..Self::base(LossKind::Alpa)
        }
    }

    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.reduction = reduction;
        self
    }

    /// Checks ranges and, for ALPA, that the spec resolves.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma_pos", self.gamma_pos),
            ("gamma_neg", self.gamma_neg),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "{name} must be >= 0, got {v}"
                    )));
                }
            }
        }
        if !(0.0..1.0).contains(&self.margin) {
            return Err(Error::InvalidParameter(format!(
                "margin must lie in [0, 1), got {}",
                self.margin
            )));
        }
        if !(0.0..1.0).contains(&self.cb_beta) {
            return Err(Error::InvalidParameter(format!(
                "cb_beta must lie in [0, 1), got {}",
                self.cb_beta
            )));
        }
        match self.kind {
            LossKind::Focal => {
                self.focal_gamma()?;
            }
            LossKind::Alpa => {
                self.alpa_params()?;
            }
            _ => {}
        }
        Ok(())
    }

    fn focal_gamma(&self) -> Result<f64> {
        let gamma = match (self.gamma_pos, self.gamma_neg) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::InvalidParameter(format!(
                    "focal loss uses a single gamma; got gamma_pos = {a}, gamma_neg = {b}"
                )))
            }
            (Some(g), _) | (None, Some(g)) => g,
            (None, None) => 0.0,
        };
        if gamma.is_nan() || gamma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "gamma must be >= 0, got {gamma}"
            )));
        }
        Ok(gamma)
    }

    /// Resolves ALPA hyperparameters, enforcing preset pinning.
    pub fn alpa_params(&self) -> Result<AlpaParams> {
        let variant = self.variant.unwrap_or(AlpaVariant::Custom);
        let params = match variant.preset() {
            Some(preset) => {
                let pinned = [
                    ("alpha", self.alpha, preset.alpha),
                    ("beta", self.beta, preset.beta),
                    ("gamma_pos", self.gamma_pos, preset.gamma_pos),
                    ("gamma_neg", self.gamma_neg, preset.gamma_neg),
                ];
                for (name, given, fixed) in pinned {
                    if given.is_some_and(|g| g != fixed) {
                        return Err(Error::InvalidParameter(format!(
                            "variant {variant:?} pins {name} = {fixed}"
                        )));
                    }
                }
                if self.lambda.is_some() && self.lambda != preset.lambda {
                    return Err(Error::InvalidParameter(format!(
                        "variant {variant:?} pins lambda = {:?}",
                        preset.lambda
                    )));
                }
                preset
            }
            None => {
                let missing: Vec<&str> = [
                    ("alpha", self.alpha),
                    ("beta", self.beta),
                    ("gamma_pos", self.gamma_pos),
                    ("gamma_neg", self.gamma_neg),
                ]
                .into_iter()
                .filter(|(_, v)| v.is_none())
                .map(|(name, _)| name)
                .collect();
                if !missing.is_empty() {
                    return Err(Error::IncompleteSpec(format!(
                        "custom ALPA spec is missing {}",
                        missing.join(", ")
                    )));
                }
                AlpaParams {
                    alpha: self.alpha.unwrap_or_default(),
                    beta: self.beta.unwrap_or_default(),
                    gamma_pos: self.gamma_pos.unwrap_or_default(),
                    gamma_neg: self.gamma_neg.unwrap_or_default(),
                    lambda: self.lambda,
                }
            }
        };
        if let Some(lambda) = params.lambda {
            if !(lambda >= 1.0 && lambda.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "Hill factor lambda must be >= 1, got {lambda}"
                )));
            }
        }
        Ok(params)
    }

    /// Evaluates one sample-class term. `class_weight` is only used by CB.
    pub fn term(&self, p: Probability, y: BinaryTarget, class_weight: f64) -> Result<LossEval> {
        match self.kind {
            LossKind::Bce | LossKind::Ce => bce_term(p, y),
            LossKind::Focal => focal_term(p, y, self),
            LossKind::Asl => asl_term(p, y, self),
            LossKind::Cb => Ok(cb_term(p, y, class_weight)?),
            LossKind::Alpa => alpa_term(p, y, self),
        }
    }
}

/// Loss value and its derivative with respect to the logit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossEval {
    pub value: f64,
    pub dvalue_dlogit: f64,
}

/// Per-class sample counts, all at least 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassCounts(Vec<usize>);

impl ClassCounts {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidParameter("no classes".into()));
        }
        if let Some(k) = counts.iter().position(|&n| n < 1) {
            return Err(Error::InvalidParameter(format!("class {k} has no samples")));
        }
        Ok(Self(counts))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    /// `N_max / N_min`.
    pub fn imbalance_ratio(&self) -> f64 {
        let max = self.0.iter().copied().max().unwrap_or(1);
        let min = self.0.iter().copied().min().unwrap_or(1);
        max as f64 / min as f64
    }
}

fn complement(p: Probability) -> Probability {
    // 1 - p of a clamped probability stays inside [0, 1]
    Probability::new(p.complement()).expect("complement of a probability")
}

/// Binary cross-entropy for one sample-class pair.
pub fn bce_term(p: Probability, y: BinaryTarget) -> Result<LossEval> {
    let value = if y.is_positive() {
        safe_neg_log(p)?
    } else {
        safe_neg_log(complement(p))?
    };
    Ok(LossEval {
        value,
        dvalue_dlogit: p.value() - y.as_f64(),
    })
}

/// One-vs-rest cross-entropy over K sigmoid outputs; returns one term per
/// class. The sample loss is the sum of the terms.
pub fn ce_multiclass(probs: &[Probability], onehot: &[BinaryTarget]) -> Result<Vec<LossEval>> {
    if probs.len() != onehot.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} probabilities vs {} targets",
            probs.len(),
            onehot.len()
        )));
    }
    let positives = onehot.iter().filter(|y| y.is_positive()).count();
    if positives != 1 {
        return Err(Error::InvalidTarget(format!(
            "one-hot target must contain exactly one positive, found {positives}"
        )));
    }
    probs
        .iter()
        .zip(onehot)
        .map(|(&p, &y)| bce_term(p, y))
        .collect()
}

fn focal_parts(p: Probability, y: BinaryTarget, gamma: f64, weight: f64) -> Result<LossEval> {
    let pv = p.value();
    let q = p.complement();
    if y.is_positive() {
        let nl = safe_neg_log(p)?;
        let focus = q.powf(gamma);
        Ok(LossEval {
            value: weight * focus * nl,
            dvalue_dlogit: weight * focus * (-gamma * pv * nl - q),
        })
    } else {
        let nl = safe_neg_log(complement(p))?;
        let focus = pv.powf(gamma);
        Ok(LossEval {
            value: weight * focus * nl,
            dvalue_dlogit: weight * focus * (gamma * q * nl + pv),
        })
    }
}

/// Focal loss: `α₊(1-p)^γ(-ln p)` for positives, `α₋p^γ(-ln(1-p))` for negatives.
pub fn focal_term(p: Probability, y: BinaryTarget, spec: &LossSpec) -> Result<LossEval> {
    if spec.kind != LossKind::Focal {
        return Err(Error::InvalidParameter(format!(
            "focal_term called with a {:?} spec",
            spec.kind
        )));
    }
    let gamma = spec.focal_gamma()?;
    let weight = if y.is_positive() {
        spec.alpha.unwrap_or(1.0)
    } else {
        spec.beta.unwrap_or(1.0)
    };
    focal_parts(p, y, gamma, weight)
}

/// Asymmetric loss with probability margin. Negatives use the shifted
/// probability `p_m = max(p - m, 0)`; the gradient through the shift is zero
/// once `p <= m`.
pub fn asl_term(p: Probability, y: BinaryTarget, spec: &LossSpec) -> Result<LossEval> {
    if spec.kind != LossKind::Asl {
        return Err(Error::InvalidParameter(format!(
            "asl_term called with a {:?} spec",
            spec.kind
        )));
    }
    let margin = spec.margin;
    if !(0.0..1.0).contains(&margin) {
        return Err(Error::InvalidParameter(format!(
            "margin must lie in [0, 1), got {margin}"
        )));
    }
    let gamma_pos = spec.gamma_pos.unwrap_or(0.0);
    let gamma_neg = spec.gamma_neg.unwrap_or(0.0);
    if gamma_pos < 0.0 || gamma_neg < 0.0 {
        return Err(Error::InvalidParameter(
            "focusing parameters must be >= 0".into(),
        ));
    }
    if y.is_positive() {
        return focal_parts(p, y, gamma_pos, 1.0);
    }
    let pv = p.value();
    let shifted = (pv - margin).max(0.0);
    if shifted <= 0.0 {
        return Ok(LossEval {
            value: 0.0,
            dvalue_dlogit: 0.0,
        });
    }
    let nl = safe_neg_log(Probability::new(1.0 - shifted)?)?;
    let focus = shifted.powf(gamma_neg);
    let dp_dz = pv * p.complement();
    // d/dp [s^γ · nl(s)] = s^γ · (γ·nl/s + 1/(1-s)), s = p - m
    let inner = if gamma_neg == 0.0 {
        1.0 / (1.0 - shifted)
    } else {
        gamma_neg * nl / shifted + 1.0 / (1.0 - shifted)
    };
    Ok(LossEval {
        value: focus * nl,
        dvalue_dlogit: focus * inner * dp_dz,
    })
}

/// `(1 - β) / (1 - β^n)`, the inverse effective number of samples.
pub fn effective_number_weight(n: usize, beta: f64) -> f64 {
    (1.0 - beta) / (1.0 - beta.powi(n as i32))
}

/// Class-Balanced weights, one per class.
///
/// `gamma` is only read in [`CbMode::AsPrinted`].
pub fn cb_weights(
    counts: &ClassCounts,
    cb_beta: f64,
    mode: CbMode,
    gamma: f64,
) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&cb_beta) {
        return Err(Error::InvalidParameter(format!(
            "cb_beta must lie in [0, 1), got {cb_beta}"
        )));
    }
    match mode {
        CbMode::Standard => {
            let raw: Vec<f64> = counts
                .as_slice()
                .iter()
                .map(|&n| effective_number_weight(n, cb_beta))
                .collect();
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            Ok(raw.into_iter().map(|w| w / mean).collect())
        }
        CbMode::AsPrinted => {
            let w = (1.0 - cb_beta.powf(gamma)) / (1.0 - cb_beta);
            Ok(vec![w; counts.num_classes()])
        }
    }
}

/// BCE scaled by a class weight.
pub fn cb_term(p: Probability, y: BinaryTarget, weight: f64) -> Result<LossEval> {
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(Error::InvalidParameter(format!("class weight {weight}")));
    }
    let e = bce_term(p, y)?;
    Ok(LossEval {
        value: weight * e.value,
        dvalue_dlogit: weight * e.dvalue_dlogit,
    })
}

/// ALPA term for one sample-class pair.
pub fn alpa_term(p: Probability, y: BinaryTarget, spec: &LossSpec) -> Result<LossEval> {
    if spec.kind != LossKind::Alpa {
        return Err(Error::InvalidParameter(format!(
            "alpa_term called with a {:?} spec",
            spec.kind
        )));
    }
    let params = spec.alpa_params()?;
    Ok(alpa_eval(p, y, &params))
}

fn alpa_eval(p: Probability, y: BinaryTarget, params: &AlpaParams) -> LossEval {
    let c = &CANONICAL_ALPA;
    let pv = p.value();
    let q = p.complement();
    let dp_dz = pv * q;
    let sample_gamma = params.gamma_pos + params.gamma_neg;
    if y.is_positive() {
        // (1-p)^γ₊ focusing times W = (1-p)^(γ₊+γ₋)
        let e = params.gamma_pos + sample_gamma;
        let u = q.powf(e);
        let core = c.pos(pv);
        LossEval {
            value: params.alpha * u * core,
            dvalue_dlogit: params.alpha * u * (-e * pv * core + c.pos_dp(pv) * dp_dz),
        }
    } else {
        // p^γ₋ focusing times W = p^(γ₊+γ₋)
        let f = params.gamma_neg + sample_gamma;
        let v = pv.powf(f);
        let (core, core_dp) = match params.lambda {
            Some(lambda) => {
                let hill = lambda - pv;
                (c.neg(pv) * hill, c.neg_dp(pv) * hill - c.neg(pv))
            }
            None => (c.neg(pv), c.neg_dp(pv)),
        };
        LossEval {
            value: params.beta * v * core,
            dvalue_dlogit: params.beta * v * (f * q * core + core_dp * dp_dz),
        }
    }
}

/// Unweighted negative ALPA core `p^γ₋ · L⁻(p) = p^(γ₋+1)`, without `β` and `W`.
pub fn alpa_neg_core(p: Probability, gamma_neg: f64) -> f64 {
    debug_assert!(gamma_neg >= 0.0);
    p.value().powf(gamma_neg) * CANONICAL_ALPA.neg(p.value())
}

/// Result of [`batch_loss`]: the reduced loss and `∂total/∂z` for every logit.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    pub grads: Array2<f64>,
}

/// Evaluates `spec` over a `samples × classes` probability matrix.
///
/// Terms are summed over classes, then reduced over samples per
/// `spec.reduction`. `counts` is required for CB. CE and CB need exactly one
/// positive per row; the other kinds accept multi-label rows.
pub fn batch_loss(
    probs: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, u8>,
    spec: &LossSpec,
    counts: Option<&ClassCounts>,
) -> Result<BatchLoss> {
    if probs.dim() != targets.dim() {
        return Err(Error::ShapeMismatch(format!(
            "probabilities {:?} vs targets {:?}",
            probs.dim(),
            targets.dim()
        )));
    }
    let (samples, classes) = probs.dim();
    if samples == 0 || classes == 0 {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    spec.validate()?;

    let weights = if spec.kind == LossKind::Cb {
        let counts = counts.ok_or_else(|| {
            Error::InvalidParameter("class-balanced loss needs class counts".into())
        })?;
        if counts.num_classes() != classes {
            return Err(Error::ShapeMismatch(format!(
                "{} class counts for {classes} output classes",
                counts.num_classes()
            )));
        }
        Some(cb_weights(
            counts,
            spec.cb_beta,
            spec.cb_mode,
            spec.gamma_pos.unwrap_or(0.0),
        )?)
    } else {
        None
    };
    let single_label = matches!(spec.kind, LossKind::Ce | LossKind::Cb);

    let mut total = 0.0;
    let mut grads = Array2::zeros((samples, classes));
    for i in 0..samples {
        let row: Vec<BinaryTarget> = targets
            .row(i)
            .iter()
            .map(|&y| BinaryTarget::from_u8(y))
            .collect::<Result<_>>()?;
        let positives: Vec<usize> = row
            .iter()
            .enumerate()
            .filter(|(_, y)| y.is_positive())
            .map(|(k, _)| k)
            .collect();
        if single_label && positives.len() != 1 {
            return Err(Error::InvalidTarget(format!(
                "row {i}: expected exactly one positive, found {}",
                positives.len()
            )));
        }
        let class_weight = match &weights {
            Some(w) => w[positives[0]],
            None => 1.0,
        };
        let mut sample_sum = 0.0;
        for (k, &y) in row.iter().enumerate() {
            let p = clamp_prob(probs[(i, k)], PROB_EPS)?;
            let eval = spec.term(p, y, class_weight)?;
            sample_sum += eval.value;
            grads[(i, k)] = eval.dvalue_dlogit;
        }
        total += sample_sum;
    }
    if spec.reduction == Reduction::MeanOverSamples {
        let n = samples as f64;
        total /= n;
        grads.mapv_inplace(|g| g / n);
    }
    Ok(BatchLoss { total, grads })
}

/// One-hot encodes class indices into a `samples × classes` target matrix.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Array2<u8>> {
    let mut out = Array2::zeros((labels.len(), classes));
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        out[(i, label)] = 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::clamped_sigmoid;
    use crate::numeric::Logit;
    use ndarray::array;

    const POS: BinaryTarget = BinaryTarget::Positive;
    const NEG: BinaryTarget = BinaryTarget::Negative;

    fn p(v: f64) -> Probability {
        Probability::new(v).unwrap()
    }

    fn z_grid() -> Vec<f64> {
        (0..=100).map(|i| -5.0 + 0.1 * i as f64).collect()
    }

    #[test]
    fn bce_examples() {
        let e = bce_term(p(0.5), POS).unwrap();
        assert!((e.value - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(e.dvalue_dlogit, -0.5);
        let e = bce_term(p(0.5), NEG).unwrap();
        assert!((e.value - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(e.dvalue_dlogit, 0.5);
        let e = bce_term(p(1.0 - PROB_EPS), POS).unwrap();
        assert!(e.value < 1e-11 && e.dvalue_dlogit.abs() < 1e-11);
    }

    #[test]
    fn ce_examples() {
        let sum = |terms: Vec<LossEval>| terms.iter().map(|t| t.value).sum::<f64>();
        let terms = ce_multiclass(&[p(0.5), p(0.5)], &[POS, NEG]).unwrap();
        assert!((sum(terms) - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);

        let terms = ce_multiclass(&[p(1.0 - PROB_EPS), p(PROB_EPS)], &[POS, NEG]).unwrap();
        assert!(sum(terms) < 1e-11);

        // -ln 0.1 - ln 0.2 - ln 0.9, mpmath: 4.01738352108597236
        let terms = ce_multiclass(&[p(0.9), p(0.2), p(0.1)], &[NEG, POS, NEG]).unwrap();
        assert!((sum(terms) - 4.017_383_521_085_972).abs() < 1e-14);

        assert!(matches!(
            ce_multiclass(&[p(0.5)], &[POS, NEG]),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            ce_multiclass(&[p(0.5), p(0.5)], &[POS, POS]),
            Err(Error::InvalidTarget(_))
        ));
    }

    #[test]
    fn focal_examples() {
        // 0.01 · (-ln 0.9), mpmath: 0.00105360515657826301
        let e = focal_term(p(0.9), POS, &LossSpec::focal(2.0)).unwrap();
        assert!((e.value - 0.001_053_605_156_578_263).abs() < 1e-17);

        let e = focal_term(p(1.0 - PROB_EPS), POS, &LossSpec::focal(3.0)).unwrap();
        assert!(e.value < 1e-30);

        let mut bad = LossSpec::focal(2.0);
        bad.gamma_neg = Some(1.0);
        assert!(focal_term(p(0.5), POS, &bad).is_err());
        assert!(focal_term(p(0.5), POS, &LossSpec::focal(-1.0)).is_err());
        assert!(focal_term(p(0.5), POS, &LossSpec::bce()).is_err());
    }

    #[test]
    fn focal_gamma_zero_is_bce() {
        let spec = LossSpec::focal(0.0);
        for z in z_grid() {
            let pv = clamped_sigmoid(Logit::new(z).unwrap());
            for y in [POS, NEG] {
                let a = focal_term(pv, y, &spec).unwrap();
                let b = bce_term(pv, y).unwrap();
                assert!((a.value - b.value).abs() <= 1e-12);
                assert!((a.dvalue_dlogit - b.dvalue_dlogit).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn asl_examples() {
        // 0.5^4 · ln 2, mpmath: 0.0433216987849965818
        let e = asl_term(p(0.5), NEG, &LossSpec::asl(0.0, 4.0, 0.0)).unwrap();
        assert!((e.value - 0.043_321_698_784_996_58).abs() < 1e-16);

        let e = asl_term(p(0.005), NEG, &LossSpec::asl(0.0, 0.01, 0.01)).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.dvalue_dlogit, 0.0);

        assert!(asl_term(p(0.5), NEG, &LossSpec::asl(0.0, 1.0, 1.0)).is_err());
        assert!(asl_term(p(0.5), NEG, &LossSpec::asl(0.0, 1.0, -0.1)).is_err());
    }

    #[test]
    fn asl_symmetric_is_focal() {
        for gamma in [0.0, 0.5, 2.0, 4.0] {
            let asl = LossSpec::asl(gamma, gamma, 0.0);
            let focal = LossSpec::focal(gamma);
            for z in z_grid() {
                let pv = clamped_sigmoid(Logit::new(z).unwrap());
                for y in [POS, NEG] {
                    let a = asl_term(pv, y, &asl).unwrap();
                    let b = focal_term(pv, y, &focal).unwrap();
                    assert!((a.value - b.value).abs() <= 1e-12);
                    assert!((a.dvalue_dlogit - b.dvalue_dlogit).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn cb_weight_examples() {
        // 0.01 / (1 - 0.99^10), mpmath: 0.104582901175912352
        assert!((effective_number_weight(10, 0.99) - 0.104_582_901_175_912_35).abs() < 1e-15);

        let counts = ClassCounts::new(vec![5, 50, 500]).unwrap();
        assert_eq!(
            cb_weights(&counts, 0.0, CbMode::Standard, 0.0).unwrap(),
            vec![1.0; 3]
        );

        let counts = ClassCounts::new(vec![100, 1]).unwrap();
        let w = cb_weights(&counts, 0.9, CbMode::Standard, 0.0).unwrap();
        assert!(w[1] > w[0]);
        assert!(((w[0] + w[1]) / 2.0 - 1.0).abs() < 1e-15);

        let w = cb_weights(&counts, 0.5, CbMode::AsPrinted, 2.0).unwrap();
        assert_eq!(w, vec![1.5, 1.5]);

        assert!(cb_weights(&counts, 1.0, CbMode::Standard, 0.0).is_err());
        assert!(ClassCounts::new(vec![3, 0]).is_err());
    }

    #[test]
    fn cb_weights_decrease_with_count() {
        let counts = ClassCounts::new((1..=60).collect()).unwrap();
        let w = cb_weights(&counts, 0.99, CbMode::Standard, 0.0).unwrap();
        assert!(w.windows(2).all(|pair| pair[0] > pair[1]));
    }

    #[test]
    fn alpa_examples() {
        let v2 = LossSpec::alpa(AlpaVariant::V2);
        let e = alpa_term(p(0.9), POS, &v2).unwrap();
        // 0.875 · 1.5 · 0.1 · 0.1^4
        assert!((e.value - 1.3125e-5).abs() < 1e-18);
        let e = alpa_term(p(0.2), NEG, &v2).unwrap();
        // 1.625 · 0.2^9
        assert!((e.value - 8.32e-7).abs() < 1e-19);

        for variant in [AlpaVariant::V1, AlpaVariant::V2, AlpaVariant::V3] {
            let spec = LossSpec::alpa(variant);
            assert!(alpa_term(p(1.0 - PROB_EPS), POS, &spec).unwrap().value < 1e-11);
            assert!(alpa_term(p(PROB_EPS), NEG, &spec).unwrap().value < 1e-11);
        }
    }

    #[test]
    fn alpa_spec_resolution() {
        let incomplete = LossSpec::alpa(AlpaVariant::Custom);
        assert!(matches!(
            alpa_term(p(0.5), POS, &incomplete),
            Err(Error::IncompleteSpec(_))
        ));
        let mut tampered = LossSpec::alpa(AlpaVariant::V2);
        tampered.alpha = Some(2.0);
        assert!(matches!(
            tampered.alpa_params(),
            Err(Error::InvalidParameter(_))
        ));

        let custom = LossSpec::alpa_custom(AlpaParams {
            alpha: 1.0,
            beta: 1.0,
            gamma_pos: 1.0,
            gamma_neg: 1.0,
            lambda: Some(0.5),
        });
        assert!(custom.validate().is_err());
    }

    #[test]
    fn alpa_neg_core_examples() {
        assert_eq!(alpa_neg_core(p(0.5), 4.0), 0.03125);
        assert_eq!(alpa_neg_core(p(0.5), 0.0), 0.5);
        assert_eq!(alpa_neg_core(p(1.0), 4.0), 1.0);
    }

    #[test]
    fn batch_reductions() {
        let probs = array![[0.7, 0.2, 0.4]];
        let targets = array![[1u8, 0, 0]];
        let spec = LossSpec::bce();
        let one = batch_loss(probs.view(), targets.view(), &spec, None).unwrap();
        let expected: f64 = [(0.7, POS), (0.2, NEG), (0.4, NEG)]
            .iter()
            .map(|&(v, y)| bce_term(p(v), y).unwrap().value)
            .sum();
        assert!((one.total - expected).abs() < 1e-15);

        let single = batch_loss(array![[0.3]].view(), array![[1u8]].view(), &spec, None).unwrap();
        assert_eq!(single.total, bce_term(p(0.3), POS).unwrap().value);

        let sum_spec = LossSpec::alpa(AlpaVariant::V3).with_reduction(Reduction::SumOverSamples);
        let once = batch_loss(probs.view(), targets.view(), &sum_spec, None).unwrap();
        let doubled_probs = array![[0.7, 0.2, 0.4], [0.7, 0.2, 0.4]];
        let doubled_targets = array![[1u8, 0, 0], [1, 0, 0]];
        let twice = batch_loss(
            doubled_probs.view(),
            doubled_targets.view(),
            &sum_spec,
            None,
        )
        .unwrap();
        assert!((twice.total - 2.0 * once.total).abs() < 1e-15);

        let two = array![[0.7, 0.2], [0.1, 0.6]];
        let two_t = array![[1u8, 0], [0, 1]];
        let mean = batch_loss(two.view(), two_t.view(), &spec, None).unwrap();
        let s0 = bce_term(p(0.7), POS).unwrap().value + bce_term(p(0.2), NEG).unwrap().value;
        let s1 = bce_term(p(0.1), NEG).unwrap().value + bce_term(p(0.6), POS).unwrap().value;
        assert!((mean.total - (s0 + s1) / 2.0).abs() < 1e-15);
        assert_eq!(mean.grads[(1, 1)], (0.6 - 1.0) / 2.0);
    }

    #[test]
    fn batch_errors() {
        let spec = LossSpec::bce();
        assert!(matches!(
            batch_loss(array![[0.5, 0.5]].view(), array![[1u8]].view(), &spec, None),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            batch_loss(array![[0.5]].view(), array![[2u8]].view(), &spec, None),
            Err(Error::InvalidTarget(_))
        ));
        let cb = LossSpec::cb(0.99);
        assert!(batch_loss(
            array![[0.5, 0.5]].view(),
            array![[1u8, 0]].view(),
            &cb,
            None
        )
        .is_err());
        assert!(matches!(
            batch_loss(
                array![[0.5, 0.5]].view(),
                array![[1u8, 1]].view(),
                &LossSpec::ce(),
                None
            ),
            Err(Error::InvalidTarget(_))
        ));
    }

    #[test]
    fn batch_cb_uses_true_class_weight() {
        let counts = ClassCounts::new(vec![100, 2]).unwrap();
        let spec = LossSpec::cb(0.9);
        let w = cb_weights(&counts, 0.9, CbMode::Standard, 0.0).unwrap();
        let probs = array![[0.3, 0.6]];
        let out = batch_loss(probs.view(), array![[0u8, 1]].view(), &spec, Some(&counts)).unwrap();
        let plain = batch_loss(
            probs.view(),
            array![[0u8, 1]].view(),
            &LossSpec::bce(),
            None,
        )
        .unwrap();
        assert!((out.total - w[1] * plain.total).abs() < 1e-15);
    }

    #[test]
    fn one_hot_encoding() {
        assert_eq!(one_hot(&[1, 0], 2).unwrap(), array![[0u8, 1], [1, 0]]);
        assert!(one_hot(&[2], 2).is_err());
    }
}
