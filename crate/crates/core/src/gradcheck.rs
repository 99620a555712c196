//! Finite-difference gradient oracle and the negative-branch gradient curves
//! (`dL⁻/dz` against `p`) for CE, Focal, ASL and ALPA.

use std::io::Write;

use crate::error::{Error, Result};
use crate::losses::{LossKind, LossSpec};
use crate::numeric::{clamped_sigmoid, BinaryTarget, Logit, Probability};

/// Central difference `(L(z+h) - L(z-h)) / 2h`.
pub fn fd_gradient<F>(loss: F, z: Logit, h: f64) -> Result<f64>
where
    F: Fn(Logit) -> Result<f64>,
{
    if !(h > 0.0 && h <= 1e-2) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must lie in (0, 1e-2], got {h}"
        )));
    }
    let eval = |zz: f64| -> Result<f64> {
        let v = loss(Logit::new(zz)?)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteLoss { z: zz, value: v })
        }
    };
    let plus = eval(z.value() + h)?;
    let minus = eval(z.value() - h)?;
    Ok((plus - minus) / (2.0 * h))
}

/// `|a - b| / max(|a|, |b|)`, and 0 when both are exactly zero.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Analytic `d/dz` of the unweighted ALPA negative core:
/// `(γ₋+1) · p^(γ₋+1) · (1-p)`.
pub fn alpa_neg_grad(p: Probability, gamma_neg: f64) -> f64 {
    let pv = p.value();
    (gamma_neg + 1.0) * pv.powf(gamma_neg + 1.0) * (1.0 - pv)
}

/// Curve labels in CSV column order.
pub const CURVE_LABELS: [&str; 4] = ["ce", "focal", "asl", "alpa"];

/// Fixed CSV header.
pub const CURVE_HEADER: &str = "p,grad_ce,grad_focal,grad_asl,grad_alpa";

/// Default number of grid points and grid range.
pub const DEFAULT_GRID_SIZE: usize = 1001;
pub const GRID_LO: f64 = 0.001;
pub const GRID_HI: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCurve {
    pub loss_label: String,
    pub probabilities: Vec<f64>,
    pub gradients: Vec<f64>,
}

/// The four curves evaluated on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCurveSet {
    pub grid: Vec<f64>,
    /// In [`CURVE_LABELS`] order.
    pub curves: Vec<GradCurve>,
}

/// Uniform grid of `grid_size` points on `[GRID_LO, GRID_HI]`.
pub fn probability_grid(grid_size: usize) -> Result<Vec<f64>> {
    if grid_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid needs at least 2 points, got {grid_size}"
        )));
    }
    let step = (GRID_HI - GRID_LO) / (grid_size - 1) as f64;
    Ok((0..grid_size)
        .map(|i| {
            if i == grid_size - 1 {
                GRID_HI
            } else {
                GRID_LO + step * i as f64
            }
        })
        .collect())
}

/// Default curve parameters: ALPA `γ₋ = 4`,
/// ASL `m = 0.01, γ₋ = 0.01`, CE as ASL with `m = 0, γ₋ = 0`, Focal `γ = 0.5`.
pub fn default_curve_specs() -> Vec<(String, LossSpec)> {
    vec![
        ("ce".into(), LossSpec::asl(0.0, 0.0, 0.0)),
        ("focal".into(), LossSpec::focal(0.5)),
        ("asl".into(), LossSpec::asl(0.0, 0.01, 0.01)),
        ("alpa".into(), alpa_curve_spec(4.0)),
    ]
}

/// Spec whose negative focusing parameter drives the ALPA curve.
pub fn alpa_curve_spec(gamma_neg: f64) -> LossSpec {
    LossSpec::alpa_custom(crate::losses::AlpaParams {
        alpha: 1.0,
        beta: 1.0,
        gamma_pos: 0.0,
        gamma_neg,
        lambda: None,
    })
}

/// Negative-target gradient of one curve at probability `p`.
///
/// The ALPA curve uses the unweighted core `p^(γ₋+1)`; the others use the
/// full negative term of their spec.
fn curve_point(label: &str, spec: &LossSpec, p: Probability) -> Result<f64> {
    if label == "alpa" {
        if spec.kind != LossKind::Alpa {
            return Err(Error::InvalidParameter(
                "alpa curve needs an ALPA spec".into(),
            ));
        }
        let gamma_neg = spec
            .gamma_neg
            .ok_or_else(|| Error::IncompleteSpec("alpa curve needs gamma_neg".into()))?;
        Ok(alpa_neg_grad(p, gamma_neg))
    } else {
        Ok(spec.term(p, BinaryTarget::Negative, 1.0)?.dvalue_dlogit)
    }
}

/// Evaluates `dL⁻/dz` for each configured loss on a uniform grid.
///
/// `specs` must name each of `ce`, `focal`, `asl`, `alpa` exactly once.
pub fn emit_grad_curves(grid_size: usize, specs: &[(String, LossSpec)]) -> Result<GradCurveSet> {
    for (label, _) in specs {
        if !CURVE_LABELS.contains(&label.as_str()) {
            return Err(Error::UnknownLabel(label.clone()));
        }
    }
    let grid = probability_grid(grid_size)?;
    let mut curves = Vec::with_capacity(CURVE_LABELS.len());
    for label in CURVE_LABELS {
        let matching: Vec<_> = specs.iter().filter(|(l, _)| l == label).collect();
        let spec = match matching.as_slice() {
            [(_, spec)] => spec,
            [] => {
                return Err(Error::InvalidParameter(format!(
                    "no spec for curve {label}"
                )))
            }
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "curve {label} configured more than once"
                )))
            }
        };
        let gradients = grid
            .iter()
            .map(|&p| curve_point(label, spec, Probability::new(p)?))
            .collect::<Result<Vec<_>>>()?;
        curves.push(GradCurve {
            loss_label: label.to_string(),
            probabilities: grid.clone(),
            gradients,
        });
    }
    Ok(GradCurveSet { grid, curves })
}

impl GradCurveSet {
    pub fn curve(&self, label: &str) -> Option<&GradCurve> {
        self.curves.iter().find(|c| c.loss_label == label)
    }

    /// Writes the CSV with [`CURVE_HEADER`] and 9 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CURVE_HEADER}")?;
        for (i, &p) in self.grid.iter().enumerate() {
            let mut line = format_significant(p, 9);
            for curve in &self.curves {
                line.push(',');
                line.push_str(&format_significant(curve.gradients[i], 9));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Formats `x` with `digits` significant digits, `%g` style: fixed notation
/// for decimal exponents in `[-5, digits)`, scientific otherwise, trailing
/// zeros removed.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exponent) = sci.split_once('e').expect("scientific format");
    let exponent: i32 = exponent.parse().expect("exponent");
    if exponent < -5 || exponent >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exponent)
    } else {
        let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Worst relative error between analytic and finite-difference gradients of
/// one spec over `z_grid`, for both targets.
pub fn max_term_gradient_error(
    spec: &LossSpec,
    z_grid: &[f64],
    h: f64,
    class_weight: f64,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for &z in z_grid {
        let z = Logit::new(z)?;
        for y in [BinaryTarget::Positive, BinaryTarget::Negative] {
            let analytic = spec
                .term(clamped_sigmoid(z), y, class_weight)?
                .dvalue_dlogit;
            let numeric = fd_gradient(
                |zz| Ok(spec.term(clamped_sigmoid(zz), y, class_weight)?.value),
                z,
                h,
            )?;
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    Ok(worst)
}

/// Presets exercised by the gradient suites, labelled for reports.
pub fn loss_presets() -> Vec<(String, LossSpec)> {
    use crate::losses::AlpaVariant;
    vec![
        ("bce".into(), LossSpec::bce()),
        ("ce".into(), LossSpec::ce()),
        ("focal-0.5".into(), LossSpec::focal(0.5)),
        ("focal-2".into(), LossSpec::focal(2.0)),
        ("asl-4-m0".into(), LossSpec::asl(0.0, 4.0, 0.0)),
        ("asl-4-m0.01".into(), LossSpec::asl(0.0, 4.0, 0.01)),
        ("cb-0.99".into(), LossSpec::cb(0.99)),
        ("alpa-v1".into(), LossSpec::alpa(AlpaVariant::V1)),
        ("alpa-v2".into(), LossSpec::alpa(AlpaVariant::V2)),
        ("alpa-v3".into(), LossSpec::alpa(AlpaVariant::V3)),
    ]
}

/// `n` evenly spaced logits on `[lo, hi]`.
pub fn logit_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}
