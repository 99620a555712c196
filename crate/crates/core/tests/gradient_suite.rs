use alpa_core::gradcheck::{
    alpa_curve_spec, alpa_neg_grad, emit_grad_curves, logit_grid, loss_presets,
    max_term_gradient_error, probability_grid, relative_error, DEFAULT_GRID_SIZE,
};
use alpa_core::losses::{alpa_neg_core, LossSpec};
use alpa_core::numeric::{BinaryTarget, Probability};

#[test]
fn every_preset_term_matches_central_differences() {
    let z = logit_grid(-5.0, 5.0, 101);
    for (label, spec) in loss_presets() {
        for weight in [1.0, 0.37] {
            let err = max_term_gradient_error(&spec, &z, 1e-5, weight).unwrap();
            assert!(err <= 1e-6, "{label} (weight {weight}): {err}");
        }
    }
}

#[test]
fn alpa_negative_identities_hold_on_grid() {
    for gamma in [0.0, 1.0, 2.0, 4.0, 2.5] {
        for p in probability_grid(DEFAULT_GRID_SIZE).unwrap() {
            let prob = Probability::new(p).unwrap();
            assert!((alpa_neg_core(prob, gamma) - p.powf(gamma + 1.0)).abs() <= 1e-12);
            let expected = alpa_neg_grad(prob, gamma);
            assert!((expected - (gamma + 1.0) * p.powf(gamma + 1.0) * (1.0 - p)).abs() <= 1e-12);
        }
    }
}

#[test]
fn alpa_negative_gradient_is_derivative_of_core() {
    use alpa_core::gradcheck::fd_gradient;
    use alpa_core::numeric::{clamped_sigmoid, Logit};
    for gamma in [0.0, 2.0, 4.0] {
        for z in logit_grid(-5.0, 5.0, 101) {
            let z = Logit::new(z).unwrap();
            let numeric =
                fd_gradient(|zz| Ok(alpa_neg_core(clamped_sigmoid(zz), gamma)), z, 1e-5).unwrap();
            let analytic = alpa_neg_grad(clamped_sigmoid(z), gamma);
            assert!(relative_error(analytic, numeric) <= 1e-6);
        }
    }
}

#[test]
fn alpa_curve_peaks_where_expected() {
    for (gamma, peak) in [(4.0, 5.0 / 6.0), (2.0, 0.75)] {
        let specs = vec![
            ("ce".to_string(), LossSpec::asl(0.0, 0.0, 0.0)),
            ("focal".to_string(), LossSpec::focal(0.5)),
            ("asl".to_string(), LossSpec::asl(0.0, 0.01, 0.01)),
            ("alpa".to_string(), alpa_curve_spec(gamma)),
        ];
        let set = emit_grad_curves(DEFAULT_GRID_SIZE, &specs).unwrap();
        let curve = set.curve("alpa").unwrap();
        let (arg, _) = curve
            .gradients
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        let step = set.grid[1] - set.grid[0];
        assert!((set.grid[arg] - peak).abs() <= step, "gamma {gamma}");
    }
}

#[test]
fn special_cases_reduce_to_simpler_losses() {
    for z in logit_grid(-8.0, 8.0, 161) {
        let p = alpa_core::numeric::clamped_sigmoid(alpa_core::numeric::Logit::new(z).unwrap());
        for y in [BinaryTarget::Positive, BinaryTarget::Negative] {
            let bce = LossSpec::bce().term(p, y, 1.0).unwrap();
            let focal0 = LossSpec::focal(0.0).term(p, y, 1.0).unwrap();
            assert!((bce.value - focal0.value).abs() <= 1e-12);
            assert!((bce.dvalue_dlogit - focal0.dvalue_dlogit).abs() <= 1e-12);
            for gamma in [0.5, 2.0, 4.0] {
                let focal = LossSpec::focal(gamma).term(p, y, 1.0).unwrap();
                let asl = LossSpec::asl(gamma, gamma, 0.0).term(p, y, 1.0).unwrap();
                assert!((focal.value - asl.value).abs() <= 1e-12);
                assert!(
                    relative_error(focal.dvalue_dlogit, asl.dvalue_dlogit) <= 1e-12
                        || (focal.dvalue_dlogit - asl.dvalue_dlogit).abs() <= 1e-12
                );
            }
        }
    }
}
