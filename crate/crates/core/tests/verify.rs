use stochastic_vortices::kernels::KernelConfig;
use stochastic_vortices::random::LawParams;
use stochastic_vortices::stats::MeanEstimate;
use stochastic_vortices::verify::{
    isometry_constants, run_named, test_double_integral_isometry, test_marginal_law, test_position_uniformity,
    test_weak_form_residual, Criterion, DoubleIntegralIsometry, EstimatorReport, MarginalLaw, PositionUniformity,
    ReferenceKind, VerifyContext, WeakFormResidual, TEST_NAMES,
};

fn ctx(seed: u64) -> VerifyContext {
    VerifyContext::new(KernelConfig::default(), 16, seed).unwrap()
}

fn est(mean: f64, stderr: f64) -> MeanEstimate {
    MeanEstimate { mean, stderr, n: 100 }
}

fn assert_all_pass(reports: &[EstimatorReport]) {
    assert!(!reports.is_empty());
    for r in reports {
        assert!(r.pass, "{}: {} ± {} vs {} ({})", r.name, r.point_estimate, r.stderr, r.reference_value, r.details);
    }
}

#[test]
fn criterion_logic() {
    let band = Criterion::SigmaBand { budget: 0.01 };
    let r = |e, c| EstimatorReport::new("x", e, 1.0, ReferenceKind::ClosedForm, c, "");
    assert!(r(est(1.3, 0.1), band).pass);
    assert!(r(est(1.305, 0.1), band).pass);
    assert!(!r(est(1.315, 0.1), band).pass);
    assert!(r(est(0.695, 0.1), band).pass);
    assert!(r(est(0.9, 0.0), Criterion::Interval { lo: 0.8, hi: 1.2 }).pass);
    assert!(!r(est(1.21, 0.0), Criterion::Interval { lo: 0.8, hi: 1.2 }).pass);
    assert!(r(est(0.2, 0.0), Criterion::MinPValue { min: 0.001 }).pass);
    assert!(!r(est(0.001, 0.0), Criterion::MinPValue { min: 0.001 }).pass);
    assert!(r(est(3.0, 0.0), Criterion::Maximum { max: 3.0 }).pass);
    assert!(!r(est(f64::INFINITY, 0.0), Criterion::Finite).pass);
    assert!(!r(est(f64::NAN, 0.0), Criterion::Maximum { max: 1.0 }).pass);

    let json = serde_json::to_string(&r(est(1.0, 0.1), band)).unwrap();
    assert!(json.contains("\"kind\":\"sigma-band\""));
    assert!(json.contains("\"reference_kind\":\"closed-form\""));
    assert!(!json.contains("alternatives"));
}

#[test]
fn marginal_at_time_zero_is_a_sampler_self_test() {
    let plan = MarginalLaw {
        t: 0.0,
        n_samples: 3000,
        ..MarginalLaw::default()
    };
    let reports = test_marginal_law(&ctx(1), &plan);
    assert_eq!(reports.len(), 8 * 3);
    assert!(reports.iter().all(|r| r.reference_kind == ReferenceKind::QuadratureOracle));
    assert_all_pass(&reports);
}

#[test]
fn marginal_with_strong_damping() {
    let plan = MarginalLaw {
        params: LawParams::new(10.0, 50.0, 0.0, 1).unwrap(),
        t: 1.0,
        alphas: vec![1.0, 4.0],
        n_samples: 400,
    };
    assert_all_pass(&test_marginal_law(&ctx(2), &plan));
}

#[test]
fn isometry_vanishes_with_the_age_range() {
    let plan = DoubleIntegralIsometry {
        params: LawParams::new(5.0, 1.0, 1e-4, 1).unwrap(),
        k0: (1, 0),
        n_samples: 2000,
    };
    let (campbell, printed) = isometry_constants(&plan.params, 0.5);
    assert!(campbell < 1e-6 && printed < 1e-6);
    let reports = test_double_integral_isometry(&ctx(3), &plan);
    assert!(reports[0].point_estimate.abs() < 1e-3);
    assert_eq!(reports[0].alternatives.len(), 2);
    assert_eq!(isometry_constants(&plan.params.with_m(0.0), 0.5), (0.0, 0.0));
}

#[test]
fn two_vortex_positions_stay_uniform() {
    let plan = PositionUniformity {
        n_vortices: 2,
        t: 1.0,
        n_samples: 400,
    };
    let reports = test_position_uniformity(&ctx(4), &plan);
    assert_all_pass(&reports);
}

#[test]
fn weak_form_holds_on_a_few_paths() {
    let plan = WeakFormResidual {
        n_paths: 3,
        ..WeakFormResidual::default()
    };
    assert_all_pass(&test_weak_form_residual(&ctx(5), &plan));
    let empty = WeakFormResidual {
        params: LawParams::new(1e-9, 1.0, 0.0, 1).unwrap(),
        n_paths: 1,
        ..WeakFormResidual::default()
    };
    for r in test_weak_form_residual(&ctx(5), &empty) {
        assert_eq!(r.point_estimate, 0.0, "{}", r.name);
    }
}

#[test]
fn reports_are_deterministic() {
    let mut c = ctx(6);
    c.sample_scale = 0.05;
    for name in ["quadratic-variation", "double-integral-isometry", "kernel-consistency"] {
        let a = serde_json::to_string(&run_named(&c, name).unwrap()).unwrap();
        let b = serde_json::to_string(&run_named(&c, name).unwrap()).unwrap();
        assert_eq!(a, b, "{name}");
    }
    assert!(run_named(&c, "no-such-check").is_none());
    assert_eq!(TEST_NAMES.len(), 11);
}
