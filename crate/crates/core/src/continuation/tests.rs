use nalgebra::{DMatrix, DVector};

use super::*;
use crate::codim2::SpecialKind;
use crate::models::{
    fold_equilibrium, kooi_system, normal_form_system, oracle_fold_curve, prey_invasion_d,
    washout_state, KooiParams, NormalFormId,
};

fn settings() -> ContinuationSettings {
    ContinuationSettings::default()
}

#[test]
fn settings_validation_rejects_bad_steps() {
    let mut s = settings();
    s.h0 = 1e-12;
    assert!(s.validate().is_err());
    let mut s = settings();
    s.direction = 0.0;
    assert!(s.validate().is_err());
    assert!(settings().validate().is_ok());
}

#[test]
fn newton_corrects_onto_the_cusp_fold_curve() {
    let sys = normal_form_system(&NormalFormId::Cusp).unwrap();
    let params = sys.params(&[], ("a", "b")).unwrap();
    let red = Reduction::new(1, &[]);
    let inst = crate::bordered::BorderVectors::new(
        DVector::from_vec(vec![1.0]),
        DVector::from_vec(vec![1.0]),
    );
    let ext = FoldExt::new(&sys, red, params, inst);
    // Exact fold point and its tangent.
    let z_star = DVector::from_vec(vec![1.0, 1.0, 2.0, -3.0]);
    let t = crate::bordered::curve_tangent(&ext.jacobian(&z_star), &DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]))
        .unwrap();
    let z_pred = &z_star + &t * 0.05;
    let (z, iters) = newton_correct(&ext, &z_pred, &t, &settings()).unwrap();
    assert!(iters <= 5, "corrector took {iters} iterations");
    assert!(ext.residual(&z).amax() <= 1e-10);
    let (a, b) = (z[2], z[3]);
    assert!(
        (a * a / 4.0 + b * b * b / 27.0).abs() <= 1e-9,
        "corrected point off the fold locus: a={a}, b={b}"
    );
    println!("corrected to (a, b) = ({a:.6}, {b:.6}) in {iters} iterations");
}

#[test]
fn equilibrium_curve_finds_both_cusp_folds() {
    let sys = normal_form_system(&NormalFormId::Cusp).unwrap();
    let params = sys.params(&[("a", -4.0), ("b", -3.0)], ("a", "b")).unwrap();
    let x0 = DVector::from_vec(vec![2.2]);
    let curve = continue_equilibrium(&sys, &x0, &params, (-4.5, 4.5), &settings()).unwrap();

    assert_eq!(curve.termination, Termination::RangeExit);
    for pt in &curve.points {
        assert!(sys.eval_rhs(&pt.x, &pt.params).amax() <= 1e-9);
    }
    let folds = curve.specials_of(SpecialKind::Fold);
    assert_eq!(folds.len(), 2, "specials: {:?}", curve.specials);
    let mut a_values: Vec<f64> = folds.iter().map(|s| s.params.lambda1()).collect();
    a_values.sort_by(f64::total_cmp);
    assert!((a_values[0] + 2.0).abs() <= 1e-6, "fold at a = {}", a_values[0]);
    assert!((a_values[1] - 2.0).abs() <= 1e-6, "fold at a = {}", a_values[1]);
    println!("folds at a = {:.8} and {:.8}", a_values[0], a_values[1]);
}

#[test]
fn fold_curve_on_cusp_matches_the_oracle_identity() {
    let sys = normal_form_system(&NormalFormId::Cusp).unwrap();
    let (x0, a0) = fold_equilibrium(&NormalFormId::Cusp, -3.0, false).unwrap();
    let params = sys.params(&[("a", a0), ("b", -3.0)], ("a", "b")).unwrap();
    let mut s = settings().with_direction(-1.0);
    s.window.lambda2 = Some((-4.2, 0.5));
    let curve = continue_fold_curve(&sys, &x0, &params, &s).unwrap();

    assert_eq!(curve.termination, Termination::RangeExit);
    assert!(curve.points.len() > 30);
    for pt in &curve.points {
        let (a, b) = (pt.params.lambda1(), pt.params.lambda2());
        assert!(
            (a * a / 4.0 + b * b * b / 27.0).abs() <= 1e-8,
            "off the fold locus at a={a}, b={b}"
        );
        // Fold instrumentation: singular full Jacobian, γ at zero.
        assert!(pt.testvals[&crate::codim2::TestId::Gamma].abs() <= 1e-8);
        let min_eig = pt.eigenvalues.iter().map(|e| e.norm()).fold(f64::INFINITY, f64::min);
        assert!(min_eig <= 1e-6);
    }

    let cusps = curve.specials_of(SpecialKind::Cusp);
    assert_eq!(cusps.len(), 1, "specials: {:?}", curve.specials);
    let cusp = cusps[0];
    assert!(cusp.params.lambda1().abs() <= 1e-7);
    assert!(cusp.params.lambda2().abs() <= 1e-7);
    let alpha = cusp.diagnostics.values[&crate::codim2::TestId::Alpha];
    assert!(
        (alpha.abs() / cusp.diagnostics.p_norm - 1.0).abs() <= 1e-6,
        "cusp |alpha| = {} with p_norm = {}",
        alpha.abs(),
        cusp.diagnostics.p_norm
    );
    println!(
        "cusp localized at (a, b) = ({:.3e}, {:.3e})",
        cusp.params.lambda1(),
        cusp.params.lambda2()
    );
}

#[test]
fn fold_curve_direction_reversal_covers_the_same_locus() {
    let sys = normal_form_system(&NormalFormId::Cusp).unwrap();
    let (x0, a0) = fold_equilibrium(&NormalFormId::Cusp, -3.0, false).unwrap();
    let params = sys.params(&[("a", a0), ("b", -3.0)], ("a", "b")).unwrap();
    for direction in [1.0, -1.0] {
        let mut s = settings().with_direction(direction);
        s.window.lambda2 = Some((-4.2, 0.5));
        let curve = continue_fold_curve(&sys, &x0, &params, &s).unwrap();
        for pt in &curve.points {
            let (a, b) = (pt.params.lambda1(), pt.params.lambda2());
            assert!((a * a / 4.0 + b * b * b / 27.0).abs() <= 1e-8);
        }
        // Resample at an exact b and compare against the closed form.
        let r = fold_point_at_lambda2(&sys, &curve, -1.2, &s).unwrap();
        let a_oracle = oracle_fold_curve(&NormalFormId::Cusp, -1.2, false).unwrap();
        assert!(
            (r.eval.params.lambda1().abs() - a_oracle).abs() <= 1e-9,
            "direction {direction}: resampled a = {}",
            r.eval.params.lambda1()
        );
        assert!((r.eval.params.lambda2() + 1.2).abs() <= 1e-12);
    }
}

#[test]
fn trivial_branch_flags_the_transcritical_point() {
    let sys = normal_form_system(&NormalFormId::SntcSingleZero).unwrap();
    let params = sys.params(&[("a", -0.5), ("b", 0.7)], ("a", "b")).unwrap();
    let x0 = DVector::from_vec(vec![0.0]);
    let curve = continue_equilibrium(&sys, &x0, &params, (-0.5, 0.5), &settings()).unwrap();

    assert_eq!(curve.pinned, vec![0]);
    for pt in &curve.points {
        assert_eq!(pt.x[0], 0.0, "pinned component must stay exactly zero");
    }
    let tcs = curve.specials_of(SpecialKind::Transcritical);
    assert_eq!(tcs.len(), 1, "specials: {:?}", curve.specials);
    assert!(tcs[0].params.lambda1().abs() <= 1e-8);
    println!("transcritical point at a = {:.3e}", tcs[0].params.lambda1());
}

#[test]
fn single_zero_fold_curve_classifies_the_interaction() {
    let nf = NormalFormId::SntcSingleZero;
    let sys = normal_form_system(&nf).unwrap();
    let (x0, a0) = fold_equilibrium(&nf, 0.4, false).unwrap();
    let params = sys.params(&[("a", a0), ("b", 0.4)], ("a", "b")).unwrap();
    let mut s = settings().with_direction(-1.0);
    s.window.lambda2 = Some((-0.6, 0.6));
    let curve = continue_fold_curve(&sys, &x0, &params, &s).unwrap();

    for pt in &curve.points {
        let (a, b) = (pt.params.lambda1(), pt.params.lambda2());
        assert!((a - b * b / 4.0).abs() <= 1e-8, "off the fold parabola at b={b}");
    }
    let hits = curve.specials_of(SpecialKind::SntcSingleZero);
    assert_eq!(hits.len(), 1, "specials: {:?}", curve.specials);
    let sp = hits[0];
    // The defining system is itself degenerate at the interaction point (two
    // fold branches cross and the residual factors), which limits the
    // corrector's resolution there to ~newton_tol^(1/3).
    assert!(sp.params.lambda1().abs() <= 1e-4, "a = {}", sp.params.lambda1());
    assert!(sp.params.lambda2().abs() <= 2e-4, "b = {}", sp.params.lambda2());
    // The fold-cusp test crosses zero there but the new test separates this
    // from a genuine cusp: alpha crosses as well.
    assert_eq!(sp.trigger, crate::codim2::TestId::BetaCusp);
    println!(
        "interaction at (a, b) = ({:.3e}, {:.3e})",
        sp.params.lambda1(),
        sp.params.lambda2()
    );
}

#[test]
fn localized_zero_is_independent_of_the_instrument_borders() {
    let nf = NormalFormId::SntcSingleZero;
    let sys = normal_form_system(&nf).unwrap();
    let (x0, a0) = fold_equilibrium(&nf, 0.4, false).unwrap();
    let params = sys.params(&[("a", a0), ("b", 0.4)], ("a", "b")).unwrap();
    let mut s = settings().with_direction(-1.0);
    s.window.lambda2 = Some((-0.6, 0.6));
    let curve = continue_fold_curve(&sys, &x0, &params, &s).unwrap();

    let seg = curve.segment_bracketing_lambda2(0.0).unwrap();
    let sp_default =
        localize_test_zero(&sys, &curve, seg, crate::codim2::TestId::BetaCusp, None, &s).unwrap();
    let alt = crate::bordered::BorderVectors::new(
        DVector::from_vec(vec![1.0]),
        DVector::from_vec(vec![1.0]),
    );
    let sp_alt =
        localize_test_zero(&sys, &curve, seg, crate::codim2::TestId::BetaCusp, Some(alt), &s)
            .unwrap();
    assert!(
        (sp_default.params.lambda2() - sp_alt.params.lambda2()).abs() <= 1e-8,
        "border choice moved the localized zero: {} vs {}",
        sp_default.params.lambda2(),
        sp_alt.params.lambda2()
    );
    assert_eq!(sp_default.kind, sp_alt.kind);
}

#[test]
fn sntc2_fold_line_classifies_the_double_zero() {
    let nf = NormalFormId::Sntc2 { mu1: 1.0, mu2: 1.0 };
    let sys = normal_form_system(&nf).unwrap();
    let (x0, a0) = fold_equilibrium(&nf, 0.3, false).unwrap();
    let params = sys.params(&[("a", a0), ("b", 0.3)], ("a", "b")).unwrap();
    let mut s = settings().with_direction(-1.0);
    s.window.lambda2 = Some((-0.5, 0.5));
    let curve = continue_fold_curve(&sys, &x0, &params, &s).unwrap();

    assert_eq!(curve.pinned, vec![1]);
    for pt in &curve.points {
        assert!(pt.params.lambda1().abs() <= 1e-10, "fold line sits at a = 0");
    }
    let hits = curve.specials_of(SpecialKind::SntcDoubleZero);
    assert_eq!(hits.len(), 1, "specials: {:?}", curve.specials);
    assert!(hits[0].params.lambda2().abs() <= 1e-7);
    // The companion cusp-test zero is consumed by the double zero.
    assert_eq!(curve.specials.len(), 1);
}

#[test]
fn bt_fold_curve_is_a_genuine_bogdanov_takens() {
    let nf = NormalFormId::BogdanovTakens;
    let sys = normal_form_system(&nf).unwrap();
    let (x0, l1) = fold_equilibrium(&nf, 0.8, false).unwrap();
    let params = sys
        .params(&[("lambda1", l1), ("lambda2", 0.8)], ("lambda1", "lambda2"))
        .unwrap();
    let mut s = settings().with_direction(-1.0);
    s.window.lambda2 = Some((-0.4, 1.0));
    let curve = continue_fold_curve(&sys, &x0, &params, &s).unwrap();

    for pt in &curve.points {
        let (l1, l2) = (pt.params.lambda1(), pt.params.lambda2());
        assert!((l1 - l2 * l2 / 4.0).abs() <= 1e-8);
    }
    let hits = curve.specials_of(SpecialKind::BogdanovTakens);
    assert_eq!(hits.len(), 1, "specials: {:?}", curve.specials);
    let sp = hits[0];
    assert!(sp.params.lambda1().abs() <= 1e-7);
    assert!(sp.params.lambda2().abs() <= 1e-7);
    let alpha = sp.diagnostics.values[&crate::codim2::TestId::Alpha];
    assert!(
        alpha.abs() >= 0.5 * sp.diagnostics.p_norm,
        "alpha = {alpha} should be order-one at a Bogdanov-Takens point"
    );
}

#[test]
fn hopf_curve_of_the_oscillator_stays_on_the_axis() {
    let sys = crate::system::SystemDef::new(
        "linear-oscillator",
        &["x", "y"],
        &["lam1", "lam2"],
        &[0.3, 0.0],
        Box::new(|x, p| DVector::from_vec(vec![p[0] * x[0] - x[1], x[0] + p[0] * x[1]])),
    )
    .with_jacobian(Box::new(|_x, p| {
        DMatrix::from_row_slice(2, 2, &[p[0], -1.0, 1.0, p[0]])
    }))
    .with_jac_param(Box::new(|x, _p, idx| match idx {
        0 => DVector::from_vec(vec![x[0], x[1]]),
        _ => DVector::from_vec(vec![0.0, 0.0]),
    }))
    .with_hess_action(Box::new(|_x, _p, _q1, _q2| DVector::zeros(2)));

    let params = sys.params(&[("lam1", 0.25)], ("lam1", "lam2")).unwrap();
    let x0 = DVector::zeros(2);
    let mut s = settings();
    s.window.lambda2 = Some((-1.0, 1.0));
    let curve = continue_hopf_curve(&sys, &x0, &params, &s).unwrap();

    assert_eq!(curve.termination, Termination::RangeExit);
    assert!(curve.points.len() > 8);
    for pt in &curve.points {
        assert!(pt.params.lambda1().abs() <= 1e-9, "Hopf locus is lam1 = 0");
        assert!(pt.x.amax() <= 1e-9);
        let omega = pt.testvals[&crate::codim2::TestId::Omega];
        assert!((omega - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn hopf_curve_of_the_bt_form_terminates_at_zero_frequency() {
    let nf = NormalFormId::BogdanovTakens;
    let sys = normal_form_system(&nf).unwrap();
    let params = sys
        .params(&[("lambda1", 0.0), ("lambda2", -1.0)], ("lambda1", "lambda2"))
        .unwrap();
    let x0 = DVector::zeros(2);
    let mut s = settings();
    s.window.lambda2 = Some((-1.5, 0.5));
    let curve = continue_hopf_curve(&sys, &x0, &params, &s).unwrap();

    assert_eq!(curve.termination, Termination::ZeroFrequency);
    let last = curve.points.last().unwrap();
    let omega = last.testvals[&crate::codim2::TestId::Omega];
    assert!(omega <= OMEGA_STOP.max(1e-3));
    assert!(last.params.lambda1().abs() <= 1e-6);
    assert!(last.params.lambda2().abs() <= 1e-3);
    println!(
        "Hopf curve ended at omega = {omega:.3e}, (l1, l2) = ({:.3e}, {:.3e})",
        last.params.lambda1(),
        last.params.lambda2()
    );
}

#[test]
fn fold_points_re_verify_from_stored_unknowns() {
    let sys = normal_form_system(&NormalFormId::Cusp).unwrap();
    let (x0, a0) = fold_equilibrium(&NormalFormId::Cusp, -3.0, false).unwrap();
    let params = sys.params(&[("a", a0), ("b", -3.0)], ("a", "b")).unwrap();
    let mut s = settings().with_direction(-1.0);
    s.window.lambda2 = Some((-4.2, 0.5));
    let curve = continue_fold_curve(&sys, &x0, &params, &s).unwrap();

    // Rebuild the defining system with fresh instruments: stored unknowns must
    // still satisfy it (the residual does not depend on the instrument state).
    let red = Reduction::new(sys.dim(), &curve.pinned);
    let pt0 = &curve.points[curve.points.len() / 2];
    let inst = crate::bordered::BorderVectors::from_min_singular_pair(
        &sys.eval_jacobian(&pt0.x, &pt0.params),
    )
    .unwrap();
    let ext = FoldExt::new(&sys, red, pt0.params.clone(), inst);
    for pt in &curve.points {
        assert!(
            ext.residual(&pt.z).amax() <= 1e-9,
            "stored point fails re-verification at b = {}",
            pt.params.lambda2()
        );
    }
}

#[test]
fn kooi_washout_branch_detects_prey_invasion() {
    let kp = KooiParams::default();
    let sys = kooi_system(kp);
    let params = sys.params(&[("D", 0.08)], ("D", "N_r")).unwrap();
    let x0 = washout_state(&kp);
    let curve = continue_equilibrium(&sys, &x0, &params, (0.05, 0.30), &settings()).unwrap();

    assert_eq!(curve.pinned, vec![1, 2]);
    for pt in &curve.points {
        assert_eq!(pt.x[1], 0.0);
        assert_eq!(pt.x[2], 0.0);
        assert!((pt.x[0] - kp.n_r).abs() <= 1e-9, "washout keeps N = N_r");
    }
    let tcs = curve.specials_of(SpecialKind::Transcritical);
    assert_eq!(tcs.len(), 1, "specials: {:?}", curve.specials);
    let d_star = prey_invasion_d(&kp);
    assert!(
        (tcs[0].params.lambda1() - d_star).abs() <= 1e-8,
        "prey invasion at D = {}, expected {d_star}",
        tcs[0].params.lambda1()
    );
    println!("prey invasion localized at D = {:.10}", tcs[0].params.lambda1());
}
