//! Predictor–corrector stepping, monitor scanning, and zero localization.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use crate::bordered::curve_tangent;
use crate::codim2::{
    classify_codim2, normalized_value, ClassifyInput, Diagnostics, SpecialKind, SpecialPoint,
    TestId, COLLOCATED_TOL, DIP_FACTOR,
};
use crate::error::{BifError, Result};

use super::extended::{ExtendedSystem, PointEval};
use super::{BranchPoint, ContinuationSettings, Curve, CurveKind, Termination};

/// Newton correction onto the curve within the hyperplane through `z_pred`
/// with normal `tangent` (the pseudo-arclength constraint). Returns the
/// corrected point and the number of iterations used.
pub fn newton_correct<E: ExtendedSystem>(
    ext: &E,
    z_pred: &DVector<f64>,
    tangent: &DVector<f64>,
    settings: &ContinuationSettings,
) -> Result<(DVector<f64>, usize)> {
    let u = ext.unknowns();
    let mut z = z_pred.clone();
    let mut norm = f64::INFINITY;
    for it in 0..=settings.newton_max_iter {
        let res = ext.residual(&z);
        let cons = tangent.dot(&(&z - z_pred));
        norm = res.amax().max(cons.abs());
        if norm <= settings.newton_tol {
            return Ok((z, it));
        }
        if it == settings.newton_max_iter {
            break;
        }
        let mut jac = DMatrix::zeros(u, u);
        jac.view_mut((0, 0), (u - 1, u)).copy_from(&ext.jacobian(&z));
        jac.row_mut(u - 1).copy_from(&tangent.transpose());
        let mut rhs = DVector::zeros(u);
        rhs.rows_mut(0, u - 1).copy_from(&res);
        rhs[u - 1] = cons;
        let dz = jac.lu().solve(&rhs).ok_or(BifError::NoConvergence {
            max_iter: it,
            residual: norm,
        })?;
        if !dz.iter().all(|v| v.is_finite()) || dz.amax() > 1e8 {
            return Err(BifError::NoConvergence { max_iter: it, residual: norm });
        }
        z -= dz;
    }
    Err(BifError::NoConvergence { max_iter: settings.newton_max_iter, residual: norm })
}

/// Newton solve of the extended system with one unknown held fixed — used to
/// polish seeds and to resample a curve at an exact parameter value.
pub fn newton_fixed<E: ExtendedSystem>(
    ext: &E,
    z_guess: &DVector<f64>,
    fixed_slot: usize,
    fixed_value: f64,
    settings: &ContinuationSettings,
) -> Result<DVector<f64>> {
    let u = ext.unknowns();
    let mut z = z_guess.clone();
    z[fixed_slot] = fixed_value;
    let mut norm = f64::INFINITY;
    // Seeds can start further from the curve than predictor points, so allow
    // a few more iterations than the in-step corrector.
    let max_iter = settings.newton_max_iter * 3;
    for it in 0..=max_iter {
        let res = ext.residual(&z);
        norm = res.amax().max((z[fixed_slot] - fixed_value).abs());
        if norm <= settings.newton_tol {
            return Ok(z);
        }
        if it == max_iter {
            break;
        }
        let mut jac = DMatrix::zeros(u, u);
        jac.view_mut((0, 0), (u - 1, u)).copy_from(&ext.jacobian(&z));
        jac[(u - 1, fixed_slot)] = 1.0;
        let mut rhs = DVector::zeros(u);
        rhs.rows_mut(0, u - 1).copy_from(&res);
        rhs[u - 1] = z[fixed_slot] - fixed_value;
        let dz = jac
            .lu()
            .solve(&rhs)
            .ok_or(BifError::NoConvergence { max_iter: it, residual: norm })?;
        if !dz.iter().all(|v| v.is_finite()) || dz.amax() > 1e8 {
            return Err(BifError::NoConvergence { max_iter: it, residual: norm });
        }
        z -= dz;
    }
    Err(BifError::NoConvergence { max_iter, residual: norm })
}

fn branch_point(z: &DVector<f64>, tangent: &DVector<f64>, eval: &PointEval) -> BranchPoint {
    BranchPoint {
        z: z.clone(),
        tangent: tangent.clone(),
        x: eval.x.clone(),
        params: eval.params.clone(),
        testvals: eval.testvals.clone(),
        eigenvalues: eval.eigenvalues.clone(),
        p_norm: eval.p_norm,
        q_norm: eval.q_norm,
        stable: eval.eigenvalues.iter().all(|e| e.re < 0.0),
        boundary: eval.boundary,
    }
}

struct StepOutcome {
    z: DVector<f64>,
    tangent: DVector<f64>,
    eval: PointEval,
    iters: usize,
}

fn step_once<E: ExtendedSystem>(
    ext: &E,
    z: &DVector<f64>,
    tangent: &DVector<f64>,
    h: f64,
    settings: &ContinuationSettings,
) -> Result<StepOutcome> {
    let z_pred = z + tangent * h;
    let (z_new, iters) = newton_correct(ext, &z_pred, tangent, settings)?;
    if ext.reject_point(&z_new) {
        return Err(BifError::NoConvergence { max_iter: iters, residual: f64::NAN });
    }
    let t_new = curve_tangent(&ext.jacobian(&z_new), tangent)?;
    let eval = ext.evaluate(&z_new, &t_new)?;
    Ok(StepOutcome { z: z_new, tangent: t_new, eval, iters })
}

/// Main pseudo-arclength driver. `z0` must already satisfy the extended
/// system; `t0` is its unit tangent with the desired orientation.
pub fn continue_from<E: ExtendedSystem>(
    ext: &mut E,
    z0: &DVector<f64>,
    t0: &DVector<f64>,
    settings: &ContinuationSettings,
) -> Result<Curve> {
    settings.validate()?;
    let mut curve = Curve {
        kind: ext.curve_kind(),
        points: Vec::new(),
        specials: Vec::new(),
        termination: Termination::MaxPoints,
        accepted: 0,
        rejected: 0,
        hops: 0,
        warnings: Vec::new(),
        pinned: ext.pinned().to_vec(),
        tc_component: None,
    };

    let mut z = z0.clone();
    let mut t = t0.clone();
    let eval0 = ext.evaluate(&z, &t)?;
    curve.points.push(branch_point(&z, &t, &eval0));
    if let Some(term) = ext.hard_stop(&eval0) {
        curve.termination = term;
        endpoint_candidates(ext, &mut curve);
        return Ok(curve);
    }
    if let Some(term) = window_violation(settings, &eval0) {
        curve.termination = term;
        endpoint_candidates(ext, &mut curve);
        return Ok(curve);
    }
    ext.refresh(&z);

    let mut h = settings.h0;
    let mut accepted_since_hop = 0usize;

    loop {
        if curve.points.len() >= settings.max_points {
            curve.termination = Termination::MaxPoints;
            break;
        }
        match step_once(&*ext, &z, &t, h, settings) {
            Err(_) => {
                curve.rejected += 1;
                let h_next = h * settings.shrink_factor;
                if h_next < settings.h_min {
                    // Hop heuristic: branch crossings make the corrector fail
                    // arbitrarily close to the crossing point, while a full
                    // step clears the degenerate zone entirely.
                    let tried = if accepted_since_hop >= 1 {
                        step_once(&*ext, &z, &t, settings.h0, settings).ok()
                    } else {
                        None
                    };
                    match tried {
                        Some(out) => {
                            curve.hops += 1;
                            accepted_since_hop = 0;
                            h = settings.h0;
                            if accept_point(ext, &mut curve, &mut z, &mut t, out, settings)? {
                                break;
                            }
                            continue;
                        }
                        None => {
                            curve.termination = Termination::StepFailure;
                            break;
                        }
                    }
                }
                h = h_next;
            }
            Ok(out) => {
                let iters = out.iters;
                accepted_since_hop += 1;
                if accept_point(ext, &mut curve, &mut z, &mut t, out, settings)? {
                    break;
                }
                if iters <= settings.grow_iters {
                    h = (h * settings.grow_factor).min(settings.h_max);
                }
            }
        }
    }

    endpoint_candidates(ext, &mut curve);
    Ok(curve)
}

/// Push an accepted point (after monitor processing); true means terminate.
fn accept_point<E: ExtendedSystem>(
    ext: &mut E,
    curve: &mut Curve,
    z: &mut DVector<f64>,
    t: &mut DVector<f64>,
    out: StepOutcome,
    settings: &ContinuationSettings,
) -> Result<bool> {
    // Refuse to march across a non-smooth locus of the vector field: the
    // defining equations are not differentiable there.
    if let Some((comp, loc)) = ext.kink(&out.eval.params) {
        if let Some(prev) = curve.points.last() {
            if (prev.x[comp] - loc) * (out.eval.x[comp] - loc) < 0.0 {
                curve.termination = Termination::KinkStraddle { component: comp, location: loc };
                return Ok(true);
            }
        }
    }
    // Past an invariant plane the fold defining system is degenerate (the
    // plane carries a double branch of it), so a crossing segment is this
    // curve's last: flag it before the points vector grows.
    let crossed_plane = ext.curve_kind() == CurveKind::Fold
        && curve.points.last().is_some_and(|prev| {
            ext.plane_components()
                .iter()
                .any(|&i| prev.x[i] * out.eval.x[i] < 0.0)
        });
    process_monitors(&*ext, curve, &out, settings);
    curve.accepted += 1;
    curve.points.push(branch_point(&out.z, &out.tangent, &out.eval));
    let stop = ext.hard_stop(&out.eval);
    ext.refresh(&out.z);
    *z = out.z;
    *t = out.tangent;
    if let Some(term) = stop {
        curve.termination = term;
        return Ok(true);
    }
    if crossed_plane {
        curve.termination = Termination::Boundary;
        return Ok(true);
    }
    if let Some(term) = window_violation(settings, &out.eval) {
        curve.termination = term;
        return Ok(true);
    }
    Ok(false)
}

fn window_violation(settings: &ContinuationSettings, eval: &PointEval) -> Option<Termination> {
    let w = &settings.window;
    if let Some((lo, hi)) = w.lambda1 {
        let v = eval.params.lambda1();
        if v < lo || v > hi {
            return Some(Termination::RangeExit);
        }
    }
    if let Some((lo, hi)) = w.lambda2 {
        let v = eval.params.lambda2();
        if v < lo || v > hi {
            return Some(Termination::RangeExit);
        }
    }
    if let Some(m) = w.state_abs_max {
        if eval.x.amax() > m {
            return Some(Termination::Boundary);
        }
    }
    None
}

/// Triggers in localization priority order: higher-degeneracy tests first so
/// a double zero consumes the companion crossings it causes.
fn trigger_priority(t: TestId) -> u8 {
    match t {
        TestId::BetaBt => 0,
        TestId::BetaCusp => 1,
        TestId::Gamma => 2,
        TestId::Transversal(_) => 3,
        TestId::Hopf => 4,
        _ => 5,
    }
}

fn process_monitors<E: ExtendedSystem>(
    ext: &E,
    curve: &mut Curve,
    out: &StepOutcome,
    settings: &ContinuationSettings,
) {
    let Some(prev) = curve.points.last() else { return };
    let mut crossing: Vec<TestId> = ext
        .monitored()
        .into_iter()
        .filter(|tid| {
            match (prev.testvals.get(tid), out.eval.testvals.get(tid)) {
                (Some(a), Some(b)) => a.is_finite() && b.is_finite() && a * b < 0.0,
                _ => false,
            }
        })
        .collect();
    if crossing.is_empty() {
        return;
    }
    crossing.sort_by_key(|t| trigger_priority(*t));

    let z_a = prev.z.clone();
    let mut consumed: BTreeSet<TestId> = BTreeSet::new();
    for tid in crossing {
        if consumed.contains(&tid) {
            continue;
        }
        match localize_in_segment(ext, &z_a, &out.z, tid, settings) {
            Ok(loc) => {
                if let Some(sp) = build_special(ext, &loc, tid) {
                    // A codimension-2 point consumes every companion test
                    // that is zero there.
                    if matches!(ext.curve_kind(), CurveKind::Fold | CurveKind::Transcritical) {
                        for other in [TestId::BetaBt, TestId::BetaCusp] {
                            if other != tid && special_test_is_zero(&sp, other) {
                                consumed.insert(other);
                            }
                        }
                    }
                    // An interaction point sits on the invariant plane, so the
                    // plane-distance crossing is the same event.
                    if matches!(
                        sp.kind,
                        SpecialKind::SntcSingleZero | SpecialKind::SntcDoubleZero
                    ) {
                        for other in ext.monitored() {
                            if matches!(other, TestId::Transversal(_)) && other != tid {
                                consumed.insert(other);
                            }
                        }
                    }
                    curve.specials.push(sp);
                } else {
                    curve.warnings.push(format!(
                        "{} crossing between points {} and {} did not classify",
                        tid.label(),
                        curve.points.len() - 1,
                        curve.points.len()
                    ));
                }
            }
            Err(e) => curve.warnings.push(format!(
                "failed to localize {} crossing: {e}",
                tid.label()
            )),
        }
    }
}

fn special_test_is_zero(sp: &SpecialPoint, tid: TestId) -> bool {
    let Some(raw) = sp.diagnostics.values.get(&tid) else { return false };
    normalized_value(tid, *raw, sp.diagnostics.p_norm, sp.diagnostics.q_norm).abs()
        <= COLLOCATED_TOL
}

pub(super) struct Localized {
    pub eval: PointEval,
    /// Bracket-endpoint evaluations with the same frozen instrument state as
    /// the localized point itself, so all three are mutually comparable.
    pub ea: PointEval,
    pub eb: PointEval,
}

/// Bisection/secant localization of a sign change of `tid` between two curve
/// points. Probes are corrected back onto the curve in the hyperplane normal
/// to the segment direction; instrument state is not refreshed, so all probe
/// values are mutually comparable.
pub(super) fn localize_in_segment<E: ExtendedSystem>(
    ext: &E,
    z_a: &DVector<f64>,
    z_b: &DVector<f64>,
    tid: TestId,
    settings: &ContinuationSettings,
) -> Result<Localized> {
    let seg = z_b - z_a;
    let len = seg.norm();
    if len < 1e-15 {
        return Err(BifError::Localization {
            test: tid.label().into(),
            reason: "degenerate segment".into(),
        });
    }
    let t_seg = &seg / len;

    // Probes correct tighter than the marching corrector: near a defining-
    // system branch crossing the convergence ball has radius ~√(tol), and the
    // companion tests must be measured inside it.
    let probe_settings = {
        let mut s = settings.clone();
        s.newton_tol = settings.newton_tol.min(1e-13);
        s.newton_max_iter = 2 * settings.newton_max_iter;
        s
    };
    let probe = |s: f64| -> Result<PointEval> {
        let z_guess = z_a + &seg * s;
        let (z_c, _) = newton_correct(ext, &z_guess, &t_seg, &probe_settings)?;
        // Test functions (alpha in particular) are defined against the local
        // curve tangent, not the segment secant. Inside a degenerate stretch
        // (branch crossing, invariant plane) no unique tangent exists; the
        // secant is the honest stand-in there.
        let t_loc = curve_tangent(&ext.jacobian(&z_c), &t_seg)
            .unwrap_or_else(|_| t_seg.clone());
        ext.evaluate(&z_c, &t_loc)
    };
    let value = |eval: &PointEval| -> Result<f64> {
        eval.testvals.get(&tid).copied().ok_or_else(|| BifError::Localization {
            test: tid.label().into(),
            reason: "test not recorded on this curve".into(),
        })
    };
    let norm_value = |eval: &PointEval| -> Result<f64> {
        Ok(normalized_value(tid, value(eval)?, eval.p_norm, eval.q_norm))
    };

    let eval_a = probe(0.0)?;
    let eval_b = probe(1.0)?;
    let va = value(&eval_a)?;
    let vb = value(&eval_b)?;
    if !(va * vb < 0.0) {
        return Err(BifError::Localization {
            test: tid.label().into(),
            reason: format!("no sign change across segment ({va:.3e}, {vb:.3e})"),
        });
    }

    let (mut lo, mut f_lo) = (0.0_f64, va);
    let (mut hi, mut f_hi) = (1.0_f64, vb);
    let mut best: Option<(f64, PointEval)> = None;
    // Alternate secant and plain bisection so the bracket provably shrinks
    // even when secant steps stall on one side.
    const RETRY_FRACS: [f64; 5] = [0.5, 0.25, 0.75, 0.375, 0.625];
    let mut fail_streak = 0usize;
    for iter in 0..90 {
        let mut s = if fail_streak > 0 {
            // Failed probes (e.g. next to a branch crossing) leave the
            // bracket untouched; retry elsewhere inside it before giving up.
            lo + RETRY_FRACS[fail_streak - 1] * (hi - lo)
        } else if iter % 2 == 0 {
            (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        } else {
            0.5 * (lo + hi)
        };
        let margin = 0.01 * (hi - lo);
        if !(s > lo + margin && s < hi - margin) {
            s = 0.5 * (lo + hi);
        }
        match probe(s) {
            Ok(eval) => {
                fail_streak = 0;
                let v = value(&eval)?;
                let vn = norm_value(&eval)?;
                let better = match &best {
                    Some((bv, _)) => vn.abs() < bv.abs(),
                    None => true,
                };
                if better {
                    best = Some((vn, eval));
                }
                if vn.abs() <= 1e-10 {
                    break;
                }
                if v * f_lo < 0.0 {
                    hi = s;
                    f_hi = v;
                } else {
                    lo = s;
                    f_lo = v;
                }
            }
            Err(_) => {
                fail_streak += 1;
                if fail_streak > RETRY_FRACS.len() {
                    break;
                }
                continue;
            }
        }
        if (hi - lo) * len <= 1e-12 {
            break;
        }
    }

    let (_, eval) = best.ok_or_else(|| BifError::Localization {
        test: tid.label().into(),
        reason: "no probe converged inside the bracket".into(),
    })?;
    Ok(Localized { eval, ea: eval_a, eb: eval_b })
}

/// Turn a localized zero into a classified special point. Returns None when
/// the values at the point do not support any classification.
pub(super) fn build_special<E: ExtendedSystem>(
    ext: &E,
    loc: &Localized,
    trigger: TestId,
) -> Option<SpecialPoint> {
    // At a plane crossing the defining system is degenerate, which caps the
    // localizer's resolution well above machine precision; a genuinely
    // nonzero second eigenvalue still clears this comfortably.
    const PLANE_DOUBLE_TOL: f64 = 1e-3;
    let eval = &loc.eval;
    let kind = match ext.curve_kind() {
        CurveKind::Equilibrium => match trigger {
            TestId::Gamma => {
                // The localized point can stall a hair off an invariant plane;
                // the bracket straddling the plane is the reliable witness
                // that the singular direction is an exchange, not a fold.
                let straddles = ext
                    .plane_components()
                    .iter()
                    .any(|&i| loc.ea.x[i] * loc.eb.x[i] < 0.0);
                if straddles || ext.boundary_proximity(&eval.x).is_some() {
                    SpecialKind::Transcritical
                } else {
                    SpecialKind::Fold
                }
            }
            TestId::Transversal(_) => SpecialKind::Transcritical,
            TestId::Hopf => SpecialKind::Hopf,
            _ => return None,
        },
        CurveKind::Fold | CurveKind::Transcritical => {
            let on_tc = ext.curve_kind() == CurveKind::Transcritical;
            if on_tc && trigger == TestId::Hopf {
                SpecialKind::TcHopfCandidate
            } else if !on_tc && matches!(trigger, TestId::Transversal(_)) {
                // A fold curve piercing an invariant plane meets the
                // transcritical exchange living on that plane. The remaining
                // transversal eigenvalue (measured by β_bt) separates the
                // single zero from the double.
                let bb = eval.testvals.get(&TestId::BetaBt).copied().unwrap_or(f64::NAN);
                if normalized_value(TestId::BetaBt, bb, eval.p_norm, eval.q_norm).abs()
                    <= PLANE_DOUBLE_TOL
                {
                    SpecialKind::SntcDoubleZero
                } else {
                    SpecialKind::SntcSingleZero
                }
            } else {
                let tests = [TestId::Alpha, TestId::BetaCusp, TestId::BetaBt];
                let mut crossed = BTreeSet::new();
                let mut dips = BTreeSet::new();
                for t in tests {
                    let (Some(&a), Some(&b)) = (loc.ea.testvals.get(&t), loc.eb.testvals.get(&t))
                    else {
                        continue;
                    };
                    if a.is_finite() && b.is_finite() && a * b < 0.0 {
                        crossed.insert(t);
                    }
                    let na = normalized_value(t, a, loc.ea.p_norm, loc.ea.q_norm).abs();
                    let nb = normalized_value(t, b, loc.eb.p_norm, loc.eb.q_norm).abs();
                    let np = eval
                        .testvals
                        .get(&t)
                        .map(|v| normalized_value(t, *v, eval.p_norm, eval.q_norm).abs())
                        .unwrap_or(f64::NAN);
                    if np <= DIP_FACTOR * na.min(nb) {
                        dips.insert(t);
                    }
                }
                let input = ClassifyInput {
                    alpha: eval.testvals.get(&TestId::Alpha).copied().unwrap_or(f64::NAN),
                    beta_cusp: eval.testvals.get(&TestId::BetaCusp).copied().unwrap_or(f64::NAN),
                    beta_bt: eval.testvals.get(&TestId::BetaBt).copied().unwrap_or(f64::NAN),
                    p_norm: eval.p_norm,
                    q_norm: eval.q_norm,
                    crossed,
                    dips,
                    endpoint: false,
                    on_tc_curve: on_tc,
                };
                classify_codim2(&input)?
            }
        }
        CurveKind::Hopf => return None,
    };

    let mut brackets = BTreeMap::new();
    for (t, a) in &loc.ea.testvals {
        if let Some(b) = loc.eb.testvals.get(t) {
            brackets.insert(*t, (*a, *b));
        }
    }
    Some(SpecialPoint {
        kind,
        x: eval.x.clone(),
        params: eval.params.clone(),
        trigger,
        diagnostics: Diagnostics {
            values: eval.testvals.clone(),
            brackets,
            eigenvalues: eval.eigenvalues.clone(),
            p_norm: eval.p_norm,
            q_norm: eval.q_norm,
            endpoint_magnitude_only: false,
            candidate: ext.curve_kind() == CurveKind::Transcritical,
        },
    })
}

/// At curve endpoints a bracketing sign change is unavailable; fall back to
/// the magnitude criterion and flag the result.
fn endpoint_candidates<E: ExtendedSystem>(ext: &E, curve: &mut Curve) {
    if !matches!(ext.curve_kind(), CurveKind::Fold | CurveKind::Transcritical) {
        return;
    }
    let on_tc = ext.curve_kind() == CurveKind::Transcritical;
    let endpoints: Vec<BranchPoint> = match curve.points.len() {
        0 => return,
        1 => vec![curve.points[0].clone()],
        _ => vec![curve.points[0].clone(), curve.points.last().unwrap().clone()],
    };
    for pt in endpoints {
        let input = ClassifyInput {
            alpha: pt.testvals.get(&TestId::Alpha).copied().unwrap_or(f64::NAN),
            beta_cusp: pt.testvals.get(&TestId::BetaCusp).copied().unwrap_or(f64::NAN),
            beta_bt: pt.testvals.get(&TestId::BetaBt).copied().unwrap_or(f64::NAN),
            p_norm: pt.p_norm,
            q_norm: pt.q_norm,
            crossed: BTreeSet::new(),
            dips: BTreeSet::new(),
            endpoint: true,
            on_tc_curve: on_tc,
        };
        let Some(kind) = classify_codim2(&input) else { continue };
        let duplicate = curve.specials.iter().any(|sp| {
            (sp.params.lambda1() - pt.params.lambda1()).abs()
                <= 1e-6 * (1.0 + pt.params.lambda1().abs())
                && (sp.params.lambda2() - pt.params.lambda2()).abs()
                    <= 1e-6 * (1.0 + pt.params.lambda2().abs())
        });
        if duplicate {
            continue;
        }
        curve.specials.push(SpecialPoint {
            kind,
            x: pt.x.clone(),
            params: pt.params.clone(),
            trigger: TestId::BetaBt,
            diagnostics: Diagnostics {
                values: pt.testvals.clone(),
                brackets: BTreeMap::new(),
                eigenvalues: pt.eigenvalues.clone(),
                p_norm: pt.p_norm,
                q_norm: pt.q_norm,
                endpoint_magnitude_only: true,
                candidate: on_tc,
            },
        });
    }
}
