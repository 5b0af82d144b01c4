//! Pseudo-arclength continuation of equilibrium, fold, transcritical and
//! Hopf curves, with test-function monitoring and zero localization.

mod driver;
pub mod extended;

use std::collections::BTreeMap;

use nalgebra::{Complex, DMatrix, DVector};

use crate::bordered::{curve_tangent, BorderVectors};
use crate::codim2::{SpecialPoint, TestId};
use crate::error::{BifError, Result};
use crate::system::{ParamPoint, SystemDef};

pub use driver::{continue_from, newton_correct, newton_fixed};
pub use extended::{
    EquilibriumExt, ExtendedSystem, FoldExt, HopfExt, PointEval, Reduction, TcExt, OMEGA_STOP,
};

/// Parameter/state box outside which a curve is terminated.
#[derive(Clone, Debug, Default)]
pub struct Window {
    pub lambda1: Option<(f64, f64)>,
    pub lambda2: Option<(f64, f64)>,
    pub state_abs_max: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ContinuationSettings {
    /// Initial arclength step.
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub max_points: usize,
    /// Step growth when the corrector converges quickly, shrink on failure.
    pub grow_factor: f64,
    pub shrink_factor: f64,
    /// Corrector iteration count at or below which the step grows.
    pub grow_iters: usize,
    /// Initial orientation along the first active parameter (±1).
    pub direction: f64,
    pub window: Window,
}

impl Default for ContinuationSettings {
    fn default() -> Self {
        ContinuationSettings {
            h0: 0.01,
            h_min: 1e-10,
            h_max: 0.2,
            newton_tol: 1e-10,
            newton_max_iter: 10,
            max_points: 4000,
            grow_factor: 1.3,
            shrink_factor: 0.5,
            grow_iters: 3,
            direction: 1.0,
            window: Window::default(),
        }
    }
}

impl ContinuationSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_min > 0.0 && self.h_min <= self.h0 && self.h0 <= self.h_max) {
            return Err(BifError::Config(format!(
                "step sizes must satisfy 0 < h_min <= h0 <= h_max, got {} / {} / {}",
                self.h_min, self.h0, self.h_max
            )));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(BifError::Config("newton settings must be positive".into()));
        }
        if self.direction == 0.0 || !self.direction.is_finite() {
            return Err(BifError::Config("direction must be a nonzero sign".into()));
        }
        Ok(())
    }

    /// Convenience: same settings with the given initial direction.
    pub fn with_direction(mut self, direction: f64) -> Self {
        self.direction = direction;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveKind {
    Equilibrium,
    Fold,
    Transcritical,
    Hopf,
}

impl CurveKind {
    pub fn label(&self) -> &'static str {
        match self {
            CurveKind::Equilibrium => "equilibrium",
            CurveKind::Fold => "fold",
            CurveKind::Transcritical => "transcritical",
            CurveKind::Hopf => "hopf",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    /// Left the parameter window.
    RangeExit,
    /// Left the state-space box.
    Boundary,
    MaxPoints,
    /// Corrector failed below the minimum step.
    StepFailure,
    /// Hopf frequency collapsed (double-zero endpoint).
    ZeroFrequency,
    /// The curve ran into the non-smooth maintenance locus.
    KinkStraddle { component: usize, location: f64 },
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::RangeExit => "range-exit",
            Termination::Boundary => "boundary",
            Termination::MaxPoints => "max-points",
            Termination::StepFailure => "step-failure",
            Termination::ZeroFrequency => "zero-frequency",
            Termination::KinkStraddle { .. } => "kink-straddle",
        }
    }
}

/// One accepted point on a continuation curve.
#[derive(Clone, Debug)]
pub struct BranchPoint {
    /// Raw extended-system unknowns (layout depends on the curve kind).
    pub z: DVector<f64>,
    /// Unit tangent, oriented continuously along the curve.
    pub tangent: DVector<f64>,
    pub x: DVector<f64>,
    pub params: ParamPoint,
    pub testvals: BTreeMap<TestId, f64>,
    pub eigenvalues: Vec<Complex<f64>>,
    pub p_norm: f64,
    pub q_norm: f64,
    pub stable: bool,
    pub boundary: bool,
}

impl BranchPoint {
    pub fn max_re_eig(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|e| e.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug)]
pub struct Curve {
    pub kind: CurveKind,
    pub points: Vec<BranchPoint>,
    pub specials: Vec<SpecialPoint>,
    pub termination: Termination,
    pub accepted: usize,
    pub rejected: usize,
    /// Times the driver jumped a degenerate zone with a full-size step.
    pub hops: usize,
    pub warnings: Vec<String>,
    /// Boundary components pinned to zero in the defining system.
    pub pinned: Vec<usize>,
    /// Exchange component of a transcritical curve.
    pub tc_component: Option<usize>,
}

impl Curve {
    pub fn lambda1_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.params.lambda1()).collect()
    }

    pub fn lambda2_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.params.lambda2()).collect()
    }

    pub fn specials_of(&self, kind: crate::codim2::SpecialKind) -> Vec<&SpecialPoint> {
        self.specials.iter().filter(|s| s.kind == kind).collect()
    }

    /// Index of the segment [i, i+1] bracketing the given λ2 value, if any.
    pub fn segment_bracketing_lambda2(&self, value: f64) -> Option<usize> {
        for i in 0..self.points.len().saturating_sub(1) {
            let a = self.points[i].params.lambda2() - value;
            let b = self.points[i + 1].params.lambda2() - value;
            if a == 0.0 || a.signum() != b.signum() {
                return Some(i);
            }
        }
        None
    }
}

fn detect_pinned(sys: &SystemDef, x0: &DVector<f64>) -> Vec<usize> {
    sys.invariant_components()
        .iter()
        .copied()
        .filter(|&i| x0[i].abs() <= 1e-8)
        .collect()
}

fn orient_initial(t: &mut DVector<f64>, s1: usize, s2: Option<usize>, direction: f64) {
    let mut key = t[s1];
    if key.abs() <= 1e-8 {
        if let Some(s2) = s2 {
            key = t[s2];
        }
    }
    if key * direction < 0.0 {
        *t = -&*t;
    }
}

fn bad_seed(what: &str, e: BifError) -> BifError {
    BifError::BadSeed(format!("{what}: {e}"))
}

/// Continue a branch of equilibria in the first active parameter over
/// `range`, monitoring fold, Hopf and boundary-transversal tests.
///
/// Invariant components that are zero at the seed are pinned to exactly zero
/// along the whole branch; their transversal eigenvalues are monitored for
/// transcritical points.
pub fn continue_equilibrium(
    sys: &SystemDef,
    x0: &DVector<f64>,
    params: &ParamPoint,
    range: (f64, f64),
    settings: &ContinuationSettings,
) -> Result<Curve> {
    if x0.len() != sys.dim() {
        return Err(BifError::Config("seed state dimension mismatch".into()));
    }
    if !(range.0 < range.1) {
        return Err(BifError::Config("empty continuation range".into()));
    }
    let lam1 = params.lambda1();
    if lam1 < range.0 || lam1 > range.1 {
        return Err(BifError::Config("seed parameter outside range".into()));
    }
    let pinned = detect_pinned(sys, x0);
    let red = Reduction::new(sys.dim(), &pinned);
    let nf = red.n_free();
    let mut ext = EquilibriumExt::new(sys, red.clone(), params.clone());

    let mut z0 = DVector::zeros(nf + 1);
    z0.rows_mut(0, nf).copy_from(&red.restrict(x0));
    z0[nf] = lam1;
    let z0 = newton_fixed(&ext, &z0, nf, lam1, settings)
        .map_err(|e| bad_seed("equilibrium seed did not converge", e))?;
    ext.init_borders(&z0)?;

    let mut t0 = curve_tangent(&ext.jacobian(&z0), &unit(nf + 1, nf))?;
    orient_initial(&mut t0, nf, None, settings.direction);
    let mut s = settings.clone();
    s.window.lambda1 = Some(range);
    continue_from(&mut ext, &z0, &t0, &s)
}

/// Continue a fold curve in the active parameter pair from a fold point.
pub fn continue_fold_curve(
    sys: &SystemDef,
    x0: &DVector<f64>,
    params: &ParamPoint,
    settings: &ContinuationSettings,
) -> Result<Curve> {
    if x0.len() != sys.dim() {
        return Err(BifError::Config("seed state dimension mismatch".into()));
    }
    let pinned = detect_pinned(sys, x0);
    let red = Reduction::new(sys.dim(), &pinned);
    let nf = red.n_free();
    if nf == 0 {
        return Err(BifError::BadSeed(
            "fold seed has no free components after boundary pinning".into(),
        ));
    }
    let x_snap = red.embed(&red.restrict(x0));
    let j_full = sys.eval_jacobian(&x_snap, params);
    let q0 = BorderVectors::from_min_singular_pair(&red.restrict_mat(&j_full))?.q_bar;
    let inst = BorderVectors::from_min_singular_pair(&j_full)?;
    let mut ext = FoldExt::new(sys, red.clone(), params.clone(), inst);

    let mut z0 = DVector::zeros(2 * nf + 2);
    z0.rows_mut(0, nf).copy_from(&red.restrict(&x_snap));
    z0.rows_mut(nf, nf).copy_from(&q0);
    z0[2 * nf] = params.lambda1();
    z0[2 * nf + 1] = params.lambda2();
    let z0 = newton_fixed(&ext, &z0, 2 * nf + 1, params.lambda2(), settings)
        .map_err(|e| bad_seed("fold seed did not converge", e))?;

    let mut t0 = curve_tangent(&ext.jacobian(&z0), &unit(2 * nf + 2, 2 * nf))?;
    orient_initial(&mut t0, 2 * nf, Some(2 * nf + 1), settings.direction);
    continue_from(&mut ext, &z0, &t0, settings)
}

/// Continue a transcritical curve: a boundary equilibrium whose transversal
/// eigenvalue is held at zero. The seed must lie on an invariant boundary.
pub fn continue_tc_curve(
    sys: &SystemDef,
    x0: &DVector<f64>,
    params: &ParamPoint,
    settings: &ContinuationSettings,
) -> Result<Curve> {
    if x0.len() != sys.dim() {
        return Err(BifError::Config("seed state dimension mismatch".into()));
    }
    let pinned = detect_pinned(sys, x0);
    if pinned.is_empty() {
        return Err(BifError::BadSeed(
            "transcritical seed must lie on an invariant boundary plane".into(),
        ));
    }
    let red = Reduction::new(sys.dim(), &pinned);
    let x_snap = red.embed(&red.restrict(x0));
    let j_full = sys.eval_jacobian(&x_snap, params);
    // The exchange component is the pinned one with the smallest transversal
    // eigenvalue magnitude.
    let i_tc = *pinned
        .iter()
        .min_by(|&&a, &&b| {
            j_full[(a, a)]
                .abs()
                .partial_cmp(&j_full[(b, b)].abs())
                .unwrap()
        })
        .unwrap();
    let inst = BorderVectors::from_min_singular_pair(&j_full)?;
    let mut ext = TcExt::new(sys, red.clone(), params.clone(), i_tc, inst);
    let nf = red.n_free();

    let mut z0 = DVector::zeros(nf + 2);
    z0.rows_mut(0, nf).copy_from(&red.restrict(&x_snap));
    z0[nf] = params.lambda1();
    z0[nf + 1] = params.lambda2();
    let z0 = newton_fixed(&ext, &z0, nf + 1, params.lambda2(), settings)
        .map_err(|e| bad_seed("transcritical seed did not converge", e))?;

    let mut t0 = curve_tangent(&ext.jacobian(&z0), &unit(nf + 2, nf))?;
    orient_initial(&mut t0, nf, Some(nf + 1), settings.direction);
    let mut curve = continue_from(&mut ext, &z0, &t0, settings)?;
    curve.tc_component = Some(i_tc);
    Ok(curve)
}

/// Continue a Hopf curve from an equilibrium with a conjugate eigenvalue pair
/// near the imaginary axis.
pub fn continue_hopf_curve(
    sys: &SystemDef,
    x0: &DVector<f64>,
    params: &ParamPoint,
    settings: &ContinuationSettings,
) -> Result<Curve> {
    let n = sys.dim();
    if x0.len() != n {
        return Err(BifError::Config("seed state dimension mismatch".into()));
    }
    let j = sys.eval_jacobian(x0, params);
    let eig = j.clone().complex_eigenvalues();
    let mut omega0 = f64::NAN;
    let mut best_re = f64::INFINITY;
    for e in eig.iter() {
        if e.im > 1e-6 && e.re.abs() < best_re {
            best_re = e.re.abs();
            omega0 = e.im;
        }
    }
    if !omega0.is_finite() {
        return Err(BifError::BadSeed(
            "no complex-conjugate eigenvalue pair at the Hopf seed".into(),
        ));
    }

    // Eigenvector from the null space of the doubled real system.
    let mut k = DMatrix::zeros(2 * n, 2 * n);
    k.view_mut((0, 0), (n, n)).copy_from(&j);
    k.view_mut((n, n), (n, n)).copy_from(&j);
    for i in 0..n {
        k[(i, n + i)] = omega0;
        k[(n + i, i)] = -omega0;
    }
    let v = BorderVectors::from_min_singular_pair(&k)?.q_bar;
    let wr = v.rows(0, n).into_owned();
    let wi = v.rows(n, n).into_owned();

    let mut ext = HopfExt::new(sys, params.clone(), wr.clone(), wi.clone());
    let mut z0 = DVector::zeros(3 * n + 3);
    z0.rows_mut(0, n).copy_from(x0);
    z0.rows_mut(n, n).copy_from(&wr);
    z0.rows_mut(2 * n, n).copy_from(&wi);
    z0[3 * n] = omega0;
    z0[3 * n + 1] = params.lambda1();
    z0[3 * n + 2] = params.lambda2();
    let mut z0 = newton_fixed(&ext, &z0, 3 * n + 2, params.lambda2(), settings)
        .map_err(|e| bad_seed("Hopf seed did not converge", e))?;
    if z0[3 * n] < 0.0 {
        // Flip to the positive-frequency representative.
        z0[3 * n] = -z0[3 * n];
        for i in 0..n {
            z0[2 * n + i] = -z0[2 * n + i];
        }
    }
    ext.refresh(&z0);

    let mut t0 = curve_tangent(&ext.jacobian(&z0), &unit(3 * n + 3, 3 * n + 1))?;
    orient_initial(&mut t0, 3 * n + 1, Some(3 * n + 2), settings.direction);
    continue_from(&mut ext, &z0, &t0, settings)
}

fn unit(len: usize, idx: usize) -> DVector<f64> {
    let mut v = DVector::zeros(len);
    v[idx] = 1.0;
    v
}

/// A curve point re-solved at an exact λ2 value, with fresh instruments.
#[derive(Clone, Debug)]
pub struct ResampledPoint {
    pub z: DVector<f64>,
    pub tangent: DVector<f64>,
    pub eval: PointEval,
}

/// Re-solve a fold curve at an exact second-parameter value, seeding from the
/// nearest stored point. Used for oracle comparisons and ratio diagnostics at
/// prescribed parameter values.
pub fn fold_point_at_lambda2(
    sys: &SystemDef,
    curve: &Curve,
    lambda2: f64,
    settings: &ContinuationSettings,
) -> Result<ResampledPoint> {
    if curve.kind != CurveKind::Fold {
        return Err(BifError::Config("resampling requires a fold curve".into()));
    }
    let pt = curve
        .points
        .iter()
        .min_by(|a, b| {
            (a.params.lambda2() - lambda2)
                .abs()
                .partial_cmp(&(b.params.lambda2() - lambda2).abs())
                .unwrap()
        })
        .ok_or_else(|| BifError::Config("empty curve".into()))?;
    let red = Reduction::new(sys.dim(), &curve.pinned);
    let inst = BorderVectors::from_min_singular_pair(&sys.eval_jacobian(&pt.x, &pt.params))?;
    let ext = FoldExt::new(sys, red, pt.params.clone(), inst);
    let (_, s2) = ext.lambda_slots();
    let z = newton_fixed(&ext, &pt.z, s2.unwrap(), lambda2, settings)?;
    let tangent = curve_tangent(&ext.jacobian(&z), &pt.tangent)?;
    let eval = ext.evaluate(&z, &tangent)?;
    Ok(ResampledPoint { z, tangent, eval })
}

/// Re-solve a transcritical curve at an exact second-parameter value, seeding
/// from the nearest stored point.
pub fn tc_point_at_lambda2(
    sys: &SystemDef,
    curve: &Curve,
    lambda2: f64,
    settings: &ContinuationSettings,
) -> Result<ResampledPoint> {
    if curve.kind != CurveKind::Transcritical {
        return Err(BifError::Config(
            "resampling requires a transcritical curve".into(),
        ));
    }
    let i_tc = curve
        .tc_component
        .ok_or_else(|| BifError::Config("transcritical curve without exchange component".into()))?;
    let pt = curve
        .points
        .iter()
        .min_by(|a, b| {
            (a.params.lambda2() - lambda2)
                .abs()
                .partial_cmp(&(b.params.lambda2() - lambda2).abs())
                .unwrap()
        })
        .ok_or_else(|| BifError::Config("empty curve".into()))?;
    let red = Reduction::new(sys.dim(), &curve.pinned);
    let inst = BorderVectors::from_min_singular_pair(&sys.eval_jacobian(&pt.x, &pt.params))?;
    let ext = TcExt::new(sys, red, pt.params.clone(), i_tc, inst);
    let (_, s2) = ext.lambda_slots();
    let z = newton_fixed(&ext, &pt.z, s2.unwrap(), lambda2, settings)?;
    let tangent = curve_tangent(&ext.jacobian(&z), &pt.tangent)?;
    let eval = ext.evaluate(&z, &tangent)?;
    Ok(ResampledPoint { z, tangent, eval })
}

/// Localize a test-function zero inside one stored curve segment, optionally
/// with explicit instrument borders (the zero location is invariant to the
/// border choice; this exists to verify exactly that).
pub fn localize_test_zero(
    sys: &SystemDef,
    curve: &Curve,
    segment: usize,
    tid: TestId,
    borders: Option<BorderVectors>,
    settings: &ContinuationSettings,
) -> Result<SpecialPoint> {
    if segment + 1 >= curve.points.len() {
        return Err(BifError::Config(format!(
            "segment {segment} out of range for curve with {} points",
            curve.points.len()
        )));
    }
    let a = &curve.points[segment];
    let b = &curve.points[segment + 1];
    let red = Reduction::new(sys.dim(), &curve.pinned);

    match curve.kind {
        CurveKind::Equilibrium => {
            let mut ext = EquilibriumExt::new(sys, red.clone(), a.params.clone());
            match borders {
                Some(bv) => ext = ext.with_borders(bv),
                None => ext.init_borders(&a.z)?,
            }
            run_localization(&ext, &a.z, &b.z, tid, settings)
        }
        CurveKind::Fold => {
            let inst = match borders {
                Some(bv) => bv,
                None => BorderVectors::from_min_singular_pair(&sys.eval_jacobian(&a.x, &a.params))?,
            };
            let ext = FoldExt::new(sys, red, a.params.clone(), inst);
            run_localization(&ext, &a.z, &b.z, tid, settings)
        }
        CurveKind::Transcritical => {
            let i_tc = curve.tc_component.ok_or_else(|| {
                BifError::Config("transcritical curve without exchange component".into())
            })?;
            let inst = match borders {
                Some(bv) => bv,
                None => BorderVectors::from_min_singular_pair(&sys.eval_jacobian(&a.x, &a.params))?,
            };
            let ext = TcExt::new(sys, red, a.params.clone(), i_tc, inst);
            run_localization(&ext, &a.z, &b.z, tid, settings)
        }
        CurveKind::Hopf => Err(BifError::Config(
            "Hopf curves have no localizable test functions".into(),
        )),
    }
}

fn run_localization<E: ExtendedSystem>(
    ext: &E,
    z_a: &DVector<f64>,
    z_b: &DVector<f64>,
    tid: TestId,
    settings: &ContinuationSettings,
) -> Result<SpecialPoint> {
    let loc = driver::localize_in_segment(ext, z_a, z_b, tid, settings)?;
    driver::build_special(ext, &loc, tid).ok_or_else(|| BifError::Localization {
        test: tid.label().into(),
        reason: "values at the localized point do not classify".into(),
    })
}

#[cfg(test)]
mod tests;
