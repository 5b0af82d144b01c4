//! Codimension-2 test functions along fold/transcritical curves and the
//! classification of their zeros.
//!
//! Along a fold curve the three monitored scalars are
//!
//! * `beta_bt  = pᵀq` — vanishes when the zero eigenvalue loses semisimplicity
//!   (a double-zero point),
//! * `beta_cusp = ⟨p, B(q,q)⟩` — vanishes when the quadratic normal-form
//!   coefficient degenerates (a cusp-type point),
//! * `alpha` — the interaction test that separates saddle-node/transcritical
//!   crossings from genuine cusp or Bogdanov–Takens points.
//!
//! `alpha` contracts the left null vector against the directional parameter
//! derivative of f orthogonal to the fold curve's own parameter-plane motion:
//! with (v̂₁, v̂₂) the unit-normalized parameter components of the curve
//! tangent,
//!
//! ```text
//! alpha = ⟨p, D_λ1 f · v̂₂ − D_λ2 f · v̂₁⟩.
//! ```
//!
//! At a cusp the fold curve reverses through the point while ⟨p, D_λ f⟩ stays
//! bounded away from zero, so |alpha| stays at ‖p‖; at a saddle-node meeting a
//! transcritical curve the parameter derivative itself degenerates along the
//! invariant plane and alpha crosses zero.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Complex, DVector};

use crate::error::{BifError, Result};
use crate::system::{ParamPoint, SystemDef};

/// Identifier for a monitored test function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TestId {
    /// Fold test: bordered determinant surrogate γ (equilibrium curves).
    Gamma,
    /// Hopf test: max real part among complex-conjugate eigenvalue pairs.
    Hopf,
    /// Transversal eigenvalue of a pinned boundary component.
    Transversal(usize),
    /// Saddle-node/transcritical interaction test.
    Alpha,
    /// Cusp test ⟨p, B(q,q)⟩.
    BetaCusp,
    /// Double-zero test pᵀq.
    BetaBt,
    /// Hopf frequency along a Hopf curve.
    Omega,
}

impl TestId {
    pub fn label(&self) -> String {
        match self {
            TestId::Gamma => "gamma".into(),
            TestId::Hopf => "hopf".into(),
            TestId::Transversal(i) => format!("transversal_{i}"),
            TestId::Alpha => "alpha".into(),
            TestId::BetaCusp => "beta_cusp".into(),
            TestId::BetaBt => "beta_bt".into(),
            TestId::Omega => "omega".into(),
        }
    }
}

/// What a localized special point is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpecialKind {
    Fold,
    Transcritical,
    Hopf,
    Cusp,
    BogdanovTakens,
    SntcSingleZero,
    SntcDoubleZero,
    /// Hopf test crossing on a transcritical curve (in-plane Hopf candidate).
    TcHopfCandidate,
    /// Simultaneous degeneracies that the test set cannot separate.
    AmbiguousCodim2,
}

impl SpecialKind {
    pub fn label(&self) -> &'static str {
        match self {
            SpecialKind::Fold => "fold",
            SpecialKind::Transcritical => "transcritical",
            SpecialKind::Hopf => "hopf",
            SpecialKind::Cusp => "cusp",
            SpecialKind::BogdanovTakens => "bogdanov-takens",
            SpecialKind::SntcSingleZero => "sntc-single-zero",
            SpecialKind::SntcDoubleZero => "sntc-double-zero",
            SpecialKind::TcHopfCandidate => "tc-hopf-candidate",
            SpecialKind::AmbiguousCodim2 => "ambiguous-codim2",
        }
    }
}

/// Diagnostics attached to a localized special point.
#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    /// Raw test values at the localized point.
    pub values: BTreeMap<TestId, f64>,
    /// Raw test values at the bracketing curve points (before, after).
    pub brackets: BTreeMap<TestId, (f64, f64)>,
    pub eigenvalues: Vec<Complex<f64>>,
    /// Norms of the left/right near-null vectors used for normalization.
    pub p_norm: f64,
    pub q_norm: f64,
    /// True when classification could only use magnitudes (curve endpoint),
    /// not a bracketing sign change.
    pub endpoint_magnitude_only: bool,
    /// True for kinds found on a transcritical curve, which only brackets the
    /// point and does not verify the transversal fold conditions.
    pub candidate: bool,
}

/// A localized bifurcation point on a curve.
#[derive(Clone, Debug)]
pub struct SpecialPoint {
    pub kind: SpecialKind,
    pub x: DVector<f64>,
    pub params: ParamPoint,
    /// Which monitored test's zero triggered the localization.
    pub trigger: TestId,
    pub diagnostics: Diagnostics,
}

/// Threshold below which a normalized test value counts as zero.
pub const TOL_ZERO: f64 = 1e-6;

/// Relative collapse factor for the bracket-dip zero call: a crossing test
/// also counts as zero at a localized point when its magnitude there is below
/// this fraction of the smaller bracket-endpoint magnitude. Near a
/// defining-system branch crossing the corrector cannot place points closer
/// than ~√(newton_tol) to the crossing, which keeps linearly-vanishing
/// companion tests above the absolute threshold; the relative dip is
/// insensitive to that conditioning floor.
pub const DIP_FACTOR: f64 = 1e-2;

/// Resolution floor for collocated zeros. Localizing one test's zero at a
/// point where the defining system itself degenerates stalls at a parameter
/// offset far above newton_tol, so a companion test that vanishes at the same
/// point is left with a small but clearly nonzero value there. A companion
/// that changed sign across the segment and sits below this normalized
/// magnitude is accepted as vanishing at the point; genuinely nonzero
/// companion tests at codimension-2 points are orders of magnitude larger.
pub const COLLOCATED_TOL: f64 = 1e-3;

/// The interaction test value at a fold-curve point.
///
/// `p` is the left near-null vector of the Jacobian and `(v1, v2)` the
/// parameter-plane components of the curve tangent, which are normalized to a
/// unit vector here so the value does not depend on tangent parameterization.
pub fn alpha_sntc(
    sys: &SystemDef,
    x: &DVector<f64>,
    params: &ParamPoint,
    p: &DVector<f64>,
    v_param: (f64, f64),
) -> Result<f64> {
    let norm = v_param.0.hypot(v_param.1);
    if norm < 1e-12 {
        return Err(BifError::DegenerateTangent { norm });
    }
    let (v1, v2) = (v_param.0 / norm, v_param.1 / norm);
    let (i1, i2) = params.active();
    let d1 = sys.eval_jac_param(x, params, i1);
    let d2 = sys.eval_jac_param(x, params, i2);
    Ok(p.dot(&d1) * v2 - p.dot(&d2) * v1)
}

/// The cusp test value ⟨p, B(q,q)⟩.
pub fn beta_cusp(
    sys: &SystemDef,
    x: &DVector<f64>,
    params: &ParamPoint,
    p: &DVector<f64>,
    q: &DVector<f64>,
) -> f64 {
    p.dot(&sys.eval_hess_action(x, params, q, q))
}

/// Scales that make raw test values comparable against [`TOL_ZERO`]:
/// alpha and beta_bt grow linearly in ‖p‖ (and ‖q‖), beta_cusp quadratically
/// in ‖q‖.
pub fn normalized_value(test: TestId, raw: f64, p_norm: f64, q_norm: f64) -> f64 {
    let scale = match test {
        TestId::Alpha => p_norm,
        TestId::BetaBt => p_norm * q_norm,
        TestId::BetaCusp => p_norm * q_norm * q_norm,
        _ => 1.0,
    };
    if scale > 0.0 {
        raw / scale
    } else {
        raw
    }
}

/// Inputs to [`classify_codim2`], gathered at a localized test-function zero.
#[derive(Clone, Debug)]
pub struct ClassifyInput {
    /// Raw values at the localized point.
    pub alpha: f64,
    pub beta_cusp: f64,
    pub beta_bt: f64,
    pub p_norm: f64,
    pub q_norm: f64,
    /// Tests whose values changed sign across the bracketing segment.
    pub crossed: BTreeSet<TestId>,
    /// Tests whose magnitude at the point collapsed below [`DIP_FACTOR`]
    /// times the smaller bracket magnitude.
    pub dips: BTreeSet<TestId>,
    /// True when no bracket exists (curve endpoint): fall back to magnitudes.
    pub endpoint: bool,
    /// True when the zero was found on a transcritical rather than fold curve.
    pub on_tc_curve: bool,
}

impl ClassifyInput {
    fn is_zero(&self, test: TestId) -> bool {
        let raw = match test {
            TestId::Alpha => self.alpha,
            TestId::BetaCusp => self.beta_cusp,
            TestId::BetaBt => self.beta_bt,
            _ => return false,
        };
        let mag = normalized_value(test, raw, self.p_norm, self.q_norm).abs();
        let small = mag <= TOL_ZERO;
        let collocated = mag <= COLLOCATED_TOL && self.crossed.contains(&test);
        (small || collocated || self.dips.contains(&test))
            && (self.endpoint || self.crossed.contains(&test))
    }
}

/// Classify a localized zero of the codimension-2 test set.
///
/// Higher-degeneracy rows win: a vanishing beta_bt together with a vanishing
/// alpha is a double-zero interaction point even if beta_cusp also vanishes
/// there, because at an invariant-plane double zero the cusp test degenerates
/// structurally as well. Returns `None` when no test is actually zero.
pub fn classify_codim2(input: &ClassifyInput) -> Option<SpecialKind> {
    let a = input.is_zero(TestId::Alpha);
    let bc = input.is_zero(TestId::BetaCusp);
    let bb = input.is_zero(TestId::BetaBt);

    if input.on_tc_curve {
        // On a transcritical curve the fold conditions are not verified, so
        // zeros only nominate candidates.
        if bb {
            return Some(SpecialKind::SntcDoubleZero);
        }
        if bc {
            return Some(SpecialKind::SntcSingleZero);
        }
        return None;
    }

    if bb {
        if a {
            return Some(SpecialKind::SntcDoubleZero);
        }
        if bc {
            return Some(SpecialKind::AmbiguousCodim2);
        }
        return Some(SpecialKind::BogdanovTakens);
    }
    if bc {
        if a {
            return Some(SpecialKind::SntcSingleZero);
        }
        return Some(SpecialKind::Cusp);
    }
    None
}
