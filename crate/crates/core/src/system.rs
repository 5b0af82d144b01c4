//! System definitions: right-hand sides, analytic derivatives with
//! finite-difference fallbacks, and parameter handling.
//!
//! A [`SystemDef`] owns closures for f, D_x f, D_p f and the second-derivative
//! action B(q1,q2) = D²_{x,x}f·(q1,q2). Everything downstream (continuation,
//! test functions, integration) consumes systems only through this type, so a
//! user-supplied model with nothing but an rhs still works — the missing
//! derivatives fall back to central differences with step h = cbrt(eps)·scale.

use nalgebra::{DMatrix, DVector};

use crate::error::{BifError, Result};

pub type RhsFn = dyn Fn(&[f64], &[f64]) -> DVector<f64> + Send + Sync;
pub type JacFn = dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync;
pub type JacParamFn = dyn Fn(&[f64], &[f64], usize) -> DVector<f64> + Send + Sync;
pub type HessActionFn = dyn Fn(&[f64], &[f64], &[f64], &[f64]) -> DVector<f64> + Send + Sync;
/// Reports the location of a non-smooth locus as (state component, threshold),
/// if the system has one for the given parameter values.
pub type KinkFn = dyn Fn(&[f64]) -> Option<(usize, f64)> + Send + Sync;

/// Central-difference step for scale `s`: cbrt(eps) * max(1, |s|).
pub(crate) fn fd_step(scale: f64) -> f64 {
    f64::EPSILON.cbrt() * scale.abs().max(1.0)
}

/// Parameter values for one system, with the active continuation pair marked.
///
/// Construct through [`SystemDef::params`] so unknown names are rejected up
/// front; indices then stay valid for the lifetime of the run.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamPoint {
    values: Vec<f64>,
    active: (usize, usize),
}

impl ParamPoint {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn set(&mut self, idx: usize, value: f64) {
        self.values[idx] = value;
    }

    /// Indices of the active continuation pair (λ1, λ2).
    pub fn active(&self) -> (usize, usize) {
        self.active
    }

    pub fn lambda1(&self) -> f64 {
        self.values[self.active.0]
    }

    pub fn lambda2(&self) -> f64 {
        self.values[self.active.1]
    }

    pub fn set_lambda1(&mut self, v: f64) {
        self.values[self.active.0] = v;
    }

    pub fn set_lambda2(&mut self, v: f64) {
        self.values[self.active.1] = v;
    }
}

/// An ODE system dx/dt = f(x; p) with named states and parameters.
pub struct SystemDef {
    name: String,
    state_names: Vec<String>,
    param_names: Vec<String>,
    default_params: Vec<f64>,
    rhs: Box<RhsFn>,
    jac: Option<Box<JacFn>>,
    jac_param: Option<Box<JacParamFn>>,
    hess_action: Option<Box<HessActionFn>>,
    invariant_components: Vec<usize>,
    nonneg_components: Vec<usize>,
    kink: Option<Box<KinkFn>>,
    default_active: (usize, usize),
}

impl SystemDef {
    pub fn new(
        name: impl Into<String>,
        state_names: &[&str],
        param_names: &[&str],
        default_params: &[f64],
        rhs: Box<RhsFn>,
    ) -> Self {
        assert_eq!(param_names.len(), default_params.len());
        SystemDef {
            name: name.into(),
            state_names: state_names.iter().map(|s| s.to_string()).collect(),
            param_names: param_names.iter().map(|s| s.to_string()).collect(),
            default_params: default_params.to_vec(),
            rhs,
            jac: None,
            jac_param: None,
            hess_action: None,
            invariant_components: Vec::new(),
            nonneg_components: Vec::new(),
            kink: None,
            default_active: (0, 1),
        }
    }

    pub fn with_jacobian(mut self, jac: Box<JacFn>) -> Self {
        self.jac = Some(jac);
        self
    }

    pub fn with_jac_param(mut self, jp: Box<JacParamFn>) -> Self {
        self.jac_param = Some(jp);
        self
    }

    pub fn with_hess_action(mut self, h: Box<HessActionFn>) -> Self {
        self.hess_action = Some(h);
        self
    }

    /// State components whose coordinate plane {x_i = 0} is invariant.
    pub fn with_invariant_components(mut self, comps: &[usize]) -> Self {
        self.invariant_components = comps.to_vec();
        self
    }

    /// State components that are non-negative by model semantics (densities).
    pub fn with_nonneg_components(mut self, comps: &[usize]) -> Self {
        self.nonneg_components = comps.to_vec();
        self
    }

    pub fn with_kink(mut self, kink: Box<KinkFn>) -> Self {
        self.kink = Some(kink);
        self
    }

    /// Which parameter pair two-parameter continuation uses by default.
    pub fn with_default_active(mut self, first: &str, second: &str) -> Self {
        let a0 = self
            .param_names
            .iter()
            .position(|n| n == first)
            .unwrap_or_else(|| panic!("unknown default active parameter `{first}`"));
        let a1 = self
            .param_names
            .iter()
            .position(|n| n == second)
            .unwrap_or_else(|| panic!("unknown default active parameter `{second}`"));
        assert_ne!(a0, a1, "default active pair must be distinct");
        self.default_active = (a0, a1);
        self
    }

    /// Default parameter values with the default active pair.
    pub fn default_point(&self) -> ParamPoint {
        ParamPoint {
            values: self.default_params.clone(),
            active: self.default_active,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn invariant_components(&self) -> &[usize] {
        &self.invariant_components
    }

    pub fn nonneg_components(&self) -> &[usize] {
        &self.nonneg_components
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jac.is_some()
    }

    /// Non-smooth locus for these parameter values, if any.
    pub fn kink_location(&self, p: &ParamPoint) -> Option<(usize, f64)> {
        self.kink.as_ref().and_then(|k| k(p.values()))
    }

    pub fn param_index(&self, name: &str) -> Result<usize> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| {
                BifError::Config(format!("unknown parameter `{name}` for system `{}`", self.name))
            })
    }

    /// Build a parameter point from defaults and named overrides, keeping the
    /// system's default active pair.
    pub fn point(&self, overrides: &[(&str, f64)]) -> Result<ParamPoint> {
        let mut pt = self.default_point();
        for (name, v) in overrides {
            pt.values[self.param_index(name)?] = *v;
        }
        Ok(pt)
    }

    /// Build a parameter point from defaults, named overrides, and an active pair.
    pub fn params(&self, overrides: &[(&str, f64)], active: (&str, &str)) -> Result<ParamPoint> {
        let mut values = self.default_params.clone();
        for (name, v) in overrides {
            values[self.param_index(name)?] = *v;
        }
        let a0 = self.param_index(active.0)?;
        let a1 = self.param_index(active.1)?;
        if a0 == a1 {
            return Err(BifError::Config(format!(
                "active parameter pair must be distinct, got `{}` twice",
                active.0
            )));
        }
        Ok(ParamPoint {
            values,
            active: (a0, a1),
        })
    }

    pub fn eval_rhs(&self, x: &DVector<f64>, p: &ParamPoint) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.dim());
        (self.rhs)(x.as_slice(), p.values())
    }

    /// Jacobian D_x f, analytic when provided, otherwise central differences
    /// with per-component step h_j = cbrt(eps)·max(1, |x_j|).
    pub fn eval_jacobian(&self, x: &DVector<f64>, p: &ParamPoint) -> DMatrix<f64> {
        debug_assert_eq!(x.len(), self.dim());
        if let Some(jac) = &self.jac {
            return jac(x.as_slice(), p.values());
        }
        self.fd_jacobian(x, p)
    }

    fn fd_jacobian(&self, x: &DVector<f64>, p: &ParamPoint) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut xs = x.clone();
        for j in 0..n {
            let h = fd_step(x[j]);
            xs[j] = x[j] + h;
            let fp = (self.rhs)(xs.as_slice(), p.values());
            xs[j] = x[j] - h;
            let fm = (self.rhs)(xs.as_slice(), p.values());
            xs[j] = x[j];
            out.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        out
    }

    /// Derivative of f with respect to parameter `idx`.
    pub fn eval_jac_param(&self, x: &DVector<f64>, p: &ParamPoint, idx: usize) -> DVector<f64> {
        if let Some(jp) = &self.jac_param {
            return jp(x.as_slice(), p.values(), idx);
        }
        let mut vals = p.values().to_vec();
        let h = fd_step(vals[idx]);
        vals[idx] = p.get(idx) + h;
        let fp = (self.rhs)(x.as_slice(), &vals);
        vals[idx] = p.get(idx) - h;
        let fm = (self.rhs)(x.as_slice(), &vals);
        (fp - fm) / (2.0 * h)
    }

    /// Second-derivative action B(q1,q2)_i = Σ_jk ∂²f_i/∂x_j∂x_k q1_j q2_k.
    ///
    /// The fallback differences the (possibly analytic) Jacobian along q2 and
    /// applies it to q1, symmetrized over the two argument orders so that the
    /// exchange symmetry holds exactly either way.
    pub fn eval_hess_action(
        &self,
        x: &DVector<f64>,
        p: &ParamPoint,
        q1: &DVector<f64>,
        q2: &DVector<f64>,
    ) -> DVector<f64> {
        if let Some(h) = &self.hess_action {
            return h(x.as_slice(), p.values(), q1.as_slice(), q2.as_slice());
        }
        let a = self.fd_hess_action_oneside(x, p, q1, q2);
        let b = self.fd_hess_action_oneside(x, p, q2, q1);
        (a + b) * 0.5
    }

    fn fd_hess_action_oneside(
        &self,
        x: &DVector<f64>,
        p: &ParamPoint,
        q1: &DVector<f64>,
        q2: &DVector<f64>,
    ) -> DVector<f64> {
        let qn = q2.amax().max(1e-300);
        let h = fd_step(x.amax()) / qn.max(1.0);
        let xp = x + q2 * h;
        let xm = x - q2 * h;
        let jp = self.eval_jacobian(&xp, p);
        let jm = self.eval_jacobian(&xm, p);
        ((jp - jm) / (2.0 * h)) * q1
    }

    /// Derivative of the Jacobian with respect to parameter `idx`, applied to q.
    /// Central difference of the (possibly analytic) Jacobian; used by the
    /// extended systems for their mixed second-derivative blocks.
    pub fn eval_jac_dparam_action(
        &self,
        x: &DVector<f64>,
        p: &ParamPoint,
        idx: usize,
        q: &DVector<f64>,
    ) -> DVector<f64> {
        let mut pp = p.clone();
        let h = fd_step(p.get(idx));
        pp.set(idx, p.get(idx) + h);
        let jp = self.eval_jacobian(x, &pp);
        pp.set(idx, p.get(idx) - h);
        let jm = self.eval_jacobian(x, &pp);
        ((jp - jm) / (2.0 * h)) * q
    }

    /// Cross-check analytic derivatives against central differences.
    ///
    /// Checks whichever of D_x f, D_p f and B(q1,q2) were supplied
    /// analytically, on the basis-vector probes, and fails naming the first
    /// block whose max relative discrepancy exceeds `tol`. Refuses to run
    /// within 10 finite-difference steps of a non-smooth locus.
    pub fn fd_check(&self, x: &DVector<f64>, p: &ParamPoint, tol: f64) -> Result<FdReport> {
        if let Some((comp, loc)) = self.kink_location(p) {
            let margin = 10.0 * fd_step(x[comp]);
            if (x[comp] - loc).abs() <= margin {
                return Err(BifError::KinkStraddle {
                    component: comp,
                    value: x[comp],
                    location: loc,
                    margin,
                });
            }
        }

        let mut report = FdReport::default();

        if self.jac.is_some() {
            let analytic = self.eval_jacobian(x, p);
            let fd = self.fd_jacobian(x, p);
            let denom = analytic.amax().max(1.0);
            let disc = (&analytic - &fd).amax() / denom;
            report.jac = Some(disc);
            if disc > tol {
                return Err(BifError::DerivativeMismatch {
                    block: "jacobian",
                    discrepancy: disc,
                    tol,
                });
            }
        }

        if self.jac_param.is_some() {
            let mut worst: f64 = 0.0;
            for idx in 0..self.n_params() {
                let analytic = self.eval_jac_param(x, p, idx);
                let mut vals = p.values().to_vec();
                let h = fd_step(vals[idx]);
                vals[idx] = p.get(idx) + h;
                let fp = (self.rhs)(x.as_slice(), &vals);
                vals[idx] = p.get(idx) - h;
                let fm = (self.rhs)(x.as_slice(), &vals);
                let fd = (fp - fm) / (2.0 * h);
                let denom = analytic.amax().max(1.0);
                worst = worst.max((&analytic - &fd).amax() / denom);
            }
            report.jac_params = Some(worst);
            if worst > tol {
                return Err(BifError::DerivativeMismatch {
                    block: "jac_params",
                    discrepancy: worst,
                    tol,
                });
            }
        }

        if self.hess_action.is_some() {
            let n = self.dim();
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let ei = DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 });
                    let ej = DVector::from_fn(n, |k, _| if k == j { 1.0 } else { 0.0 });
                    let analytic = self.eval_hess_action(x, p, &ei, &ej);
                    let fd = (self.fd_hess_action_oneside(x, p, &ei, &ej)
                        + self.fd_hess_action_oneside(x, p, &ej, &ei))
                        * 0.5;
                    let denom = analytic.amax().max(1.0);
                    worst = worst.max((&analytic - &fd).amax() / denom);
                }
            }
            report.hess = Some(worst);
            if worst > tol {
                return Err(BifError::DerivativeMismatch {
                    block: "hess_action",
                    discrepancy: worst,
                    tol,
                });
            }
        }

        Ok(report)
    }
}

/// Max relative discrepancies from [`SystemDef::fd_check`], per block that had
/// an analytic implementation to check.
#[derive(Debug, Default, Clone)]
pub struct FdReport {
    pub jac: Option<f64>,
    pub jac_params: Option<f64>,
    pub hess: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_system() -> SystemDef {
        // dx/dt = A x + lambda * b with A = [[1, 2], [3, 4]], b = (1, 0).
        SystemDef::new(
            "linear",
            &["x", "y"],
            &["lambda", "unused"],
            &[0.0, 0.0],
            Box::new(|x, p| {
                DVector::from_vec(vec![x[0] + 2.0 * x[1] + p[0], 3.0 * x[0] + 4.0 * x[1]])
            }),
        )
    }

    #[test]
    fn fd_jacobian_recovers_linear_matrix() {
        let sys = linear_system();
        let p = sys.params(&[], ("lambda", "unused")).unwrap();
        let x = DVector::from_vec(vec![0.3, -1.7]);
        let j = sys.eval_jacobian(&x, &p);
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!((j - expect).amax() < 1e-9);
    }

    #[test]
    fn fd_jac_param_recovers_forcing_direction() {
        let sys = linear_system();
        let p = sys.params(&[("lambda", 0.5)], ("lambda", "unused")).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let d = sys.eval_jac_param(&x, &p, 0);
        assert!((d[0] - 1.0).abs() < 1e-9 && d[1].abs() < 1e-9);
    }

    #[test]
    fn unknown_parameter_is_a_config_error() {
        let sys = linear_system();
        let err = sys.params(&[("nope", 1.0)], ("lambda", "unused")).unwrap_err();
        assert!(matches!(err, BifError::Config(_)));
    }

    #[test]
    fn active_pair_must_be_distinct() {
        let sys = linear_system();
        let err = sys.params(&[], ("lambda", "lambda")).unwrap_err();
        assert!(matches!(err, BifError::Config(_)));
    }

    #[test]
    fn fd_hess_fallback_is_exactly_symmetric() {
        // Quadratic rhs so the fallback has real work to do.
        let sys = SystemDef::new(
            "quad",
            &["x", "y"],
            &["a", "b"],
            &[0.0, 0.0],
            Box::new(|x, _p| DVector::from_vec(vec![x[0] * x[0] * x[1], x[1] * x[1]])),
        );
        let p = sys.params(&[], ("a", "b")).unwrap();
        let x = DVector::from_vec(vec![0.7, -0.4]);
        let q1 = DVector::from_vec(vec![0.3, 0.9]);
        let q2 = DVector::from_vec(vec![-1.1, 0.2]);
        let b12 = sys.eval_hess_action(&x, &p, &q1, &q2);
        let b21 = sys.eval_hess_action(&x, &p, &q2, &q1);
        assert_eq!(b12, b21);
        // and it should approximate the true bilinear form
        // f1 = x^2 y: H1 = [[2y, 2x], [2x, 0]]
        let expect = 2.0 * x[1] * q1[0] * q2[0] + 2.0 * x[0] * (q1[0] * q2[1] + q1[1] * q2[0]);
        assert!((b12[0] - expect).abs() < 1e-7, "got {} want {}", b12[0], expect);
    }

    #[test]
    fn fd_check_flags_a_corrupted_jacobian() {
        let sys = SystemDef::new(
            "bad",
            &["x"],
            &["a", "b"],
            &[0.0, 0.0],
            Box::new(|x, p| DVector::from_vec(vec![p[0] + x[0] * x[0]])),
        )
        .with_jacobian(Box::new(|x, _p| {
            DMatrix::from_vec(1, 1, vec![2.0 * x[0] + 0.5]) // wrong on purpose
        }));
        let p = sys.params(&[], ("a", "b")).unwrap();
        let x = DVector::from_vec(vec![1.3]);
        let err = sys.fd_check(&x, &p, 1e-5).unwrap_err();
        match err {
            BifError::DerivativeMismatch { block, .. } => assert_eq!(block, "jacobian"),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
