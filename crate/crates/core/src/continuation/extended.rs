//! Extended (defining) systems for the four curve types, reduced onto the
//! free components when the seed sits on invariant boundary planes.
//!
//! Pinning boundary components keeps the defining systems regular at points
//! where curves of boundary equilibria meet the boundary-transversal
//! directions (the saddle-node/transcritical interaction points); the
//! instrumentation — eigenvalues and test functions — is always computed on
//! the full system so those interactions remain visible.

use std::collections::BTreeMap;

use nalgebra::{Complex, DMatrix, DVector};

use crate::bordered::{solve_bordered, solve_bt_bordered, BorderVectors};
use crate::codim2::{alpha_sntc, beta_cusp, TestId};
use crate::error::Result;
use crate::system::{ParamPoint, SystemDef};

use super::{CurveKind, Termination};

/// Index bookkeeping for a system reduced onto its free components.
#[derive(Clone, Debug)]
pub struct Reduction {
    n: usize,
    free: Vec<usize>,
    pinned: Vec<usize>,
}

impl Reduction {
    pub fn new(n: usize, pinned: &[usize]) -> Self {
        let mut pinned: Vec<usize> = pinned.to_vec();
        pinned.sort_unstable();
        pinned.dedup();
        let free: Vec<usize> = (0..n).filter(|i| !pinned.contains(i)).collect();
        Reduction { n, free, pinned }
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn pinned(&self) -> &[usize] {
        &self.pinned
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    /// Full state with pinned components exactly zero.
    pub fn embed(&self, xf: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.n);
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = xf[k];
        }
        x
    }

    pub fn restrict(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.free.len(), |k, _| x[self.free[k]])
    }

    /// The free×free block of a full-system matrix.
    pub fn restrict_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let nf = self.free.len();
        DMatrix::from_fn(nf, nf, |r, c| m[(self.free[r], self.free[c])])
    }
}

fn unit_full(n: usize, k: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[k] = 1.0;
    e
}

fn sorted_eigenvalues(j: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut eig: Vec<Complex<f64>> = j.clone().complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| {
        (a.re, a.im)
            .partial_cmp(&(b.re, b.im))
            .expect("finite eigenvalues")
    });
    eig
}

/// Hopf monitor: the largest real part among complex-conjugate pairs, or NaN
/// when the spectrum is entirely real.
pub fn hopf_test_value(eig: &[Complex<f64>]) -> f64 {
    let mut best = f64::NAN;
    for e in eig {
        if e.im > 1e-9 && !(e.re <= best) {
            best = e.re;
        }
    }
    best
}

/// Instruments recorded at one accepted curve point.
#[derive(Clone, Debug)]
pub struct PointEval {
    pub x: DVector<f64>,
    pub params: ParamPoint,
    pub testvals: BTreeMap<TestId, f64>,
    pub eigenvalues: Vec<Complex<f64>>,
    pub p_norm: f64,
    pub q_norm: f64,
    pub boundary: bool,
}

/// A defining system F(z) = 0 with one more unknown than equations, plus the
/// instrumentation evaluated along its solution curve.
pub trait ExtendedSystem {
    /// Number of unknowns (the residual has one row fewer).
    fn unknowns(&self) -> usize;
    fn residual(&self, z: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64>;
    /// Slots of the active parameters inside z (λ2 absent on one-parameter
    /// curves).
    fn lambda_slots(&self) -> (usize, Option<usize>);
    /// Full state and parameter point encoded by z.
    fn decode(&self, z: &DVector<f64>) -> (DVector<f64>, ParamPoint);
    /// Test functions, eigenvalues and flags at z. Uses the current reference
    /// state (borders, phases) without updating it, so probing is repeatable.
    fn evaluate(&self, z: &DVector<f64>, tangent: &DVector<f64>) -> Result<PointEval>;
    /// Update reference state (borders, phases) after an accepted point.
    fn refresh(&mut self, z: &DVector<f64>);
    /// Tests monitored for sign changes along this curve.
    fn monitored(&self) -> Vec<TestId>;
    fn curve_kind(&self) -> CurveKind;
    /// Pinned (boundary) components of the reduction, if any.
    fn pinned(&self) -> &[usize];
    /// Reject a corrected point outright (treated as a failed step).
    fn reject_point(&self, _z: &DVector<f64>) -> bool {
        false
    }
    /// Stop the curve at this accepted point.
    fn hard_stop(&self, _eval: &PointEval) -> Option<Termination> {
        None
    }
    /// An invariant component (not pinned) that the state has landed on, used
    /// to tell transcritical points from folds on equilibrium curves.
    fn boundary_proximity(&self, _x: &DVector<f64>) -> Option<usize> {
        None
    }
    /// Invariant components left free by the reduction: state planes the
    /// curve can cross. A fold curve crossing one is an interaction point
    /// (the plane carries a transcritical exchange there), and beyond it the
    /// fold defining system is degenerate, so the driver stops the curve.
    fn plane_components(&self) -> Vec<usize> {
        Vec::new()
    }
    /// Non-smooth locus of the underlying vector field, if any; the driver
    /// refuses to march across it.
    fn kink(&self, _params: &ParamPoint) -> Option<(usize, f64)> {
        None
    }
}

const EMPTY_PINNED: [usize; 0] = [];

// ---------------------------------------------------------------------------
// Equilibrium curves: unknowns [x_free, λ1].
// ---------------------------------------------------------------------------

pub struct EquilibriumExt<'a> {
    sys: &'a SystemDef,
    red: Reduction,
    base: ParamPoint,
    /// Instrument borders for the free-block fold test (None when no free
    /// components remain).
    borders: Option<BorderVectors>,
}

impl<'a> EquilibriumExt<'a> {
    pub fn new(sys: &'a SystemDef, red: Reduction, base: ParamPoint) -> Self {
        EquilibriumExt { sys, red, base, borders: None }
    }

    /// Seed the instrument borders from the free-block Jacobian at z.
    pub fn init_borders(&mut self, z: &DVector<f64>) -> Result<()> {
        if self.red.n_free() == 0 {
            return Ok(());
        }
        let (x, params) = self.decode(z);
        let j_ff = self.red.restrict_mat(&self.sys.eval_jacobian(&x, &params));
        self.borders = Some(BorderVectors::from_min_singular_pair(&j_ff)?);
        Ok(())
    }

    pub fn with_borders(mut self, borders: BorderVectors) -> Self {
        self.borders = Some(borders);
        self
    }
}

impl ExtendedSystem for EquilibriumExt<'_> {
    fn unknowns(&self) -> usize {
        self.red.n_free() + 1
    }

    fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        let (x, params) = self.decode(z);
        self.red.restrict(&self.sys.eval_rhs(&x, &params))
    }

    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let nf = self.red.n_free();
        let (x, params) = self.decode(z);
        let mut jac = DMatrix::zeros(nf, nf + 1);
        let j_full = self.sys.eval_jacobian(&x, &params);
        jac.view_mut((0, 0), (nf, nf))
            .copy_from(&self.red.restrict_mat(&j_full));
        let dlam = self
            .sys
            .eval_jac_param(&x, &params, params.active().0);
        jac.set_column(nf, &self.red.restrict(&dlam));
        jac
    }

    fn lambda_slots(&self) -> (usize, Option<usize>) {
        (self.red.n_free(), None)
    }

    fn decode(&self, z: &DVector<f64>) -> (DVector<f64>, ParamPoint) {
        let nf = self.red.n_free();
        let x = self.red.embed(&z.rows(0, nf).into_owned());
        let mut params = self.base.clone();
        params.set_lambda1(z[nf]);
        (x, params)
    }

    fn evaluate(&self, z: &DVector<f64>, _tangent: &DVector<f64>) -> Result<PointEval> {
        let (x, params) = self.decode(z);
        let j_full = self.sys.eval_jacobian(&x, &params);
        let eig = sorted_eigenvalues(&j_full);
        let mut testvals = BTreeMap::new();
        let mut p_norm = 1.0;
        let mut q_norm = 1.0;
        if let Some(borders) = &self.borders {
            let j_ff = self.red.restrict_mat(&j_full);
            let bf = solve_bordered(&j_ff, borders)?;
            testvals.insert(TestId::Gamma, bf.gamma);
            p_norm = bf.p.norm();
            q_norm = bf.q.norm();
        }
        testvals.insert(TestId::Hopf, hopf_test_value(&eig));
        for &i in self.red.pinned() {
            testvals.insert(TestId::Transversal(i), j_full[(i, i)]);
        }
        Ok(PointEval {
            x,
            params,
            testvals,
            eigenvalues: eig,
            p_norm,
            q_norm,
            boundary: !self.red.pinned().is_empty(),
        })
    }

    fn refresh(&mut self, z: &DVector<f64>) {
        if let Some(borders) = &self.borders {
            let (x, params) = self.decode(z);
            let j_ff = self.red.restrict_mat(&self.sys.eval_jacobian(&x, &params));
            if let Ok(bf) = solve_bordered(&j_ff, borders) {
                if bf.p.norm() > 1e-14 && bf.q.norm() > 1e-14 {
                    self.borders =
                        Some(BorderVectors::new(bf.p.normalize(), bf.q.normalize()));
                }
            }
        }
    }

    fn monitored(&self) -> Vec<TestId> {
        let mut m = Vec::new();
        if self.red.n_free() > 0 {
            m.push(TestId::Gamma);
            m.push(TestId::Hopf);
        }
        for &i in self.red.pinned() {
            m.push(TestId::Transversal(i));
        }
        m
    }

    fn curve_kind(&self) -> CurveKind {
        CurveKind::Equilibrium
    }

    fn pinned(&self) -> &[usize] {
        self.red.pinned()
    }

    fn boundary_proximity(&self, x: &DVector<f64>) -> Option<usize> {
        for &i in self.sys.invariant_components() {
            if !self.red.pinned().contains(&i) && x[i].abs() <= 1e-6 {
                return Some(i);
            }
        }
        None
    }

    fn plane_components(&self) -> Vec<usize> {
        free_invariant_components(self.sys, &self.red)
    }

    fn kink(&self, params: &ParamPoint) -> Option<(usize, f64)> {
        self.sys.kink_location(params)
    }
}

fn free_invariant_components(sys: &SystemDef, red: &Reduction) -> Vec<usize> {
    sys.invariant_components()
        .iter()
        .copied()
        .filter(|i| !red.pinned().contains(i))
        .collect()
}

// ---------------------------------------------------------------------------
// Fold curves: unknowns [x_free, q_free, λ1, λ2].
// ---------------------------------------------------------------------------

pub struct FoldExt<'a> {
    sys: &'a SystemDef,
    red: Reduction,
    base: ParamPoint,
    /// Full-system instrument borders for the test functions.
    inst: BorderVectors,
}

impl<'a> FoldExt<'a> {
    pub fn new(sys: &'a SystemDef, red: Reduction, base: ParamPoint, inst: BorderVectors) -> Self {
        FoldExt { sys, red, base, inst }
    }

    fn split(&self, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let nf = self.red.n_free();
        (z.rows(0, nf).into_owned(), z.rows(nf, nf).into_owned())
    }
}

impl ExtendedSystem for FoldExt<'_> {
    fn unknowns(&self) -> usize {
        2 * self.red.n_free() + 2
    }

    fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        let nf = self.red.n_free();
        let (x, params) = self.decode(z);
        let (_, qf) = self.split(z);
        let f = self.red.restrict(&self.sys.eval_rhs(&x, &params));
        let j_ff = self.red.restrict_mat(&self.sys.eval_jacobian(&x, &params));
        let jq = &j_ff * &qf;
        let mut res = DVector::zeros(2 * nf + 1);
        res.rows_mut(0, nf).copy_from(&f);
        res.rows_mut(nf, nf).copy_from(&jq);
        res[2 * nf] = qf.dot(&qf) - 1.0;
        res
    }

    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let nf = self.red.n_free();
        let n = self.red.n;
        let (x, params) = self.decode(z);
        let (_, qf) = self.split(z);
        let q_full = self.red.embed(&qf);
        let j_full = self.sys.eval_jacobian(&x, &params);
        let j_ff = self.red.restrict_mat(&j_full);

        let mut jac = DMatrix::zeros(2 * nf + 1, 2 * nf + 2);
        jac.view_mut((0, 0), (nf, nf)).copy_from(&j_ff);
        jac.view_mut((nf, nf), (nf, nf)).copy_from(&j_ff);
        // d(J_ff q)/dx_k = B(q, e_k) restricted to the free block.
        for (col, &k) in self.red.free().iter().enumerate() {
            let b = self
                .sys
                .eval_hess_action(&x, &params, &q_full, &unit_full(n, k));
            let br = self.red.restrict(&b);
            for r in 0..nf {
                jac[(nf + r, col)] = br[r];
            }
        }
        // Parameter columns.
        let (i1, i2) = params.active();
        for (slot, idx) in [(2 * nf, i1), (2 * nf + 1, i2)] {
            let df = self.red.restrict(&self.sys.eval_jac_param(&x, &params, idx));
            let djq = self
                .red
                .restrict(&self.sys.eval_jac_dparam_action(&x, &params, idx, &q_full));
            for r in 0..nf {
                jac[(r, slot)] = df[r];
                jac[(nf + r, slot)] = djq[r];
            }
        }
        // Normalization row d(qᵀq − 1).
        for c in 0..nf {
            jac[(2 * nf, nf + c)] = 2.0 * qf[c];
        }
        jac
    }

    fn lambda_slots(&self) -> (usize, Option<usize>) {
        let nf = self.red.n_free();
        (2 * nf, Some(2 * nf + 1))
    }

    fn decode(&self, z: &DVector<f64>) -> (DVector<f64>, ParamPoint) {
        let nf = self.red.n_free();
        let x = self.red.embed(&z.rows(0, nf).into_owned());
        let mut params = self.base.clone();
        params.set_lambda1(z[2 * nf]);
        params.set_lambda2(z[2 * nf + 1]);
        (x, params)
    }

    fn evaluate(&self, z: &DVector<f64>, tangent: &DVector<f64>) -> Result<PointEval> {
        let (x, params) = self.decode(z);
        let j_full = self.sys.eval_jacobian(&x, &params);
        let eig = sorted_eigenvalues(&j_full);
        let bf = solve_bordered(&j_full, &self.inst)?;
        let bt = solve_bt_bordered(&j_full, &self.inst, &bf.p, &bf.q)?;
        let (s1, s2) = self.lambda_slots();
        let alpha = alpha_sntc(
            self.sys,
            &x,
            &params,
            &bf.p,
            (tangent[s1], tangent[s2.unwrap()]),
        )?;
        let bc = beta_cusp(self.sys, &x, &params, &bf.p, &bf.q);
        let mut testvals = BTreeMap::new();
        testvals.insert(TestId::Gamma, bf.gamma);
        testvals.insert(TestId::Alpha, alpha);
        testvals.insert(TestId::BetaCusp, bc);
        testvals.insert(TestId::BetaBt, bt.beta_bt);
        // Signed distance to each invariant plane the curve could cross.
        for i in free_invariant_components(self.sys, &self.red) {
            testvals.insert(TestId::Transversal(i), x[i]);
        }
        Ok(PointEval {
            boundary: !self.red.pinned().is_empty(),
            p_norm: bf.p.norm(),
            q_norm: bf.q.norm(),
            x,
            params,
            testvals,
            eigenvalues: eig,
        })
    }

    fn refresh(&mut self, z: &DVector<f64>) {
        let (x, params) = self.decode(z);
        let j_full = self.sys.eval_jacobian(&x, &params);
        if let Ok(bf) = solve_bordered(&j_full, &self.inst) {
            if bf.p.norm() > 1e-14 && bf.q.norm() > 1e-14 {
                self.inst = BorderVectors::new(bf.p.normalize(), bf.q.normalize());
            }
        }
    }

    fn monitored(&self) -> Vec<TestId> {
        let mut m = vec![TestId::BetaBt, TestId::BetaCusp];
        for i in free_invariant_components(self.sys, &self.red) {
            m.push(TestId::Transversal(i));
        }
        m
    }

    fn curve_kind(&self) -> CurveKind {
        CurveKind::Fold
    }

    fn pinned(&self) -> &[usize] {
        self.red.pinned()
    }

    fn plane_components(&self) -> Vec<usize> {
        free_invariant_components(self.sys, &self.red)
    }

    fn kink(&self, params: &ParamPoint) -> Option<(usize, f64)> {
        self.sys.kink_location(params)
    }
}

// ---------------------------------------------------------------------------
// Transcritical curves: unknowns [x_free, λ1, λ2], defined by f_free = 0 and
// the transversal eigenvalue J_ii = 0 of the exchange component i.
// ---------------------------------------------------------------------------

pub struct TcExt<'a> {
    sys: &'a SystemDef,
    red: Reduction,
    base: ParamPoint,
    tc_component: usize,
    inst: BorderVectors,
}

impl<'a> TcExt<'a> {
    pub fn new(
        sys: &'a SystemDef,
        red: Reduction,
        base: ParamPoint,
        tc_component: usize,
        inst: BorderVectors,
    ) -> Self {
        TcExt { sys, red, base, tc_component, inst }
    }

    pub fn tc_component(&self) -> usize {
        self.tc_component
    }
}

impl ExtendedSystem for TcExt<'_> {
    fn unknowns(&self) -> usize {
        self.red.n_free() + 2
    }

    fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        let nf = self.red.n_free();
        let (x, params) = self.decode(z);
        let f = self.red.restrict(&self.sys.eval_rhs(&x, &params));
        let j_full = self.sys.eval_jacobian(&x, &params);
        let mut res = DVector::zeros(nf + 1);
        res.rows_mut(0, nf).copy_from(&f);
        res[nf] = j_full[(self.tc_component, self.tc_component)];
        res
    }

    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let nf = self.red.n_free();
        let n = self.red.n;
        let i = self.tc_component;
        let (x, params) = self.decode(z);
        let j_full = self.sys.eval_jacobian(&x, &params);
        let e_i = unit_full(n, i);

        let mut jac = DMatrix::zeros(nf + 1, nf + 2);
        jac.view_mut((0, 0), (nf, nf))
            .copy_from(&self.red.restrict_mat(&j_full));
        // d J_ii / dx_k = B(e_i, e_k)_i.
        for (col, &k) in self.red.free().iter().enumerate() {
            jac[(nf, col)] = self.sys.eval_hess_action(&x, &params, &e_i, &unit_full(n, k))[i];
        }
        let (i1, i2) = params.active();
        for (slot, idx) in [(nf, i1), (nf + 1, i2)] {
            let df = self.red.restrict(&self.sys.eval_jac_param(&x, &params, idx));
            for r in 0..nf {
                jac[(r, slot)] = df[r];
            }
            jac[(nf, slot)] = self.sys.eval_jac_dparam_action(&x, &params, idx, &e_i)[i];
        }
        jac
    }

    fn lambda_slots(&self) -> (usize, Option<usize>) {
        let nf = self.red.n_free();
        (nf, Some(nf + 1))
    }

    fn decode(&self, z: &DVector<f64>) -> (DVector<f64>, ParamPoint) {
        let nf = self.red.n_free();
        let x = self.red.embed(&z.rows(0, nf).into_owned());
        let mut params = self.base.clone();
        params.set_lambda1(z[nf]);
        params.set_lambda2(z[nf + 1]);
        (x, params)
    }

    fn evaluate(&self, z: &DVector<f64>, tangent: &DVector<f64>) -> Result<PointEval> {
        let (x, params) = self.decode(z);
        let j_full = self.sys.eval_jacobian(&x, &params);
        let eig = sorted_eigenvalues(&j_full);
        let bf = solve_bordered(&j_full, &self.inst)?;
        let bt = solve_bt_bordered(&j_full, &self.inst, &bf.p, &bf.q)?;
        let (s1, s2) = self.lambda_slots();
        let alpha = alpha_sntc(
            self.sys,
            &x,
            &params,
            &bf.p,
            (tangent[s1], tangent[s2.unwrap()]),
        )?;
        let bc = beta_cusp(self.sys, &x, &params, &bf.p, &bf.q);
        let mut testvals = BTreeMap::new();
        testvals.insert(TestId::Gamma, bf.gamma);
        testvals.insert(TestId::Alpha, alpha);
        testvals.insert(TestId::BetaCusp, bc);
        testvals.insert(TestId::BetaBt, bt.beta_bt);
        testvals.insert(TestId::Hopf, hopf_test_value(&eig));
        Ok(PointEval {
            boundary: true,
            p_norm: bf.p.norm(),
            q_norm: bf.q.norm(),
            x,
            params,
            testvals,
            eigenvalues: eig,
        })
    }

    fn refresh(&mut self, z: &DVector<f64>) {
        let (x, params) = self.decode(z);
        let j_full = self.sys.eval_jacobian(&x, &params);
        if let Ok(bf) = solve_bordered(&j_full, &self.inst) {
            if bf.p.norm() > 1e-14 && bf.q.norm() > 1e-14 {
                self.inst = BorderVectors::new(bf.p.normalize(), bf.q.normalize());
            }
        }
    }

    fn monitored(&self) -> Vec<TestId> {
        vec![TestId::BetaBt, TestId::BetaCusp, TestId::Hopf]
    }

    fn curve_kind(&self) -> CurveKind {
        CurveKind::Transcritical
    }

    fn pinned(&self) -> &[usize] {
        self.red.pinned()
    }

    fn kink(&self, params: &ParamPoint) -> Option<(usize, f64)> {
        self.sys.kink_location(params)
    }
}

// ---------------------------------------------------------------------------
// Hopf curves: unknowns [x, w_r, w_i, ω, λ1, λ2].
// ---------------------------------------------------------------------------

pub struct HopfExt<'a> {
    sys: &'a SystemDef,
    base: ParamPoint,
    w_r_ref: DVector<f64>,
    w_i_ref: DVector<f64>,
}

/// Frequency below which a Hopf curve point counts as a zero-frequency
/// endpoint (a double-zero of the Jacobian).
pub const OMEGA_STOP: f64 = 1e-5;

impl<'a> HopfExt<'a> {
    pub fn new(
        sys: &'a SystemDef,
        base: ParamPoint,
        w_r_ref: DVector<f64>,
        w_i_ref: DVector<f64>,
    ) -> Self {
        HopfExt { sys, base, w_r_ref, w_i_ref }
    }

    fn n(&self) -> usize {
        self.w_r_ref.len()
    }

    fn split(&self, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>, f64) {
        let n = self.n();
        (
            z.rows(0, n).into_owned(),
            z.rows(n, n).into_owned(),
            z.rows(2 * n, n).into_owned(),
            z[3 * n],
        )
    }
}

impl ExtendedSystem for HopfExt<'_> {
    fn unknowns(&self) -> usize {
        3 * self.n() + 3
    }

    fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let (x, params) = self.decode(z);
        let (_, wr, wi, omega) = self.split(z);
        let f = self.sys.eval_rhs(&x, &params);
        let j = self.sys.eval_jacobian(&x, &params);
        let r2 = &j * &wr + &wi * omega;
        let r3 = &j * &wi - &wr * omega;
        let mut res = DVector::zeros(3 * n + 2);
        res.rows_mut(0, n).copy_from(&f);
        res.rows_mut(n, n).copy_from(&r2);
        res.rows_mut(2 * n, n).copy_from(&r3);
        res[3 * n] = wr.dot(&wr) + wi.dot(&wi) - 1.0;
        res[3 * n + 1] = self.w_r_ref.dot(&wi) - self.w_i_ref.dot(&wr);
        res
    }

    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let (x, params) = self.decode(z);
        let (_, wr, wi, omega) = self.split(z);
        let j = self.sys.eval_jacobian(&x, &params);
        let mut jac = DMatrix::zeros(3 * n + 2, 3 * n + 3);

        jac.view_mut((0, 0), (n, n)).copy_from(&j);
        jac.view_mut((n, n), (n, n)).copy_from(&j);
        jac.view_mut((2 * n, 2 * n), (n, n)).copy_from(&j);
        for r in 0..n {
            jac[(n + r, 2 * n + r)] += omega;
            jac[(2 * n + r, n + r)] -= omega;
            jac[(n + r, 3 * n)] = wi[r];
            jac[(2 * n + r, 3 * n)] = -wr[r];
        }
        // State derivatives of the eigen rows: B(w, e_k).
        for k in 0..n {
            let e_k = unit_full(n, k);
            let br = self.sys.eval_hess_action(&x, &params, &wr, &e_k);
            let bi = self.sys.eval_hess_action(&x, &params, &wi, &e_k);
            for r in 0..n {
                jac[(n + r, k)] = br[r];
                jac[(2 * n + r, k)] = bi[r];
            }
        }
        let (i1, i2) = params.active();
        for (slot, idx) in [(3 * n + 1, i1), (3 * n + 2, i2)] {
            let df = self.sys.eval_jac_param(&x, &params, idx);
            let djr = self.sys.eval_jac_dparam_action(&x, &params, idx, &wr);
            let dji = self.sys.eval_jac_dparam_action(&x, &params, idx, &wi);
            for r in 0..n {
                jac[(r, slot)] = df[r];
                jac[(n + r, slot)] = djr[r];
                jac[(2 * n + r, slot)] = dji[r];
            }
        }
        for c in 0..n {
            jac[(3 * n, n + c)] = 2.0 * wr[c];
            jac[(3 * n, 2 * n + c)] = 2.0 * wi[c];
            jac[(3 * n + 1, n + c)] = -self.w_i_ref[c];
            jac[(3 * n + 1, 2 * n + c)] = self.w_r_ref[c];
        }
        jac
    }

    fn lambda_slots(&self) -> (usize, Option<usize>) {
        let n = self.n();
        (3 * n + 1, Some(3 * n + 2))
    }

    fn decode(&self, z: &DVector<f64>) -> (DVector<f64>, ParamPoint) {
        let n = self.n();
        let x = z.rows(0, n).into_owned();
        let mut params = self.base.clone();
        params.set_lambda1(z[3 * n + 1]);
        params.set_lambda2(z[3 * n + 2]);
        (x, params)
    }

    fn evaluate(&self, z: &DVector<f64>, _tangent: &DVector<f64>) -> Result<PointEval> {
        let (x, params) = self.decode(z);
        let (_, _, _, omega) = self.split(z);
        let j = self.sys.eval_jacobian(&x, &params);
        let eig = sorted_eigenvalues(&j);
        let mut testvals = BTreeMap::new();
        testvals.insert(TestId::Omega, omega);
        let boundary = self
            .sys
            .invariant_components()
            .iter()
            .any(|&i| x[i].abs() <= 1e-9);
        Ok(PointEval {
            x,
            params,
            testvals,
            eigenvalues: eig,
            p_norm: 1.0,
            q_norm: 1.0,
            boundary,
        })
    }

    fn refresh(&mut self, z: &DVector<f64>) {
        let (_, wr, wi, _) = self.split(z);
        self.w_r_ref = wr;
        self.w_i_ref = wi;
    }

    fn monitored(&self) -> Vec<TestId> {
        Vec::new()
    }

    fn curve_kind(&self) -> CurveKind {
        CurveKind::Hopf
    }

    fn pinned(&self) -> &[usize] {
        &EMPTY_PINNED
    }

    fn reject_point(&self, z: &DVector<f64>) -> bool {
        // The curve may not cross into negative frequencies (the mirror
        // branch); shrinking steps instead walks it down to the stop value.
        z[3 * self.n()] < 0.0
    }

    fn hard_stop(&self, eval: &PointEval) -> Option<Termination> {
        let omega = eval.testvals.get(&TestId::Omega).copied().unwrap_or(f64::NAN);
        if omega <= OMEGA_STOP {
            Some(Termination::ZeroFrequency)
        } else {
            None
        }
    }

    fn kink(&self, params: &ParamPoint) -> Option<(usize, f64)> {
        self.sys.kink_location(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{kooi_system, normal_form_system, KooiParams, NormalFormId};

    /// Central finite differences of the residual, for validating the
    /// hand-assembled extended Jacobians.
    fn fd_extended_jacobian<E: ExtendedSystem>(ext: &E, z: &DVector<f64>) -> DMatrix<f64> {
        let u = ext.unknowns();
        let m = u - 1;
        let mut jac = DMatrix::zeros(m, u);
        for c in 0..u {
            let h = 1e-6 * z[c].abs().max(1.0);
            let mut zp = z.clone();
            zp[c] += h;
            let mut zm = z.clone();
            zm[c] -= h;
            let col = (ext.residual(&zp) - ext.residual(&zm)) / (2.0 * h);
            jac.set_column(c, &col);
        }
        jac
    }

    fn assert_jacobian_consistent<E: ExtendedSystem>(ext: &E, z: &DVector<f64>, tol: f64) {
        let analytic = ext.jacobian(z);
        let fd = fd_extended_jacobian(ext, z);
        let scale = analytic.amax().max(1.0);
        let diff = (&analytic - &fd).amax() / scale;
        assert!(
            diff < tol,
            "extended jacobian mismatch {diff:.3e}\nanalytic {analytic}\nfd {fd}"
        );
    }

    #[test]
    fn equilibrium_ext_jacobian_matches_fd() {
        let kp = KooiParams::default();
        let sys = kooi_system(kp);
        let params = sys.params(&[], ("D", "N_r")).unwrap();
        let red = Reduction::new(3, &[2]);
        let ext = EquilibriumExt::new(&sys, red, params);
        let z = DVector::from_vec(vec![3.1, 1.4, 0.13]);
        assert_jacobian_consistent(&ext, &z, 1e-6);
    }

    #[test]
    fn fold_ext_jacobian_matches_fd() {
        let kp = KooiParams::default();
        let sys = kooi_system(kp);
        let params = sys.params(&[], ("N_r", "D")).unwrap();
        let red = Reduction::new(3, &[2]);
        let inst = BorderVectors::new(
            DVector::from_vec(vec![0.3, 0.6, 0.74]).normalize(),
            DVector::from_vec(vec![0.7, -0.1, 0.7]).normalize(),
        );
        let ext = FoldExt::new(&sys, red, params, inst);
        let z = DVector::from_vec(vec![3.1, 1.4, 0.8, 0.6, 11.0, 0.13]);
        assert_jacobian_consistent(&ext, &z, 1e-5);
    }

    #[test]
    fn tc_ext_jacobian_matches_fd() {
        let kp = KooiParams::default();
        let sys = kooi_system(kp);
        let params = sys.params(&[], ("N_r", "D")).unwrap();
        let red = Reduction::new(3, &[2]);
        let inst = BorderVectors::new(
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
            DVector::from_vec(vec![0.5, 0.5, 0.70]).normalize(),
        );
        let ext = TcExt::new(&sys, red, params, 2, inst);
        let z = DVector::from_vec(vec![3.1, 1.4, 11.0, 0.13]);
        assert_jacobian_consistent(&ext, &z, 1e-5);
    }

    #[test]
    fn hopf_ext_jacobian_matches_fd() {
        let kp = KooiParams::default();
        let sys = kooi_system(kp);
        let params = sys.params(&[], ("N_r", "D")).unwrap();
        let wr = DVector::from_vec(vec![0.5, -0.3, 0.4]);
        let wi = DVector::from_vec(vec![0.1, 0.5, -0.2]);
        let ext = HopfExt::new(&sys, params, wr.clone(), wi.clone());
        let mut z = DVector::zeros(12);
        z.rows_mut(0, 3)
            .copy_from(&DVector::from_vec(vec![11.0, 2.5, 0.2]));
        z.rows_mut(3, 3).copy_from(&wr);
        z.rows_mut(6, 3).copy_from(&wi);
        z[9] = 0.07;
        z[10] = 24.0;
        z[11] = 0.14;
        assert_jacobian_consistent(&ext, &z, 1e-5);
    }

    #[test]
    fn reduction_embeds_pinned_components_as_exact_zeros() {
        let red = Reduction::new(4, &[1, 3]);
        assert_eq!(red.free(), &[0, 2]);
        let x = red.embed(&DVector::from_vec(vec![2.0, 5.0]));
        assert_eq!(x.as_slice(), &[2.0, 0.0, 5.0, 0.0]);
        assert_eq!(red.restrict(&x).as_slice(), &[2.0, 5.0]);
    }

    #[test]
    fn hopf_test_value_needs_a_complex_pair() {
        let j = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        assert!(hopf_test_value(&sorted_eigenvalues(&j)).is_nan());
        let j = DMatrix::from_row_slice(2, 2, &[0.3, -1.0, 1.0, 0.3]);
        let v = hopf_test_value(&sorted_eigenvalues(&j));
        assert!((v - 0.3).abs() < 1e-12);
    }

    #[test]
    fn fold_ext_residual_vanishes_on_the_cusp_fold_curve() {
        let sys = normal_form_system(&NormalFormId::Cusp).unwrap();
        let params = sys.params(&[], ("a", "b")).unwrap();
        let red = Reduction::new(1, &[]);
        let inst = BorderVectors::new(DVector::from_vec(vec![1.0]), DVector::from_vec(vec![1.0]));
        let ext = FoldExt::new(&sys, red, params, inst);
        // x = 1, q = 1, a = 2, b = −3 is a fold point.
        let z = DVector::from_vec(vec![1.0, 1.0, 2.0, -3.0]);
        assert!(ext.residual(&z).amax() < 1e-14);
        assert_jacobian_consistent(&ext, &z, 1e-6);
    }
}
