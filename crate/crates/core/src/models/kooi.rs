//! The stressed predator-prey-nutrient chemostat model.
//!
//! Three densities — nutrient N, prey R, predator P — in a well-mixed basin
//! with inflow nutrient density N_r and flow rate D. A toxicant at inflow
//! concentration c_r raises the prey's maintenance rate m_R(R); the toxicant
//! concentration is assumed equilibrated, which makes m_R an explicit function
//! of R with a kink where the no-effect threshold is crossed:
//!
//!   dN/dt = (N_r − N)·D − I_NR·N/(κ_NR + N)·R
//!   dR/dt = (μ_NR·N/(κ_NR + N) − D − m_R(R))·R − I_RP·R/(κ_RP + R)·P
//!   dP/dt = (μ_RP·R/(κ_RP + R) − D − m_P0)·P
//!   m_R(R) = m_R0 + (m_R0/c_RM)·max{BCF·c_r/(1 + BCF·R) − c_RM0, 0}
//!
//! The coordinate planes R = 0 and P = 0 are invariant: species that are
//! absent stay absent. The default parameter set is the bacterium-ciliate one;
//! μ_RP, c_r, N_r and D are the knobs the bundled scenarios vary.

use nalgebra::{DMatrix, DVector};

use crate::error::{BifError, Result};
use crate::system::SystemDef;

// Parameter vector layout shared by all closures below.
const MU_NR: usize = 0;
const I_NR: usize = 1;
const KAPPA_NR: usize = 2;
const M_R0: usize = 3;
const C_RM0: usize = 4;
const C_RM: usize = 5;
const BCF: usize = 6;
const MU_RP: usize = 7;
const I_RP: usize = 8;
const KAPPA_RP: usize = 9;
const M_P0: usize = 10;
const C_R: usize = 11;
const N_R: usize = 12;
const D: usize = 13;

pub const KOOI_PARAM_NAMES: [&str; 14] = [
    "mu_NR", "I_NR", "kappa_NR", "m_R0", "c_RM0", "c_RM", "BCF", "mu_RP", "I_RP", "kappa_RP",
    "m_P0", "c_r", "N_r", "D",
];

/// Model parameters. The first eleven are the bacterium-ciliate constants;
/// `mu_RP`, `c_r`, `N_r`, `D` select the studied regimes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KooiParams {
    pub mu_nr: f64,
    pub i_nr: f64,
    pub kappa_nr: f64,
    pub m_r0: f64,
    pub c_rm0: f64,
    pub c_rm: f64,
    pub bcf: f64,
    pub mu_rp: f64,
    pub i_rp: f64,
    pub kappa_rp: f64,
    pub m_p0: f64,
    pub c_r: f64,
    pub n_r: f64,
    pub d: f64,
    /// Optional smoothing width δ for the maintenance-rate kink: replaces
    /// max{u, 0} by (u + √(u² + δ²))/2. `None` keeps the exact piecewise form.
    pub smoothing_delta: Option<f64>,
}

impl Default for KooiParams {
    fn default() -> Self {
        KooiParams {
            mu_nr: 0.5,
            i_nr: 1.25,
            kappa_nr: 8.0,
            m_r0: 0.025,
            c_rm0: 0.1,
            c_rm: 0.5,
            bcf: 1.0,
            mu_rp: 0.2,
            i_rp: 0.333,
            kappa_rp: 9.0,
            m_p0: 0.01,
            c_r: 1.0,
            n_r: 10.0,
            d: 0.1,
            smoothing_delta: None,
        }
    }
}

impl KooiParams {
    pub fn to_values(&self) -> Vec<f64> {
        vec![
            self.mu_nr,
            self.i_nr,
            self.kappa_nr,
            self.m_r0,
            self.c_rm0,
            self.c_rm,
            self.bcf,
            self.mu_rp,
            self.i_rp,
            self.kappa_rp,
            self.m_p0,
            self.c_r,
            self.n_r,
            self.d,
        ]
    }

    pub fn from_values(values: &[f64], smoothing_delta: Option<f64>) -> Self {
        assert_eq!(values.len(), 14);
        KooiParams {
            mu_nr: values[MU_NR],
            i_nr: values[I_NR],
            kappa_nr: values[KAPPA_NR],
            m_r0: values[M_R0],
            c_rm0: values[C_RM0],
            c_rm: values[C_RM],
            bcf: values[BCF],
            mu_rp: values[MU_RP],
            i_rp: values[I_RP],
            kappa_rp: values[KAPPA_RP],
            m_p0: values[M_P0],
            c_r: values[C_R],
            n_r: values[N_R],
            d: values[D],
            smoothing_delta,
        }
    }
}

/// m_R and the derivatives of it that the Jacobian, Hessian action and
/// parameter derivatives need, evaluated in one place so every consumer uses
/// the same branch of the max.
struct MrEval {
    m: f64,
    d_r: f64,
    d_rr: f64,
    d_m_r0: f64,
    d_c_rm0: f64,
    d_c_rm: f64,
    d_bcf: f64,
    d_c_r: f64,
}

fn mr_eval(r: f64, p: &[f64], delta: Option<f64>) -> MrEval {
    let (m_r0, c_rm0, c_rm, bcf, c_r) = (p[M_R0], p[C_RM0], p[C_RM], p[BCF], p[C_R]);
    let denom = 1.0 + bcf * r;
    let u = bcf * c_r / denom;
    let du_dr = -bcf * bcf * c_r / (denom * denom);
    let d2u_drr = 2.0 * bcf * bcf * bcf * c_r / (denom * denom * denom);
    let du_dbcf = c_r / (denom * denom);
    let du_dcr = bcf / denom;
    let w = u - c_rm0;

    // s(w) ≈ max{w, 0} and its first two derivatives in w.
    let (s, s1, s2) = match delta {
        None => {
            if w > 0.0 {
                (w, 1.0, 0.0)
            } else {
                (0.0, 0.0, 0.0)
            }
        }
        Some(d) => {
            let root = (w * w + d * d).sqrt();
            ((w + root) / 2.0, (1.0 + w / root) / 2.0, d * d / (2.0 * root * root * root))
        }
    };

    let scale = m_r0 / c_rm;
    MrEval {
        m: m_r0 + scale * s,
        d_r: scale * s1 * du_dr,
        d_rr: scale * (s2 * du_dr * du_dr + s1 * d2u_drr),
        d_m_r0: 1.0 + s / c_rm,
        d_c_rm0: -scale * s1,
        d_c_rm: -m_r0 / (c_rm * c_rm) * s,
        d_bcf: scale * s1 * du_dbcf,
        d_c_r: scale * s1 * du_dcr,
    }
}

/// The prey maintenance rate m_R(R). Constant m_R0 above the kink
/// R* = (BCF·c_r/c_RM0 − 1)/BCF, elevated by the ingested toxicant below it.
pub fn kooi_maintenance_rate(r: f64, kp: &KooiParams) -> Result<f64> {
    if r < 0.0 {
        return Err(BifError::Domain(format!(
            "maintenance rate needs a nonnegative prey density, got R = {r}"
        )));
    }
    Ok(mr_eval(r, &kp.to_values(), kp.smoothing_delta).m)
}

/// Prey-density location of the m_R kink, if it sits at positive density.
pub fn kink_prey_density(kp: &KooiParams) -> Option<f64> {
    if kp.smoothing_delta.is_some() {
        return None;
    }
    let rstar = (kp.bcf * kp.c_r / kp.c_rm0 - 1.0) / kp.bcf;
    (rstar > 0.0).then_some(rstar)
}

/// Build the model as a [`SystemDef`] with analytic first and second
/// derivatives. States are (N, R, P); the default active parameter pair is
/// (N_r, D).
pub fn kooi_system(kp: KooiParams) -> SystemDef {
    let delta = kp.smoothing_delta;

    let rhs = move |x: &[f64], p: &[f64]| -> DVector<f64> {
        let (n, r, pd) = (x[0], x[1], x[2]);
        let gn = n / (p[KAPPA_NR] + n);
        let gr = r / (p[KAPPA_RP] + r);
        let mr = mr_eval(r, p, delta).m;
        DVector::from_vec(vec![
            (p[N_R] - n) * p[D] - p[I_NR] * gn * r,
            (p[MU_NR] * gn - p[D] - mr) * r - p[I_RP] * gr * pd,
            (p[MU_RP] * gr - p[D] - p[M_P0]) * pd,
        ])
    };

    let jac = move |x: &[f64], p: &[f64]| -> DMatrix<f64> {
        let (n, r, pd) = (x[0], x[1], x[2]);
        let gn = n / (p[KAPPA_NR] + n);
        let gn1 = p[KAPPA_NR] / ((p[KAPPA_NR] + n) * (p[KAPPA_NR] + n));
        let gr = r / (p[KAPPA_RP] + r);
        let gr1 = p[KAPPA_RP] / ((p[KAPPA_RP] + r) * (p[KAPPA_RP] + r));
        let mr = mr_eval(r, p, delta);
        DMatrix::from_row_slice(
            3,
            3,
            &[
                -p[D] - p[I_NR] * gn1 * r,
                -p[I_NR] * gn,
                0.0,
                p[MU_NR] * gn1 * r,
                p[MU_NR] * gn - p[D] - mr.m - r * mr.d_r - p[I_RP] * gr1 * pd,
                -p[I_RP] * gr,
                0.0,
                p[MU_RP] * gr1 * pd,
                p[MU_RP] * gr - p[D] - p[M_P0],
            ],
        )
    };

    let jac_param = move |x: &[f64], p: &[f64], idx: usize| -> DVector<f64> {
        let (n, r, pd) = (x[0], x[1], x[2]);
        let gn = n / (p[KAPPA_NR] + n);
        let gr = r / (p[KAPPA_RP] + r);
        let mr = mr_eval(r, p, delta);
        let (a, b, c) = match idx {
            MU_NR => (0.0, gn * r, 0.0),
            I_NR => (-gn * r, 0.0, 0.0),
            KAPPA_NR => {
                let dgn = -n / ((p[KAPPA_NR] + n) * (p[KAPPA_NR] + n));
                (-p[I_NR] * dgn * r, p[MU_NR] * dgn * r, 0.0)
            }
            M_R0 => (0.0, -mr.d_m_r0 * r, 0.0),
            C_RM0 => (0.0, -mr.d_c_rm0 * r, 0.0),
            C_RM => (0.0, -mr.d_c_rm * r, 0.0),
            BCF => (0.0, -mr.d_bcf * r, 0.0),
            MU_RP => (0.0, 0.0, gr * pd),
            I_RP => (0.0, -gr * pd, 0.0),
            KAPPA_RP => {
                let dgr = -r / ((p[KAPPA_RP] + r) * (p[KAPPA_RP] + r));
                (0.0, -p[I_RP] * dgr * pd, p[MU_RP] * dgr * pd)
            }
            M_P0 => (0.0, 0.0, -pd),
            C_R => (0.0, -mr.d_c_r * r, 0.0),
            N_R => (p[D], 0.0, 0.0),
            D => (p[N_R] - n, -r, -pd),
            other => panic!("parameter index {other} out of range"),
        };
        DVector::from_vec(vec![a, b, c])
    };

    let hess_action = move |x: &[f64], p: &[f64], q1: &[f64], q2: &[f64]| -> DVector<f64> {
        let (n, r, pd) = (x[0], x[1], x[2]);
        let kn = p[KAPPA_NR] + n;
        let gn1 = p[KAPPA_NR] / (kn * kn);
        let gn2 = -2.0 * p[KAPPA_NR] / (kn * kn * kn);
        let kr = p[KAPPA_RP] + r;
        let gr1 = p[KAPPA_RP] / (kr * kr);
        let gr2 = -2.0 * p[KAPPA_RP] / (kr * kr * kr);
        let mr = mr_eval(r, p, delta);
        // Nonzero second derivatives per component:
        //   f_N: NN, NR     f_R: NN, NR, RR, RP     f_P: RR, RP
        let f_n_nn = -p[I_NR] * gn2 * r;
        let f_n_nr = -p[I_NR] * gn1;
        let f_r_nn = p[MU_NR] * gn2 * r;
        let f_r_nr = p[MU_NR] * gn1;
        let f_r_rr = -(2.0 * mr.d_r + r * mr.d_rr) - p[I_RP] * gr2 * pd;
        let f_r_rp = -p[I_RP] * gr1;
        let f_p_rr = p[MU_RP] * gr2 * pd;
        let f_p_rp = p[MU_RP] * gr1;
        let sym = |i: usize, j: usize| q1[i] * q2[j] + q1[j] * q2[i];
        DVector::from_vec(vec![
            f_n_nn * q1[0] * q2[0] + f_n_nr * sym(0, 1),
            f_r_nn * q1[0] * q2[0] + f_r_nr * sym(0, 1) + f_r_rr * q1[1] * q2[1]
                + f_r_rp * sym(1, 2),
            f_p_rr * q1[1] * q2[1] + f_p_rp * sym(1, 2),
        ])
    };

    let kink = move |p: &[f64]| -> Option<(usize, f64)> {
        if delta.is_some() {
            return None;
        }
        let rstar = (p[BCF] * p[C_R] / p[C_RM0] - 1.0) / p[BCF];
        (rstar > 0.0).then_some((1, rstar))
    };

    SystemDef::new(
        "kooi",
        &["N", "R", "P"],
        &KOOI_PARAM_NAMES,
        &kp.to_values(),
        Box::new(rhs),
    )
    .with_jacobian(Box::new(jac))
    .with_jac_param(Box::new(jac_param))
    .with_hess_action(Box::new(hess_action))
    .with_invariant_components(&[1, 2])
    .with_nonneg_components(&[0, 1, 2])
    .with_kink(Box::new(kink))
    .with_default_active("N_r", "D")
}

/// The wash-out equilibrium (N_r, 0, 0), which exists for all parameters.
pub fn washout_state(kp: &KooiParams) -> DVector<f64> {
    DVector::from_vec(vec![kp.n_r, 0.0, 0.0])
}

/// Flow rate at which the prey invades the wash-out state at the given N_r
/// (the transversal prey eigenvalue μ_NR·N_r/(κ_NR+N_r) − D − m_R(0) is zero).
pub fn prey_invasion_d(kp: &KooiParams) -> f64 {
    let values = kp.to_values();
    kp.mu_nr * kp.n_r / (kp.kappa_nr + kp.n_r) - mr_eval(0.0, &values, kp.smoothing_delta).m
}

/// Transversal predator eigenvalue at a predator-free state with prey density R.
pub fn predator_invasion_eigenvalue(kp: &KooiParams, r: f64) -> f64 {
    kp.mu_rp * r / (kp.kappa_rp + r) - kp.d - kp.m_p0
}

/// Predator-free equilibria (N, R) with R > 0, found by a scan-and-bisect on
/// the scalar balance μ_NR·g_N(N) = D + m_R(R(N)) with R(N) from the nutrient
/// balance. Sorted by N ascending.
pub fn prey_only_equilibria(kp: &KooiParams) -> Vec<(f64, f64)> {
    let values = kp.to_values();
    let r_of_n = |n: f64| (kp.n_r - n) * kp.d * (kp.kappa_nr + n) / (kp.i_nr * n);
    let h = |n: f64| {
        let r = r_of_n(n);
        kp.mu_nr * n / (kp.kappa_nr + n) - kp.d - mr_eval(r, &values, kp.smoothing_delta).m
    };

    let mut roots = Vec::new();
    let lo = 1e-9 * kp.n_r.max(1.0);
    let grid = 2000;
    let mut n_prev = lo;
    let mut h_prev = h(n_prev);
    for i in 1..=grid {
        let n = lo + (kp.n_r - lo) * i as f64 / grid as f64;
        let hn = h(n);
        if h_prev == 0.0 {
            roots.push(n_prev);
        } else if h_prev * hn < 0.0 {
            let (mut a, mut b) = (n_prev, n);
            let (mut ha, _) = (h_prev, hn);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                let hm = h(mid);
                if hm == 0.0 || (b - a) < 1e-15 * kp.n_r.max(1.0) {
                    a = mid;
                    break;
                }
                if ha * hm < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    ha = hm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        n_prev = n;
        h_prev = hn;
    }
    roots
        .into_iter()
        .map(|n| (n, r_of_n(n)))
        .filter(|&(_, r)| r > 0.0)
        .collect()
}

/// The coexistence equilibrium (N, R, P) if the predator's break-even prey
/// density exists; P may come out non-positive (then the equilibrium is not
/// ecologically admissible but still organizes the dynamics).
pub fn coexistence_equilibrium(kp: &KooiParams) -> Option<(f64, f64, f64)> {
    let net = kp.mu_rp - (kp.d + kp.m_p0);
    if net <= 0.0 {
        return None;
    }
    let rbar = kp.kappa_rp * (kp.d + kp.m_p0) / net;
    // Nutrient balance: D·N² + (I_NR·R̄ − D(N_r − κ_NR))·N − D·N_r·κ_NR = 0.
    let a = kp.d;
    let b = kp.i_nr * rbar - kp.d * (kp.n_r - kp.kappa_nr);
    let c = -kp.d * kp.n_r * kp.kappa_nr;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let n = (-b + disc.sqrt()) / (2.0 * a);
    if n <= 0.0 {
        return None;
    }
    let values = kp.to_values();
    let p = (kp.mu_nr * n / (kp.kappa_nr + n) - kp.d - mr_eval(rbar, &values, kp.smoothing_delta).m)
        * (kp.kappa_rp + rbar)
        / kp.i_rp;
    Some((n, rbar, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn maintenance_rate_matches_hand_values() {
        let kp9 = KooiParams { c_r: 9.0, ..Default::default() };
        // m_R(0) = 0.025 + (0.025/0.5)·(9 − 0.1) = 0.47
        assert!((kooi_maintenance_rate(0.0, &kp9).unwrap() - 0.47).abs() < 1e-15);
        let kp1 = KooiParams::default();
        assert!((kooi_maintenance_rate(0.0, &kp1).unwrap() - 0.07).abs() < 1e-15);
        // Far above the kink the rate is the baseline m_R0.
        assert!((kooi_maintenance_rate(1e6, &kp9).unwrap() - 0.025).abs() < 1e-9);
    }

    #[test]
    fn maintenance_rate_is_continuous_at_the_kink() {
        let kp = KooiParams { c_r: 9.0, ..Default::default() };
        let rstar = kink_prey_density(&kp).unwrap();
        assert!((rstar - 89.0).abs() < 1e-12);
        let at = kooi_maintenance_rate(rstar, &kp).unwrap();
        let below = kooi_maintenance_rate(rstar - 1e-9, &kp).unwrap();
        let above = kooi_maintenance_rate(rstar + 1e-9, &kp).unwrap();
        assert!((at - kp.m_r0).abs() < 1e-15);
        assert!((below - at).abs() < 1e-9 && (above - at).abs() < 1e-9);
    }

    #[test]
    fn negative_prey_density_is_a_domain_error() {
        let err = kooi_maintenance_rate(-0.5, &KooiParams::default()).unwrap_err();
        assert!(matches!(err, BifError::Domain(_)));
    }

    #[test]
    fn washout_is_an_exact_equilibrium() {
        let kp = KooiParams { n_r: 23.4, d: 0.17, c_r: 9.0, mu_rp: 0.7, ..Default::default() };
        let sys = kooi_system(kp);
        let p = sys.default_point();
        let f = sys.eval_rhs(&washout_state(&kp), &p);
        assert_eq!(f.amax(), 0.0);
    }

    #[test]
    fn washout_jacobian_predator_entry() {
        let kp = KooiParams::default();
        let sys = kooi_system(kp);
        let p = sys.default_point();
        let j = sys.eval_jacobian(&washout_state(&kp), &p);
        assert!((j[(2, 2)] - (-(kp.d + kp.m_p0))).abs() < 1e-15);
    }

    #[test]
    fn invariant_planes_give_exactly_zero_rhs_components() {
        let sys = kooi_system(KooiParams { c_r: 9.0, mu_rp: 0.7, ..Default::default() });
        let p = sys.default_point();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(0.0..30.0);
            let r = rng.random_range(0.0..20.0);
            let f = sys.eval_rhs(&DVector::from_vec(vec![n, r, 0.0]), &p);
            assert_eq!(f[2], 0.0);
            let f = sys.eval_rhs(&DVector::from_vec(vec![n, 0.0, r]), &p);
            assert_eq!(f[1], 0.0);
        }
    }

    #[test]
    fn rhs_matches_independent_reimplementation() {
        // Term-by-term Holling-II expressions written out separately from the
        // production closure.
        let kp = KooiParams { c_r: 9.0, mu_rp: 0.7, n_r: 24.6, d: 0.142, ..Default::default() };
        let sys = kooi_system(kp);
        let p = sys.default_point();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let n = rng.random_range(0.1..30.0);
            let r = rng.random_range(0.1..30.0);
            let pd = rng.random_range(0.1..30.0);

            let holling_nr = kp.i_nr * n / (kp.kappa_nr + n);
            let holling_rp = kp.i_rp * r / (kp.kappa_rp + r);
            let growth_r = kp.mu_nr * n / (kp.kappa_nr + n);
            let growth_p = kp.mu_rp * r / (kp.kappa_rp + r);
            let ingested = (kp.bcf * kp.c_r / (1.0 + kp.bcf * r) - kp.c_rm0).max(0.0);
            let m_r = kp.m_r0 * (1.0 + ingested / kp.c_rm);
            let expect = [
                (kp.n_r - n) * kp.d - holling_nr * r,
                (growth_r - kp.d - m_r) * r - holling_rp * pd,
                (growth_p - kp.d - kp.m_p0) * pd,
            ];

            let f = sys.eval_rhs(&DVector::from_vec(vec![n, r, pd]), &p);
            for i in 0..3 {
                let denom = expect[i].abs().max(1.0);
                assert!(
                    (f[i] - expect[i]).abs() / denom < 1e-14,
                    "component {i}: {} vs {}",
                    f[i],
                    expect[i]
                );
            }
        }
    }

    #[test]
    fn analytic_derivatives_pass_fd_check() {
        let sys = kooi_system(KooiParams { c_r: 9.0, mu_rp: 0.7, ..Default::default() });
        let p = sys.default_point();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = DVector::from_vec(vec![
                rng.random_range(0.5..25.0),
                rng.random_range(0.2..8.5),
                rng.random_range(0.1..10.0),
            ]);
            let report = sys.fd_check(&x, &p, 1e-5).unwrap();
            assert!(report.jac.unwrap() < 1e-5);
            assert!(report.jac_params.unwrap() < 1e-5);
            assert!(report.hess.unwrap() < 1e-5);
        }
    }

    #[test]
    fn fd_check_refuses_to_straddle_the_kink() {
        let kp = KooiParams { c_r: 1.0, ..Default::default() };
        let sys = kooi_system(kp);
        let p = sys.default_point();
        let rstar = kink_prey_density(&kp).unwrap(); // 9.0 at c_r = 1
        let x = DVector::from_vec(vec![5.0, rstar + 1e-9, 1.0]);
        let err = sys.fd_check(&x, &p, 1e-5).unwrap_err();
        assert!(matches!(err, BifError::KinkStraddle { component: 1, .. }));
    }

    #[test]
    fn smoothed_variant_is_differentiable_at_the_kink() {
        let kp = KooiParams { c_r: 1.0, smoothing_delta: Some(1e-3), ..Default::default() };
        let sys = kooi_system(kp);
        let p = sys.default_point();
        assert!(kink_prey_density(&kp).is_none());
        let x = DVector::from_vec(vec![5.0, 9.0, 1.0]);
        sys.fd_check(&x, &p, 1e-4).unwrap();
    }

    #[test]
    fn prey_only_equilibria_satisfy_the_rhs() {
        let kp = KooiParams { c_r: 9.0, mu_rp: 0.7, n_r: 26.0, d: 0.16, ..Default::default() };
        let sys = kooi_system(kp);
        let p = sys.default_point();
        let eqs = prey_only_equilibria(&kp);
        assert_eq!(eqs.len(), 2, "expected a saddle/node pair in region 2, got {eqs:?}");
        for (n, r) in eqs {
            let f = sys.eval_rhs(&DVector::from_vec(vec![n, r, 0.0]), &p);
            assert!(f.amax() < 1e-10, "residual {} at ({n}, {r})", f.amax());
        }
    }

    #[test]
    fn coexistence_equilibrium_satisfies_the_rhs() {
        let kp = KooiParams { c_r: 9.0, mu_rp: 0.7, n_r: 24.6, d: 0.142, ..Default::default() };
        let sys = kooi_system(kp);
        let p = sys.default_point();
        let (n, r, pd) = coexistence_equilibrium(&kp).unwrap();
        assert!(pd > 0.0);
        let f = sys.eval_rhs(&DVector::from_vec(vec![n, r, pd]), &p);
        assert!(f.amax() < 1e-12, "residual {}", f.amax());
    }

    #[test]
    fn prey_invasion_d_zeroes_the_transversal_eigenvalue() {
        let kp = KooiParams { n_r: 8.56, ..Default::default() };
        let d = prey_invasion_d(&kp);
        let kp_at = KooiParams { d, ..kp };
        let sys = kooi_system(kp_at);
        let p = sys.default_point();
        let j = sys.eval_jacobian(&washout_state(&kp_at), &p);
        assert!(j[(1, 1)].abs() < 1e-15);
        // Row structure at R = 0: the prey row decouples.
        assert_eq!(j[(1, 0)], 0.0);
        assert_eq!(j[(1, 2)], 0.0);
    }
}
