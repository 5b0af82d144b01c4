//! Normal forms for the codimension-two points the toolkit classifies, with
//! closed-form fold-curve oracles.
//!
//! - cusp:                    ẋ = a + b·x + x³
//! - single-zero SNTC:        ẋ = a·x + b·x² + x³          (x = 0 invariant)
//! - minimal double-zero SNTC (SNTC1):
//!       ẋ = y,  ẏ = a·x + k₁b·y + b·x² + k₂·xy + x²y + ε·x³ + k₃·x⁴
//!   with 2εk₁² − k₁k₂ = 1 and 3k₁k₃ = 1, all of k₁, k₂, k₃ nonzero
//! - formal double-zero SNTC (SNTC2):
//!       ẋ = a + y + μ₁x²,  ẏ = b·y + μ₂·xy               (y = 0 invariant)
//! - Bogdanov–Takens:         ẋ = y,  ẏ = λ₁ + λ₂x + a₂x² + b₂xy
//!
//! The SNTC forms are the ones standard fold-curve test functions misreport
//! (as cusp for the single zero, as BT for the double zero); they are the
//! oracles for the α test function.

use nalgebra::{DMatrix, DVector};

use crate::error::{BifError, Result};
use crate::system::SystemDef;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormalFormId {
    Cusp,
    SntcSingleZero,
    SntcMinimal { eps: f64, k1: f64 },
    Sntc2 { mu1: f64, mu2: f64 },
    BogdanovTakens,
}

impl NormalFormId {
    pub fn name(&self) -> &'static str {
        match self {
            NormalFormId::Cusp => "cusp",
            NormalFormId::SntcSingleZero => "sntc-single-zero",
            NormalFormId::SntcMinimal { .. } => "sntc-minimal",
            NormalFormId::Sntc2 { .. } => "sntc2",
            NormalFormId::BogdanovTakens => "bogdanov-takens",
        }
    }
}

/// Solve the minimal-model constraints 2εk₁² − k₁k₂ = 1, 3k₁k₃ = 1 for
/// (k₂, k₃). All three constants must come out nonzero and finite.
pub fn sntc_minimal_constants(eps: f64, k1: f64) -> Result<(f64, f64)> {
    if k1 == 0.0 || !k1.is_finite() || !eps.is_finite() {
        return Err(BifError::InvalidConstants(format!(
            "minimal model needs finite ε and nonzero k1, got ε={eps}, k1={k1}"
        )));
    }
    let k2 = (2.0 * eps * k1 * k1 - 1.0) / k1;
    let k3 = 1.0 / (3.0 * k1);
    if k2 == 0.0 || !k2.is_finite() || !k3.is_finite() {
        return Err(BifError::InvalidConstants(format!(
            "constraint solution k2={k2}, k3={k3} violates k1,k2,k3 ≠ 0 (ε={eps}, k1={k1})"
        )));
    }
    Ok((k2, k3))
}

/// Build a normal form as a [`SystemDef`] with analytic derivatives.
pub fn normal_form_system(id: &NormalFormId) -> Result<SystemDef> {
    match *id {
        NormalFormId::Cusp => Ok(SystemDef::new(
            "cusp",
            &["x"],
            &["a", "b"],
            &[0.0, 0.0],
            Box::new(|x, p| DVector::from_vec(vec![p[0] + p[1] * x[0] + x[0].powi(3)])),
        )
        .with_jacobian(Box::new(|x, p| {
            DMatrix::from_vec(1, 1, vec![p[1] + 3.0 * x[0] * x[0]])
        }))
        .with_jac_param(Box::new(|x, _p, idx| match idx {
            0 => DVector::from_vec(vec![1.0]),
            _ => DVector::from_vec(vec![x[0]]),
        }))
        .with_hess_action(Box::new(|x, _p, q1, q2| {
            DVector::from_vec(vec![6.0 * x[0] * q1[0] * q2[0]])
        }))),

        NormalFormId::SntcSingleZero => Ok(SystemDef::new(
            "sntc-single-zero",
            &["x"],
            &["a", "b"],
            &[0.0, 0.0],
            Box::new(|x, p| {
                DVector::from_vec(vec![p[0] * x[0] + p[1] * x[0] * x[0] + x[0].powi(3)])
            }),
        )
        .with_jacobian(Box::new(|x, p| {
            DMatrix::from_vec(1, 1, vec![p[0] + 2.0 * p[1] * x[0] + 3.0 * x[0] * x[0]])
        }))
        .with_jac_param(Box::new(|x, _p, idx| match idx {
            0 => DVector::from_vec(vec![x[0]]),
            _ => DVector::from_vec(vec![x[0] * x[0]]),
        }))
        .with_hess_action(Box::new(|x, p, q1, q2| {
            DVector::from_vec(vec![(2.0 * p[1] + 6.0 * x[0]) * q1[0] * q2[0]])
        }))
        .with_invariant_components(&[0])),

        NormalFormId::SntcMinimal { eps, k1 } => {
            let (k2, k3) = sntc_minimal_constants(eps, k1)?;
            Ok(SystemDef::new(
                "sntc-minimal",
                &["x", "y"],
                &["a", "b"],
                &[0.0, 0.0],
                Box::new(move |x, p| {
                    let (xx, y) = (x[0], x[1]);
                    DVector::from_vec(vec![
                        y,
                        p[0] * xx
                            + k1 * p[1] * y
                            + p[1] * xx * xx
                            + k2 * xx * y
                            + xx * xx * y
                            + eps * xx.powi(3)
                            + k3 * xx.powi(4),
                    ])
                }),
            )
            .with_jacobian(Box::new(move |x, p| {
                let (xx, y) = (x[0], x[1]);
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        0.0,
                        1.0,
                        p[0] + 2.0 * p[1] * xx
                            + k2 * y
                            + 2.0 * xx * y
                            + 3.0 * eps * xx * xx
                            + 4.0 * k3 * xx.powi(3),
                        k1 * p[1] + k2 * xx + xx * xx,
                    ],
                )
            }))
            .with_jac_param(Box::new(move |x, _p, idx| match idx {
                0 => DVector::from_vec(vec![0.0, x[0]]),
                _ => DVector::from_vec(vec![0.0, k1 * x[1] + x[0] * x[0]]),
            }))
            .with_hess_action(Box::new(move |x, p, q1, q2| {
                let (xx, y) = (x[0], x[1]);
                let f_xx = 2.0 * p[1] + 2.0 * y + 6.0 * eps * xx + 12.0 * k3 * xx * xx;
                let f_xy = k2 + 2.0 * xx;
                DVector::from_vec(vec![
                    0.0,
                    f_xx * q1[0] * q2[0] + f_xy * (q1[0] * q2[1] + q1[1] * q2[0]),
                ])
            })))
        }

        NormalFormId::Sntc2 { mu1, mu2 } => {
            if mu1 == 0.0 || mu2 == 0.0 || !mu1.is_finite() || !mu2.is_finite() {
                return Err(BifError::InvalidConstants(format!(
                    "SNTC2 needs nonzero finite μ1, μ2, got μ1={mu1}, μ2={mu2}"
                )));
            }
            Ok(SystemDef::new(
                "sntc2",
                &["x", "y"],
                &["a", "b"],
                &[0.0, 0.0],
                Box::new(move |x, p| {
                    DVector::from_vec(vec![
                        p[0] + x[1] + mu1 * x[0] * x[0],
                        p[1] * x[1] + mu2 * x[0] * x[1],
                    ])
                }),
            )
            .with_jacobian(Box::new(move |x, p| {
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[2.0 * mu1 * x[0], 1.0, mu2 * x[1], p[1] + mu2 * x[0]],
                )
            }))
            .with_jac_param(Box::new(move |x, _p, idx| match idx {
                0 => DVector::from_vec(vec![1.0, 0.0]),
                _ => DVector::from_vec(vec![0.0, x[1]]),
            }))
            .with_hess_action(Box::new(move |_x, _p, q1, q2| {
                DVector::from_vec(vec![
                    2.0 * mu1 * q1[0] * q2[0],
                    mu2 * (q1[0] * q2[1] + q1[1] * q2[0]),
                ])
            }))
            .with_invariant_components(&[1]))
        }

        NormalFormId::BogdanovTakens => Ok(SystemDef::new(
            "bogdanov-takens",
            &["x", "y"],
            &["lambda1", "lambda2", "a2", "b2"],
            &[0.0, 0.0, 1.0, 1.0],
            Box::new(|x, p| {
                DVector::from_vec(vec![
                    x[1],
                    p[0] + p[1] * x[0] + p[2] * x[0] * x[0] + p[3] * x[0] * x[1],
                ])
            }),
        )
        .with_jacobian(Box::new(|x, p| {
            DMatrix::from_row_slice(
                2,
                2,
                &[0.0, 1.0, p[1] + 2.0 * p[2] * x[0] + p[3] * x[1], p[3] * x[0]],
            )
        }))
        .with_jac_param(Box::new(|x, _p, idx| match idx {
            0 => DVector::from_vec(vec![0.0, 1.0]),
            1 => DVector::from_vec(vec![0.0, x[0]]),
            2 => DVector::from_vec(vec![0.0, x[0] * x[0]]),
            _ => DVector::from_vec(vec![0.0, x[0] * x[1]]),
        }))
        .with_hess_action(Box::new(|_x, p, q1, q2| {
            DVector::from_vec(vec![
                0.0,
                2.0 * p[2] * q1[0] * q2[0] + p[3] * (q1[0] * q2[1] + q1[1] * q2[0]),
            ])
        }))),
    }
}

/// The a-value of the fold (saddle-node) curve at parameter b.
///
/// Branches: the cusp curve has two (±); `alt_branch` selects the negative
/// one. The minimal model also has a second fold branch away from the origin,
/// selected the same way. For the BT form the curve is λ₁ = λ₂²/(4a₂) with
/// the default a₂ = 1. The minimal-model closed form assumes ε = ±1.
pub fn oracle_fold_curve(nf: &NormalFormId, b: f64, alt_branch: bool) -> Result<f64> {
    match *nf {
        NormalFormId::Cusp => {
            if b > 0.0 {
                return Err(BifError::Domain(format!(
                    "cusp fold curve needs b ≤ 0, got b = {b}"
                )));
            }
            let a = 2.0 * (-b / 3.0).powf(1.5);
            Ok(if alt_branch { -a } else { a })
        }
        NormalFormId::SntcSingleZero => Ok(b * b / 4.0),
        NormalFormId::SntcMinimal { eps, k1 } => {
            let (_k2, k3) = sntc_minimal_constants(eps, k1)?;
            if eps.abs() != 1.0 {
                return Err(BifError::Domain(format!(
                    "minimal-model fold oracle is the ε = ±1 closed form, got ε = {eps}"
                )));
            }
            let disc = 1.0 - 3.0 * k3 * b;
            if disc < 0.0 {
                return Err(BifError::Domain(format!(
                    "minimal-model fold curve needs 1 − 3k3·b ≥ 0, got b = {b}"
                )));
            }
            if alt_branch {
                let s = disc.sqrt();
                let x = -eps * (1.0 + s) / (3.0 * k3);
                Ok(-b * x - eps * x * x - k3 * x.powi(3))
            } else {
                Ok(eps * (2.0 * disc.powf(1.5) - 2.0 + 9.0 * k3 * b) / (27.0 * k3 * k3))
            }
        }
        NormalFormId::Sntc2 { .. } => Ok(0.0),
        NormalFormId::BogdanovTakens => Ok(b * b / 4.0),
    }
}

/// The fold equilibrium state paired with its oracle a-value; seeds for
/// continuation and oracle tests.
pub fn fold_equilibrium(nf: &NormalFormId, b: f64, alt_branch: bool) -> Result<(DVector<f64>, f64)> {
    let a = oracle_fold_curve(nf, b, alt_branch)?;
    let state = match *nf {
        NormalFormId::Cusp => {
            let x = (-b / 3.0).sqrt();
            DVector::from_vec(vec![if alt_branch { -x } else { x }])
        }
        NormalFormId::SntcSingleZero => DVector::from_vec(vec![-b / 2.0]),
        NormalFormId::SntcMinimal { eps, k1 } => {
            let (_k2, k3) = sntc_minimal_constants(eps, k1)?;
            let s = (1.0 - 3.0 * k3 * b).sqrt();
            let x = if alt_branch {
                -eps * (1.0 + s) / (3.0 * k3)
            } else {
                eps * (s - 1.0) / (3.0 * k3)
            };
            DVector::from_vec(vec![x, 0.0])
        }
        NormalFormId::Sntc2 { .. } => DVector::from_vec(vec![0.0, 0.0]),
        NormalFormId::BogdanovTakens => DVector::from_vec(vec![-b / 2.0, 0.0]),
    };
    Ok((state, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_forms() -> Vec<NormalFormId> {
        vec![
            NormalFormId::Cusp,
            NormalFormId::SntcSingleZero,
            NormalFormId::SntcMinimal { eps: 1.0, k1: 1.0 },
            NormalFormId::Sntc2 { mu1: 1.0, mu2: 1.0 },
            NormalFormId::BogdanovTakens,
        ]
    }

    #[test]
    fn minimal_constants_solve_the_constraints() {
        let (k2, k3) = sntc_minimal_constants(1.0, 1.0).unwrap();
        assert_eq!((k2, k3), (1.0, 1.0 / 3.0));
        let (k2, k3) = sntc_minimal_constants(0.0, 1.0).unwrap();
        assert_eq!((k2, k3), (-1.0, 1.0 / 3.0));
        // ε = 1/2, k1 = 1 forces k2 = 0, which the constraints forbid.
        assert!(matches!(
            sntc_minimal_constants(0.5, 1.0),
            Err(BifError::InvalidConstants(_))
        ));
        assert!(sntc_minimal_constants(1.0, 0.0).is_err());
    }

    #[test]
    fn cusp_oracle_hand_value() {
        // b = −3: a²/4 + b³/27 = 0 gives a = ±2.
        assert!((oracle_fold_curve(&NormalFormId::Cusp, -3.0, false).unwrap() - 2.0).abs() < 1e-14);
        assert!((oracle_fold_curve(&NormalFormId::Cusp, -3.0, true).unwrap() + 2.0).abs() < 1e-14);
        assert!(oracle_fold_curve(&NormalFormId::Cusp, 0.5, false).is_err());
        // The curve identity holds along the whole branch.
        for i in 1..40 {
            let b = -4.0 * i as f64 / 40.0;
            let a = oracle_fold_curve(&NormalFormId::Cusp, b, false).unwrap();
            assert!((a * a / 4.0 + b.powi(3) / 27.0).abs() < 1e-13);
        }
    }

    #[test]
    fn single_zero_oracle_hand_value() {
        let a = oracle_fold_curve(&NormalFormId::SntcSingleZero, 0.4, false).unwrap();
        assert!((a - 0.04).abs() < 1e-16);
    }

    #[test]
    fn minimal_model_oracle_hand_value() {
        // ε=1, k1=1 (k3=1/3), b=0.1: a = (2·0.9^{3/2} − 1.7)/3.
        let nf = NormalFormId::SntcMinimal { eps: 1.0, k1: 1.0 };
        let a = oracle_fold_curve(&nf, 0.1, false).unwrap();
        assert!((a - 2.5433121636416e-3).abs() < 1e-12, "got {a}");
        // The closed form agrees with the parametric fold solution.
        for i in 0..=20 {
            let b = -0.2 + 0.4 * i as f64 / 20.0;
            let (state, a) = fold_equilibrium(&nf, b, false).unwrap();
            let x = state[0];
            // fold condition 3k3·x² + 2εx + b = 0 and equilibrium a = −bx−εx²−k3x³
            assert!((x * x + 2.0 * x + b).abs() < 1e-14, "fold condition at b={b}");
            let a_param = -b * x - x * x - x.powi(3) / 3.0;
            assert!((a - a_param).abs() < 1e-14, "branch mismatch at b={b}");
        }
        assert!(oracle_fold_curve(&nf, 4.0, false).is_err()); // 1−3k3·b < 0
    }

    #[test]
    fn fold_equilibria_are_equilibria_with_singular_jacobians() {
        let bs: [f64; 3] = [-0.15, 0.07, 0.12];
        for nf in sample_forms() {
            let sys = normal_form_system(&nf).unwrap();
            let names: Vec<String> = sys.param_names().to_vec();
            for &b in &bs {
                let b = if matches!(nf, NormalFormId::Cusp) { -1.0 + b } else { b };
                for alt in [false, true] {
                    let (state, a) = fold_equilibrium(&nf, b, alt).unwrap();
                    let p = sys
                        .params(
                            &[(names[0].as_str(), a), (names[1].as_str(), b)],
                            (names[0].as_str(), names[1].as_str()),
                        )
                        .unwrap();
                    let f = sys.eval_rhs(&state, &p);
                    assert!(f.amax() < 1e-13, "{} residual {} at b={b}", sys.name(), f.amax());
                    let j = sys.eval_jacobian(&state, &p);
                    let min_abs_eig = j
                        .complex_eigenvalues()
                        .iter()
                        .map(|e| e.norm())
                        .fold(f64::INFINITY, f64::min);
                    assert!(
                        min_abs_eig < 1e-10,
                        "{} |λ|min = {min_abs_eig} at b={b} alt={alt}",
                        sys.name()
                    );
                }
            }
        }
    }

    #[test]
    fn sntc2_spec_point_is_an_equilibrium() {
        let sys = normal_form_system(&NormalFormId::Sntc2 { mu1: -1.0, mu2: 1.0 }).unwrap();
        let p = sys.params(&[("a", 1.0), ("b", 0.0)], ("a", "b")).unwrap();
        let f = sys.eval_rhs(&DVector::from_vec(vec![1.0, 0.0]), &p);
        assert_eq!((f[0], f[1]), (0.0, 0.0));
    }

    #[test]
    fn sntc2_jacobian_at_origin() {
        let sys = normal_form_system(&NormalFormId::Sntc2 { mu1: 1.0, mu2: 1.0 }).unwrap();
        let b = 0.3;
        let p = sys.params(&[("a", 0.0), ("b", b)], ("a", "b")).unwrap();
        let j = sys.eval_jacobian(&DVector::from_vec(vec![0.0, 0.0]), &p);
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, b]));
    }

    #[test]
    fn sntc2_rejects_zero_constants() {
        assert!(matches!(
            normal_form_system(&NormalFormId::Sntc2 { mu1: 0.0, mu2: 1.0 }),
            Err(BifError::InvalidConstants(_))
        ));
    }

    #[test]
    fn invariant_components_vanish_on_their_planes() {
        let single = normal_form_system(&NormalFormId::SntcSingleZero).unwrap();
        let sntc2 = normal_form_system(&NormalFormId::Sntc2 { mu1: 1.0, mu2: 1.0 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = rng.random_range(-2.0..2.0);
            let b = rng.random_range(-2.0..2.0);
            let p = single.params(&[("a", a), ("b", b)], ("a", "b")).unwrap();
            assert_eq!(single.eval_rhs(&DVector::from_vec(vec![0.0]), &p)[0], 0.0);
            let p = sntc2.params(&[("a", a), ("b", b)], ("a", "b")).unwrap();
            let x = rng.random_range(-2.0..2.0);
            assert_eq!(sntc2.eval_rhs(&DVector::from_vec(vec![x, 0.0]), &p)[1], 0.0);
        }
    }

    #[test]
    fn all_forms_pass_fd_check_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for nf in sample_forms() {
            let sys = normal_form_system(&nf).unwrap();
            for _ in 0..20 {
                let x = DVector::from_fn(sys.dim(), |_, _| rng.random_range(-1.0..1.0));
                let mut overrides = Vec::new();
                let names: Vec<String> = sys.param_names().to_vec();
                for name in &names {
                    overrides.push((name.as_str(), rng.random_range(-1.0..1.0)));
                }
                let p = sys
                    .params(&overrides, (names[0].as_str(), names[1].as_str()))
                    .unwrap();
                sys.fd_check(&x, &p, 1e-5)
                    .unwrap_or_else(|e| panic!("{}: {e}", sys.name()));
            }
        }
    }
}
