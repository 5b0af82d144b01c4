//! Bordered linear solves: near-null vectors of an almost-singular Jacobian,
//! the fold test scalar γ, and the BT test scalar β = pᵀq.
//!
//! A matrix A close to a rank drop is augmented with border vectors p̄, q̄
//! (the null vectors from the previous curve point) into
//!
//! ```text
//! M = [ A   p̄ ]
//!     [ q̄ᵀ  0 ]
//! ```
//!
//! which is well-conditioned precisely when A has at most a simple near-zero
//! eigenvalue and the borders overlap its null spaces. The right solve
//! M(q, γ)ᵀ = (0, 1)ᵀ yields A·q = −γ·p̄ with q̄ᵀq = 1, so γ → 0 exactly when
//! A becomes singular; the left solve gives p the same way.

use nalgebra::{DMatrix, DVector};

use crate::error::{BifError, Result};

/// Border vectors carried between curve points.
#[derive(Clone, Debug)]
pub struct BorderVectors {
    pub p_bar: DVector<f64>,
    pub q_bar: DVector<f64>,
}

impl BorderVectors {
    pub fn new(p_bar: DVector<f64>, q_bar: DVector<f64>) -> Self {
        assert!(p_bar.len() == q_bar.len());
        BorderVectors { p_bar, q_bar }
    }

    /// Borders seeded from the smallest singular pair of A — the natural
    /// choice when no previous curve point exists yet.
    pub fn from_min_singular_pair(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let svd = a.clone().svd(true, true);
        let u = svd.u.as_ref().expect("svd with vectors");
        let v_t = svd.v_t.as_ref().expect("svd with vectors");
        let mut min_idx = 0;
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s < svd.singular_values[min_idx] {
                min_idx = i;
            }
        }
        let p_bar = DVector::from_fn(n, |i, _| u[(i, min_idx)]);
        let q_bar = DVector::from_fn(n, |i, _| v_t[(min_idx, i)]);
        if p_bar.norm() < 1e-14 || q_bar.norm() < 1e-14 {
            return Err(BifError::BorderDegeneracy { rcond: 0.0 });
        }
        Ok(BorderVectors { p_bar, q_bar })
    }
}

/// Output of [`solve_bordered`]: near-null vectors and the fold test value.
#[derive(Clone, Debug)]
pub struct BorderedFactors {
    /// Left near-null vector, normalized as p̄ᵀp = 1.
    pub p: DVector<f64>,
    /// Right near-null vector, normalized as q̄ᵀq = 1.
    pub q: DVector<f64>,
    /// Fold test value from the right solve; zero iff A is singular.
    pub gamma: f64,
    /// The left solve's scalar; agrees with `gamma` at convergence.
    pub gamma_left: f64,
}

/// Output of [`solve_bt_bordered`]: generalized eigenvector candidates and the
/// BT test scalar.
#[derive(Clone, Debug)]
pub struct BtFactors {
    /// Left generalized eigenvector candidate (valid when beta_bt ≈ 0).
    pub u: DVector<f64>,
    /// Right generalized eigenvector candidate.
    pub v_gen: DVector<f64>,
    /// The BT test value pᵀq; zero iff the zero eigenvalue is non-semisimple.
    pub beta_bt: f64,
    /// The scalar from the right bordered solve; equals pᵀq at fold points
    /// (the solvability identity).
    pub beta_solve: f64,
}

fn bordered_matrix(a: &DMatrix<f64>, borders: &BorderVectors) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    for i in 0..n {
        m[(i, n)] = borders.p_bar[i];
        m[(n, i)] = borders.q_bar[i];
    }
    m
}

/// Reciprocal condition number σ_min/σ_max from singular values.
pub(crate) fn rcond(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for s in sv.iter() {
        lo = lo.min(*s);
        hi = hi.max(*s);
    }
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

/// LU solve with one step of iterative refinement, keeping bordered residuals
/// near machine precision even for moderately conditioned systems.
fn lu_solve_refined(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = m.clone().lu();
    let mut sol = lu.solve(rhs)?;
    let r = rhs - m * &sol;
    if let Some(corr) = lu.solve(&r) {
        sol += corr;
    }
    Some(sol)
}

const RCOND_MIN: f64 = 1e-10;

/// Solve the left and right bordered systems for the near-null vectors and γ.
pub fn solve_bordered(a: &DMatrix<f64>, borders: &BorderVectors) -> Result<BorderedFactors> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(borders.p_bar.len(), n);
    let m = bordered_matrix(a, borders);
    let rc = rcond(&m);
    if rc < RCOND_MIN {
        return Err(BifError::BorderDegeneracy { rcond: rc });
    }

    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let right = lu_solve_refined(&m, &rhs).ok_or(BifError::BorderDegeneracy { rcond: rc })?;
    let left =
        lu_solve_refined(&m.transpose(), &rhs).ok_or(BifError::BorderDegeneracy { rcond: rc })?;

    Ok(BorderedFactors {
        q: right.rows(0, n).into_owned(),
        gamma: right[n],
        p: left.rows(0, n).into_owned(),
        gamma_left: left[n],
    })
}

/// Solve the second-level bordered systems for the BT test.
///
/// `p` and `q` must be the null vectors from [`solve_bordered`] at the same
/// point with the same borders.
pub fn solve_bt_bordered(
    a: &DMatrix<f64>,
    borders: &BorderVectors,
    p: &DVector<f64>,
    q: &DVector<f64>,
) -> Result<BtFactors> {
    let n = a.nrows();
    let m = bordered_matrix(a, borders);
    let rc = rcond(&m);
    if rc < RCOND_MIN {
        return Err(BifError::BorderDegeneracy { rcond: rc });
    }

    let mut rhs_right = DVector::zeros(n + 1);
    rhs_right.rows_mut(0, n).copy_from(q);
    let right =
        lu_solve_refined(&m, &rhs_right).ok_or(BifError::BorderDegeneracy { rcond: rc })?;

    let mut rhs_left = DVector::zeros(n + 1);
    rhs_left.rows_mut(0, n).copy_from(p);
    let left = lu_solve_refined(&m.transpose(), &rhs_left)
        .ok_or(BifError::BorderDegeneracy { rcond: rc })?;

    Ok(BtFactors {
        v_gen: right.rows(0, n).into_owned(),
        beta_solve: right[n],
        u: left.rows(0, n).into_owned(),
        beta_bt: p.dot(q),
    })
}

/// Unit tangent to the solution curve of an extended system: the null vector
/// of its m×(m+1) Jacobian, oriented to continue `prev_tangent`.
pub fn curve_tangent(j_ext: &DMatrix<f64>, prev_tangent: &DVector<f64>) -> Result<DVector<f64>> {
    let m = j_ext.nrows();
    let cols = j_ext.ncols();
    assert_eq!(cols, m + 1);
    assert_eq!(prev_tangent.len(), cols);

    if m == 0 {
        // No constraints: the curve is the whole 1-D space.
        let norm = prev_tangent.norm();
        if norm < 1e-14 {
            return Err(BifError::TangentDegeneracy { sigma_min: 0.0 });
        }
        return Ok(prev_tangent / norm);
    }

    // Pad with a zero row so the SVD is square and exposes the full right
    // singular basis; the null vector is the right singular vector of the
    // smallest singular value.
    let mut square = DMatrix::zeros(cols, cols);
    square.view_mut((0, 0), (m, cols)).copy_from(j_ext);
    let svd = square.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("svd with vectors");

    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[i]
            .partial_cmp(&svd.singular_values[j])
            .unwrap()
    });
    let sigma_max = svd.singular_values[order[cols - 1]];
    // order[0] is the padding zero; order[1] is the smallest true singular
    // value of j_ext and must be well separated from zero for a unique tangent.
    let sigma_min = svd.singular_values[order[1]];
    if sigma_max == 0.0 || sigma_min / sigma_max < 1e-10 {
        return Err(BifError::TangentDegeneracy { sigma_min });
    }

    let null_idx = order[0];
    let mut t = DVector::from_fn(cols, |i, _| v_t[(null_idx, i)]);
    t /= t.norm();
    if t.dot(prev_tangent) < 0.0 {
        t = -t;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_borders(n: usize) -> BorderVectors {
        BorderVectors::new(
            DVector::from_element(n, 1.0) / (n as f64).sqrt(),
            DVector::from_element(n, 1.0) / (n as f64).sqrt(),
        )
    }

    #[test]
    fn scalar_zero_matrix_gives_gamma_zero() {
        let a = DMatrix::from_vec(1, 1, vec![0.0]);
        let b = BorderVectors::new(DVector::from_vec(vec![1.0]), DVector::from_vec(vec![1.0]));
        let f = solve_bordered(&a, &b).unwrap();
        assert_eq!(f.q[0], 1.0);
        assert_eq!(f.gamma, 0.0);
        assert_eq!(f.gamma_left, 0.0);
    }

    #[test]
    fn scalar_two_gives_gamma_minus_two() {
        // [2 1; 1 0](q, γ)ᵀ = (0, 1)ᵀ has q = 1, γ = −2.
        let a = DMatrix::from_vec(1, 1, vec![2.0]);
        let b = BorderVectors::new(DVector::from_vec(vec![1.0]), DVector::from_vec(vec![1.0]));
        let f = solve_bordered(&a, &b).unwrap();
        assert!((f.q[0] - 1.0).abs() < 1e-14);
        assert!((f.gamma + 2.0).abs() < 1e-14);
        assert!((f.gamma_left + 2.0).abs() < 1e-14);
    }

    #[test]
    fn exact_null_borders_recover_null_vectors() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.2]);
        // Right null vector (1,0); left null vector ∝ (−0.2, 1).
        let q0 = DVector::from_vec(vec![1.0, 0.0]);
        let p0 = DVector::from_vec(vec![-0.2, 1.0]).normalize();
        let b = BorderVectors::new(p0.clone(), q0.clone());
        let f = solve_bordered(&a, &b).unwrap();
        assert!(f.gamma.abs() < 1e-12);
        assert!((f.q[0] - 1.0).abs() < 1e-12 && f.q[1].abs() < 1e-12);
        // residuals of both systems
        assert!(((&a * &f.q) + &p0 * f.gamma).amax() < 1e-12);
        assert!(((a.transpose() * &f.p) + &q0 * f.gamma_left).amax() < 1e-12);
    }

    #[test]
    fn singular_bordered_matrix_is_reported() {
        let a = DMatrix::zeros(2, 2);
        let err = solve_bordered(&a, &unit_borders(2)).unwrap_err();
        assert!(matches!(err, BifError::BorderDegeneracy { .. }));
    }

    #[test]
    fn bt_scalar_matches_hand_value() {
        // A = [[0,1],[0,b]] with b = 0.3: p = (−b,1)/√(1+b²), q = (1,0),
        // so β = pᵀq = −b/√(1+b²) ≈ −0.28735.
        let b_val: f64 = 0.3;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, b_val]);
        let scale = (1.0 + b_val * b_val).sqrt();
        let p = DVector::from_vec(vec![-b_val / scale, 1.0 / scale]);
        let q = DVector::from_vec(vec![1.0, 0.0]);
        let borders = BorderVectors::new(p.clone(), q.clone());
        let bt = solve_bt_bordered(&a, &borders, &p, &q).unwrap();
        assert!((bt.beta_bt - (-b_val / scale)).abs() < 1e-15);
        assert!((bt.beta_bt + 0.2873478855663454).abs() < 1e-15);
        // Solvability identity at a fold point: right-solve scalar equals pᵀq.
        assert!((bt.beta_solve - bt.beta_bt).abs() < 1e-12);
    }

    #[test]
    fn jordan_block_gives_beta_zero_and_generalized_eigenvectors() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let p = DVector::from_vec(vec![0.0, 1.0]);
        let q = DVector::from_vec(vec![1.0, 0.0]);
        let borders = BorderVectors::new(p.clone(), q.clone());
        let bt = solve_bt_bordered(&a, &borders, &p, &q).unwrap();
        assert_eq!(bt.beta_bt, 0.0);
        // v is a right generalized eigenvector: A v = q.
        assert!(((&a * &bt.v_gen) - &q).amax() < 1e-12);
        // u is a left generalized eigenvector: uᵀ A = pᵀ.
        assert!(((a.transpose() * &bt.u) - &p).amax() < 1e-12);
    }

    #[test]
    fn semisimple_zero_keeps_beta_away_from_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 5.0]);
        let p = DVector::from_vec(vec![1.0, 0.0]);
        let q = p.clone();
        let borders = BorderVectors::new(p.clone(), q.clone());
        let bt = solve_bt_bordered(&a, &borders, &p, &q).unwrap();
        assert_eq!(bt.beta_bt, 1.0);
    }

    #[test]
    fn beta_bt_is_invariant_under_reciprocal_scaling() {
        let a = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 0.0, 0.4]);
        let borders = BorderVectors::from_min_singular_pair(&a).unwrap();
        let f = solve_bordered(&a, &borders).unwrap();
        let base = f.p.dot(&f.q);
        for c in [0.5_f64, 2.0, -1.0] {
            let scaled = (&f.p * c).dot(&(&f.q / c));
            assert!((scaled - base).abs() <= 1e-14 * base.abs().max(1.0));
        }
    }

    #[test]
    fn rebordering_is_idempotent_near_a_fold() {
        // Border refresh is a stable fixed point: once the borders come from
        // a solve, re-solving with the refreshed borders moves γ only at the
        // noise floor of the matrix scale.
        let a = DMatrix::from_row_slice(2, 2, &[1e-5, 1.0, 0.0, 0.2]);
        let rough = BorderVectors::new(
            DVector::from_vec(vec![-0.15, 0.95]).normalize(),
            DVector::from_vec(vec![0.97, 0.05]).normalize(),
        );
        let f1 = solve_bordered(&a, &rough).unwrap();
        let b2 = BorderVectors::new(f1.p.normalize(), f1.q.normalize());
        let f2 = solve_bordered(&a, &b2).unwrap();
        let b3 = BorderVectors::new(f2.p.normalize(), f2.q.normalize());
        let f3 = solve_bordered(&a, &b3).unwrap();
        assert!((&a * &f3.q).amax() < 1e-4, "q should be a near-null vector");
        let scale = f2.gamma.abs().max(1.0);
        assert!(
            (f3.gamma - f2.gamma).abs() <= 1e-10 * scale,
            "gamma drifted: {} -> {}",
            f2.gamma,
            f3.gamma
        );
    }

    #[test]
    fn tangent_of_axis_aligned_constraints() {
        let j = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let prev = DVector::from_vec(vec![0.0, 0.0, 0.5]);
        let t = curve_tangent(&j, &prev).unwrap();
        assert!((t - DVector::from_vec(vec![0.0, 0.0, 1.0])).amax() < 1e-14);
        let t = curve_tangent(&j, &(-DVector::from_vec(vec![0.0, 0.0, 0.5]))).unwrap();
        assert!((t - DVector::from_vec(vec![0.0, 0.0, -1.0])).amax() < 1e-14);
    }

    #[test]
    fn rank_deficient_extended_jacobian_is_degenerate() {
        let j = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let prev = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let err = curve_tangent(&j, &prev).unwrap_err();
        assert!(matches!(err, BifError::TangentDegeneracy { .. }));
    }
}
