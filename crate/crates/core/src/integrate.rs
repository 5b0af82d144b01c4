//! Adaptive explicit time integration (Dormand–Prince 5(4)) with invariant
//! and non-negativity safeguards, plus period estimation from section
//! crossings.

use nalgebra::DVector;

use crate::error::{BifError, Result};
use crate::system::SystemDef;

/// Dense record of an integration run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Right-hand-side values at each stored state, for Hermite interpolation.
    pub derivs: Vec<DVector<f64>>,
    /// (time, event id) markers, e.g. maintenance-kink crossings.
    pub events: Vec<(f64, String)>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least the seed")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least the seed")
    }

    /// Cubic Hermite interpolation of one component inside step `i`.
    fn hermite(&self, i: usize, theta: f64, comp: usize) -> f64 {
        let h = self.times[i + 1] - self.times[i];
        let y0 = self.states[i][comp];
        let y1 = self.states[i + 1][comp];
        let f0 = self.derivs[i][comp];
        let f1 = self.derivs[i + 1][comp];
        let t2 = theta * theta;
        let t3 = t2 * theta;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + theta) * h * f0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * f1
    }
}

/// A section for period estimation: crossings of `component == value` in the
/// given direction (+1 upward, −1 downward).
#[derive(Clone, Copy, Debug)]
pub struct Section {
    pub component: usize,
    pub value: f64,
    pub direction: f64,
}

// Dormand–Prince 5(4) tableau (stage times omitted: the fields here are
// autonomous).
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Error coefficients: b(5th) − b̂(4th).
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct StepResult {
    y_new: DVector<f64>,
    f_new: DVector<f64>,
    err: f64,
}

/// One DOPRI5 step of size h from (t, y) with f = rhs(y) already known (FSAL).
fn dopri5_step<R>(rhs: &R, y: &DVector<f64>, f: &DVector<f64>, h: f64, tol: f64) -> StepResult
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = y.len();
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
    k.push(f.clone());
    for s in 1..7 {
        let mut ys = y.clone();
        for (j, kj) in k.iter().enumerate() {
            if A[s][j] != 0.0 {
                ys.axpy(h * A[s][j], kj, 1.0);
            }
        }
        k.push(rhs(&ys));
    }
    // Stage 7 is evaluated at y_new (FSAL): y_new = y + h Σ a7j k_j.
    let mut y_new = y.clone();
    for (j, kj) in k.iter().take(6).enumerate() {
        if A[6][j] != 0.0 {
            y_new.axpy(h * A[6][j], kj, 1.0);
        }
    }
    let f_new = k[6].clone();

    let mut err_sq = 0.0;
    for i in 0..n {
        let mut e_i = 0.0;
        for (j, kj) in k.iter().enumerate() {
            e_i += E[j] * kj[i];
        }
        e_i *= h;
        let sc = tol * (1.0 + y[i].abs().max(y_new[i].abs()));
        err_sq += (e_i / sc) * (e_i / sc);
    }
    let err = (err_sq / n as f64).sqrt();
    StepResult { y_new, f_new, err }
}

/// Initial step size heuristic (simplified from Hairer's `hinit`).
fn initial_step<R>(rhs: &R, y0: &DVector<f64>, f0: &DVector<f64>, t_end: f64, tol: f64) -> f64
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = y0.len() as f64;
    let wrms = |v: &DVector<f64>, yref: &DVector<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..v.len() {
            let sc = tol * (1.0 + yref[i].abs());
            s += (v[i] / sc) * (v[i] / sc);
        }
        (s / n).sqrt()
    };
    let d0 = wrms(y0, y0);
    let d1 = wrms(f0, y0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(t_end.abs());
    let y1 = y0 + f0 * h0;
    let f1 = rhs(&y1);
    let d2 = wrms(&(&f1 - f0), y0) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(t_end.abs())
}

const SAFETY: f64 = 0.9;
const PI_BETA: f64 = 0.04;
const NONNEG_SNAP: f64 = 1e-13;
const NONNEG_REJECT: f64 = -1e-10;
const MAX_STEPS: usize = 20_000_000;

/// Integrate the system from `x0` for time `t_end` at tolerance `tol`
/// (used as both absolute and relative weight).
pub fn integrate(
    sys: &SystemDef,
    x0: &DVector<f64>,
    params: &crate::system::ParamPoint,
    t_end: f64,
    tol: f64,
) -> Result<Trajectory> {
    if !(t_end > 0.0) || !(tol > 0.0) {
        return Err(BifError::Config(format!(
            "integration needs t_end > 0 and tol > 0, got t_end={t_end}, tol={tol}"
        )));
    }
    let rhs = |y: &DVector<f64>| -> DVector<f64> { sys.eval_rhs(y, params) };
    let kink = sys.kink_location(params);

    let mut y = x0.clone();
    let mut f = rhs(&y);
    let mut t = 0.0;
    let mut h = initial_step(&rhs, &y, &f, t_end, tol);
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;

    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![y.clone()],
        derivs: vec![f.clone()],
        events: Vec::new(),
    };

    let expo1 = 0.2 - 0.75 * PI_BETA;
    let mut steps = 0usize;

    while t < t_end {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(BifError::Domain(format!(
                "integration exceeded {MAX_STEPS} steps at t={t}"
            )));
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(BifError::StepUnderflow { t, h });
        }
        let mut hitting_end = false;
        if t + h >= t_end {
            h = t_end - t;
            hitting_end = true;
        }

        let res = dopri5_step(&rhs, &y, &f, h, tol);

        if res.err > 1.0 {
            // Reject on truncation error.
            let fac11 = res.err.powf(expo1);
            h /= (fac11 / SAFETY).min(10.0);
            last_rejected = true;
            continue;
        }

        // Non-negativity policy for densities.
        let mut y_new = res.y_new;
        let mut bad = false;
        let mut snapped = false;
        for &i in sys.nonneg_components() {
            if y_new[i] < NONNEG_REJECT {
                bad = true;
                break;
            }
            if y_new[i] < 0.0 && y_new[i] > -NONNEG_SNAP {
                y_new[i] = 0.0;
                snapped = true;
            }
        }
        if bad {
            h *= 0.5;
            last_rejected = true;
            continue;
        }

        // Maintenance kink: if this step straddles the kink surface, bisect
        // the step size so the accepted step lands on it instead.
        if let Some((comp, loc)) = kink {
            let s0 = y[comp] - loc;
            let s1 = y_new[comp] - loc;
            if s0 != 0.0 && s1 != 0.0 && s0.signum() != s1.signum() {
                let (h_land, mut y_land, _) =
                    land_on_kink(&rhs, &y, &f, h, tol, comp, loc, s0.signum());
                y_land[comp] = loc;
                t += h_land;
                y = y_land;
                f = rhs(&y);
                traj.times.push(t);
                traj.states.push(y.clone());
                traj.derivs.push(f.clone());
                traj.events.push((t, "kink-crossing".to_string()));
                // Restart step-size control conservatively after the kink.
                h = (h_land * 0.5).max(1e-12);
                facold = 1e-4;
                last_rejected = false;
                continue;
            }
        }

        // Accept. The FSAL derivative is reused unless a snap moved the state.
        t = if hitting_end { t_end } else { t + h };
        y = y_new;
        f = if snapped { rhs(&y) } else { res.f_new };
        traj.times.push(t);
        traj.states.push(y.clone());
        traj.derivs.push(f.clone());

        let fac11 = res.err.max(1e-10).powf(expo1);
        let fac = (fac11 / facold.powf(PI_BETA) / SAFETY).clamp(0.1, 5.0);
        let mut h_new = h / fac;
        if last_rejected {
            h_new = h_new.min(h);
        }
        facold = res.err.max(1e-4);
        last_rejected = false;
        h = h_new;
    }

    Ok(traj)
}

/// Bisect the step size so the step from `y` lands on the kink surface
/// `y[comp] == loc`. Returns (h, y_at_kink, f_at_kink).
#[allow(clippy::too_many_arguments)]
fn land_on_kink<R>(
    rhs: &R,
    y: &DVector<f64>,
    f: &DVector<f64>,
    h_hi: f64,
    tol: f64,
    comp: usize,
    loc: f64,
    sign0: f64,
) -> (f64, DVector<f64>, DVector<f64>)
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut lo = 0.0;
    let mut hi = h_hi;
    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let res = dopri5_step(rhs, y, f, mid, tol);
        let s = res.y_new[comp] - loc;
        if s == 0.0 || s.signum() != sign0 {
            hi = mid;
            best = Some((mid, res.y_new, res.f_new));
        } else {
            lo = mid;
        }
        if (hi - lo) < 1e-15 * h_hi.max(1e-300) {
            break;
        }
    }
    match best {
        Some(b) => b,
        None => {
            let res = dopri5_step(rhs, y, f, h_hi, tol);
            (h_hi, res.y_new, res.f_new)
        }
    }
}

/// Estimate the period of a limit cycle from directed section crossings.
///
/// The first half of the trajectory is discarded as transient; at least
/// three same-direction crossings are required, otherwise `None`.
pub fn estimate_period(traj: &Trajectory, section: &Section) -> Option<f64> {
    let crossings = section_crossings(traj, section, 0.5);
    if crossings.len() < 3 {
        return None;
    }
    let first = crossings[0];
    let last = crossings[crossings.len() - 1];
    Some((last - first) / (crossings.len() - 1) as f64)
}

/// Times of directed crossings of the section after skipping `skip_frac`
/// of the time span.
pub fn section_crossings(traj: &Trajectory, section: &Section, skip_frac: f64) -> Vec<f64> {
    let n = traj.times.len();
    if n < 2 {
        return Vec::new();
    }
    let t_start = traj.times[0] + skip_frac * (traj.times[n - 1] - traj.times[0]);
    let comp = section.component;
    let mut out = Vec::new();
    for i in 0..n - 1 {
        if traj.times[i] < t_start {
            continue;
        }
        let s0 = traj.states[i][comp] - section.value;
        let s1 = traj.states[i + 1][comp] - section.value;
        let crosses = if section.direction >= 0.0 {
            s0 < 0.0 && s1 >= 0.0
        } else {
            s0 > 0.0 && s1 <= 0.0
        };
        if !crosses {
            continue;
        }
        // Refine within the step by bisection on the Hermite interpolant.
        let mut lo = 0.0;
        let mut hi = 1.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let s = traj.hermite(i, mid, comp) - section.value;
            let same_side = if section.direction >= 0.0 { s < 0.0 } else { s > 0.0 };
            if same_side {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let theta = 0.5 * (lo + hi);
        out.push(traj.times[i] + theta * (traj.times[i + 1] - traj.times[i]));
    }
    out
}
