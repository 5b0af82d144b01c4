//! Scratch exploration runs for freezing regression constants. Not shipped.

use bifkit::codim2::{SpecialPoint, TestId};
use bifkit::continuation::{
    continue_equilibrium, continue_fold_curve, continue_hopf_curve, continue_tc_curve,
    fold_point_at_lambda2, tc_point_at_lambda2, ContinuationSettings, Curve, Window,
};
use bifkit::integrate::{estimate_period, integrate, section_crossings, Section, Trajectory};
use bifkit::models::{
    coexistence_equilibrium, kooi_system, prey_invasion_d, prey_only_equilibria, KooiParams,
};
use bifkit::system::SystemDef;
use nalgebra::DVector;

fn settings() -> ContinuationSettings {
    let mut s = ContinuationSettings::default();
    s.window = Window {
        lambda1: Some((0.5, 60.0)),
        lambda2: Some((0.005, 0.6)),
        state_abs_max: Some(1e4),
    };
    s
}

fn print_special(tag: &str, sp: &SpecialPoint) {
    println!(
        "  [{tag}] {} trigger={} lam1={:.17e} lam2={:.17e} candidate={} endpoint={}",
        sp.kind.label(),
        sp.trigger.label(),
        sp.params.lambda1(),
        sp.params.lambda2(),
        sp.diagnostics.candidate,
        sp.diagnostics.endpoint_magnitude_only,
    );
    println!("        x = {:?}", sp.x.as_slice());
    for (t, v) in &sp.diagnostics.values {
        println!("        {} = {:.6e}", t.label(), v);
    }
    println!(
        "        p_norm={:.3e} q_norm={:.3e}",
        sp.diagnostics.p_norm, sp.diagnostics.q_norm
    );
}

fn dump_points(c: &Curve, lo2: f64, hi2: f64, tail: usize) {
    let n = c.points.len();
    for (i, p) in c.points.iter().enumerate() {
        let l2 = p.params.lambda2();
        if (l2 >= lo2 && l2 <= hi2) || i + tail >= n {
            let a = p.testvals.get(&TestId::Alpha).copied().unwrap_or(f64::NAN);
            let bc = p
                .testvals
                .get(&TestId::BetaCusp)
                .copied()
                .unwrap_or(f64::NAN);
            println!(
                "    i={i} lam=({:.8}, {:.8}) x={:?} alpha={:.4e} beta_cusp={:.4e}",
                p.params.lambda1(),
                l2,
                p.x.as_slice(),
                a,
                bc
            );
        }
    }
}

fn print_curve(tag: &str, c: &Curve) {
    let first = c.points.first().unwrap();
    let last = c.points.last().unwrap();
    println!(
        "[{tag}] kind={} n={} term={:?} acc={} rej={} hops={} pinned={:?}",
        c.kind.label(),
        c.points.len(),
        c.termination,
        c.accepted,
        c.rejected,
        c.hops,
        c.pinned
    );
    println!(
        "  first=({:.6}, {:.6}) last=({:.6}, {:.6})",
        first.params.lambda1(),
        first.params.lambda2(),
        last.params.lambda1(),
        last.params.lambda2()
    );
    for w in &c.warnings {
        println!("  warn: {w}");
    }
    for sp in &c.specials {
        print_special(tag, sp);
    }
}

/// All λ2 values where the curve crosses λ1 == value (linear interpolation).
fn lambda2_at_lambda1(c: &Curve, value: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..c.points.len().saturating_sub(1) {
        let a1 = c.points[i].params.lambda1() - value;
        let b1 = c.points[i + 1].params.lambda1() - value;
        if a1 == 0.0 {
            out.push(c.points[i].params.lambda2());
        } else if a1.signum() != b1.signum() {
            let s = a1 / (a1 - b1);
            let l2a = c.points[i].params.lambda2();
            let l2b = c.points[i + 1].params.lambda2();
            out.push(l2a + s * (l2b - l2a));
        }
    }
    out
}

fn kooi_sys(c_r: f64, mu_rp: f64) -> (SystemDef, KooiParams) {
    let kp = KooiParams {
        c_r,
        mu_rp,
        ..Default::default()
    };
    (kooi_system(kp), kp)
}

fn phase_c4() {
    let (sys, kp0) = kooi_sys(1.0, 0.2);
    let d_fix = 0.15;

    println!("== prey-only equilibria scan at D={d_fix} (c_r=1) ==");
    for i in 0..=30 {
        let nr = 4.0 + 10.0 * i as f64 / 30.0;
        let kp = KooiParams {
            n_r: nr,
            d: d_fix,
            ..kp0
        };
        let eqs = prey_only_equilibria(&kp);
        println!("  N_r={nr:.3} -> {:?}", eqs);
    }

    // Equilibrium continuation along N_r at fixed D from a prey-only state.
    let nr0 = 9.0;
    let kp = KooiParams {
        n_r: nr0,
        d: d_fix,
        ..kp0
    };
    let eqs = prey_only_equilibria(&kp);
    println!("seed prey-only at N_r={nr0}: {:?}", eqs);
    if eqs.is_empty() {
        println!("no prey-only equilibrium at seed; abort");
        return;
    }
    let (n, r) = eqs[eqs.len() - 1];
    let x0 = DVector::from_vec(vec![n, r, 0.0]);
    let params = sys
        .params(&[("N_r", nr0), ("D", d_fix)], ("N_r", "D"))
        .unwrap();
    for dir in [1.0, -1.0] {
        let s = settings().with_direction(dir);
        match continue_equilibrium(&sys, &x0, &params, (2.0, 20.0), &s) {
            Ok(c) => {
                print_curve(&format!("eq dir={dir}"), &c);
                // Fold special -> fold curve in (N_r, D).
                for sp in c.specials_of(bifkit::codim2::SpecialKind::Fold) {
                    println!("-- fold curve from fold at N_r={:.6}", sp.params.lambda1());
                    for fdir in [1.0, -1.0] {
                        let fs = settings().with_direction(fdir);
                        match continue_fold_curve(&sys, &sp.x, &sp.params, &fs) {
                            Ok(fc) => {
                                print_curve(&format!("fold dir={fdir}"), &fc);
                                dump_points(&fc, 0.18, 0.20, 3);
                                tangent_check_c4(&sys, &fc);
                            }
                            Err(e) => println!("  fold curve failed: {e}"),
                        }
                    }
                }
            }
            Err(e) => println!("eq continuation failed: {e}"),
        }
    }

    // TC curve (prey invasion of the wash-out state).
    let kp_tc = KooiParams {
        n_r: 10.0,
        ..kp0
    };
    let d_inv = prey_invasion_d(&kp_tc);
    println!("prey invasion D at N_r=10: {d_inv:.12}");
    let x0 = DVector::from_vec(vec![10.0, 0.0, 0.0]);
    let params = sys
        .params(&[("N_r", 10.0), ("D", d_inv)], ("N_r", "D"))
        .unwrap();
    for dir in [1.0, -1.0] {
        let s = settings().with_direction(dir);
        match continue_tc_curve(&sys, &x0, &params, &s) {
            Ok(c) => print_curve(&format!("tc dir={dir}"), &c),
            Err(e) => println!("tc continuation failed: {e}"),
        }
    }
}

/// Near the single-zero point, compare fold and TC tangents at a ladder of
/// offsets below the interaction D* (frozen from the TC-side localization).
fn tangent_check_c4(sys: &SystemDef, fc: &Curve) {
    let nr_star = 8.56141609826988415e0;
    let d_star = 1.88474759871659375e-1;
    println!("== tangent ladder below single-zero at N_r={nr_star:.10} D={d_star:.10}");

    let s = settings();
    // TC curve through the interaction region, traced once.
    let kp0 = KooiParams::default();
    let kp_tc = KooiParams {
        n_r: nr_star,
        ..kp0
    };
    let d_inv = prey_invasion_d(&kp_tc);
    let x0 = DVector::from_vec(vec![nr_star, 0.0, 0.0]);
    let params = sys
        .params(&[("N_r", nr_star), ("D", d_inv)], ("N_r", "D"))
        .unwrap();
    let tc = match continue_tc_curve(&sys, &x0, &params, &s) {
        Ok(c) => c,
        Err(e) => {
            println!("  tc trace failed: {e}");
            return;
        }
    };

    for delta in [2e-2, 1e-2, 5e-3, 2e-3, 1e-3] {
        let d = d_star - delta;
        let rp = match fold_point_at_lambda2(sys, fc, d, &s) {
            Ok(rp) => rp,
            Err(e) => {
                println!("  delta={delta:.1e}: fold resample failed: {e}");
                continue;
            }
        };
        let tp = match tc_point_at_lambda2(sys, &tc, d, &s) {
            Ok(tp) => tp,
            Err(e) => {
                println!("  delta={delta:.1e}: tc resample failed: {e}");
                continue;
            }
        };
        let nz = rp.z.len();
        let ft = (rp.tangent[nz - 2], rp.tangent[nz - 1]);
        let mz = tp.z.len();
        let tt = (tp.tangent[mz - 2], tp.tangent[mz - 1]);
        let cross = (ft.0 * tt.1 - ft.1 * tt.0).abs();
        let dot = (ft.0 * tt.0 + ft.1 * tt.1).abs();
        println!(
            "  delta={delta:.1e}: fold N_r={:.9} R={:+.3e} | tc N_r={:.9} | angle={:.6e} rad gap={:.6e}",
            rp.z[nz - 2],
            rp.z[1],
            tp.z[mz - 2],
            cross.atan2(dot),
            (rp.z[nz - 2] - tp.z[mz - 2]).abs()
        );
    }
}

fn phase_c5() {
    let (sys, kp0) = kooi_sys(9.0, 0.7);

    println!("== prey-only equilibria scan at D=0.14 (c_r=9) ==");
    for i in 0..=30 {
        let nr = 15.0 + 25.0 * i as f64 / 30.0;
        let kp = KooiParams {
            n_r: nr,
            d: 0.14,
            ..kp0
        };
        let eqs = prey_only_equilibria(&kp);
        println!("  N_r={nr:.3} -> {:?}", eqs);
    }

    // Fold curve seeded from an equilibrium fold along N_r at D=0.14.
    let d_fix = 0.14;
    let nr0 = 25.0;
    let kp = KooiParams {
        n_r: nr0,
        d: d_fix,
        ..kp0
    };
    let eqs = prey_only_equilibria(&kp);
    println!("seed prey-only at N_r={nr0}: {:?}", eqs);
    if !eqs.is_empty() {
        let (n, r) = eqs[eqs.len() - 1];
        let x0 = DVector::from_vec(vec![n, r, 0.0]);
        let params = sys
            .params(
                &[("c_r", 9.0), ("mu_RP", 0.7), ("N_r", nr0), ("D", d_fix)],
                ("N_r", "D"),
            )
            .unwrap();
        for dir in [1.0, -1.0] {
            let s = settings().with_direction(dir);
            match continue_equilibrium(&sys, &x0, &params, (2.0, 50.0), &s) {
                Ok(c) => {
                    print_curve(&format!("eq dir={dir}"), &c);
                    for sp in c.specials_of(bifkit::codim2::SpecialKind::Fold) {
                        println!("-- fold curve from fold at N_r={:.6}", sp.params.lambda1());
                        for fdir in [1.0, -1.0] {
                            let fs = settings().with_direction(fdir);
                            match continue_fold_curve(&sys, &sp.x, &sp.params, &fs) {
                                Ok(fc) => print_curve(&format!("fold dir={fdir}"), &fc),
                                Err(e) => println!("  fold curve failed: {e}"),
                            }
                        }
                    }
                }
                Err(e) => println!("eq continuation failed: {e}"),
            }
        }
    }

    // TC curve (predator invasion of a prey-only state).
    let d_tc = 0.12;
    let rbar = kp0.kappa_rp * (d_tc + kp0.m_p0) / (kp0.mu_rp - d_tc - kp0.m_p0);
    println!("predator break-even prey at D={d_tc}: R={rbar:.6}");
    // Find the prey-only state with R near rbar by scanning N_r.
    let mut seed: Option<(f64, f64, f64)> = None;
    for i in 0..=400 {
        let nr = 10.0 + 30.0 * i as f64 / 400.0;
        let kp = KooiParams {
            n_r: nr,
            d: d_tc,
            ..kp0
        };
        for (n, r) in prey_only_equilibria(&kp) {
            if (r - rbar).abs() < 0.1 {
                seed = Some((nr, n, r));
                break;
            }
        }
        if seed.is_some() {
            break;
        }
    }
    println!("tc seed: {:?}", seed);
    if let Some((nr, n, _r)) = seed {
        let x0 = DVector::from_vec(vec![n, rbar, 0.0]);
        let params = sys
            .params(
                &[("c_r", 9.0), ("mu_RP", 0.7), ("N_r", nr), ("D", d_tc)],
                ("N_r", "D"),
            )
            .unwrap();
        for dir in [1.0, -1.0] {
            let s = settings().with_direction(dir);
            match continue_tc_curve(&sys, &x0, &params, &s) {
                Ok(c) => print_curve(&format!("tc dir={dir}"), &c),
                Err(e) => println!("tc continuation failed: {e}"),
            }
        }
    }

    // Hopf curve: scan the coexistence equilibrium's eigenvalues at D=0.142.
    println!("== coexistence eigenvalue scan at D=0.142 ==");
    let d_h = 0.142;
    let mut hopf_seed: Option<(f64, DVector<f64>)> = None;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=60 {
        let nr = 23.5 + 3.0 * i as f64 / 60.0;
        let kp = KooiParams {
            n_r: nr,
            d: d_h,
            ..kp0
        };
        if let Some((n, r, p)) = coexistence_equilibrium(&kp) {
            if p <= 0.0 {
                continue;
            }
            let x = DVector::from_vec(vec![n, r, p]);
            let pp = sys
                .params(
                    &[("c_r", 9.0), ("mu_RP", 0.7), ("N_r", nr), ("D", d_h)],
                    ("N_r", "D"),
                )
                .unwrap();
            let j = sys.eval_jacobian(&x, &pp);
            let eig = j.complex_eigenvalues();
            let osc = eig
                .iter()
                .filter(|e| e.im > 1e-9)
                .cloned()
                .next();
            if let Some(e) = osc {
                println!("  N_r={nr:.3} re={:.6e} im={:.6e} P={p:.4}", e.re, e.im);
                if let Some((nr_p, re_p)) = prev {
                    if re_p * e.re < 0.0 && hopf_seed.is_none() {
                        let nr_mid = 0.5 * (nr_p + nr);
                        let kpm = KooiParams {
                            n_r: nr_mid,
                            d: d_h,
                            ..kp0
                        };
                        let (n, r, p) = coexistence_equilibrium(&kpm).unwrap();
                        hopf_seed = Some((nr_mid, DVector::from_vec(vec![n, r, p])));
                    }
                }
                prev = Some((nr, e.re));
            }
        }
    }
    println!("hopf seed: {:?}", hopf_seed);
    if let Some((nr, x0)) = hopf_seed {
        let params = sys
            .params(
                &[("c_r", 9.0), ("mu_RP", 0.7), ("N_r", nr), ("D", d_h)],
                ("N_r", "D"),
            )
            .unwrap();
        for dir in [1.0, -1.0] {
            let s = settings().with_direction(dir);
            match continue_hopf_curve(&sys, &x0, &params, &s) {
                Ok(c) => {
                    print_curve(&format!("hopf dir={dir}"), &c);
                    let last = c.points.last().unwrap();
                    println!(
                        "  hopf end: omega={:.6e} lam=({:.12}, {:.12})",
                        last.z[9],
                        last.params.lambda1(),
                        last.params.lambda2()
                    );
                }
                Err(e) => println!("hopf continuation failed: {e}"),
            }
        }
    }
}

fn classify_outcome(sys: &SystemDef, kp: &KooiParams, x0: &DVector<f64>, t_end: f64) -> String {
    let params = sys
        .params(
            &[
                ("c_r", kp.c_r),
                ("mu_RP", kp.mu_rp),
                ("N_r", kp.n_r),
                ("D", kp.d),
            ],
            ("N_r", "D"),
        )
        .unwrap();
    let traj = match integrate(sys, x0, &params, t_end, 1e-8) {
        Ok(t) => t,
        Err(e) => return format!("integration failed: {e}"),
    };
    let xf = traj.final_state();
    // Oscillation amplitude of P over the last quarter.
    let t_cut = 0.75 * traj.final_time();
    let (mut pmin, mut pmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, &t) in traj.times.iter().enumerate() {
        if t < t_cut {
            continue;
        }
        pmin = pmin.min(traj.states[i][2]);
        pmax = pmax.max(traj.states[i][2]);
        rmin = rmin.min(traj.states[i][1]);
        rmax = rmax.max(traj.states[i][1]);
    }
    format!(
        "final=({:.6}, {:.6e}, {:.6e}) last-quarter R=[{:.4e},{:.4e}] P=[{:.4e},{:.4e}]",
        xf[0], xf[1], xf[2], rmin, rmax, pmin, pmax
    )
}

fn phase_c6() {
    let (sys, kp0) = kooi_sys(9.0, 0.7);
    let kp = KooiParams {
        n_r: 24.6,
        d: 0.142,
        ..kp0
    };
    let coex = coexistence_equilibrium(&kp).unwrap();
    println!("coexistence eq: {:?}", coex);
    let x0 = DVector::from_vec(vec![coex.0, coex.1, coex.2 + 0.01]);
    let params = sys
        .params(
            &[("c_r", 9.0), ("mu_RP", 0.7), ("N_r", 24.6), ("D", 0.142)],
            ("N_r", "D"),
        )
        .unwrap();
    // The orbit is a long switching transient: integrate over its lifetime
    // only, before the final collapse to wash-out.
    let traj = integrate(&sys, &x0, &params, 1600.0, 1e-9).unwrap();
    println!(
        "integrated to t={} with {} points, events={}",
        traj.final_time(),
        traj.times.len(),
        traj.events.len()
    );
    // Ranges over t >= 200 (transient from the equilibrium discarded).
    let mut ranges = [[f64::INFINITY, f64::NEG_INFINITY]; 3];
    for (i, &t) in traj.times.iter().enumerate() {
        if t < 200.0 {
            continue;
        }
        for c in 0..3 {
            ranges[c][0] = ranges[c][0].min(traj.states[i][c]);
            ranges[c][1] = ranges[c][1].max(traj.states[i][c]);
        }
    }
    println!("ranges after t=200: {:?}", ranges);
    let pmid = 0.01 * kp.kappa_rp;
    let section = Section {
        component: 2,
        value: pmid,
        direction: 1.0,
    };
    let crossings = section_crossings(&traj, &section, 0.0);
    println!("upcrossings at P={pmid:.6}:");
    for w in crossings.windows(2) {
        println!("  t={:.9}  period to next = {:.9}", w[0], w[1] - w[0]);
    }
    if let Some(&t_last) = crossings.last() {
        println!("  t={t_last:.9} (last)");
    }
    if let Some(t) = estimate_period(&traj, &section) {
        println!("estimated period (mean over later crossings) = {:.17e}", t);
    }
    if crossings.len() >= 2 {
        let (t0, t1) = (
            crossings[crossings.len() - 2],
            crossings[crossings.len() - 1],
        );
        analyze_cycle(&traj, t0, t1, kp.kappa_rp);
    }
    // Terminal collapse after the last crossing: R peak, halving time,
    // wash-out time.
    if let Some(&t_last) = crossings.last() {
        let traj2 = integrate(&sys, &x0, &params, 2000.0, 1e-9).unwrap();
        let idx: Vec<usize> = (0..traj2.times.len())
            .filter(|&i| traj2.times[i] >= t_last)
            .collect();
        let i_rmax = idx
            .iter()
            .copied()
            .max_by(|&a, &b| traj2.states[a][1].partial_cmp(&traj2.states[b][1]).unwrap())
            .unwrap();
        let rmax = traj2.states[i_rmax][1];
        println!(
            "terminal: R max {:.4} at t={:.3}",
            rmax, traj2.times[i_rmax]
        );
        for &i in idx.iter().filter(|&&i| i >= i_rmax) {
            if traj2.states[i][1] <= 0.5 * rmax {
                println!(
                    "terminal: R halves at t={:.3} (dt={:.2})",
                    traj2.times[i],
                    traj2.times[i] - traj2.times[i_rmax]
                );
                break;
            }
        }
        for &i in &idx {
            if traj2.states[i][1] < 1e-6 {
                println!("terminal: wash-out at t={:.1}", traj2.times[i]);
                break;
            }
        }
    }
}

/// Print the phase structure of one cycle [t0, t1].
fn analyze_cycle(traj: &Trajectory, t0: f64, t1: f64, kappa_rp: f64) {
    let period = t1 - t0;
    println!("cycle [{t0:.3}, {t1:.3}] period={period:.6}");
    let idx: Vec<usize> = (0..traj.times.len())
        .filter(|&i| traj.times[i] >= t0 && traj.times[i] <= t1)
        .collect();
    let p_low = 0.01 * kappa_rp;

    // Phase A: longest run with P < p_low; R growth across it.
    let mut best: Option<(usize, usize)> = None;
    let mut run_start: Option<usize> = None;
    for &i in &idx {
        if traj.states[i][2] < p_low {
            if run_start.is_none() {
                run_start = Some(i);
            }
        } else if let Some(s) = run_start.take() {
            let len = traj.times[i - 1] - traj.times[s];
            if best.is_none_or(|(bs, be)| traj.times[be] - traj.times[bs] < len) {
                best = Some((s, i - 1));
            }
        }
    }
    if let Some(s) = run_start {
        let e = *idx.last().unwrap();
        let len = traj.times[e] - traj.times[s];
        if best.is_none_or(|(bs, be)| traj.times[be] - traj.times[bs] < len) {
            best = Some((s, e));
        }
    }
    if let Some((s, e)) = best {
        println!(
            "phase A (P<{p_low:.3}): t=[{:.3},{:.3}] dur={:.3} R {:.4} -> {:.4} (x{:.3})",
            traj.times[s],
            traj.times[e],
            traj.times[e] - traj.times[s],
            traj.states[s][1],
            traj.states[e][1],
            traj.states[e][1] / traj.states[s][1]
        );
    }

    // R maximum and subsequent crash.
    let i_rmax = idx
        .iter()
        .copied()
        .max_by(|&a, &b| traj.states[a][1].partial_cmp(&traj.states[b][1]).unwrap())
        .unwrap();
    let rmax = traj.states[i_rmax][1];
    println!("R max {:.4} at t={:.3}", rmax, traj.times[i_rmax]);
    // Crash: time for R to fall to half its max after the max.
    for &i in idx.iter().filter(|&&i| i >= i_rmax) {
        if traj.states[i][1] <= 0.5 * rmax {
            println!(
                "R halves at t={:.3} ({:.4} of period after max)",
                traj.times[i],
                (traj.times[i] - traj.times[i_rmax]) / period
            );
            break;
        }
    }

    // Plateau scan: print (t, N, R, P) at 40 sample rows for a look.
    println!("cycle samples:");
    let n_s = 40;
    for k in 0..=n_s {
        let want = t0 + period * k as f64 / n_s as f64;
        let i = idx
            .iter()
            .copied()
            .min_by(|&a, &b| {
                (traj.times[a] - want)
                    .abs()
                    .partial_cmp(&(traj.times[b] - want).abs())
                    .unwrap()
            })
            .unwrap();
        println!(
            "  t={:.3} N={:.5} R={:.5} P={:.5}",
            traj.times[i], traj.states[i][0], traj.states[i][1], traj.states[i][2]
        );
    }
}

fn phase_regions() {
    let (sys, kp0) = kooi_sys(9.0, 0.7);
    // Re-trace the three curves quickly (same seeds as phase_c5), then read
    // off branch D values at N_r = 26.5 and 24.6.
    let curves = trace_c5_curves(&sys, &kp0);
    for nr in [26.5, 24.6] {
        println!("== branch D values at N_r={nr} ==");
        for (tag, c) in &curves {
            let ds = lambda2_at_lambda1(c, nr);
            println!("  {tag}: {:?}", ds);
        }
    }

    // Probe outcomes on a D grid at both N_r values.
    for (nr, dgrid) in [
        (26.5, vec![0.24, 0.22, 0.20, 0.18, 0.17, 0.16, 0.15, 0.14, 0.12, 0.10, 0.08, 0.06, 0.04]),
        (
            24.6,
            vec![
                0.20, 0.18, 0.17, 0.16, 0.155, 0.15, 0.145, 0.142, 0.14, 0.135, 0.13, 0.125, 0.12,
                0.115, 0.11, 0.105, 0.10, 0.09, 0.08, 0.06, 0.05, 0.04,
            ],
        ),
    ] {
        println!("== probe outcomes at N_r={nr} ==");
        for d in dgrid {
            let kp = KooiParams {
                n_r: nr,
                d,
                ..kp0
            };
            // Generic interior probe.
            let x0 = DVector::from_vec(vec![0.5 * nr, 1.0, 0.05]);
            let out = classify_outcome(&sys, &kp, &x0, 5000.0);
            println!("  D={d:.3}: interior {out}");
            // Prey-only-adjacent probe (small predator inoculum near the
            // upper prey-only state, if it exists).
            let eqs = prey_only_equilibria(&kp);
            if let Some(&(n, r)) = eqs.last() {
                let x1 = DVector::from_vec(vec![n, r, 1e-3]);
                let out = classify_outcome(&sys, &kp, &x1, 5000.0);
                println!("           prey-adj {out}");
            }
        }
    }
}

fn trace_c5_curves(sys: &SystemDef, kp0: &KooiParams) -> Vec<(String, Curve)> {
    let mut out = Vec::new();
    // Fold curve.
    let d_fix = 0.14;
    let nr0 = 25.0;
    let kp = KooiParams {
        n_r: nr0,
        d: d_fix,
        ..*kp0
    };
    let eqs = prey_only_equilibria(&kp);
    if !eqs.is_empty() {
        let (n, r) = eqs[eqs.len() - 1];
        let x0 = DVector::from_vec(vec![n, r, 0.0]);
        let params = sys
            .params(
                &[("c_r", 9.0), ("mu_RP", 0.7), ("N_r", nr0), ("D", d_fix)],
                ("N_r", "D"),
            )
            .unwrap();
        if let Ok(c) = continue_equilibrium(&sys, &x0, &params, (2.0, 50.0), &settings()) {
            for sp in c.specials_of(bifkit::codim2::SpecialKind::Fold) {
                for fdir in [1.0, -1.0] {
                    let fs = settings().with_direction(fdir);
                    if let Ok(fc) = continue_fold_curve(sys, &sp.x, &sp.params, &fs) {
                        out.push((format!("fold dir={fdir}"), fc));
                    }
                }
                break;
            }
        }
    }
    // TC curve.
    let d_tc = 0.12;
    let rbar = kp0.kappa_rp * (d_tc + kp0.m_p0) / (kp0.mu_rp - d_tc - kp0.m_p0);
    'outer: for i in 0..=400 {
        let nr = 10.0 + 30.0 * i as f64 / 400.0;
        let kp = KooiParams {
            n_r: nr,
            d: d_tc,
            ..*kp0
        };
        for (n, r) in prey_only_equilibria(&kp) {
            if (r - rbar).abs() < 0.1 {
                let x0 = DVector::from_vec(vec![n, rbar, 0.0]);
                let params = sys
                    .params(
                        &[("c_r", 9.0), ("mu_RP", 0.7), ("N_r", nr), ("D", d_tc)],
                        ("N_r", "D"),
                    )
                    .unwrap();
                for dir in [1.0, -1.0] {
                    let s = settings().with_direction(dir);
                    if let Ok(c) = continue_tc_curve(sys, &x0, &params, &s) {
                        out.push((format!("tc dir={dir}"), c));
                    }
                }
                break 'outer;
            }
        }
    }
    // Hopf curve.
    let d_h = 0.142;
    let mut prev: Option<(f64, f64)> = None;
    let mut hopf_seed: Option<(f64, DVector<f64>)> = None;
    for i in 0..=60 {
        let nr = 23.5 + 3.0 * i as f64 / 60.0;
        let kp = KooiParams {
            n_r: nr,
            d: d_h,
            ..*kp0
        };
        if let Some((n, r, p)) = coexistence_equilibrium(&kp) {
            if p <= 0.0 {
                continue;
            }
            let x = DVector::from_vec(vec![n, r, p]);
            let pp = sys
                .params(
                    &[("c_r", 9.0), ("mu_RP", 0.7), ("N_r", nr), ("D", d_h)],
                    ("N_r", "D"),
                )
                .unwrap();
            let j = sys.eval_jacobian(&x, &pp);
            let eig = j.complex_eigenvalues();
            if let Some(e) = eig.iter().filter(|e| e.im > 1e-9).next() {
                if let Some((nr_p, re_p)) = prev {
                    if re_p * e.re < 0.0 && hopf_seed.is_none() {
                        let nr_mid = 0.5 * (nr_p + nr);
                        let kpm = KooiParams {
                            n_r: nr_mid,
                            d: d_h,
                            ..*kp0
                        };
                        let (n, r, p) = coexistence_equilibrium(&kpm).unwrap();
                        hopf_seed = Some((nr_mid, DVector::from_vec(vec![n, r, p])));
                    }
                }
                prev = Some((nr, e.re));
            }
        }
    }
    if let Some((nr, x0)) = hopf_seed {
        let params = sys
            .params(
                &[("c_r", 9.0), ("mu_RP", 0.7), ("N_r", nr), ("D", d_h)],
                ("N_r", "D"),
            )
            .unwrap();
        for dir in [1.0, -1.0] {
            let s = settings().with_direction(dir);
            if let Ok(c) = continue_hopf_curve(sys, &x0, &params, &s) {
                out.push((format!("hopf dir={dir}"), c));
            }
        }
    }
    out
}

/// Local stability structure over a (N_r, D) grid: prey-only equilibria with
/// in-plane eigenvalues, predator invasion rate, coexistence eigenvalues.
fn phase_stab() {
    let (sys, kp0) = kooi_sys(9.0, 0.7);
    for nr in [22.0, 23.0, 24.0, 24.6, 25.5, 26.5, 28.0] {
        println!("== N_r={nr} ==");
        for d in [
            0.20, 0.18, 0.17, 0.16, 0.155, 0.15, 0.147, 0.145, 0.142, 0.14, 0.137, 0.135, 0.13,
            0.12, 0.11, 0.10, 0.08, 0.06,
        ] {
            let kp = KooiParams {
                n_r: nr,
                d,
                ..kp0
            };
            let params = sys
                .params(
                    &[("c_r", 9.0), ("mu_RP", 0.7), ("N_r", nr), ("D", d)],
                    ("N_r", "D"),
                )
                .unwrap();
            let eqs = prey_only_equilibria(&kp);
            let mut line = format!("  D={d:.3}:");
            if eqs.is_empty() {
                line += " no prey-only";
            }
            // First entry has the smallest N, i.e. the largest prey density.
            for (tag, &(n, r)) in ["hiR", "loR"].iter().zip(eqs.iter()) {
                let x = DVector::from_vec(vec![n, r, 0.0]);
                let j = sys.eval_jacobian(&x, &params);
                // In-plane 2x2 block (N, R).
                let tr = j[(0, 0)] + j[(1, 1)];
                let det = j[(0, 0)] * j[(1, 1)] - j[(0, 1)] * j[(1, 0)];
                let disc = tr * tr - 4.0 * det;
                let re = if disc >= 0.0 {
                    0.5 * (tr + disc.sqrt()) // larger real root
                } else {
                    0.5 * tr
                };
                let sigma_p = j[(2, 2)];
                line += &format!(
                    " {tag}: R={r:.3} re={re:+.3e}{} sP={sigma_p:+.3e} |",
                    if disc < 0.0 { "f" } else { "" }
                );
            }
            match coexistence_equilibrium(&kp) {
                Some((n, r, p)) if p > 0.0 => {
                    let x = DVector::from_vec(vec![n, r, p]);
                    let j = sys.eval_jacobian(&x, &params);
                    let eig = j.complex_eigenvalues();
                    let maxre = eig.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
                    line += &format!(" | coex R={r:.3} P={p:.3} max_re={maxre:+.4e}");
                }
                _ => line += " | no coex",
            }
            println!("{line}");
        }
    }
}

/// Long-run probes from attractor-adjacent initial conditions: cycle-death
/// boundary at N_r=24.6 and region-representative outcomes.
fn phase_cyc() {
    let (sys, kp0) = kooi_sys(9.0, 0.7);
    let run = |nr: f64, d: f64, x0: DVector<f64>, t_end: f64| {
        let kp = KooiParams {
            n_r: nr,
            d,
            ..kp0
        };
        let params = sys
            .params(
                &[("c_r", 9.0), ("mu_RP", 0.7), ("N_r", nr), ("D", d)],
                ("N_r", "D"),
            )
            .unwrap();
        match integrate(&sys, &x0, &params, t_end, 1e-8) {
            Ok(traj) => {
                let xf = traj.final_state();
                // Time R first drops below 1e-6 (washout time), if ever.
                let mut t_wash = f64::NAN;
                for (i, &t) in traj.times.iter().enumerate() {
                    if traj.states[i][1] < 1e-6 {
                        t_wash = t;
                        break;
                    }
                }
                let t_cut = 0.75 * t_end;
                let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
                let (mut pmin, mut pmax) = (f64::INFINITY, f64::NEG_INFINITY);
                for (i, &t) in traj.times.iter().enumerate() {
                    if t < t_cut {
                        continue;
                    }
                    rmin = rmin.min(traj.states[i][1]);
                    rmax = rmax.max(traj.states[i][1]);
                    pmin = pmin.min(traj.states[i][2]);
                    pmax = pmax.max(traj.states[i][2]);
                }
                println!(
                    "  N_r={nr} D={d:.3}: final R={:.3e} P={:.3e} t_wash={t_wash:.0} lastQ R=[{rmin:.3e},{rmax:.3e}] P=[{pmin:.3e},{pmax:.3e}]",
                    xf[1], xf[2]
                );
            }
            Err(e) => println!("  N_r={nr} D={d:.3}: integration failed: {e}"),
        }
    };

    println!("== cycle persistence from coex+eps at N_r=24.6, t=20000 ==");
    for d in [
        0.145, 0.144, 0.143, 0.142, 0.141, 0.140, 0.139, 0.138, 0.137, 0.136, 0.135, 0.133,
        0.130, 0.125, 0.120, 0.110,
    ] {
        let kp = KooiParams {
            n_r: 24.6,
            d,
            ..kp0
        };
        match coexistence_equilibrium(&kp) {
            Some((n, r, p)) if p > 0.0 => {
                let x0 = DVector::from_vec(vec![n + 0.01, r + 0.01, p + 0.01]);
                run(24.6, d, x0, 20000.0);
            }
            _ => println!("  N_r=24.6 D={d:.3}: no coexistence equilibrium"),
        }
    }

    println!("== region 6 candidates (left of fold, below TC), coex+eps, t=20000 ==");
    for (nr, d) in [(23.0, 0.11), (23.0, 0.10), (23.2, 0.12)] {
        let kp = KooiParams {
            n_r: nr,
            d,
            ..kp0
        };
        match coexistence_equilibrium(&kp) {
            Some((n, r, p)) if p > 0.0 => {
                let x0 = DVector::from_vec(vec![n + 0.01, r + 0.01, p + 0.01]);
                run(nr, d, x0, 20000.0);
            }
            _ => println!("  N_r={nr} D={d:.3}: no coexistence equilibrium"),
        }
    }

    println!("== region 2 probe: hiR prey-only + P inoculum at (24.6, 0.155), t=5000 ==");
    {
        let kp = KooiParams {
            n_r: 24.6,
            d: 0.155,
            ..kp0
        };
        let eqs = prey_only_equilibria(&kp);
        if let Some(&(n, r)) = eqs.first() {
            run(24.6, 0.155, DVector::from_vec(vec![n, r, 1e-3]), 5000.0);
        }
    }

    println!("== region 3 probe: coex+eps at (24.6, 0.148), t=5000 ==");
    {
        let kp = KooiParams {
            n_r: 24.6,
            d: 0.148,
            ..kp0
        };
        if let Some((n, r, p)) = coexistence_equilibrium(&kp) {
            run(24.6, 0.148, DVector::from_vec(vec![n + 0.01, r + 0.01, p + 0.01]), 5000.0);
        }
    }

    println!("== region 1 probe: generic interior at (24.6, 0.17), t=5000 ==");
    run(24.6, 0.17, DVector::from_vec(vec![12.3, 1.0, 0.05]), 5000.0);
}

/// Longevity of the oscillation at (24.6, 0.142) under the criterion-6 style
/// initial condition, across integration tolerances and horizons.
fn phase_life() {
    let (sys, kp0) = kooi_sys(9.0, 0.7);
    let kp = KooiParams {
        n_r: 24.6,
        d: 0.142,
        ..kp0
    };
    let coex = coexistence_equilibrium(&kp).unwrap();
    let params = sys
        .params(
            &[("c_r", 9.0), ("mu_RP", 0.7), ("N_r", 24.6), ("D", 0.142)],
            ("N_r", "D"),
        )
        .unwrap();
    for tol in [1e-8, 1e-9, 1e-10] {
        let x0 = DVector::from_vec(vec![coex.0, coex.1, coex.2 + 0.01]);
        match integrate(&sys, &x0, &params, 40000.0, tol) {
            Ok(traj) => {
                let mut t_wash = f64::NAN;
                for (i, _) in traj.times.iter().enumerate() {
                    if traj.states[i][1] < 1e-6 {
                        t_wash = traj.times[i];
                        break;
                    }
                }
                let t_cut = 0.75 * 40000.0;
                let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
                for (i, &t) in traj.times.iter().enumerate() {
                    if t >= t_cut {
                        rmin = rmin.min(traj.states[i][1]);
                        rmax = rmax.max(traj.states[i][1]);
                    }
                }
                println!(
                    "tol={tol:.0e}: t_wash={t_wash:.0} final R={:.3e} lastQ R=[{rmin:.3e},{rmax:.3e}] pts={}",
                    traj.final_state()[1],
                    traj.times.len()
                );
            }
            Err(e) => println!("tol={tol:.0e}: failed: {e}"),
        }
    }
}

/// Shadow the broken cycle: settle onto the D=0.143 attractor, then run the
/// final state at D=0.142 and report per-cycle switching statistics.
fn phase_ghost() {
    let (sys, kp0) = kooi_sys(9.0, 0.7);
    let kp143 = KooiParams {
        n_r: 24.6,
        d: 0.143,
        ..kp0
    };
    let params143 = sys
        .params(
            &[("c_r", 9.0), ("mu_RP", 0.7), ("N_r", 24.6), ("D", 0.143)],
            ("N_r", "D"),
        )
        .unwrap();
    let coex = coexistence_equilibrium(&kp143).unwrap();
    let x0 = DVector::from_vec(vec![coex.0, coex.1, coex.2 + 0.01]);
    let settle = integrate(&sys, &x0, &params143, 20000.0, 1e-9).unwrap();
    let xg = settle.final_state();
    println!("attractor state at D=0.143: {:?}", xg.as_slice());

    for (d, t_end) in [(0.143, 2000.0), (0.142, 6000.0)] {
        println!("== per-cycle stats at D={d} from the attractor state ==");
        let params = sys
            .params(
                &[("c_r", 9.0), ("mu_RP", 0.7), ("N_r", 24.6), ("D", d)],
                ("N_r", "D"),
            )
            .unwrap();
        let traj = integrate(&sys, &xg, &params, t_end, 1e-9).unwrap();
        let section = Section {
            component: 2,
            value: 0.09,
            direction: 1.0,
        };
        let crossings = section_crossings(&traj, &section, 0.0);
        println!("  {} upcrossings of P=0.09", crossings.len());
        for w in crossings.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            let period = t1 - t0;
            let idx: Vec<usize> = (0..traj.times.len())
                .filter(|&i| traj.times[i] >= t0 && traj.times[i] <= t1)
                .collect();
            let rmin = idx.iter().map(|&i| traj.states[i][1]).fold(f64::INFINITY, f64::min);
            let rmax = idx
                .iter()
                .map(|&i| traj.states[i][1])
                .fold(f64::NEG_INFINITY, f64::max);
            // Crash: first time R falls to half of rmax after the rmax index.
            let i_rmax = idx
                .iter()
                .copied()
                .max_by(|&a, &b| traj.states[a][1].partial_cmp(&traj.states[b][1]).unwrap())
                .unwrap();
            let mut crash = f64::NAN;
            for i in i_rmax..traj.times.len() {
                if traj.states[i][1] <= 0.5 * rmax {
                    crash = traj.times[i] - traj.times[i_rmax];
                    break;
                }
            }
            println!(
                "  cycle t0={t0:.3} period={period:.4} Rmin={rmin:.4} Rmax={rmax:.4} growth=x{:.3} crash_half={crash:.2} ({:.3} of period)",
                rmax / rmin,
                crash / period
            );
        }
        // Washout time, if any.
        for (i, &t) in traj.times.iter().enumerate() {
            if traj.states[i][1] < 1e-6 {
                println!("  washout at t={t:.0}");
                break;
            }
        }
    }
}

fn phase_corridor() {
    // ICs hugging the prey-only plane with a tiny predator inoculum: the
    // orbit should ride the in-plane low-R -> high-R connection (deep prey
    // recovery), then take a full predator pulse. Looking for cycles with
    // Rmax/Rmin >= 2 and a fast crash.
    let (sys, _kp0) = kooi_sys(9.0, 0.7);
    let params = sys
        .params(
            &[("c_r", 9.0), ("mu_RP", 0.7), ("N_r", 24.6), ("D", 0.142)],
            ("N_r", "D"),
        )
        .unwrap();
    let ics = [
        (13.5, 2.0, 1e-4),
        (13.5, 2.0, 1e-3),
        (13.5, 2.0, 1e-2),
        (13.5, 1.9, 1e-4),
        (14.0, 2.2, 1e-4),
    ];
    for (n0, r0, p0) in ics {
        println!("== IC ({n0}, {r0}, {p0:.0e}) at (24.6, 0.142) ==");
        let x0 = DVector::from_vec(vec![n0, r0, p0]);
        let traj = integrate(&sys, &x0, &params, 4000.0, 1e-9).unwrap();
        let section = Section {
            component: 2,
            value: 0.09,
            direction: 1.0,
        };
        let crossings = section_crossings(&traj, &section, 0.0);
        println!("  {} upcrossings of P=0.09", crossings.len());
        for w in crossings.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            let period = t1 - t0;
            let idx: Vec<usize> = (0..traj.times.len())
                .filter(|&i| traj.times[i] >= t0 && traj.times[i] <= t1)
                .collect();
            let rmin = idx.iter().map(|&i| traj.states[i][1]).fold(f64::INFINITY, f64::min);
            let i_rmax = idx
                .iter()
                .copied()
                .max_by(|&a, &b| traj.states[a][1].partial_cmp(&traj.states[b][1]).unwrap())
                .unwrap();
            let rmax = traj.states[i_rmax][1];
            let mut crash = f64::NAN;
            for i in i_rmax..traj.times.len() {
                if traj.states[i][1] <= 0.5 * rmax {
                    crash = traj.times[i] - traj.times[i_rmax];
                    break;
                }
            }
            println!(
                "  cycle t0={t0:.3} period={period:.4} Rmin={rmin:.4} Rmax={rmax:.4} ratio=x{:.3} crash_half={crash:.2} ({:.3} of period)",
                rmax / rmin,
                crash / period
            );
        }
        for (i, &t) in traj.times.iter().enumerate() {
            if traj.states[i][1] < 1e-6 {
                println!("  washout at t={t:.0}");
                break;
            }
        }
        if crossings.len() >= 2 {
            let k = crossings.len() - 1;
            analyze_cycle(&traj, crossings[k - 1], crossings[k], 9.0);
        }
    }
}

fn main() {
    let phase = std::env::args().nth(1).unwrap_or_else(|| "c4".into());
    match phase.as_str() {
        "c4" => phase_c4(),
        "c5" => phase_c5(),
        "c6" => phase_c6(),
        "regions" => phase_regions(),
        "stab" => phase_stab(),
        "cyc" => phase_cyc(),
        "life" => phase_life(),
        "ghost" => phase_ghost(),
        "corridor" => phase_corridor(),
        other => println!("unknown phase {other}"),
    }
}
