use bifkit::continuation::{
    continue_equilibrium, continue_tc_curve, ContinuationSettings, Window,
};
use bifkit::models::{kooi_system, KooiParams};
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

fn main() {
    for (c_r, mu_rp, nr0, d_fix, x0, rng) in [
        (1.0, 0.2, 9.0, 0.15, vec![4.9965546727766, 1.2496049653947, 0.0], (2.0, 20.0)),
        (9.0, 0.7, 25.0, 0.14, vec![15.08928217316902, 1.6984977864034077, 0.0], (2.0, 50.0)),
    ] {
        let kp = KooiParams { c_r, mu_rp, n_r: nr0, d: d_fix, ..Default::default() };
        let sys = kooi_system(kp);
        let params = sys
            .params(
                &[("c_r", c_r), ("mu_RP", mu_rp), ("N_r", nr0), ("D", d_fix)],
                ("N_r", "D"),
            )
            .unwrap();
        let x0 = DVector::from_vec(x0);
        for dir in [1.0, -1.0] {
            let s = settings().with_direction(dir);
            match continue_equilibrium(&sys, &x0, &params, rng, &s) {
                Ok(c) => {
                    println!(
                        "c_r={c_r} eq dir={dir}: {} pts, term {}, specials: {:?}",
                        c.points.len(),
                        c.termination.label(),
                        c.specials
                            .iter()
                            .map(|sp| (sp.kind.label(), sp.params.lambda1()))
                            .collect::<Vec<_>>()
                    );
                }
                Err(e) => println!("c_r={c_r} eq dir={dir}: {e}"),
            }
        }
    }

    // TC curve directions and where the interaction specials land.
    for (c_r, mu_rp, nr0, d0, x0) in [
        (1.0, 0.2, 10.0, 0.207777777777778, vec![10.0, 0.0, 0.0]),
        (9.0, 0.7, 23.125, 0.12, vec![10.999085103166404, 2.052631578947369, 0.0]),
    ] {
        let kp = KooiParams { c_r, mu_rp, n_r: nr0, d: d0, ..Default::default() };
        let sys = kooi_system(kp);
        let params = sys
            .params(
                &[("c_r", c_r), ("mu_RP", mu_rp), ("N_r", nr0), ("D", d0)],
                ("N_r", "D"),
            )
            .unwrap();
        let x0 = DVector::from_vec(x0);
        for dir in [1.0, -1.0] {
            let s = settings().with_direction(dir);
            match continue_tc_curve(&sys, &x0, &params, &s) {
                Ok(c) => {
                    println!(
                        "c_r={c_r} tc dir={dir}: {} pts, term {}, specials: {:?}",
                        c.points.len(),
                        c.termination.label(),
                        c.specials
                            .iter()
                            .map(|sp| (sp.kind.label(), sp.params.lambda1(), sp.params.lambda2()))
                            .collect::<Vec<_>>()
                    );
                }
                Err(e) => println!("c_r={c_r} tc dir={dir}: {e}"),
            }
        }
    }
}
