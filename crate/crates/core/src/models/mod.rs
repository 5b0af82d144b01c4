//! Built-in systems: the stressed predator-prey-nutrient model and five
//! normal forms, each with analytic derivatives and closed-form oracles.

pub mod kooi;
pub mod normal_forms;

use crate::error::{BifError, Result};
use crate::system::SystemDef;

pub use kooi::{
    coexistence_equilibrium, kink_prey_density, kooi_maintenance_rate, kooi_system,
    predator_invasion_eigenvalue, prey_invasion_d, prey_only_equilibria, washout_state, KooiParams,
};
pub use normal_forms::{
    fold_equilibrium, normal_form_system, oracle_fold_curve, sntc_minimal_constants, NormalFormId,
};

/// Names accepted by [`builtin_system`], in presentation order.
pub const BUILTIN_NAMES: [&str; 6] = [
    "kooi",
    "cusp",
    "sntc-single-zero",
    "sntc-minimal",
    "sntc2",
    "bogdanov-takens",
];

/// Construct a built-in system by name with its default constants.
pub fn builtin_system(name: &str) -> Result<SystemDef> {
    match name {
        "kooi" => Ok(kooi_system(KooiParams::default())),
        "cusp" => normal_form_system(&NormalFormId::Cusp),
        "sntc-single-zero" => normal_form_system(&NormalFormId::SntcSingleZero),
        "sntc-minimal" => normal_form_system(&NormalFormId::SntcMinimal { eps: 1.0, k1: 1.0 }),
        "sntc2" => normal_form_system(&NormalFormId::Sntc2 { mu1: 1.0, mu2: 1.0 }),
        "bogdanov-takens" => normal_form_system(&NormalFormId::BogdanovTakens),
        other => Err(BifError::Config(format!(
            "unknown system `{other}`; available: {}",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_constructs() {
        for name in BUILTIN_NAMES {
            let sys = builtin_system(name).unwrap();
            assert_eq!(sys.name(), name);
        }
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert!(builtin_system("lorenz").is_err());
    }
}
