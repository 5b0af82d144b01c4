//! Scenario configuration: TOML schema and validation.
//!
//! A scenario is a named list of tasks run against one (default) dynamical
//! system. Every reference a task makes — parameter names, seed sources,
//! curve sources — is checked here before anything executes, so a broken
//! config fails with a message pointing at the offending task instead of
//! halfway through a run.

use std::collections::{BTreeMap, BTreeSet};

use anyhow::{bail, Context, Result};
use bifkit::models::{builtin_system, BUILTIN_NAMES};
use bifkit::SystemDef;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Default system for tasks that do not override it.
    pub system: String,
    /// Parameter values shared by all tasks (tasks may override per-name).
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Names of the two active (continuation) parameters.
    pub active: [String; 2],
    #[serde(default, rename = "task")]
    pub tasks: Vec<Task>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub id: String,
    pub kind: TaskKind,
    /// Override the scenario system (normal-form scenarios mix systems).
    pub system: Option<String>,
    /// Override the active parameter pair (required when `system` is set
    /// and the scenario's pair does not exist in the override system).
    pub active: Option<[String; 2]>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Explicit seed state. Curve tasks need either this or `seed`.
    pub x0: Option<Vec<f64>>,
    /// Seed from a special point detected by an earlier task.
    pub seed: Option<SeedRef>,
    /// λ1 range for equilibrium continuation.
    pub range: Option<[f64; 2]>,
    pub direction: Option<f64>,
    pub window: Option<Window>,
    /// Continuation overrides; defaults match the library.
    pub h0: Option<f64>,
    pub h_max: Option<f64>,
    pub max_points: Option<usize>,
    pub newton_tol: Option<f64>,
    /// Compare the traced fold curve against the closed-form branch of the
    /// named normal form and report the worst deviation.
    #[serde(default)]
    pub oracle: bool,
    /// Integration horizon (integrate tasks).
    pub t_end: Option<f64>,
    /// Tolerance: integrator tolerance or derivative-check tolerance.
    pub tol: Option<f64>,
    /// Curve task whose test functions to scan (detect-codim2 tasks).
    pub source: Option<String>,
    /// Test functions to scan for sign changes (detect-codim2 tasks).
    #[serde(default)]
    pub tests: Vec<String>,
    /// Fixed bordering vectors for re-localization (detect-codim2 tasks).
    pub borders: Option<Borders>,
    /// Sample count for fd-check tasks.
    pub points: Option<u32>,
    pub rng_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    ContinueEquilibrium,
    ContinueFold,
    ContinueTc,
    ContinueHopf,
    Integrate,
    DetectCodim2,
    FdCheck,
}

impl TaskKind {
    pub fn label(self) -> &'static str {
        match self {
            TaskKind::ContinueEquilibrium => "continue-equilibrium",
            TaskKind::ContinueFold => "continue-fold",
            TaskKind::ContinueTc => "continue-tc",
            TaskKind::ContinueHopf => "continue-hopf",
            TaskKind::Integrate => "integrate",
            TaskKind::DetectCodim2 => "detect-codim2",
            TaskKind::FdCheck => "fd-check",
        }
    }

    pub fn is_curve(self) -> bool {
        matches!(
            self,
            TaskKind::ContinueEquilibrium
                | TaskKind::ContinueFold
                | TaskKind::ContinueTc
                | TaskKind::ContinueHopf
        )
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRef {
    /// Id of an earlier curve task.
    pub task: String,
    /// Special-point kind label to pick (e.g. "fold", "sntc-double-zero").
    pub special: String,
    /// Which match to take when several specials share the kind.
    #[serde(default)]
    pub index: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub lambda1: Option<[f64; 2]>,
    pub lambda2: Option<[f64; 2]>,
    pub state_abs_max: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Borders {
    pub p_bar: Vec<f64>,
    pub q_bar: Vec<f64>,
}

const KNOWN_TESTS: [&str; 3] = ["alpha", "beta_cusp", "beta_bt"];

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario> {
        let sc: Scenario = toml::from_str(text).context("failed to parse scenario TOML")?;
        sc.validate()?;
        Ok(sc)
    }

    /// Build the system a given task runs against.
    pub fn system_for(&self, task: &Task) -> Result<SystemDef> {
        builtin_system(task.system.as_deref().unwrap_or(&self.system))
    }

    /// Active parameter pair for a task (task override or scenario default).
    pub fn active_for<'a>(&'a self, task: &'a Task) -> (&'a str, &'a str) {
        let pair = task.active.as_ref().unwrap_or(&self.active);
        (&pair[0], &pair[1])
    }

    /// Parameter overrides for a task: scenario values with task values on top.
    /// Tasks with a system override start from their own values only, since
    /// the scenario names need not exist there.
    pub fn params_for(&self, task: &Task) -> BTreeMap<String, f64> {
        let mut merged = if task.system.is_some() {
            BTreeMap::new()
        } else {
            self.params.clone()
        };
        merged.extend(task.params.iter().map(|(k, v)| (k.clone(), *v)));
        merged
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(is_name_char) {
            bail!("scenario name {:?} must be non-empty and filename-safe", self.name);
        }
        builtin_system(&self.system)
            .with_context(|| format!("scenario system {:?} (known: {:?})", self.system, BUILTIN_NAMES))?;

        let mut ids = BTreeSet::new();
        for (i, task) in self.tasks.iter().enumerate() {
            let earlier = &self.tasks[..i];
            task.validate(self, earlier)
                .with_context(|| format!("task {:?} (#{i})", task.id))?;
            if !ids.insert(task.id.as_str()) {
                bail!("duplicate task id {:?}", task.id);
            }
        }
        Ok(())
    }
}

impl Task {
    fn validate(&self, sc: &Scenario, earlier: &[Task]) -> Result<()> {
        if self.id.is_empty() || !self.id.chars().all(is_name_char) {
            bail!("task id {:?} must be non-empty and filename-safe", self.id);
        }
        let sys = sc.system_for(self)?;

        // Parameter and active names must exist in the task's system.
        let names = sys.param_names();
        for name in self.params.keys() {
            if !names.iter().any(|n| n == name) {
                bail!("parameter {:?} not in system {:?} ({:?})", name, sys.name(), names);
            }
        }
        let (a1, a2) = sc.active_for(self);
        for a in [a1, a2] {
            if !names.iter().any(|n| n == a) {
                bail!("active parameter {:?} not in system {:?}; set `active` on the task", a, sys.name());
            }
        }
        if a1 == a2 {
            bail!("active parameters must be distinct (both {:?})", a1);
        }

        if let Some(x0) = &self.x0 {
            if x0.len() != sys.dim() {
                bail!("x0 has {} entries but system {:?} has dimension {}", x0.len(), sys.name(), sys.dim());
            }
        }
        if let Some(r) = self.range {
            if !(r[0] < r[1]) {
                bail!("range [{}, {}] must satisfy lo < hi", r[0], r[1]);
            }
        }
        if let Some(w) = &self.window {
            for (label, pair) in [("lambda1", w.lambda1), ("lambda2", w.lambda2)] {
                if let Some([lo, hi]) = pair {
                    if !(lo < hi) {
                        bail!("window.{label} [{lo}, {hi}] must satisfy lo < hi");
                    }
                }
            }
        }
        if let Some(d) = self.direction {
            if d != 1.0 && d != -1.0 {
                bail!("direction must be 1 or -1, got {d}");
            }
        }
        if let Some(seed) = &self.seed {
            let src = earlier
                .iter()
                .find(|t| t.id == seed.task)
                .ok_or_else(|| anyhow::anyhow!("seed.task {:?} is not an earlier task", seed.task))?;
            if !src.kind.is_curve() {
                bail!("seed.task {:?} is a {} task, not a curve", seed.task, src.kind.label());
            }
            if !self.params.is_empty() {
                bail!("`params` cannot be combined with `seed`; the seed carries its parameter point");
            }
        }

        match self.kind {
            TaskKind::ContinueEquilibrium => {
                if self.x0.is_none() {
                    bail!("continue-equilibrium needs `x0`");
                }
                if self.range.is_none() {
                    bail!("continue-equilibrium needs `range` for the primary parameter");
                }
                if self.seed.is_some() {
                    bail!("continue-equilibrium seeds from `x0`, not from a special");
                }
            }
            TaskKind::ContinueFold | TaskKind::ContinueTc | TaskKind::ContinueHopf => {
                if self.x0.is_some() == self.seed.is_some() {
                    bail!("{} needs exactly one of `x0` or `seed`", self.kind.label());
                }
                if self.oracle {
                    if self.kind != TaskKind::ContinueFold {
                        bail!("`oracle` applies only to continue-fold tasks");
                    }
                    let name = self.system.as_deref().unwrap_or(&sc.system);
                    if name == "kooi" {
                        bail!("`oracle` needs a normal-form system, not {name:?}");
                    }
                }
            }
            TaskKind::Integrate => {
                if self.x0.is_none() {
                    bail!("integrate needs `x0`");
                }
                if self.t_end.map_or(true, |t| t <= 0.0) {
                    bail!("integrate needs `t_end` > 0");
                }
            }
            TaskKind::DetectCodim2 => {
                let source = self
                    .source
                    .as_deref()
                    .ok_or_else(|| anyhow::anyhow!("detect-codim2 needs `source` (an earlier curve task)"))?;
                let src = earlier
                    .iter()
                    .find(|t| t.id == source)
                    .ok_or_else(|| anyhow::anyhow!("source {:?} is not an earlier task", source))?;
                if !matches!(src.kind, TaskKind::ContinueFold | TaskKind::ContinueTc) {
                    bail!("source {:?} must be a fold or transcritical curve task", source);
                }
                if self.tests.is_empty() {
                    bail!("detect-codim2 needs `tests` (subset of {KNOWN_TESTS:?})");
                }
                for t in &self.tests {
                    if !KNOWN_TESTS.contains(&t.as_str()) {
                        bail!("unknown test {:?} (known: {KNOWN_TESTS:?})", t);
                    }
                }
                if let Some(b) = &self.borders {
                    if b.p_bar.len() != b.q_bar.len() || b.p_bar.is_empty() {
                        bail!("borders p_bar/q_bar must be non-empty and the same length");
                    }
                }
            }
            TaskKind::FdCheck => {
                if self.x0.is_some() || self.seed.is_some() || self.range.is_some() {
                    bail!("fd-check samples its own points; drop x0/seed/range");
                }
            }
        }

        if self.oracle && self.kind != TaskKind::ContinueFold {
            bail!("`oracle` applies only to continue-fold tasks");
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                bail!("tol must be positive, got {t}");
            }
        }
        Ok(())
    }
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '-' || c == '_'
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(extra: &str) -> String {
        format!(
            r#"
name = "t"
system = "cusp"
active = ["a", "b"]
{extra}
"#
        )
    }

    #[test]
    fn rejects_unknown_fields_and_bad_references() {
        let err = Scenario::from_toml(&minimal("banana = 3")).unwrap_err();
        assert!(format!("{err:#}").contains("banana"), "{err:#}");

        let dup = minimal(
            r#"
[[task]]
id = "x"
kind = "integrate"
x0 = [0.1]
t_end = 1.0

[[task]]
id = "x"
kind = "integrate"
x0 = [0.1]
t_end = 1.0
"#,
        );
        let err = Scenario::from_toml(&dup).unwrap_err();
        assert!(format!("{err:#}").contains("duplicate"), "{err:#}");

        let fwd = minimal(
            r#"
[[task]]
id = "f"
kind = "continue-fold"
[task.seed]
task = "later"
special = "fold"
"#,
        );
        let err = Scenario::from_toml(&fwd).unwrap_err();
        assert!(format!("{err:#}").contains("earlier"), "{err:#}");
    }

    #[test]
    fn validates_dimensions_and_names() {
        let bad_dim = minimal(
            r#"
[[task]]
id = "i"
kind = "integrate"
x0 = [0.1, 0.2]
t_end = 1.0
"#,
        );
        let err = Scenario::from_toml(&bad_dim).unwrap_err();
        assert!(format!("{err:#}").contains("dimension"), "{err:#}");

        let bad_param = minimal(
            r#"
[[task]]
id = "e"
kind = "continue-equilibrium"
x0 = [0.1]
range = [0.0, 1.0]
params = { zeta = 1.0 }
"#,
        );
        let err = Scenario::from_toml(&bad_param).unwrap_err();
        assert!(format!("{err:#}").contains("zeta"), "{err:#}");
    }
}
