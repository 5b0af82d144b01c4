//! bifkit — pseudo-arclength continuation and codimension-two diagnostics for
//! small ODE models.
//!
//! The crate traces equilibrium and codimension-one bifurcation curves (fold,
//! transcritical, Hopf) of systems with a handful of state variables, records
//! bordered-system test functions along them, and classifies the
//! codimension-two points where those curves meet — including saddle-node /
//! transcritical interaction points on invariant coordinate planes, which the
//! classical cusp and Bogdanov–Takens tests alone misread.
//!
//! Built-in models: a nutrient–prey–predator chemostat with a stress-dependent
//! prey maintenance rate, and five polynomial normal forms whose fold curves
//! have closed forms used as oracles throughout the test suite.

pub mod bordered;
pub mod codim2;
pub mod continuation;
pub mod error;
pub mod integrate;
pub mod models;
pub mod system;

pub use error::{BifError, Result};
pub use system::{ParamPoint, SystemDef};
