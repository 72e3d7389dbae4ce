//! Dynamic-optimization toolkit.
//!
//! The crate is organized around a small loop: a [`problem::DynamicProblem`]
//! whose optimum drifts on a schedule, a differential-evolution engine
//! ([`de`]) that searches it, a [`sensing::Sensor`] that notices when the
//! landscape moved, [`adaptation`] strategies that react to the change, and a
//! [`framework`] loop that wires those together and emits a
//! [`metrics::RunHistory`] for analysis. [`baselines`] provides two static
//! global optimizers (a simulated annealer and a basin hopper) used as
//! comparison points that ignore the dynamics.
//!
//! Everything is deterministic given a seed: the environment owns its own
//! random stream, separate from optimizer randomness, so two runs with the
//! same problem seed see the identical optimum trajectory no matter which
//! optimizer they use.

pub mod adaptation;
pub mod baselines;
pub mod de;
pub mod error;
pub mod framework;
pub mod metrics;
pub mod problem;
pub mod rng;
pub mod sensing;

pub use error::Error;
pub use problem::{
    clamp_to_bounds, make_moving_optimum_problem, BoxBounds, ChangeSchedule, DynamicProblem,
    SolutionVector,
};
