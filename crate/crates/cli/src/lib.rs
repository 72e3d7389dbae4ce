//! Experiment runner around the `dynopt` toolkit: declarative TOML specs,
//! seed sweeps, strategy and baseline comparisons, and plot-ready CSV output.

pub mod runner;
pub mod spec;

use thiserror::Error;

/// Runner errors, split by exit code: validation problems exit 1, runtime
/// failures exit 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

/// Experiment specs shipped with the binary, runnable by name.
pub const BUNDLED_SPECS: &[(&str, &str)] = &[
    (
        "change_tracking",
        include_str!("../experiments/change_tracking.toml"),
    ),
    (
        "dimension_sweep",
        include_str!("../experiments/dimension_sweep.toml"),
    ),
    (
        "strategy_comparison",
        include_str!("../experiments/strategy_comparison.toml"),
    ),
    (
        "baseline_comparison",
        include_str!("../experiments/baseline_comparison.toml"),
    ),
];

/// Look up a bundled spec by name (with or without the `.toml` suffix).
pub fn bundled_spec(name: &str) -> Option<&'static str> {
    let trimmed = name.strip_suffix(".toml").unwrap_or(name);
    BUNDLED_SPECS
        .iter()
        .find(|(n, _)| *n == trimmed)
        .map(|(_, body)| *body)
}
