//! The experiment specification: a single declarative TOML file describing a
//! problem, framework settings, the competitors (adaptation strategies and
//! static baselines), and the seeds to sweep.
//!
//! # Schema
//!
//! ```toml
//! name = "my_experiment"            # directory-safe identifier
//! seeds = [101, 102, 103]           # problem seeds; one run per competitor x seed
//! # output_directory = "runs"       # optional; --out overrides
//!
//! [problem]
//! dimension = 10                    # or a list [1, 2, 3] for a dimension sweep
//! lower = 0.0                       # box bound, all axes
//! upper = 1.0
//! change_frequency = 200            # iterations between optimum jumps
//! change_severity = 0.1             # jump size as a fraction of the range
//! # total_changes_cap = 4           # optional; unlimited when absent
//!
//! [framework]
//! total_iterations = 1000
//! sensor_tolerance = 1e-12
//! sentinel_count = 3
//! feedback_enabled = false
//! snapshot_stride = 10
//! recovery_band = 1.5
//! recovery_target = 100
//!
//! [de]
//! # population_size = 100           # default: min(10 * dimension, 100)
//! mutation_factor = 0.8             # or [lo, hi] for per-donor dither
//! crossover_rate = 0.9
//! variant = "rand1bin"              # or "best1bin"
//!
//! [[strategies]]                    # at least one strategy or baseline
//! kind = "hybrid"                   # partial_reinit | local_search_high_mutation | hybrid
//! # name = "hybrid"                 # competitor label; defaults to the kind
//! reinit_fraction = 0.1
//! local_search_budget = 50
//! dither = [0.7, 1.2]
//! crossover_rate = 0.9
//!
//! [[baselines]]
//! kind = "dual_annealing"           # or "basin_hopping"
//! initial_temperature = 1.0         # annealing knobs
//! cooling_exponent = 1.0
//! step_scale = 0.5
//! # steps = 50000                   # annealing evaluation budget; when absent the
//!                                   # run is budget-matched to the first strategy
//! hops = 50                         # basin-hopping knobs
//! perturbation_scale = 0.25
//! local_simplex_iterations = 200
//! # max_evaluations = 50000         # basin budget; matched when absent (hops
//!                                   # then uncapped; the budget terminates)
//! ```
//!
//! All competitors under one seed share the identical optimum trajectory (the
//! problem seed drives the environment stream); each competitor gets its own
//! optimizer stream derived from the competitor name, seed, and dimension.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use dynopt::adaptation::{AdaptationStrategy, StrategyKind};
use dynopt::baselines::{AnnealConfig, BasinConfig};
use dynopt::de::{default_population_size, DeConfig, DeVariant, MutationFactor};
use dynopt::framework::FrameworkConfig;
use dynopt::problem::{BoxBounds, ChangeSchedule};
use dynopt::rng::stable_hash64;

use crate::CliError;

fn d_lower() -> f64 {
    0.0
}
fn d_upper() -> f64 {
    1.0
}
fn d_frequency() -> u64 {
    200
}
fn d_severity() -> f64 {
    0.1
}
fn d_iterations() -> u64 {
    1000
}
fn d_tolerance() -> f64 {
    dynopt::sensing::DEFAULT_TOLERANCE
}
fn d_sentinels() -> usize {
    dynopt::sensing::DEFAULT_SENTINEL_COUNT
}
fn d_stride() -> u64 {
    dynopt::metrics::DEFAULT_SNAPSHOT_STRIDE
}
fn d_band() -> f64 {
    dynopt::framework::DEFAULT_RECOVERY_BAND
}
fn d_target() -> u64 {
    dynopt::framework::DEFAULT_RECOVERY_TARGET
}
fn d_factor() -> FactorSpec {
    FactorSpec::Fixed(0.8)
}
fn d_cr() -> f64 {
    0.9
}
fn d_variant() -> DeVariant {
    DeVariant::Rand1Bin
}
fn d_fraction() -> f64 {
    dynopt::adaptation::DEFAULT_REINIT_FRACTION
}
fn d_budget() -> u32 {
    dynopt::adaptation::DEFAULT_BURST_BUDGET
}
fn d_dither() -> [f64; 2] {
    [
        dynopt::adaptation::BURST_DITHER_LO,
        dynopt::adaptation::BURST_DITHER_HI,
    ]
}
fn d_temperature() -> f64 {
    1.0
}
fn d_cooling() -> f64 {
    1.0
}
fn d_step_scale() -> f64 {
    0.5
}
fn d_hops() -> u64 {
    50
}
fn d_perturbation() -> f64 {
    0.25
}
fn d_simplex() -> u64 {
    200
}

/// One problem dimension, or a list to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimensionSpec {
    Single(usize),
    Sweep(Vec<usize>),
}

impl DimensionSpec {
    pub fn all(&self) -> Vec<usize> {
        match self {
            DimensionSpec::Single(d) => vec![*d],
            DimensionSpec::Sweep(v) => v.clone(),
        }
    }
}

/// A fixed mutation factor or a `[lo, hi]` dither interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactorSpec {
    Fixed(f64),
    Dither([f64; 2]),
}

impl From<&FactorSpec> for MutationFactor {
    fn from(f: &FactorSpec) -> MutationFactor {
        match *f {
            FactorSpec::Fixed(v) => MutationFactor::Fixed(v),
            FactorSpec::Dither([lo, hi]) => MutationFactor::Dither { lo, hi },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub dimension: DimensionSpec,
    #[serde(default = "d_lower")]
    pub lower: f64,
    #[serde(default = "d_upper")]
    pub upper: f64,
    #[serde(default = "d_frequency")]
    pub change_frequency: u64,
    #[serde(default = "d_severity")]
    pub change_severity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_changes_cap: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameworkSection {
    #[serde(default = "d_iterations")]
    pub total_iterations: u64,
    #[serde(default = "d_tolerance")]
    pub sensor_tolerance: f64,
    #[serde(default = "d_sentinels")]
    pub sentinel_count: usize,
    #[serde(default)]
    pub feedback_enabled: bool,
    #[serde(default = "d_stride")]
    pub snapshot_stride: u64,
    #[serde(default = "d_band")]
    pub recovery_band: f64,
    #[serde(default = "d_target")]
    pub recovery_target: u64,
}

impl Default for FrameworkSection {
    fn default() -> Self {
        FrameworkSection {
            total_iterations: d_iterations(),
            sensor_tolerance: d_tolerance(),
            sentinel_count: d_sentinels(),
            feedback_enabled: false,
            snapshot_stride: d_stride(),
            recovery_band: d_band(),
            recovery_target: d_target(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeSection {
    /// Defaults to `min(10 * dimension, 100)`, resolved per dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_size: Option<usize>,
    #[serde(default = "d_factor")]
    pub mutation_factor: FactorSpec,
    #[serde(default = "d_cr")]
    pub crossover_rate: f64,
    #[serde(default = "d_variant")]
    pub variant: DeVariant,
}

impl Default for DeSection {
    fn default() -> Self {
        DeSection {
            population_size: None,
            mutation_factor: d_factor(),
            crossover_rate: d_cr(),
            variant: d_variant(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    pub kind: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "d_fraction")]
    pub reinit_fraction: f64,
    #[serde(default = "d_budget")]
    pub local_search_budget: u32,
    #[serde(default = "d_dither")]
    pub dither: [f64; 2],
    #[serde(default = "d_cr")]
    pub crossover_rate: f64,
}

impl StrategySection {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| kind_label(self.kind))
    }

    pub fn to_strategy(&self) -> AdaptationStrategy {
        let mut s = match self.kind {
            StrategyKind::PartialReinit => AdaptationStrategy::partial_reinit(),
            StrategyKind::LocalSearchHighMutation => AdaptationStrategy::local_search(),
            StrategyKind::Hybrid => AdaptationStrategy::hybrid(),
        };
        s.reinit_fraction = self.reinit_fraction;
        s.local_search_budget = self.local_search_budget;
        s.local_search.mutation_factor = MutationFactor::Dither {
            lo: self.dither[0],
            hi: self.dither[1],
        };
        s.local_search.crossover_rate = self.crossover_rate;
        s
    }
}

pub fn kind_label(kind: StrategyKind) -> String {
    match kind {
        StrategyKind::PartialReinit => "partial_reinit".into(),
        StrategyKind::LocalSearchHighMutation => "local_search_high_mutation".into(),
        StrategyKind::Hybrid => "hybrid".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    DualAnnealing,
    BasinHopping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub kind: BaselineKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    // Annealing knobs (ignored by basin hopping).
    #[serde(default = "d_temperature")]
    pub initial_temperature: f64,
    #[serde(default = "d_cooling")]
    pub cooling_exponent: f64,
    #[serde(default = "d_step_scale")]
    pub step_scale: f64,
    /// Annealing evaluation budget; budget-matched when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    // Basin-hopping knobs (ignored by annealing).
    #[serde(default = "d_hops")]
    pub hops: u64,
    #[serde(default = "d_perturbation")]
    pub perturbation_scale: f64,
    #[serde(default = "d_simplex")]
    pub local_simplex_iterations: u64,
    /// Basin-hopping evaluation budget; budget-matched when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_evaluations: Option<u64>,
}

impl BaselineSection {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            match self.kind {
                BaselineKind::DualAnnealing => "dual_annealing",
                BaselineKind::BasinHopping => "basin_hopping",
            }
            .into()
        })
    }

    /// Annealing config with the budget decided (`matched` when `steps` is
    /// absent).
    pub fn anneal_config(&self, matched_budget: u64) -> AnnealConfig {
        AnnealConfig {
            initial_temperature: self.initial_temperature,
            cooling_exponent: self.cooling_exponent,
            steps: self.steps.unwrap_or(matched_budget),
            step_scale: self.step_scale,
        }
    }

    /// Basin-hopping config; in matched-budget mode the hop count is uncapped
    /// and the evaluation budget terminates the run.
    pub fn basin_config(&self, matched_budget: u64) -> BasinConfig {
        match self.max_evaluations {
            Some(budget) => BasinConfig {
                hops: self.hops,
                perturbation_scale: self.perturbation_scale,
                local_simplex_iterations: self.local_simplex_iterations,
                max_evaluations: Some(budget),
            },
            None => BasinConfig {
                hops: matched_budget.max(1),
                perturbation_scale: self.perturbation_scale,
                local_simplex_iterations: self.local_simplex_iterations,
                max_evaluations: Some(matched_budget),
            },
        }
    }
}

/// A full experiment specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_directory: Option<PathBuf>,
    pub problem: ProblemSection,
    #[serde(default)]
    pub framework: FrameworkSection,
    #[serde(default)]
    pub de: DeSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub strategies: Vec<StrategySection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub baselines: Vec<BaselineSection>,
}

impl ExperimentSpec {
    /// Parse a spec from TOML source. Parse errors carry line/column
    /// positions.
    pub fn parse(source: &str) -> Result<ExperimentSpec, CliError> {
        toml::from_str(source).map_err(|e| CliError::Validation(e.to_string()))
    }

    /// Normalize: fill in every derivable default so the spec echoes as a
    /// fully explicit document. Validates first.
    pub fn resolve(&self) -> Result<ExperimentSpec, CliError> {
        self.validate()?;
        let mut resolved = self.clone();
        if let DimensionSpec::Single(d) = resolved.problem.dimension {
            resolved
                .de
                .population_size
                .get_or_insert_with(|| default_population_size(d));
        }
        for s in &mut resolved.strategies {
            s.name = Some(s.label());
        }
        for b in &mut resolved.baselines {
            b.name = Some(b.label());
        }
        Ok(resolved)
    }

    /// The resolved spec as TOML, with derived-by-rule values noted in
    /// trailing comments (comments survive re-parsing).
    pub fn describe(&self) -> Result<String, CliError> {
        let resolved = self.resolve()?;
        let mut out = toml::to_string_pretty(&resolved)
            .map_err(|e| CliError::Runtime(format!("serializing spec: {e}")))?;
        out.push('\n');
        if resolved.de.population_size.is_none() {
            out.push_str("# population_size resolves per dimension:\n");
            for d in resolved.problem.dimension.all() {
                out.push_str(&format!(
                    "#   dimension {d} -> {}\n",
                    default_population_size(d)
                ));
            }
        }
        for b in &resolved.baselines {
            let needs_budget = match b.kind {
                BaselineKind::DualAnnealing => b.steps.is_none(),
                BaselineKind::BasinHopping => b.max_evaluations.is_none(),
            };
            if needs_budget {
                out.push_str(&format!(
                    "# baseline {:?} budget: matched to the first strategy's evaluation count per seed\n",
                    b.label()
                ));
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Validation(msg));
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return fail(format!(
                "experiment name {:?} must be non-empty and use only [A-Za-z0-9_-]",
                self.name
            ));
        }
        if self.seeds.is_empty() {
            return fail("seeds must not be empty".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for &s in &self.seeds {
            if !seen.insert(s) {
                return fail(format!("duplicate seed {s}"));
            }
        }
        if self.strategies.is_empty() && self.baselines.is_empty() {
            return fail("at least one strategy or baseline is required".into());
        }
        let dims = self.problem.dimension.all();
        if dims.is_empty() {
            return fail("dimension sweep must not be empty".into());
        }
        let mut labels = std::collections::BTreeSet::new();
        for label in self
            .strategies
            .iter()
            .map(|s| s.label())
            .chain(self.baselines.iter().map(|b| b.label()))
        {
            if !labels.insert(label.clone()) {
                return fail(format!("duplicate competitor name {label:?}"));
            }
        }
        // Exercise the core validators on every dimension so bad numbers are
        // rejected before anything runs.
        for &dim in &dims {
            if dim < 1 {
                return fail("dimension must be >= 1".into());
            }
            self.bounds(dim)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            self.schedule()
                .map_err(|e| CliError::Validation(e.to_string()))?;
            for strategy in &self.strategies {
                let config = self.framework_config(dim, strategy, 0);
                config
                    .validate()
                    .map_err(|e| CliError::Validation(e.to_string()))?;
            }
        }
        for b in &self.baselines {
            let err = match b.kind {
                BaselineKind::DualAnnealing => b.anneal_config(1).validate().err(),
                BaselineKind::BasinHopping => b.basin_config(1).validate().err(),
            };
            if let Some(e) = err {
                return fail(format!("baseline {:?}: {e}", b.label()));
            }
        }
        Ok(())
    }

    pub fn bounds(&self, dimension: usize) -> dynopt::error::Result<BoxBounds> {
        BoxBounds::uniform(dimension, self.problem.lower, self.problem.upper)
    }

    pub fn schedule(&self) -> dynopt::error::Result<ChangeSchedule> {
        let mut schedule =
            ChangeSchedule::new(self.problem.change_frequency, self.problem.change_severity)?;
        schedule.total_changes_cap = self.problem.total_changes_cap;
        Ok(schedule)
    }

    pub fn de_config(&self, dimension: usize) -> DeConfig {
        DeConfig {
            population_size: self
                .de
                .population_size
                .unwrap_or_else(|| default_population_size(dimension)),
            mutation_factor: (&self.de.mutation_factor).into(),
            crossover_rate: self.de.crossover_rate,
            variant: self.de.variant,
            max_generations: self.framework.total_iterations.max(1) as u32,
        }
    }

    /// Framework config for one competitor at one dimension; the optimizer
    /// seed is derived from the competitor label so every competitor draws
    /// from its own stream while sharing the problem trajectory.
    pub fn framework_config(
        &self,
        dimension: usize,
        strategy: &StrategySection,
        problem_seed: u64,
    ) -> FrameworkConfig {
        FrameworkConfig {
            total_iterations: self.framework.total_iterations,
            de: self.de_config(dimension),
            strategy: strategy.to_strategy(),
            sensor_tolerance: self.framework.sensor_tolerance,
            sentinel_count: self.framework.sentinel_count,
            feedback_enabled: self.framework.feedback_enabled,
            seed: optimizer_seed(&strategy.label(), problem_seed, dimension),
            snapshot_stride: self.framework.snapshot_stride,
            recovery_band: self.framework.recovery_band,
            recovery_target: self.framework.recovery_target,
        }
    }
}

/// Per-competitor optimizer seed: a stable hash of label, problem seed, and
/// dimension.
pub fn optimizer_seed(label: &str, problem_seed: u64, dimension: usize) -> u64 {
    stable_hash64(format!("{label}:{problem_seed}:{dimension}").as_bytes())
}
