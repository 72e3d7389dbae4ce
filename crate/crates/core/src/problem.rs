//! Time-varying optimization problems and the moving-optimum benchmark
//! generator.
//!
//! A [`DynamicProblem`] is a box-bounded minimization landscape whose hidden
//! optimum jumps at scheduled intervals. Between jumps the landscape is
//! frozen, so the objective is a pure function of `(x, t)` and the generator
//! seed. The landscape itself is a shifted sphere `f(x, t) = ||x - x*(t)||^2`
//! plus optional quadratic constraint penalties; its global minimum value is
//! exactly zero at the hidden optimum, which makes error measurement exact.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded_stream, STREAM_ENVIRONMENT};

/// Default penalty weight for constraints added without an explicit weight.
pub const DEFAULT_PENALTY_WEIGHT: f64 = 1e3;

/// A point in the decision space: an ordered list of real components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SolutionVector(Vec<f64>);

impl SolutionVector {
    pub fn new(components: Vec<f64>) -> Self {
        SolutionVector(components)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn into_components(self) -> Vec<f64> {
        self.0
    }

    pub fn euclidean_distance(&self, other: &SolutionVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Vec<f64>> for SolutionVector {
    fn from(v: Vec<f64>) -> Self {
        SolutionVector(v)
    }
}

impl std::ops::Index<usize> for SolutionVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Per-axis lower/upper limits of the search box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxBounds {
    /// Build bounds, rejecting empty vectors, length mismatches, non-finite
    /// limits, and any axis with `lower >= upper`.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidBounds("bounds must have dimension >= 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::InvalidBounds(format!(
                "lower has length {}, upper has length {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidBounds(format!("axis {i} has non-finite limits")));
            }
            if lo >= hi {
                return Err(Error::InvalidBounds(format!(
                    "axis {i}: lower {lo} must be < upper {hi}"
                )));
            }
        }
        Ok(BoxBounds { lower, upper })
    }

    /// Same `[lo, hi]` interval on every axis.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        BoxBounds::new(vec![lo; dim], vec![hi; dim])
    }

    /// The unit box `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Result<Self> {
        BoxBounds::uniform(dim, 0.0, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Width of axis `i`.
    pub fn range(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn contains(&self, x: &SolutionVector) -> bool {
        x.dim() == self.dim()
            && x.components()
                .iter()
                .enumerate()
                .all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }

    /// Uniform draw inside the box, one component per axis in index order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SolutionVector {
        SolutionVector(
            (0..self.dim())
                .map(|i| rng.random_range(self.lower[i]..self.upper[i]))
                .collect(),
        )
    }

    /// Project every component of `x` onto its `[lower, upper]` interval.
    pub fn clamp(&self, x: &SolutionVector) -> Result<SolutionVector> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Ok(SolutionVector(
            x.components()
                .iter()
                .enumerate()
                .map(|(i, &v)| v.clamp(self.lower[i], self.upper[i]))
                .collect(),
        ))
    }
}

/// Project `x` onto the box. Idempotent; errors on dimension mismatch.
pub fn clamp_to_bounds(x: &SolutionVector, bounds: &BoxBounds) -> Result<SolutionVector> {
    bounds.clamp(x)
}

/// When and how far the hidden optimum moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeSchedule {
    /// Iterations between changes; the optimum moves when the clock reaches a
    /// multiple of this.
    pub change_frequency: u64,
    /// Fraction of each axis range the optimum moves per change, in (0, 1].
    pub change_severity: f64,
    /// Stop moving after this many changes; `None` means unlimited.
    pub total_changes_cap: Option<u64>,
}

impl ChangeSchedule {
    pub fn new(change_frequency: u64, change_severity: f64) -> Result<Self> {
        let schedule = ChangeSchedule {
            change_frequency,
            change_severity,
            total_changes_cap: None,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.total_changes_cap = Some(cap);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.change_frequency < 1 {
            return Err(Error::InvalidConfig("change_frequency must be >= 1".into()));
        }
        if !(self.change_severity > 0.0 && self.change_severity <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "change_severity must be in (0, 1], got {}",
                self.change_severity
            )));
        }
        Ok(())
    }
}

impl Default for ChangeSchedule {
    /// Change every 200 iterations with severity 0.1, uncapped.
    fn default() -> Self {
        ChangeSchedule {
            change_frequency: 200,
            change_severity: 0.1,
            total_changes_cap: None,
        }
    }
}

/// Record of one optimum shift performed by the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledChange {
    /// Clock value at which the shift took effect.
    pub at: u64,
    /// Euclidean distance the optimum actually moved (after clamping).
    pub shift_magnitude: f64,
}

/// Constraint direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `g(x, t) <= 0`; violation is `max(0, g)`.
    Inequality,
    /// `h(x, t) = 0`; violation is `h` itself.
    Equality,
}

type ConstraintFn = Arc<dyn Fn(&[f64], u64) -> f64 + Send + Sync>;

/// A soft constraint folded into the objective as a quadratic penalty.
#[derive(Clone)]
pub struct Constraint {
    kind: ConstraintKind,
    weight: f64,
    func: ConstraintFn,
}

impl Constraint {
    pub fn inequality<F>(f: F) -> Self
    where
        F: Fn(&[f64], u64) -> f64 + Send + Sync + 'static,
    {
        Constraint {
            kind: ConstraintKind::Inequality,
            weight: DEFAULT_PENALTY_WEIGHT,
            func: Arc::new(f),
        }
    }

    pub fn equality<F>(f: F) -> Self
    where
        F: Fn(&[f64], u64) -> f64 + Send + Sync + 'static,
    {
        Constraint {
            kind: ConstraintKind::Equality,
            weight: DEFAULT_PENALTY_WEIGHT,
            func: Arc::new(f),
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    /// Weighted squared violation at `(x, t)`.
    fn penalty(&self, x: &[f64], t: u64) -> f64 {
        let v = (self.func)(x, t);
        let violation = match self.kind {
            ConstraintKind::Inequality => v.max(0.0),
            ConstraintKind::Equality => v,
        };
        self.weight * violation * violation
    }
}

impl std::fmt::Debug for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Constraint")
            .field("kind", &self.kind)
            .field("weight", &self.weight)
            .finish_non_exhaustive()
    }
}

/// Serializable description of a generator configuration; feeds config
/// fingerprints and experiment echoes. Custom constraints are not part of the
/// descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDescriptor {
    pub dimension: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub change_frequency: u64,
    pub change_severity: f64,
    pub total_changes_cap: Option<u64>,
    pub seed: u64,
}

/// A box-bounded minimization problem whose optimum drifts on a schedule.
///
/// The clock is advanced only through [`DynamicProblem::advance_clock`];
/// [`DynamicProblem::evaluate`] never touches landscape state, so evaluations
/// for the same clock value may run concurrently (the evaluation counter is
/// atomic).
#[derive(Debug)]
pub struct DynamicProblem {
    dimension: usize,
    bounds: BoxBounds,
    schedule: ChangeSchedule,
    optimum: SolutionVector,
    clock: u64,
    changes_applied: u64,
    env_rng: ChaCha8Rng,
    constraints: Vec<Constraint>,
    evaluations: AtomicU64,
    seed: u64,
}

impl Clone for DynamicProblem {
    fn clone(&self) -> Self {
        DynamicProblem {
            dimension: self.dimension,
            bounds: self.bounds.clone(),
            schedule: self.schedule.clone(),
            optimum: self.optimum.clone(),
            clock: self.clock,
            changes_applied: self.changes_applied,
            env_rng: self.env_rng.clone(),
            constraints: self.constraints.clone(),
            evaluations: AtomicU64::new(self.evaluations.load(Ordering::Relaxed)),
            seed: self.seed,
        }
    }
}

/// Build the moving-optimum benchmark: a shifted sphere whose optimum starts
/// uniformly random within `bounds` and jumps per `schedule`.
///
/// The environment random stream is derived from `seed` alone, so two
/// problems built from the same arguments follow bit-identical optimum
/// trajectories regardless of what evaluates them.
pub fn make_moving_optimum_problem(
    dimension: usize,
    bounds: BoxBounds,
    schedule: ChangeSchedule,
    seed: u64,
) -> Result<DynamicProblem> {
    if dimension < 1 {
        return Err(Error::InvalidConfig("dimension must be >= 1".into()));
    }
    if bounds.dim() != dimension {
        return Err(Error::DimensionMismatch {
            expected: dimension,
            got: bounds.dim(),
        });
    }
    schedule.validate()?;
    let mut env_rng = seeded_stream(seed, STREAM_ENVIRONMENT);
    let optimum = bounds.sample(&mut env_rng);
    Ok(DynamicProblem {
        dimension,
        bounds,
        schedule,
        optimum,
        clock: 0,
        changes_applied: 0,
        env_rng,
        constraints: Vec::new(),
        evaluations: AtomicU64::new(0),
        seed,
    })
}

impl DynamicProblem {
    /// Like [`make_moving_optimum_problem`] but with an explicit starting
    /// optimum instead of a random draw. Subsequent shifts still come from the
    /// seeded environment stream.
    pub fn with_optimum(
        bounds: BoxBounds,
        schedule: ChangeSchedule,
        seed: u64,
        optimum: SolutionVector,
    ) -> Result<Self> {
        schedule.validate()?;
        if optimum.dim() != bounds.dim() {
            return Err(Error::DimensionMismatch {
                expected: bounds.dim(),
                got: optimum.dim(),
            });
        }
        if !bounds.contains(&optimum) {
            return Err(Error::InvalidBounds("optimum lies outside bounds".into()));
        }
        let mut env_rng = seeded_stream(seed, STREAM_ENVIRONMENT);
        // Burn the initialization draw so shift draws line up with a problem
        // built by make_moving_optimum_problem from the same seed.
        let _ = bounds.sample(&mut env_rng);
        Ok(DynamicProblem {
            dimension: bounds.dim(),
            bounds,
            schedule,
            optimum,
            clock: 0,
            changes_applied: 0,
            env_rng,
            constraints: Vec::new(),
            evaluations: AtomicU64::new(0),
            seed,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn bounds(&self) -> &BoxBounds {
        &self.bounds
    }

    pub fn schedule(&self) -> &ChangeSchedule {
        &self.schedule
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Ground-truth optimum at the current clock. For generator-aware
    /// analyses (error measurement, heatmaps) only; optimizers must not read
    /// it.
    pub fn optimum(&self) -> &SolutionVector {
        &self.optimum
    }

    /// Total objective evaluations performed so far.
    pub fn evaluation_count(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn add_constraint(&mut self, constraint: Constraint) {
        self.constraints.push(constraint);
    }

    pub fn descriptor(&self) -> ProblemDescriptor {
        ProblemDescriptor {
            dimension: self.dimension,
            lower: self.bounds.lower().to_vec(),
            upper: self.bounds.upper().to_vec(),
            change_frequency: self.schedule.change_frequency,
            change_severity: self.schedule.change_severity,
            total_changes_cap: self.schedule.total_changes_cap,
            seed: self.seed,
        }
    }

    /// Objective value at `(x, t)`: squared distance to the current optimum
    /// plus quadratic constraint penalties. Pure with respect to landscape
    /// state; bumps the atomic evaluation counter.
    pub fn evaluate(&self, x: &SolutionVector, t: u64) -> Result<f64> {
        if x.dim() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: x.dim(),
            });
        }
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let base: f64 = x
            .components()
            .iter()
            .zip(self.optimum.components().iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let penalty: f64 = self
            .constraints
            .iter()
            .map(|c| c.penalty(x.components(), t))
            .sum();
        Ok(base + penalty)
    }

    /// Shorthand for `evaluate(x, self.clock())`.
    pub fn evaluate_current(&self, x: &SolutionVector) -> Result<f64> {
        self.evaluate(x, self.clock)
    }

    /// Advance the clock by one iteration. When the new clock value is a
    /// multiple of the change frequency (and the change cap is not
    /// exhausted), the optimum jumps: each component moves
    /// `severity * range_i * u_i` along a random unit direction `u`, then is
    /// clamped back into the box. Returns the shift record when a jump
    /// occurred.
    pub fn advance_clock(&mut self) -> Option<ScheduledChange> {
        self.clock += 1;
        if self.clock % self.schedule.change_frequency != 0 {
            return None;
        }
        if let Some(cap) = self.schedule.total_changes_cap {
            if self.changes_applied >= cap {
                return None;
            }
        }
        let direction = unit_direction(self.dimension, &mut self.env_rng);
        let old = self.optimum.clone();
        let moved: Vec<f64> = old
            .components()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let step = self.schedule.change_severity * self.bounds.range(i) * direction[i];
                (v + step).clamp(self.bounds.lower()[i], self.bounds.upper()[i])
            })
            .collect();
        self.optimum = SolutionVector(moved);
        self.changes_applied += 1;
        Some(ScheduledChange {
            at: self.clock,
            shift_magnitude: self.optimum.euclidean_distance(&old),
        })
    }
}

/// Uniformly random direction on the unit sphere: normalized standard
/// normals, redrawn in the (measure-zero) case of a ~zero norm.
fn unit_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}
