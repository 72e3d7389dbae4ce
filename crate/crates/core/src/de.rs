//! Differential evolution: population initialization, difference-vector
//! mutation, binomial crossover, and greedy selection, in `rand/1/bin` and
//! `best/1/bin` variants.
//!
//! Generations are synchronous: every trial is built against the pre-step
//! population snapshot and the whole population is replaced in one commit.
//! All random draws happen in a fixed, documented order so a run can be
//! replayed draw-for-draw:
//!
//! * per target, in index order: donor indices (rejection-sampled, see
//!   [`sample_distinct`]), then the mutation factor, then the forced
//!   crossover index, then one uniform per component (drawn even at the
//!   forced index, to keep the draw count fixed).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{BoxBounds, DynamicProblem, SolutionVector};

/// Which vector the difference is added to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeVariant {
    /// `v = x_r1 + F * (x_r2 - x_r3)` with random `r1`.
    Rand1Bin,
    /// `v = x_best + F * (x_r2 - x_r3)`.
    Best1Bin,
}

/// Fixed scaling factor, or an interval re-drawn once per donor (dither).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationFactor {
    Fixed(f64),
    Dither { lo: f64, hi: f64 },
}

impl MutationFactor {
    /// The factor for one donor vector.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MutationFactor::Fixed(f) => f,
            MutationFactor::Dither { lo, hi } => rng.random_range(lo..=hi),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MutationFactor::Fixed(f) if f > 0.0 && f.is_finite() => Ok(()),
            MutationFactor::Fixed(f) => Err(Error::InvalidConfig(format!(
                "mutation factor must be finite and > 0, got {f}"
            ))),
            MutationFactor::Dither { lo, hi } if lo > 0.0 && lo <= hi && hi.is_finite() => Ok(()),
            MutationFactor::Dither { lo, hi } => Err(Error::InvalidConfig(format!(
                "dither interval must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            ))),
        }
    }
}

/// Engine parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    /// Population size; at least 4 (mutation needs three donors distinct from
    /// the target).
    pub population_size: usize,
    pub mutation_factor: MutationFactor,
    /// Probability each trial component comes from the donor, in [0, 1].
    pub crossover_rate: f64,
    pub variant: DeVariant,
    /// Generation budget for standalone optimization runs; the framework loop
    /// steps one generation per iteration and ignores this.
    pub max_generations: u32,
}

impl DeConfig {
    /// Conventional `rand/1/bin` defaults: `N = min(10 * dimension, 100)`
    /// (floored at 4), `F = 0.8`, `CR = 0.9`.
    pub fn rand1bin_defaults(dimension: usize) -> Self {
        DeConfig {
            population_size: default_population_size(dimension),
            mutation_factor: MutationFactor::Fixed(0.8),
            crossover_rate: 0.9,
            variant: DeVariant::Rand1Bin,
            max_generations: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::InvalidConfig(format!(
                "population_size must be >= 4, got {}",
                self.population_size
            )));
        }
        self.mutation_factor.validate()?;
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::InvalidConfig(format!(
                "crossover_rate must be in [0, 1], got {}",
                self.crossover_rate
            )));
        }
        if self.max_generations == 0 {
            return Err(Error::InvalidConfig("max_generations must be >= 1".into()));
        }
        Ok(())
    }
}

/// `min(10 * dimension, 100)`, floored at 4.
pub fn default_population_size(dimension: usize) -> usize {
    (10 * dimension).min(100).max(4)
}

/// N candidate solutions with cached fitness values.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    members: Vec<SolutionVector>,
    fitness: Vec<f64>,
    generation: u32,
    best_index: usize,
}

impl Population {
    /// Assemble a population from members and their cached fitness; the best
    /// index is recomputed.
    pub fn from_parts(members: Vec<SolutionVector>, fitness: Vec<f64>, generation: u32) -> Self {
        let mut pop = Population {
            members,
            fitness,
            generation,
            best_index: 0,
        };
        pop.recompute_best();
        pop
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[SolutionVector] {
        &self.members
    }

    pub fn fitness(&self) -> &[f64] {
        &self.fitness
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn best_index(&self) -> usize {
        self.best_index
    }

    /// The best member and its cached fitness.
    pub fn best(&self) -> (&SolutionVector, f64) {
        (&self.members[self.best_index], self.fitness[self.best_index])
    }

    pub fn best_fitness(&self) -> f64 {
        self.fitness[self.best_index]
    }

    /// Arithmetic mean of the cached fitness values.
    pub fn mean_fitness(&self) -> f64 {
        self.fitness.iter().sum::<f64>() / self.fitness.len() as f64
    }

    /// Re-evaluate every member at `t` and refresh the caches; call after the
    /// landscape changed.
    pub fn refresh_fitness(&mut self, problem: &DynamicProblem, t: u64) -> Result<()> {
        for (member, slot) in self.members.iter().zip(self.fitness.iter_mut()) {
            *slot = problem.evaluate(member, t)?;
        }
        self.recompute_best();
        Ok(())
    }

    /// Argmin over cached fitness; ties go to the lowest index.
    fn recompute_best(&mut self) {
        let mut best = 0;
        for i in 1..self.fitness.len() {
            if self.fitness[i] < self.fitness[best] {
                best = i;
            }
        }
        self.best_index = best;
    }
}

/// Draw `count` indices from `0..n`, all distinct from each other and from
/// everything in `exclude`, by rejection sampling in draw order.
pub(crate) fn sample_distinct<R: Rng + ?Sized>(
    n: usize,
    exclude: &[usize],
    count: usize,
    rng: &mut R,
) -> Vec<usize> {
    debug_assert!(n >= exclude.len() + count);
    let mut picked = Vec::with_capacity(count);
    while picked.len() < count {
        let idx = rng.random_range(0..n);
        if exclude.contains(&idx) || picked.contains(&idx) {
            continue;
        }
        picked.push(idx);
    }
    picked
}

/// Uniform random members within bounds, fitness cached at the problem's
/// current clock, generation 0.
pub fn init_population<R: Rng + ?Sized>(
    problem: &DynamicProblem,
    config: &DeConfig,
    rng: &mut R,
) -> Result<Population> {
    config.validate()?;
    let t = problem.clock();
    let mut members = Vec::with_capacity(config.population_size);
    let mut fitness = Vec::with_capacity(config.population_size);
    for _ in 0..config.population_size {
        let m = problem.bounds().sample(rng);
        fitness.push(problem.evaluate(&m, t)?);
        members.push(m);
    }
    Ok(Population::from_parts(members, fitness, 0))
}

/// `base + f * (a - b)`, clamped into the box. The arithmetic core of
/// mutation, exposed for direct testing.
pub(crate) fn donor_vector(
    base: &SolutionVector,
    a: &SolutionVector,
    b: &SolutionVector,
    f: f64,
    bounds: &BoxBounds,
) -> SolutionVector {
    let v: Vec<f64> = base
        .components()
        .iter()
        .zip(a.components().iter().zip(b.components().iter()))
        .enumerate()
        .map(|(i, (&x, (&ya, &yb)))| {
            (x + f * (ya - yb)).clamp(bounds.lower()[i], bounds.upper()[i])
        })
        .collect();
    SolutionVector::new(v)
}

/// Build the donor vector for `target_index`: the base is a random member
/// (`rand/1/bin`) or the population best (`best/1/bin`), plus a scaled
/// difference of two further distinct members. The result is clamped to
/// bounds.
pub fn mutate<R: Rng + ?Sized>(
    pop: &Population,
    target_index: usize,
    config: &DeConfig,
    bounds: &BoxBounds,
    rng: &mut R,
) -> Result<SolutionVector> {
    if pop.len() < 4 {
        return Err(Error::InvalidConfig(format!(
            "mutation needs a population of >= 4, got {}",
            pop.len()
        )));
    }
    let (base_idx, diff_a, diff_b) = match config.variant {
        DeVariant::Rand1Bin => {
            let picked = sample_distinct(pop.len(), &[target_index], 3, rng);
            (picked[0], picked[1], picked[2])
        }
        DeVariant::Best1Bin => {
            let best = pop.best_index();
            let exclude = if best == target_index {
                vec![target_index]
            } else {
                vec![target_index, best]
            };
            let picked = sample_distinct(pop.len(), &exclude, 2, rng);
            (best, picked[0], picked[1])
        }
    };
    let f = config.mutation_factor.draw(rng);
    Ok(donor_vector(
        &pop.members()[base_idx],
        &pop.members()[diff_a],
        &pop.members()[diff_b],
        f,
        bounds,
    ))
}

/// Binomial crossover: the trial takes the donor component where a uniform
/// draw falls below `cr` or at the forced index (drawn once per trial), and
/// the target component otherwise. At least one donor component always
/// survives.
pub fn crossover<R: Rng + ?Sized>(
    target: &SolutionVector,
    donor: &SolutionVector,
    cr: f64,
    rng: &mut R,
) -> Result<SolutionVector> {
    if target.dim() != donor.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: donor.dim(),
        });
    }
    let dim = target.dim();
    let forced = rng.random_range(0..dim);
    let mut trial = Vec::with_capacity(dim);
    for j in 0..dim {
        // One draw per component regardless of the forced index, so replays
        // see a fixed draw count.
        let u: f64 = rng.random();
        if u < cr || j == forced {
            trial.push(donor[j]);
        } else {
            trial.push(target[j]);
        }
    }
    Ok(SolutionVector::new(trial))
}

/// Greedy minimizing selection; the trial wins ties. Returns the winner, its
/// fitness, and whether the trial replaced the target.
pub fn select(
    target: &SolutionVector,
    target_fitness: f64,
    trial: SolutionVector,
    trial_fitness: f64,
) -> Result<(SolutionVector, f64, bool)> {
    for f in [target_fitness, trial_fitness] {
        if !f.is_finite() {
            return Err(Error::NonFiniteFitness(f));
        }
    }
    if trial_fitness <= target_fitness {
        Ok((trial, trial_fitness, true))
    } else {
        Ok((target.clone(), target_fitness, false))
    }
}

/// Advance one synchronous generation: mutate, cross over, and select for
/// every index against the pre-step snapshot, then commit the new population
/// with its generation counter bumped and best index refreshed.
pub fn step_generation<R: Rng + ?Sized>(
    pop: &Population,
    problem: &DynamicProblem,
    config: &DeConfig,
    rng: &mut R,
) -> Result<Population> {
    let t = problem.clock();
    let n = pop.len();
    let mut members = Vec::with_capacity(n);
    let mut fitness = Vec::with_capacity(n);
    for i in 0..n {
        let donor = mutate(pop, i, config, problem.bounds(), rng)?;
        let trial = crossover(&pop.members()[i], &donor, config.crossover_rate, rng)?;
        let trial_fitness = problem.evaluate(&trial, t)?;
        let (winner, winner_fitness, _) =
            select(&pop.members()[i], pop.fitness()[i], trial, trial_fitness)?;
        members.push(winner);
        fitness.push(winner_fitness);
    }
    Ok(Population::from_parts(
        members,
        fitness,
        pop.generation() + 1,
    ))
}
