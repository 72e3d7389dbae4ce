//! Strategies that modify the population when a change is detected: partial
//! re-initialization, an intensified best/1/bin local-search burst, and their
//! sequential hybrid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::de::{sample_distinct, step_generation, DeConfig, DeVariant, MutationFactor, Population};
use crate::error::{Error, Result};
use crate::problem::DynamicProblem;
use crate::sensing::ChangeEvent;

/// Default fraction of components re-drawn by partial re-initialization.
pub const DEFAULT_REINIT_FRACTION: f64 = 0.10;
/// Dither interval of the local-search burst.
pub const BURST_DITHER_LO: f64 = 0.7;
pub const BURST_DITHER_HI: f64 = 1.2;
/// Default burst length in generations.
pub const DEFAULT_BURST_BUDGET: u32 = 50;

/// Which reaction runs when the adaptation trigger fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Redraw a fraction of each member's components.
    PartialReinit,
    /// Short best/1/bin run with the mutation factor dithered high.
    LocalSearchHighMutation,
    /// Partial re-initialization followed by the local-search burst.
    Hybrid,
}

/// A configured adaptation strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationStrategy {
    pub kind: StrategyKind,
    /// Fraction of components redrawn per member, in (0, 1].
    pub reinit_fraction: f64,
    /// Engine settings for the burst; `population_size` is ignored (the burst
    /// runs on the population it is given).
    pub local_search: DeConfig,
    /// Burst length in generations.
    pub local_search_budget: u32,
}

impl AdaptationStrategy {
    fn with_kind(kind: StrategyKind) -> Self {
        AdaptationStrategy {
            kind,
            reinit_fraction: DEFAULT_REINIT_FRACTION,
            local_search: DeConfig {
                population_size: 4,
                mutation_factor: MutationFactor::Dither {
                    lo: BURST_DITHER_LO,
                    hi: BURST_DITHER_HI,
                },
                crossover_rate: 0.9,
                variant: DeVariant::Best1Bin,
                max_generations: 1,
            },
            local_search_budget: DEFAULT_BURST_BUDGET,
        }
    }

    pub fn partial_reinit() -> Self {
        Self::with_kind(StrategyKind::PartialReinit)
    }

    pub fn local_search() -> Self {
        Self::with_kind(StrategyKind::LocalSearchHighMutation)
    }

    pub fn hybrid() -> Self {
        Self::with_kind(StrategyKind::Hybrid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reinit_fraction > 0.0 && self.reinit_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "reinit_fraction must be in (0, 1], got {}",
                self.reinit_fraction
            )));
        }
        self.local_search.mutation_factor.validate()?;
        if let MutationFactor::Dither { lo, hi } = self.local_search.mutation_factor {
            if !(lo > 0.0 && hi <= 2.0) {
                return Err(Error::InvalidConfig(format!(
                    "burst dither bounds must lie in (0, 2], got [{lo}, {hi}]"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.local_search.crossover_rate) {
            return Err(Error::InvalidConfig(format!(
                "burst crossover_rate must be in [0, 1], got {}",
                self.local_search.crossover_rate
            )));
        }
        Ok(())
    }
}

/// What an adaptation call did, for the feedback loop and metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationOutcome {
    pub strategy_used: StrategyKind,
    pub evaluations_spent: u64,
    /// Best fitness on the new landscape before adapting.
    pub fitness_before: f64,
    /// Best fitness after the strategy ran.
    pub fitness_after: f64,
}

/// Components redrawn per member: `max(1, round(fraction * dimension))`,
/// with round-half-up.
pub fn reinit_component_count(fraction: f64, dimension: usize) -> usize {
    ((fraction * dimension as f64).round() as usize).max(1)
}

/// Redraw `max(1, round(fraction * D))` distinct components of every member
/// uniformly within bounds, then re-evaluate all fitness caches at the
/// current clock.
///
/// Draw order per member, members in index order: the component indices
/// (rejection-sampled), then one uniform per chosen index.
pub fn partial_reinit<R: Rng + ?Sized>(
    pop: &Population,
    fraction: f64,
    problem: &DynamicProblem,
    rng: &mut R,
) -> Result<Population> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "reinit fraction must be in (0, 1], got {fraction}"
        )));
    }
    let dim = problem.dimension();
    let count = reinit_component_count(fraction, dim);
    let bounds = problem.bounds();
    let t = problem.clock();
    let mut members = Vec::with_capacity(pop.len());
    let mut fitness = Vec::with_capacity(pop.len());
    for member in pop.members() {
        let indices = sample_distinct(dim, &[], count, rng);
        let mut fresh = member.components().to_vec();
        for &i in &indices {
            fresh[i] = rng.random_range(bounds.lower()[i]..bounds.upper()[i]);
        }
        let fresh = crate::problem::SolutionVector::new(fresh);
        fitness.push(problem.evaluate(&fresh, t)?);
        members.push(fresh);
    }
    Ok(Population::from_parts(members, fitness, pop.generation()))
}

/// Run `local_search_budget` generations of the strategy's best/1/bin
/// configuration on the population. Expects fitness caches already refreshed
/// for the post-change landscape.
pub fn local_search_burst<R: Rng + ?Sized>(
    pop: &Population,
    problem: &DynamicProblem,
    strategy: &AdaptationStrategy,
    rng: &mut R,
) -> Result<(Population, AdaptationOutcome)> {
    let before = problem.evaluation_count();
    let fitness_before = pop.best_fitness();
    let mut current = pop.clone();
    for _ in 0..strategy.local_search_budget {
        current = step_generation(&current, problem, &strategy.local_search, rng)?;
    }
    let outcome = AdaptationOutcome {
        strategy_used: StrategyKind::LocalSearchHighMutation,
        evaluations_spent: problem.evaluation_count() - before,
        fitness_before,
        fitness_after: current.best_fitness(),
    };
    Ok((current, outcome))
}

/// React to a detected change: refresh every fitness cache first (no stale
/// values survive a change), then dispatch on the strategy kind.
pub fn adapt<R: Rng + ?Sized>(
    pop: &Population,
    _event: &ChangeEvent,
    strategy: &AdaptationStrategy,
    problem: &DynamicProblem,
    rng: &mut R,
) -> Result<(Population, AdaptationOutcome)> {
    strategy.validate()?;
    let before = problem.evaluation_count();
    let mut refreshed = pop.clone();
    refreshed.refresh_fitness(problem, problem.clock())?;
    let fitness_before = refreshed.best_fitness();

    let adapted = match strategy.kind {
        StrategyKind::PartialReinit => {
            partial_reinit(&refreshed, strategy.reinit_fraction, problem, rng)?
        }
        StrategyKind::LocalSearchHighMutation => {
            local_search_burst(&refreshed, problem, strategy, rng)?.0
        }
        StrategyKind::Hybrid => {
            let reinitialized =
                partial_reinit(&refreshed, strategy.reinit_fraction, problem, rng)?;
            local_search_burst(&reinitialized, problem, strategy, rng)?.0
        }
    };

    let outcome = AdaptationOutcome {
        strategy_used: strategy.kind,
        evaluations_spent: problem.evaluation_count() - before,
        fitness_before,
        fitness_after: adapted.best_fitness(),
    };
    Ok((adapted, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::de::init_population;
    use crate::problem::{make_moving_optimum_problem, BoxBounds, ChangeSchedule};
    use crate::rng::{seeded_stream, STREAM_OPTIMIZER};

    fn problem(dim: usize, seed: u64) -> DynamicProblem {
        make_moving_optimum_problem(
            dim,
            BoxBounds::unit(dim).unwrap(),
            ChangeSchedule::new(200, 0.1).unwrap(),
            seed,
        )
        .unwrap()
    }

    fn population(problem: &DynamicProblem, n: usize, seed: u64) -> Population {
        let cfg = DeConfig {
            population_size: n,
            ..DeConfig::rand1bin_defaults(problem.dimension())
        };
        init_population(problem, &cfg, &mut seeded_stream(seed, STREAM_OPTIMIZER)).unwrap()
    }

    #[test]
    fn component_count_rule() {
        assert_eq!(reinit_component_count(0.10, 10), 1);
        assert_eq!(reinit_component_count(0.10, 2), 1); // floor protection
        assert_eq!(reinit_component_count(0.25, 10), 3); // round-half-up: 2.5 -> 3
        assert_eq!(reinit_component_count(1.0, 7), 7);
        assert_eq!(reinit_component_count(0.01, 10), 1);
    }

    #[test]
    fn reinit_changes_exactly_one_component_at_d10() {
        let p = problem(10, 1);
        let pop = population(&p, 20, 2);
        let mut rng = seeded_stream(3, STREAM_OPTIMIZER);
        let out = partial_reinit(&pop, 0.10, &p, &mut rng).unwrap();
        for (old, new) in pop.members().iter().zip(out.members()) {
            let changed = old
                .components()
                .iter()
                .zip(new.components())
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(changed, 1);
            assert!(p.bounds().contains(new));
        }
    }

    #[test]
    fn reinit_small_dimension_still_adapts() {
        let p = problem(2, 4);
        let pop = population(&p, 10, 5);
        let mut rng = seeded_stream(6, STREAM_OPTIMIZER);
        let out = partial_reinit(&pop, 0.10, &p, &mut rng).unwrap();
        for (old, new) in pop.members().iter().zip(out.members()) {
            let changed = old
                .components()
                .iter()
                .zip(new.components())
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(changed, 1);
        }
    }

    #[test]
    fn full_reinit_redraws_everything() {
        let p = problem(5, 7);
        let pop = population(&p, 200, 8);
        let mut rng = seeded_stream(9, STREAM_OPTIMIZER);
        let out = partial_reinit(&pop, 1.0, &p, &mut rng).unwrap();
        let mut sum = 0.0;
        let mut n = 0usize;
        for (old, new) in pop.members().iter().zip(out.members()) {
            let changed = old
                .components()
                .iter()
                .zip(new.components())
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(changed, 5);
            assert!(p.bounds().contains(new));
            sum += new.components().iter().sum::<f64>();
            n += new.dim();
        }
        // Fresh uniform draws on the unit box center near 0.5.
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn reinit_refreshes_caches_bit_exactly() {
        let p = problem(6, 10);
        let pop = population(&p, 15, 11);
        let mut rng = seeded_stream(12, STREAM_OPTIMIZER);
        let out = partial_reinit(&pop, 0.5, &p, &mut rng).unwrap();
        for (m, &f) in out.members().iter().zip(out.fitness()) {
            assert_eq!(f.to_bits(), p.evaluate(m, p.clock()).unwrap().to_bits());
        }
    }

    #[test]
    fn burst_zero_budget_is_identity() {
        let p = problem(4, 13);
        let pop = population(&p, 12, 14);
        let mut strategy = AdaptationStrategy::local_search();
        strategy.local_search_budget = 0;
        let evals_before = p.evaluation_count();
        let mut rng = seeded_stream(15, STREAM_OPTIMIZER);
        let (out, outcome) = local_search_burst(&pop, &p, &strategy, &mut rng).unwrap();
        assert_eq!(out, pop);
        assert_eq!(outcome.evaluations_spent, 0);
        assert_eq!(p.evaluation_count(), evals_before);
    }

    #[test]
    fn burst_never_worsens_best() {
        let mut p = problem(2, 16);
        // Step through a change so the burst starts on a freshly moved
        // landscape.
        for _ in 0..200 {
            p.advance_clock();
        }
        let mut pop = population(&p, 20, 17);
        pop.refresh_fitness(&p, p.clock()).unwrap();
        let mut strategy = AdaptationStrategy::local_search();
        strategy.local_search_budget = 30;
        let mut rng = seeded_stream(18, STREAM_OPTIMIZER);
        let (_, outcome) = local_search_burst(&pop, &p, &strategy, &mut rng).unwrap();
        assert!(outcome.fitness_after <= outcome.fitness_before);
    }

    #[test]
    fn burst_median_improvement_after_change() {
        // Regression bound from pilot runs: a 50-generation burst on the
        // post-change sphere cuts the best fitness to well under a tenth in
        // the median across seeds.
        let mut ratios = Vec::new();
        for seed in 0..20u64 {
            let mut p = problem(10, seed);
            let mut pop = population(&p, 50, seed ^ 0x5a5a);
            // Converge a little first so the change actually hurts.
            let cfg = DeConfig {
                population_size: 50,
                ..DeConfig::rand1bin_defaults(10)
            };
            let mut rng = seeded_stream(seed ^ 0x77, STREAM_OPTIMIZER);
            for _ in 0..100 {
                pop = step_generation(&pop, &p, &cfg, &mut rng).unwrap();
            }
            for _ in 0..200 {
                p.advance_clock();
            }
            pop.refresh_fitness(&p, p.clock()).unwrap();
            let strategy = AdaptationStrategy::local_search();
            let (_, outcome) = local_search_burst(&pop, &p, &strategy, &mut rng).unwrap();
            ratios.push(outcome.fitness_after / outcome.fitness_before);
        }
        ratios.sort_by(f64::total_cmp);
        let median = ratios[ratios.len() / 2];
        assert!(median < 0.1, "median post/pre ratio {median}");
    }

    #[test]
    fn adapt_partial_matches_direct_call() {
        let mut p = problem(5, 19);
        for _ in 0..200 {
            p.advance_clock();
        }
        let pop = population(&p, 10, 20);
        let strategy = AdaptationStrategy::partial_reinit();
        let event = ChangeEvent {
            detected_at: p.clock(),
            drift_magnitude: 1.0,
            scheduled_at: Some(p.clock()),
        };
        let (via_adapt, outcome) =
            adapt(&pop, &event, &strategy, &p, &mut seeded_stream(21, STREAM_OPTIMIZER)).unwrap();

        let mut refreshed = pop.clone();
        refreshed.refresh_fitness(&p, p.clock()).unwrap();
        let direct = partial_reinit(
            &refreshed,
            strategy.reinit_fraction,
            &p,
            &mut seeded_stream(21, STREAM_OPTIMIZER),
        )
        .unwrap();
        assert_eq!(via_adapt, direct);
        assert_eq!(outcome.strategy_used, StrategyKind::PartialReinit);
        assert_eq!(outcome.fitness_before, refreshed.best_fitness());
    }

    #[test]
    fn adapt_leaves_no_stale_caches() {
        let mut p = problem(8, 22);
        for _ in 0..200 {
            p.advance_clock();
        }
        let pop = population(&p, 16, 23);
        let event = ChangeEvent {
            detected_at: p.clock(),
            drift_magnitude: 1.0,
            scheduled_at: Some(p.clock()),
        };
        for strategy in [
            AdaptationStrategy::partial_reinit(),
            AdaptationStrategy::local_search(),
            AdaptationStrategy::hybrid(),
        ] {
            let (out, _) =
                adapt(&pop, &event, &strategy, &p, &mut seeded_stream(24, STREAM_OPTIMIZER))
                    .unwrap();
            for (m, &f) in out.members().iter().zip(out.fitness()) {
                assert_eq!(f.to_bits(), p.evaluate(m, p.clock()).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn hybrid_with_degenerate_knobs_reduces_to_reinit() {
        let mut p = problem(4, 25);
        for _ in 0..200 {
            p.advance_clock();
        }
        let pop = population(&p, 10, 26);
        let mut strategy = AdaptationStrategy::hybrid();
        strategy.local_search_budget = 0;
        strategy.reinit_fraction = 1e-9; // floors to one component
        let event = ChangeEvent {
            detected_at: p.clock(),
            drift_magnitude: 1.0,
            scheduled_at: None,
        };
        let (out, _) =
            adapt(&pop, &event, &strategy, &p, &mut seeded_stream(27, STREAM_OPTIMIZER)).unwrap();
        for (old, new) in pop.members().iter().zip(out.members()) {
            let changed = old
                .components()
                .iter()
                .zip(new.components())
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(changed, 1);
        }
    }

    #[test]
    fn three_kinds_diverge_and_hybrid_usually_beats_reinit() {
        let mut hybrid_wins = 0u32;
        let trials = 50u64;
        for seed in 0..trials {
            let mut p = problem(10, seed);
            let mut pop = population(&p, 30, seed ^ 0x1111);
            let cfg = DeConfig {
                population_size: 30,
                ..DeConfig::rand1bin_defaults(10)
            };
            let mut warm = seeded_stream(seed ^ 0x2222, STREAM_OPTIMIZER);
            for _ in 0..60 {
                pop = step_generation(&pop, &p, &cfg, &mut warm).unwrap();
            }
            for _ in 0..200 {
                p.advance_clock();
            }
            let event = ChangeEvent {
                detected_at: p.clock(),
                drift_magnitude: 1.0,
                scheduled_at: Some(p.clock()),
            };
            let run = |strategy: &AdaptationStrategy| {
                adapt(
                    &pop,
                    &event,
                    strategy,
                    &p,
                    &mut seeded_stream(seed ^ 0x3333, STREAM_OPTIMIZER),
                )
                .unwrap()
            };
            let (pa, oa) = run(&AdaptationStrategy::partial_reinit());
            let (pb, _ob) = run(&AdaptationStrategy::local_search());
            let (pc, oc) = run(&AdaptationStrategy::hybrid());
            assert_ne!(pa, pb);
            assert_ne!(pa, pc);
            assert_ne!(pb, pc);
            if oc.fitness_after <= oa.fitness_after {
                hybrid_wins += 1;
            }
        }
        assert!(
            hybrid_wins * 10 >= trials as u32 * 7,
            "hybrid won only {hybrid_wins}/{trials}"
        );
    }

    #[test]
    fn strategy_validation() {
        let mut s = AdaptationStrategy::hybrid();
        s.reinit_fraction = 0.0;
        assert!(s.validate().is_err());
        s.reinit_fraction = 1.5;
        assert!(s.validate().is_err());

        let mut s = AdaptationStrategy::local_search();
        s.local_search.mutation_factor = MutationFactor::Dither { lo: 0.5, hi: 2.5 };
        assert!(s.validate().is_err());

        assert!(AdaptationStrategy::hybrid().validate().is_ok());
    }
}
