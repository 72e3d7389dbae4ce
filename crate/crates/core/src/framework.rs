//! The adaptive optimization loop: advance the problem clock, sense, adapt on
//! detected changes, step the DE engine, refresh sensor references, apply
//! feedback, and record metrics.
//!
//! One framework iteration is one DE generation. Optimizer-side randomness
//! (population init, sentinel placement, DE draws, adaptation draws) comes
//! from a single stream seeded by [`FrameworkConfig::seed`], consumed in that
//! order; the environment trajectory lives on the problem's own stream, so
//! runs with different optimizer seeds still see the same changes.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adaptation::{adapt, AdaptationOutcome, AdaptationStrategy};
use crate::de::{init_population, step_generation, DeConfig, MutationFactor};
use crate::error::{Error, Result};
use crate::metrics::{config_fingerprint, FinalBest, RunHistory, DEFAULT_SNAPSHOT_STRIDE};
use crate::problem::DynamicProblem;
use crate::rng::{seeded_stream, STREAM_OPTIMIZER};
use crate::sensing::{Sensor, DEFAULT_SENTINEL_COUNT, DEFAULT_TOLERANCE};

/// Upper limit the feedback rule may push the dither bound to.
pub const FEEDBACK_DITHER_CAP: f64 = 2.0;
/// Increment applied when a recovery was slower than the target.
pub const FEEDBACK_DITHER_STEP: f64 = 0.1;
/// Default recovery band: recovered means best fitness fell below
/// `band * pre_change_best`.
pub const DEFAULT_RECOVERY_BAND: f64 = 1.5;
/// Default recovery target for the feedback rule, in iterations.
pub const DEFAULT_RECOVERY_TARGET: u64 = 100;

/// Everything a framework run needs besides the problem itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameworkConfig {
    pub total_iterations: u64,
    pub de: DeConfig,
    pub strategy: AdaptationStrategy,
    pub sensor_tolerance: f64,
    pub sentinel_count: usize,
    /// When set, recovery episodes tune the burst's upper dither bound.
    pub feedback_enabled: bool,
    /// Seed for all optimizer-side randomness.
    pub seed: u64,
    /// Retain the full best vector every this-many iterations.
    pub snapshot_stride: u64,
    /// Recovery band multiplier on the pre-change best fitness.
    pub recovery_band: f64,
    /// Feedback target recovery time in iterations.
    pub recovery_target: u64,
}

impl FrameworkConfig {
    /// A hybrid-strategy baseline configuration for a problem of the given
    /// dimension: 1000 iterations, default DE and sensor settings, feedback
    /// off.
    pub fn new(dimension: usize, seed: u64) -> Self {
        FrameworkConfig {
            total_iterations: 1000,
            de: DeConfig::rand1bin_defaults(dimension),
            strategy: AdaptationStrategy::hybrid(),
            sensor_tolerance: DEFAULT_TOLERANCE,
            sentinel_count: DEFAULT_SENTINEL_COUNT,
            feedback_enabled: false,
            seed,
            snapshot_stride: DEFAULT_SNAPSHOT_STRIDE,
            recovery_band: DEFAULT_RECOVERY_BAND,
            recovery_target: DEFAULT_RECOVERY_TARGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_iterations < 1 {
            return Err(Error::InvalidConfig("total_iterations must be >= 1".into()));
        }
        self.de.validate()?;
        self.strategy.validate()?;
        if !(self.sensor_tolerance >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sensor_tolerance must be >= 0, got {}",
                self.sensor_tolerance
            )));
        }
        if self.snapshot_stride < 1 {
            return Err(Error::InvalidConfig("snapshot_stride must be >= 1".into()));
        }
        if !(self.recovery_band >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "recovery_band must be >= 1, got {}",
                self.recovery_band
            )));
        }
        Ok(())
    }
}

/// State of the feedback rule that widens the burst dither after slow
/// recoveries and decays it back after fast ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackState {
    pub last_recovery_iterations: Option<u64>,
    /// Current upper dither bound handed to the next burst.
    pub dither_hi: f64,
    pub dither_hi_default: f64,
    pub recovery_target: u64,
}

impl FeedbackState {
    pub fn new(recovery_target: u64) -> Self {
        FeedbackState {
            last_recovery_iterations: None,
            dither_hi: crate::adaptation::BURST_DITHER_HI,
            dither_hi_default: crate::adaptation::BURST_DITHER_HI,
            recovery_target,
        }
    }
}

/// Close one recovery episode: a slow recovery (> target) widens the dither
/// bound by [`FEEDBACK_DITHER_STEP`] up to [`FEEDBACK_DITHER_CAP`]; a fast
/// one decays the bound halfway back toward its default. The rule keys on
/// the recovery time; the outcome is recorded for inspection.
pub fn apply_feedback(
    state: &FeedbackState,
    _outcome: &AdaptationOutcome,
    recovery_iterations: u64,
) -> FeedbackState {
    let mut next = state.clone();
    next.last_recovery_iterations = Some(recovery_iterations);
    if recovery_iterations > state.recovery_target {
        next.dither_hi = (state.dither_hi + FEEDBACK_DITHER_STEP).min(FEEDBACK_DITHER_CAP);
    } else {
        next.dither_hi = state.dither_hi - (state.dither_hi - state.dither_hi_default) / 2.0;
    }
    next
}

/// How long a change took to recover from, censored at the next change (or
/// the end of the history).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecoveryTime {
    pub iterations: u64,
    pub censored: bool,
}

/// Iterations from `event` until the per-iteration best fitness first falls
/// below `band * pre_change_best` (the best fitness on the row just before
/// the event). Censored at the next change event or the end of the history,
/// whichever comes first.
pub fn recovery_time(
    history: &RunHistory,
    event: &crate::sensing::ChangeEvent,
    band: f64,
) -> Result<RecoveryTime> {
    let start = history
        .rows
        .iter()
        .position(|r| r.t == event.detected_at)
        .ok_or(Error::EventNotFound(event.detected_at))?;
    let pre_change_best = if start == 0 {
        f64::INFINITY
    } else {
        history.rows[start - 1].current_best_fitness
    };
    let next_change = history
        .change_events
        .iter()
        .map(|e| e.detected_at)
        .filter(|&t| t > event.detected_at)
        .min();
    let threshold = band * pre_change_best;
    for row in &history.rows[start..] {
        if let Some(next) = next_change {
            if row.t >= next {
                break;
            }
        }
        if row.current_best_fitness < threshold {
            return Ok(RecoveryTime {
                iterations: row.t - event.detected_at,
                censored: false,
            });
        }
    }
    let horizon = next_change.unwrap_or_else(|| history.rows.last().map_or(0, |r| r.t));
    Ok(RecoveryTime {
        iterations: horizon - event.detected_at,
        censored: true,
    })
}

/// A run aborted by a module error. Carries the partial history, flagged
/// incomplete, alongside the cause.
#[derive(Debug)]
pub struct RunFailure {
    pub at_iteration: u64,
    pub source: Error,
    pub partial: RunHistory,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted at iteration {}: {}", self.at_iteration, self.source)
    }
}

impl std::error::Error for RunFailure {}

impl From<RunFailure> for Error {
    fn from(f: RunFailure) -> Error {
        Error::RunAborted {
            at: f.at_iteration,
            source: Box::new(f.source),
        }
    }
}

struct RecoveryEpisode {
    started_at: u64,
    pre_change_best: f64,
    outcome: AdaptationOutcome,
}

/// Execute `total_iterations` of the loop on `problem` and return the full
/// history, including the final best solution.
pub fn run(
    mut problem: DynamicProblem,
    config: &FrameworkConfig,
) -> std::result::Result<RunHistory, RunFailure> {
    let fail_at = |at: u64, source: Error, partial: RunHistory| RunFailure {
        at_iteration: at,
        source,
        partial,
    };

    let setup = || -> Result<(ChaCha8Rng, RunHistory)> {
        config.validate()?;
        let fingerprint = config_fingerprint(&(problem.descriptor(), config))?;
        let history = RunHistory::new(
            fingerprint,
            problem.bounds().clone(),
            config.snapshot_stride,
        );
        Ok((seeded_stream(config.seed, STREAM_OPTIMIZER), history))
    };
    let (mut rng, mut history) = match setup() {
        Ok(v) => v,
        Err(e) => {
            return Err(fail_at(
                0,
                e,
                RunHistory::new(String::new(), problem.bounds().clone(), 1),
            ))
        }
    };

    macro_rules! attempt {
        ($t:expr, $expr:expr) => {
            match $expr {
                Ok(v) => v,
                Err(e) => {
                    history.complete = false;
                    return Err(fail_at($t, e, history));
                }
            }
        };
    }

    let mut pop = attempt!(0, init_population(&problem, &config.de, &mut rng));
    let mut sensor = attempt!(
        0,
        Sensor::with_random_sentinels(&problem, config.sentinel_count, config.sensor_tolerance, &mut rng)
    );
    attempt!(0, sensor.refresh_references(pop.best().0, 0, &problem));
    attempt!(0, sensor.sense(&problem, 0)); // primes the caches

    let mut strategy = config.strategy.clone();
    let mut feedback = FeedbackState::new(config.recovery_target);
    let mut prev_best = pop.best_fitness();
    let mut pending_scheduled: Option<u64> = None;
    let mut episode: Option<RecoveryEpisode> = None;

    for t in 1..=config.total_iterations {
        if let Some(change) = problem.advance_clock() {
            pending_scheduled = Some(change.at);
        }

        let sensed = attempt!(t, sensor.sense(&problem, t));
        let changed = sensed.is_some();
        if let Some(mut event) = sensed {
            event.scheduled_at = pending_scheduled.take();
            // The next change arrived before recovery: close the open episode
            // as censored.
            if let Some(open) = episode.take() {
                if config.feedback_enabled {
                    feedback = apply_feedback(&feedback, &open.outcome, t - open.started_at);
                    retune_burst(&mut strategy, feedback.dither_hi);
                }
            }
            let (adapted, outcome) = attempt!(t, adapt(&pop, &event, &strategy, &problem, &mut rng));
            pop = adapted;
            history.push_event(event);
            episode = Some(RecoveryEpisode {
                started_at: t,
                pre_change_best: prev_best,
                outcome,
            });
        }

        pop = attempt!(t, step_generation(&pop, &problem, &config.de, &mut rng));
        attempt!(t, sensor.refresh_references(pop.best().0, t, &problem));

        if let Some(open) = &episode {
            if pop.best_fitness() < config.recovery_band * open.pre_change_best {
                if config.feedback_enabled {
                    feedback = apply_feedback(&feedback, &open.outcome, t - open.started_at);
                    retune_burst(&mut strategy, feedback.dither_hi);
                }
                episode = None;
            }
        }

        history.record_iteration(&pop, &problem, t, changed);
        prev_best = pop.best_fitness();
    }

    let (best, best_fitness) = pop.best();
    history.finalize(
        FinalBest {
            solution: best.clone(),
            fitness: best_fitness,
        },
        problem.evaluation_count(),
        sensor.evaluations(),
    );
    Ok(history)
}

/// Push the feedback-adjusted upper bound into the burst's dither interval.
/// Fixed mutation factors are left alone.
fn retune_burst(strategy: &mut AdaptationStrategy, dither_hi: f64) {
    if let MutationFactor::Dither { lo, .. } = strategy.local_search.mutation_factor {
        strategy.local_search.mutation_factor = MutationFactor::Dither {
            lo,
            hi: dither_hi.max(lo),
        };
    }
}

/// Convenience: build the default problem/config pair for a dimension-`d`
/// moving-optimum run and execute it.
pub fn run_default(
    dimension: usize,
    problem_seed: u64,
    optimizer_seed: u64,
) -> std::result::Result<RunHistory, RunFailure> {
    let problem = crate::problem::make_moving_optimum_problem(
        dimension,
        crate::problem::BoxBounds::unit(dimension).expect("dimension >= 1"),
        crate::problem::ChangeSchedule::default(),
        problem_seed,
    )
    .map_err(|e| RunFailure {
        at_iteration: 0,
        source: e,
        partial: RunHistory::new(String::new(), crate::problem::BoxBounds::unit(1).unwrap(), 1),
    })?;
    let config = FrameworkConfig::new(dimension, optimizer_seed);
    run(problem, &config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptation::StrategyKind;
    use crate::metrics::IterationRecord;
    use crate::problem::{make_moving_optimum_problem, BoxBounds, ChangeSchedule};
    use crate::sensing::ChangeEvent;

    fn quick_config(dimension: usize, seed: u64) -> FrameworkConfig {
        let mut cfg = FrameworkConfig::new(dimension, seed);
        cfg.de.population_size = 20;
        cfg.strategy.local_search_budget = 10;
        cfg
    }

    fn moving_problem(dim: usize, freq: u64, seed: u64) -> DynamicProblem {
        make_moving_optimum_problem(
            dim,
            BoxBounds::unit(dim).unwrap(),
            ChangeSchedule::new(freq, 0.1).unwrap(),
            seed,
        )
        .unwrap()
    }

    #[test]
    fn run_shape_rows_and_markers() {
        let history = run(moving_problem(5, 200, 1), &quick_config(5, 2)).unwrap();
        assert_eq!(history.rows.len(), 1000);
        assert_eq!(history.change_events.len(), 5);
        let times: Vec<u64> = history.change_events.iter().map(|e| e.detected_at).collect();
        assert_eq!(times, vec![200, 400, 600, 800, 1000]);
        assert!(history.complete);
        assert!(history.final_best.is_some());
        let flagged: Vec<u64> = history
            .rows
            .iter()
            .filter(|r| r.change_flag)
            .map(|r| r.t)
            .collect();
        assert_eq!(flagged, times);
    }

    #[test]
    fn events_carry_schedule_with_tight_lag() {
        let history = run(moving_problem(6, 150, 3), &quick_config(6, 4)).unwrap();
        assert!(!history.change_events.is_empty());
        for e in &history.change_events {
            let lag = e.lag().expect("scheduled_at must be set");
            assert!(lag <= 1, "lag {lag} at t={}", e.detected_at);
        }
    }

    #[test]
    fn static_run_has_no_events_and_matches_plain_de() {
        let mut cfg = quick_config(4, 9);
        cfg.total_iterations = 300;
        let history = run(moving_problem(4, 100_000, 8), &cfg).unwrap();
        assert!(history.change_events.is_empty());
        assert!(history.rows.iter().all(|r| !r.change_flag));

        // Replay the documented optimizer-stream order by hand: population
        // init, sentinel draws, then one generation per iteration.
        let problem = moving_problem(4, 100_000, 8);
        let mut rng = seeded_stream(cfg.seed, STREAM_OPTIMIZER);
        let mut pop = init_population(&problem, &cfg.de, &mut rng).unwrap();
        let _sentinels =
            Sensor::with_random_sentinels(&problem, cfg.sentinel_count, cfg.sensor_tolerance, &mut rng)
                .unwrap();
        for (i, row) in history.rows.iter().enumerate() {
            pop = step_generation(&pop, &problem, &cfg.de, &mut rng).unwrap();
            assert_eq!(row.current_best_fitness, pop.best_fitness(), "iteration {}", i + 1);
        }
        assert_eq!(history.final_best.as_ref().unwrap().fitness, pop.best_fitness());
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let a = run(moving_problem(5, 200, 11), &quick_config(5, 12)).unwrap();
        let b = run(moving_problem(5, 200, 11), &quick_config(5, 12)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        assert_eq!(
            a.envelope_json_string().unwrap(),
            b.envelope_json_string().unwrap()
        );
    }

    #[test]
    fn windowed_best_non_increasing_between_changes() {
        let history = run(moving_problem(5, 200, 13), &quick_config(5, 14)).unwrap();
        for w in history.rows.windows(2) {
            if !w[1].change_flag {
                assert!(
                    w[1].best_so_far_fitness <= w[0].best_so_far_fitness,
                    "windowed best rose at t={}",
                    w[1].t
                );
            }
        }
    }

    #[test]
    fn feedback_rule_examples() {
        let outcome = AdaptationOutcome {
            strategy_used: StrategyKind::Hybrid,
            evaluations_spent: 0,
            fitness_before: 1.0,
            fitness_after: 0.5,
        };
        let state = FeedbackState::new(100);
        assert_eq!(state.dither_hi, 1.2);

        // Slow recovery widens the bound.
        let widened = apply_feedback(&state, &outcome, 150);
        assert!((widened.dither_hi - 1.3).abs() < 1e-12);
        assert_eq!(widened.last_recovery_iterations, Some(150));

        // Fast recovery decays halfway toward the default.
        let decayed = apply_feedback(&widened, &outcome, 40);
        assert!((decayed.dither_hi - 1.25).abs() < 1e-12);

        // Saturation at the cap.
        let mut at_cap = state.clone();
        at_cap.dither_hi = FEEDBACK_DITHER_CAP;
        let still = apply_feedback(&at_cap, &outcome, 500);
        assert_eq!(still.dither_hi, FEEDBACK_DITHER_CAP);
    }

    #[test]
    fn feedback_bound_stays_in_range_during_run() {
        // Target 0 forces a widen on every recovery; the bound must never
        // leave [default, cap].
        let mut state = FeedbackState::new(0);
        let outcome = AdaptationOutcome {
            strategy_used: StrategyKind::Hybrid,
            evaluations_spent: 0,
            fitness_before: 1.0,
            fitness_after: 0.5,
        };
        for i in 0..50 {
            state = apply_feedback(&state, &outcome, if i % 3 == 0 { 0 } else { 10 });
            assert!(
                state.dither_hi >= state.dither_hi_default - 1e-12
                    && state.dither_hi <= FEEDBACK_DITHER_CAP + 1e-12,
                "dither_hi {} left its range",
                state.dither_hi
            );
        }
    }

    #[test]
    fn feedback_enabled_run_still_well_formed() {
        let mut cfg = quick_config(5, 21);
        cfg.feedback_enabled = true;
        cfg.recovery_target = 5;
        let history = run(moving_problem(5, 100, 20), &cfg).unwrap();
        assert_eq!(history.rows.len(), 1000);
        assert_eq!(history.change_events.len(), 10);
    }

    fn synthetic_history(fitness: &[(u64, f64)], events: &[u64]) -> RunHistory {
        let mut h = RunHistory::new("synthetic".into(), BoxBounds::unit(2).unwrap(), 1);
        for &(t, f) in fitness {
            h.rows.push(IterationRecord {
                t,
                current_best_fitness: f,
                best_so_far_fitness: f,
                cumulative_best_fitness: f,
                population_mean_fitness: f,
                best_dim1: 0.5,
                best_dim2: Some(0.5),
                best_solution_full: None,
                optimum: vec![0.5, 0.5],
                change_flag: events.contains(&t),
            });
        }
        for &t in events {
            h.push_event(ChangeEvent {
                detected_at: t,
                drift_magnitude: 1.0,
                scheduled_at: Some(t),
            });
        }
        h
    }

    #[test]
    fn recovery_time_finds_known_crossing() {
        // Fitness 1.0 until the change at t=100 spikes it to 10; it crosses
        // below 1.5 * 1.0 at t=137.
        let mut rows = Vec::new();
        for t in 1..=300u64 {
            let f = if t < 100 {
                1.0
            } else if t < 137 {
                10.0
            } else {
                1.2
            };
            rows.push((t, f));
        }
        let h = synthetic_history(&rows, &[100]);
        let rt = recovery_time(&h, &h.change_events[0], 1.5).unwrap();
        assert_eq!(rt, RecoveryTime { iterations: 37, censored: false });
    }

    #[test]
    fn recovery_time_censors_at_next_change() {
        // Never recovers before the next change 200 iterations later.
        let mut rows = Vec::new();
        for t in 1..=500u64 {
            let f = if t < 100 { 1.0 } else { 10.0 };
            rows.push((t, f));
        }
        let h = synthetic_history(&rows, &[100, 300]);
        let rt = recovery_time(&h, &h.change_events[0], 1.5).unwrap();
        assert_eq!(rt, RecoveryTime { iterations: 200, censored: true });
    }

    #[test]
    fn recovery_time_rejects_unknown_event() {
        let h = synthetic_history(&[(1, 1.0), (2, 1.0)], &[]);
        let ghost = ChangeEvent {
            detected_at: 99,
            drift_magnitude: 1.0,
            scheduled_at: None,
        };
        assert!(matches!(
            recovery_time(&h, &ghost, 1.5),
            Err(Error::EventNotFound(99))
        ));
    }

    #[test]
    fn invalid_config_fails_before_iterating() {
        let mut cfg = quick_config(3, 0);
        cfg.total_iterations = 0;
        let failure = run(moving_problem(3, 10, 0), &cfg).unwrap_err();
        assert_eq!(failure.at_iteration, 0);
        assert!(!failure.partial.complete);
        let as_error: Error = failure.into();
        assert!(matches!(as_error, Error::RunAborted { at: 0, .. }));
    }
}
