//! Change detection by re-evaluating reference solutions.
//!
//! The sensor keeps a small set of reference points — the optimizer's current
//! best plus a few fixed sentinels — with their fitness values cached. Each
//! iteration every reference is re-evaluated; any drift beyond the tolerance
//! means the landscape moved. Sentinels guard the one geometry a single
//! reference can miss: a point equidistant from the old and new optimum sees
//! zero drift.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{DynamicProblem, SolutionVector};

/// Default drift tolerance. The generator is deterministic, so any nonzero
/// drift is a true change; raise this for noisy objectives.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;
/// Default number of fixed sentinel points.
pub const DEFAULT_SENTINEL_COUNT: usize = 3;

/// A detected environment change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeEvent {
    /// Iteration at which the sensor flagged the change.
    pub detected_at: u64,
    /// Largest absolute fitness drift observed over the references.
    pub drift_magnitude: f64,
    /// Ground-truth change time, when the generator's schedule is known.
    pub scheduled_at: Option<u64>,
}

impl ChangeEvent {
    /// Iterations between the scheduled change and its detection.
    pub fn lag(&self) -> Option<u64> {
        self.scheduled_at.map(|s| self.detected_at.saturating_sub(s))
    }
}

/// Reference points with cached fitness and a drift tolerance.
#[derive(Debug, Clone)]
pub struct Sensor {
    best_reference: Option<(SolutionVector, f64)>,
    sentinels: Vec<SolutionVector>,
    sentinel_cache: Vec<f64>,
    tolerance: f64,
    primed: bool,
    last_detection: Option<u64>,
    evaluations: u64,
}

impl Sensor {
    /// Sensor with explicit sentinel points. The best-solution reference is
    /// installed later via [`Sensor::refresh_references`].
    pub fn new(tolerance: f64, sentinels: Vec<SolutionVector>) -> Result<Self> {
        if !(tolerance >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sensor tolerance must be >= 0, got {tolerance}"
            )));
        }
        Ok(Sensor {
            sentinel_cache: Vec::with_capacity(sentinels.len()),
            best_reference: None,
            sentinels,
            tolerance,
            primed: false,
            last_detection: None,
            evaluations: 0,
        })
    }

    /// Sensor with `count` sentinels drawn uniformly within the problem
    /// bounds.
    pub fn with_random_sentinels<R: Rng + ?Sized>(
        problem: &DynamicProblem,
        count: usize,
        tolerance: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let sentinels = (0..count).map(|_| problem.bounds().sample(rng)).collect();
        Sensor::new(tolerance, sentinels)
    }

    /// Number of reference points (sentinels plus the best slot when set).
    pub fn reference_count(&self) -> usize {
        self.sentinels.len() + usize::from(self.best_reference.is_some())
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn last_detection(&self) -> Option<u64> {
        self.last_detection
    }

    /// Objective evaluations spent on sensing so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// Re-evaluate every reference at `t`. The first call primes the caches
    /// and reports nothing. Afterwards, if any reference drifted beyond the
    /// tolerance the caches are refreshed and the event is returned;
    /// otherwise the caches are left untouched.
    pub fn sense(&mut self, problem: &DynamicProblem, t: u64) -> Result<Option<ChangeEvent>> {
        let best_new = match &self.best_reference {
            Some((x, _)) => {
                self.evaluations += 1;
                Some(problem.evaluate(x, t)?)
            }
            None => None,
        };
        let mut sentinel_new = Vec::with_capacity(self.sentinels.len());
        for s in &self.sentinels {
            self.evaluations += 1;
            sentinel_new.push(problem.evaluate(s, t)?);
        }

        if !self.primed {
            if let (Some(f), Some((_, cache))) = (best_new, self.best_reference.as_mut()) {
                *cache = f;
            }
            self.sentinel_cache = sentinel_new;
            self.primed = true;
            return Ok(None);
        }

        let mut drift: f64 = 0.0;
        if let (Some(f), Some(&(_, cached))) = (best_new, self.best_reference.as_ref()) {
            drift = drift.max((f - cached).abs());
        }
        for (new, cached) in sentinel_new.iter().zip(self.sentinel_cache.iter()) {
            drift = drift.max((new - cached).abs());
        }

        if drift > self.tolerance {
            if let (Some(f), Some((_, cache))) = (best_new, self.best_reference.as_mut()) {
                *cache = f;
            }
            self.sentinel_cache = sentinel_new;
            self.last_detection = Some(t);
            Ok(Some(ChangeEvent {
                detected_at: t,
                drift_magnitude: drift,
                scheduled_at: None,
            }))
        } else {
            Ok(None)
        }
    }

    /// Replace the best-solution reference and its cache with the optimizer's
    /// current best. Sentinels are untouched. Idempotent for a fixed `best`.
    pub fn refresh_references(
        &mut self,
        best: &SolutionVector,
        t: u64,
        problem: &DynamicProblem,
    ) -> Result<()> {
        self.evaluations += 1;
        let f = problem.evaluate(best, t)?;
        self.best_reference = Some((best.clone(), f));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_moving_optimum_problem, BoxBounds, ChangeSchedule};
    use crate::rng::{seeded_stream, STREAM_OPTIMIZER};

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
    fn no_false_positives_on_static_problem() {
        let mut p = moving_problem(4, u64::MAX, 0);
        let mut rng = seeded_stream(1, STREAM_OPTIMIZER);
        let mut sensor =
            Sensor::with_random_sentinels(&p, 3, DEFAULT_TOLERANCE, &mut rng).unwrap();
        for t in 0..1000 {
            if t > 0 {
                p.advance_clock();
            }
            assert!(sensor.sense(&p, t).unwrap().is_none(), "false positive at t={t}");
        }
    }

    #[test]
    fn detects_every_scheduled_change() {
        let mut p = moving_problem(10, 200, 42);
        let mut rng = seeded_stream(2, STREAM_OPTIMIZER);
        let mut sensor =
            Sensor::with_random_sentinels(&p, 3, DEFAULT_TOLERANCE, &mut rng).unwrap();
        sensor.sense(&p, 0).unwrap(); // prime
        let mut detected = Vec::new();
        for t in 1..=1000 {
            let scheduled = p.advance_clock();
            if let Some(ev) = sensor.sense(&p, t).unwrap() {
                detected.push((t, scheduled.is_some(), ev.drift_magnitude));
            }
        }
        let times: Vec<u64> = detected.iter().map(|d| d.0).collect();
        assert_eq!(times, vec![200, 400, 600, 800, 1000]);
        assert!(detected.iter().all(|d| d.1), "detections must coincide with schedule");
        assert!(detected.iter().all(|d| d.2 > 0.0));
    }

    #[test]
    fn first_sense_primes_without_reporting() {
        let p = moving_problem(2, 10, 5);
        let mut rng = seeded_stream(3, STREAM_OPTIMIZER);
        let mut sensor = Sensor::with_random_sentinels(&p, 2, 0.0, &mut rng).unwrap();
        assert!(sensor.sense(&p, 0).unwrap().is_none());
        assert_eq!(sensor.evaluations(), 2);
    }

    #[test]
    fn bisector_reference_alone_misses_but_sentinel_catches() {
        // Find the post-change optimum by replaying the same seed, then build
        // a reference exactly equidistant from the old and new optimum: its
        // squared-distance fitness is bit-identical before and after the
        // shift, so it drifts by exactly zero.
        let seed = 77;
        let mut probe = moving_problem(2, 1, seed);
        let before = probe.optimum().clone();
        probe.advance_clock();
        let after = probe.optimum().clone();
        let midpoint = SolutionVector::new(
            before
                .components()
                .iter()
                .zip(after.components())
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        );

        let mut p = moving_problem(2, 1, seed);
        assert_eq!(p.optimum(), &before);

        // Sensor with only the bisector point: change is invisible.
        let mut blind = Sensor::new(DEFAULT_TOLERANCE, vec![midpoint.clone()]).unwrap();
        blind.sense(&p, 0).unwrap();
        p.advance_clock();
        assert!(blind.sense(&p, 1).unwrap().is_none());

        // Adding a second sentinel off the bisector restores detection.
        let mut p = moving_problem(2, 1, seed);
        let off_axis = SolutionVector::new(vec![
            (before[0] + 0.31).min(1.0),
            (before[1] + 0.17).min(1.0),
        ]);
        let mut sensor = Sensor::new(DEFAULT_TOLERANCE, vec![midpoint, off_axis]).unwrap();
        sensor.sense(&p, 0).unwrap();
        p.advance_clock();
        let ev = sensor.sense(&p, 1).unwrap().expect("sentinel must catch the shift");
        assert_eq!(ev.detected_at, 1);
        assert!(ev.drift_magnitude > 0.0);
    }

    #[test]
    fn refresh_references_is_idempotent() {
        let p = moving_problem(10, 100, 9);
        let mut rng = seeded_stream(4, STREAM_OPTIMIZER);
        let mut sensor = Sensor::with_random_sentinels(&p, 3, 1e-12, &mut rng).unwrap();
        assert_eq!(sensor.reference_count(), 3);
        let best = p.bounds().sample(&mut rng);
        sensor.refresh_references(&best, 0, &p).unwrap();
        assert_eq!(sensor.reference_count(), 4);
        // Identical state except the evaluation counter.
        let strip = |s: &Sensor| {
            let d = format!("{s:?}");
            d[..d.find(", evaluations").unwrap()].to_string()
        };
        let snapshot = strip(&sensor);
        sensor.refresh_references(&best, 0, &p).unwrap();
        assert_eq!(strip(&sensor), snapshot);
        assert_eq!(sensor.reference_count(), 4);
    }

    #[test]
    fn completeness_over_many_changes_and_seeds() {
        // Every scheduled change detected within one sensing call, 50+
        // changes per seed across 20 seeds.
        for seed in 0..20u64 {
            let mut p = moving_problem(5, 10, seed);
            let mut rng = seeded_stream(seed ^ 0xabcd, STREAM_OPTIMIZER);
            let mut sensor =
                Sensor::with_random_sentinels(&p, 3, DEFAULT_TOLERANCE, &mut rng).unwrap();
            sensor.sense(&p, 0).unwrap();
            let mut scheduled = 0u32;
            let mut detected = 0u32;
            for t in 1..=550 {
                let sch = p.advance_clock();
                let ev = sensor.sense(&p, t).unwrap();
                scheduled += u32::from(sch.is_some());
                detected += u32::from(ev.is_some());
                assert_eq!(sch.is_some(), ev.is_some(), "seed {seed} t={t}");
            }
            assert_eq!(scheduled, 55);
            assert_eq!(detected, 55);
        }
    }

    #[test]
    fn negative_tolerance_rejected() {
        assert!(Sensor::new(-1.0, vec![]).is_err());
        assert!(Sensor::new(f64::NAN, vec![]).is_err());
    }
}
