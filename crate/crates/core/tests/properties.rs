//! Property tests for the crate-wide invariants.

use proptest::prelude::*;

use dynopt::adaptation::{partial_reinit, reinit_component_count};
use dynopt::de::{crossover, init_population, step_generation, DeConfig, DeVariant, MutationFactor};
use dynopt::metrics::smooth;
use dynopt::problem::{
    clamp_to_bounds, make_moving_optimum_problem, BoxBounds, ChangeSchedule, SolutionVector,
};
use dynopt::rng::{seeded_stream, STREAM_OPTIMIZER};

fn unit_problem(dim: usize, freq: u64, severity: f64, seed: u64) -> dynopt::DynamicProblem {
    make_moving_optimum_problem(
        dim,
        BoxBounds::unit(dim).unwrap(),
        ChangeSchedule::new(freq, severity).unwrap(),
        seed,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clamp_is_idempotent_and_feasible(
        dim in 1usize..8,
        raw in prop::collection::vec(-10.0f64..10.0, 1..8),
        seed in 0u64..1000,
    ) {
        let dim = dim.min(raw.len());
        let bounds = BoxBounds::unit(dim).unwrap();
        let x = SolutionVector::new(raw[..dim].to_vec());
        let once = clamp_to_bounds(&x, &bounds).unwrap();
        prop_assert!(bounds.contains(&once));
        let twice = clamp_to_bounds(&once, &bounds).unwrap();
        prop_assert_eq!(&once, &twice);
        let _ = seed;
    }

    #[test]
    fn objective_non_negative_and_zero_at_optimum(
        dim in 1usize..9,
        seed in 0u64..500,
        steps in 0u64..400,
    ) {
        let mut p = unit_problem(dim, 50, 0.2, seed);
        for _ in 0..steps {
            p.advance_clock();
        }
        // Reachability: the optimum evaluates to exactly zero at any time.
        prop_assert_eq!(p.evaluate(p.optimum(), p.clock()).unwrap(), 0.0);
        // Non-negativity for arbitrary points.
        let mut rng = seeded_stream(seed ^ 0xdead, STREAM_OPTIMIZER);
        for _ in 0..16 {
            let x = p.bounds().sample(&mut rng);
            prop_assert!(p.evaluate(&x, p.clock()).unwrap() >= 0.0);
        }
    }

    #[test]
    fn changes_fire_only_on_multiples(
        freq in 1u64..50,
        severity in 0.01f64..1.0,
        seed in 0u64..500,
    ) {
        let mut p = unit_problem(3, freq, severity, seed);
        for t in 1..=freq * 10 {
            let event = p.advance_clock();
            prop_assert_eq!(event.is_some(), t % freq == 0, "t={}", t);
            if let Some(ev) = event {
                prop_assert_eq!(ev.at, t);
                prop_assert!(ev.shift_magnitude >= 0.0);
            }
        }
    }

    #[test]
    fn problem_trajectories_deterministic(
        dim in 1usize..6,
        seed in 0u64..300,
    ) {
        let mut a = unit_problem(dim, 7, 0.3, seed);
        let mut b = unit_problem(dim, 7, 0.3, seed);
        let mut rng = seeded_stream(seed, STREAM_OPTIMIZER);
        let x = a.bounds().sample(&mut rng);
        for _ in 0..100 {
            a.advance_clock();
            b.advance_clock();
            let fa = a.evaluate(&x, a.clock()).unwrap();
            let fb = b.evaluate(&x, b.clock()).unwrap();
            prop_assert_eq!(fa.to_bits(), fb.to_bits());
        }
    }

    #[test]
    fn de_members_stay_feasible_and_elite(
        seed in 0u64..200,
        variant_best in proptest::bool::ANY,
        cr in 0.0f64..=1.0,
        generations in 1u32..30,
    ) {
        let p = unit_problem(4, u64::MAX, 0.1, seed);
        let cfg = DeConfig {
            population_size: 12,
            mutation_factor: MutationFactor::Fixed(0.8),
            crossover_rate: cr,
            variant: if variant_best { DeVariant::Best1Bin } else { DeVariant::Rand1Bin },
            max_generations: 1,
        };
        let mut rng = seeded_stream(seed ^ 0xbeef, STREAM_OPTIMIZER);
        let mut pop = init_population(&p, &cfg, &mut rng).unwrap();
        let mut last_best = pop.best_fitness();
        for _ in 0..generations {
            pop = step_generation(&pop, &p, &cfg, &mut rng).unwrap();
            for m in pop.members() {
                prop_assert!(p.bounds().contains(m));
            }
            prop_assert!(pop.best_fitness() <= last_best);
            last_best = pop.best_fitness();
        }
    }

    #[test]
    fn crossover_mixes_only_parent_components(
        dim in 1usize..12,
        cr in 0.0f64..=1.0,
        seed in 0u64..500,
    ) {
        let target = SolutionVector::new((0..dim).map(|i| i as f64).collect());
        let donor = SolutionVector::new((0..dim).map(|i| -(i as f64) - 1.0).collect());
        let mut rng = seeded_stream(seed, STREAM_OPTIMIZER);
        let trial = crossover(&target, &donor, cr, &mut rng).unwrap();
        let mut donor_components = 0;
        for j in 0..dim {
            let c = trial[j];
            prop_assert!(c == target[j] || c == donor[j]);
            if c == donor[j] {
                donor_components += 1;
            }
        }
        prop_assert!(donor_components >= 1, "crossover floor violated");
    }

    #[test]
    fn reinit_touches_exactly_the_quota(
        dim in 1usize..12,
        fraction in 0.01f64..=1.0,
        seed in 0u64..300,
    ) {
        let p = unit_problem(dim, u64::MAX, 0.1, seed);
        let cfg = DeConfig {
            population_size: 6,
            ..DeConfig::rand1bin_defaults(dim)
        };
        let mut rng = seeded_stream(seed, STREAM_OPTIMIZER);
        let pop = init_population(&p, &cfg, &mut rng).unwrap();
        let out = partial_reinit(&pop, fraction, &p, &mut rng).unwrap();
        let quota = reinit_component_count(fraction, dim);
        for (old, new) in pop.members().iter().zip(out.members()) {
            let changed = old
                .components()
                .iter()
                .zip(new.components())
                .filter(|(a, b)| a != b)
                .count();
            // Redrawn values collide with the old ones with probability zero.
            prop_assert_eq!(changed, quota);
        }
    }

    #[test]
    fn smoothing_preserves_length_and_mean_bounds(
        series in prop::collection::vec(-100.0f64..100.0, 1..200),
        half in 0usize..6,
    ) {
        let window = 2 * half + 1;
        let out = smooth(&series, window).unwrap();
        prop_assert_eq!(out.len(), series.len());
        let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for &v in &out {
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
        if window == 1 {
            prop_assert_eq!(out, series);
        }
    }
}
