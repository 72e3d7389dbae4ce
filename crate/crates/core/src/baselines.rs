//! Static comparison optimizers: a Cauchy-step simulated annealer and a
//! perturb-then-simplex basin hopper.
//!
//! Both optimize the problem's landscape at its current clock and never
//! advance it, which is what makes them baselines: on a dynamic problem they
//! keep polishing the starting landscape while the optimum walks away. They
//! are deliberately compact, self-contained reimplementations rather than
//! bindings to any particular library's versions.

use rand::Rng;
use rand_distr::{Cauchy, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{DynamicProblem, SolutionVector};
use crate::rng::{seeded_stream, STREAM_ANNEAL, STREAM_BASIN};

/// Simulated-annealing parameters. Each step costs one evaluation, so
/// `steps` doubles as the evaluation budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    pub initial_temperature: f64,
    /// Temperature decays as `T0 / (1 + k)^cooling_exponent`; must be > 0 so
    /// the schedule strictly decreases.
    pub cooling_exponent: f64,
    pub steps: u64,
    /// Proposal scale as a fraction of each axis range.
    pub step_scale: f64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            initial_temperature: 1.0,
            cooling_exponent: 1.0,
            steps: 2000,
            step_scale: 0.5,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("anneal steps must be >= 1".into()));
        }
        if !(self.initial_temperature > 0.0) {
            return Err(Error::InvalidConfig("initial_temperature must be > 0".into()));
        }
        if !(self.cooling_exponent > 0.0) {
            return Err(Error::InvalidConfig(
                "cooling_exponent must be > 0 for a decreasing schedule".into(),
            ));
        }
        if !(self.step_scale > 0.0) {
            return Err(Error::InvalidConfig("step_scale must be > 0".into()));
        }
        Ok(())
    }
}

/// Basin-hopping parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinConfig {
    pub hops: u64,
    /// Hop perturbation as a fraction of each axis range; zero means every
    /// hop restarts the simplex from the incumbent.
    pub perturbation_scale: f64,
    pub local_simplex_iterations: u64,
    /// Optional hard evaluation budget; the run stops mid-hop when it is
    /// exhausted. Used to hand baselines the same budget as a framework run.
    pub max_evaluations: Option<u64>,
}

impl Default for BasinConfig {
    fn default() -> Self {
        BasinConfig {
            hops: 50,
            perturbation_scale: 0.25,
            local_simplex_iterations: 200,
            max_evaluations: None,
        }
    }
}

impl BasinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hops == 0 {
            return Err(Error::InvalidConfig("hops must be >= 1".into()));
        }
        if self.local_simplex_iterations == 0 {
            return Err(Error::InvalidConfig(
                "local_simplex_iterations must be >= 1".into(),
            ));
        }
        if !(self.perturbation_scale >= 0.0) {
            return Err(Error::InvalidConfig("perturbation_scale must be >= 0".into()));
        }
        Ok(())
    }
}

/// Outcome of a baseline run: the best point, a per-evaluation best-so-far
/// trace, and the evaluation indices at which the best improved.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub best: SolutionVector,
    pub best_fitness: f64,
    /// `trace[k]` is the best fitness after evaluation `k + 1`; non-increasing.
    pub trace: Vec<f64>,
    /// `(evaluation index, solution)` for every strict improvement, starting
    /// with the first evaluation.
    pub improvements: Vec<(u64, SolutionVector)>,
    pub evaluations: u64,
}

impl BaselineResult {
    /// The trace extended to `len` entries by repeating the final best — the
    /// flat tail of a converged static optimizer.
    pub fn padded_trace(&self, len: usize) -> Vec<f64> {
        let mut out = self.trace.clone();
        let last = *out.last().unwrap_or(&f64::INFINITY);
        while out.len() < len {
            out.push(last);
        }
        out.truncate(len);
        out
    }

    /// Best-so-far solution as of evaluation `k + 1` (0-based index into the
    /// trace).
    pub fn best_at_evaluation(&self, index: u64) -> &SolutionVector {
        let mut current = &self.improvements[0].1;
        for (n, s) in &self.improvements {
            if *n <= index + 1 {
                current = s;
            } else {
                break;
            }
        }
        current
    }
}

/// Counts evaluations, maintains the best-so-far trace, and enforces an
/// optional budget.
struct EvalTracker<'a> {
    problem: &'a DynamicProblem,
    t: u64,
    budget: Option<u64>,
    evaluations: u64,
    best_fitness: f64,
    best: Option<SolutionVector>,
    trace: Vec<f64>,
    improvements: Vec<(u64, SolutionVector)>,
}

impl<'a> EvalTracker<'a> {
    fn new(problem: &'a DynamicProblem, budget: Option<u64>) -> Self {
        EvalTracker {
            problem,
            t: problem.clock(),
            budget,
            evaluations: 0,
            best_fitness: f64::INFINITY,
            best: None,
            trace: Vec::new(),
            improvements: Vec::new(),
        }
    }

    fn exhausted(&self) -> bool {
        self.budget.is_some_and(|b| self.evaluations >= b)
    }

    fn eval(&mut self, x: &SolutionVector) -> Result<f64> {
        let f = self.problem.evaluate(x, self.t)?;
        self.evaluations += 1;
        if f < self.best_fitness {
            self.best_fitness = f;
            self.best = Some(x.clone());
            self.improvements.push((self.evaluations, x.clone()));
        }
        self.trace.push(self.best_fitness);
        Ok(f)
    }

    fn finish(self) -> BaselineResult {
        BaselineResult {
            best: self.best.expect("at least one evaluation"),
            best_fitness: self.best_fitness,
            trace: self.trace,
            improvements: self.improvements,
            evaluations: self.evaluations,
        }
    }
}

/// Simulated annealing with heavy-tailed proposals: per axis, a Cauchy step
/// scaled by `step_scale * range * T_k`, clamped into the box, accepted by
/// the Metropolis rule. The landscape is the problem's current one; the
/// clock is not advanced.
pub fn anneal(
    problem: &DynamicProblem,
    config: &AnnealConfig,
    seed: u64,
) -> Result<BaselineResult> {
    config.validate()?;
    let mut rng = seeded_stream(seed, STREAM_ANNEAL);
    let bounds = problem.bounds();
    let cauchy = Cauchy::new(0.0, 1.0).expect("valid cauchy parameters");

    let mut tracker = EvalTracker::new(problem, Some(config.steps));
    let mut current = bounds.sample(&mut rng);
    let mut current_f = tracker.eval(&current)?;

    for k in 1..config.steps {
        if tracker.exhausted() {
            break;
        }
        let temperature =
            config.initial_temperature / (1.0 + k as f64).powf(config.cooling_exponent);
        let proposal = SolutionVector::new(
            current
                .components()
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let step: f64 = cauchy.sample(&mut rng);
                    (v + config.step_scale * bounds.range(i) * temperature * step)
                        .clamp(bounds.lower()[i], bounds.upper()[i])
                })
                .collect(),
        );
        let proposal_f = tracker.eval(&proposal)?;
        let accept = proposal_f <= current_f || {
            let u: f64 = rng.random();
            u < (-(proposal_f - current_f) / temperature).exp()
        };
        if accept {
            current = proposal;
            current_f = proposal_f;
        }
    }
    Ok(tracker.finish())
}

/// Basin hopping: perturb the incumbent uniformly (scaled per axis), run a
/// bounded Nelder-Mead simplex from the perturbed point, and keep the result
/// if it improved. The clock is not advanced.
pub fn basin_hop(
    problem: &DynamicProblem,
    config: &BasinConfig,
    seed: u64,
) -> Result<BaselineResult> {
    config.validate()?;
    let mut rng = seeded_stream(seed, STREAM_BASIN);
    let bounds = problem.bounds();

    let mut tracker = EvalTracker::new(problem, config.max_evaluations);
    let mut incumbent = bounds.sample(&mut rng);
    let mut incumbent_f = tracker.eval(&incumbent)?;

    for _ in 0..config.hops {
        if tracker.exhausted() {
            break;
        }
        let start = SolutionVector::new(
            incumbent
                .components()
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let half = config.perturbation_scale * bounds.range(i);
                    let offset = if half > 0.0 {
                        rng.random_range(-half..half)
                    } else {
                        0.0
                    };
                    (v + offset).clamp(bounds.lower()[i], bounds.upper()[i])
                })
                .collect(),
        );
        let (candidate, candidate_f) = nelder_mead(
            &mut tracker,
            start,
            config.local_simplex_iterations,
            problem,
        )?;
        if candidate_f < incumbent_f {
            incumbent = candidate;
            incumbent_f = candidate_f;
        }
    }
    Ok(tracker.finish())
}

/// Bounded Nelder-Mead with the standard coefficients: reflection 1,
/// expansion 2, contraction 0.5, shrink 0.5. Out-of-box candidates are folded
/// back into the interior (mirror at the violated wall) rather than projected
/// onto it; exact projection collapses the whole simplex onto a boundary
/// facet and strands it there. Returns early when the evaluation budget runs
/// out.
fn nelder_mead(
    tracker: &mut EvalTracker<'_>,
    start: SolutionVector,
    iterations: u64,
    problem: &DynamicProblem,
) -> Result<(SolutionVector, f64)> {
    let bounds = problem.bounds();
    let dim = problem.dimension();

    let clamp = |v: Vec<f64>| -> SolutionVector {
        SolutionVector::new(
            v.into_iter()
                .enumerate()
                .map(|(i, x)| {
                    let (lo, hi) = (bounds.lower()[i], bounds.upper()[i]);
                    let folded = if x < lo {
                        lo + (lo - x)
                    } else if x > hi {
                        hi - (x - hi)
                    } else {
                        x
                    };
                    folded.clamp(lo, hi)
                })
                .collect(),
        )
    };

    // Initial simplex: the start plus one vertex per axis, stepped by 5% of
    // the range (stepping down when that would leave the box).
    let mut simplex: Vec<(SolutionVector, f64)> = Vec::with_capacity(dim + 1);
    let f0 = tracker.eval(&start)?;
    simplex.push((start.clone(), f0));
    for i in 0..dim {
        if tracker.exhausted() {
            break;
        }
        let step = 0.05 * bounds.range(i);
        let mut v = start.components().to_vec();
        v[i] = if v[i] + step <= bounds.upper()[i] {
            v[i] + step
        } else {
            v[i] - step
        };
        let vertex = clamp(v);
        let f = tracker.eval(&vertex)?;
        simplex.push((vertex, f));
    }
    if simplex.len() < dim + 1 {
        // Budget died during setup; best vertex so far is the answer.
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        return Ok(simplex.swap_remove(0));
    }

    for _ in 0..iterations {
        if tracker.exhausted() {
            break;
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let worst = simplex[dim].clone();
        let second_worst_f = simplex[dim - 1].1;
        let best_f = simplex[0].1;

        // Centroid of all vertices except the worst.
        let mut centroid = vec![0.0; dim];
        for (v, _) in &simplex[..dim] {
            for (c, x) in centroid.iter_mut().zip(v.components()) {
                *c += x;
            }
        }
        for c in &mut centroid {
            *c /= dim as f64;
        }

        let blend = |toward: &[f64], coeff: f64| -> SolutionVector {
            clamp(
                centroid
                    .iter()
                    .zip(toward)
                    .map(|(c, w)| c + coeff * (c - w))
                    .collect(),
            )
        };

        let reflected = blend(worst.0.components(), 1.0);
        let reflected_f = tracker.eval(&reflected)?;

        if reflected_f < best_f {
            if tracker.exhausted() {
                simplex[dim] = (reflected, reflected_f);
                break;
            }
            let expanded = blend(worst.0.components(), 2.0);
            let expanded_f = tracker.eval(&expanded)?;
            simplex[dim] = if expanded_f < reflected_f {
                (expanded, expanded_f)
            } else {
                (reflected, reflected_f)
            };
            continue;
        }
        if reflected_f < second_worst_f {
            simplex[dim] = (reflected, reflected_f);
            continue;
        }

        // Contract toward the better of the worst vertex and its reflection.
        if tracker.exhausted() {
            break;
        }
        let contracted = if reflected_f < worst.1 {
            blend(worst.0.components(), 0.5) // outside
        } else {
            blend(worst.0.components(), -0.5) // inside
        };
        let contracted_f = tracker.eval(&contracted)?;
        if contracted_f < worst.1.min(reflected_f) {
            simplex[dim] = (contracted, contracted_f);
            continue;
        }

        // Shrink everything toward the best vertex.
        let anchor = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            if tracker.exhausted() {
                break;
            }
            let shrunk = clamp(
                anchor
                    .components()
                    .iter()
                    .zip(entry.0.components())
                    .map(|(b, x)| b + 0.5 * (x - b))
                    .collect(),
            );
            let f = tracker.eval(&shrunk)?;
            *entry = (shrunk, f);
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(simplex.swap_remove(0))
}
