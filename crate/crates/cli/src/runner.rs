//! Experiment execution: seed sweeps over strategies and baselines, per-run
//! artifact files, the per-experiment summary table, and gnuplot scripts for
//! the standard figures.
//!
//! Output layout under `<out>/<experiment name>/`:
//!
//! ```text
//! resolved_spec.toml                 # full echo; re-runnable as a spec
//! summary.csv                        # one row per competitor x dimension
//! plot_*.gp                          # gnuplot recipes over the CSVs
//! <competitor>/[dim_DD/]seed_S/history.csv
//! <competitor>/[dim_DD/]seed_S/history.json
//! <competitor>/[dim_DD/]seed_S/{visit_density,fitness_histogram,
//!                               optimum_heatmap,smoothed_fitness}.csv
//!                                    # first dimension + first seed only
//! ```
//!
//! Fairness: all competitors under one seed observe the identical optimum
//! trajectory (the problem seed drives the environment stream); optimizer
//! streams are derived per competitor. Baselines with no explicit budget are
//! handed the first strategy's evaluation count for that seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use dynopt::baselines::{anneal, basin_hop, BaselineResult};
use dynopt::framework::{recovery_time, run, RecoveryTime};
use dynopt::metrics::{
    config_fingerprint, counts_matrix_csv, fitness_distribution, float_matrix_csv, format_float,
    optimum_heatmap, smooth, visit_density, FinalBest, IterationRecord, RunHistory,
};
use dynopt::problem::{make_moving_optimum_problem, DynamicProblem, SolutionVector};

use crate::spec::{BaselineKind, BaselineSection, ExperimentSpec};
use crate::CliError;

/// Aggregated results for one competitor at one dimension.
#[derive(Debug, Clone)]
pub struct CompetitorSummary {
    pub label: String,
    pub kind: &'static str,
    pub dimension: usize,
    pub runs: usize,
    pub median_end_error: f64,
    pub iqr_end_error: f64,
    pub mean_recovery_iterations: Option<f64>,
    pub recovery_episodes: usize,
    pub censored_recoveries: usize,
    pub mean_evaluations: f64,
    pub mean_sensing_evaluations: f64,
}

/// What `run_experiment` produced.
#[derive(Debug)]
pub struct ExperimentReport {
    pub directory: PathBuf,
    pub summaries: Vec<CompetitorSummary>,
    pub runs: usize,
}

struct RunArtifact {
    label: String,
    is_strategy: bool,
    dimension: usize,
    seed: u64,
    history: RunHistory,
    end_error: f64,
    recoveries: Vec<RecoveryTime>,
}

/// Execute every (competitor x dimension x seed) run of the spec and write
/// all artifacts under `out_root`. Groups run in parallel across `jobs`
/// workers (0 = one per core); output content is independent of scheduling.
pub fn run_experiment(
    spec: &ExperimentSpec,
    out_root: &Path,
    jobs: usize,
    verbose: bool,
) -> Result<ExperimentReport, CliError> {
    let spec = spec.resolve()?;
    let out_dir = out_root.join(&spec.name);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", out_dir.display())))?;
    write_file(&out_dir.join("resolved_spec.toml"), &spec.describe()?)?;

    let dims = spec.problem.dimension.all();
    let groups: Vec<(usize, u64)> = dims
        .iter()
        .flat_map(|&d| spec.seeds.iter().map(move |&s| (d, s)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let group_results: Vec<(Vec<RunArtifact>, Vec<String>)> = pool.install(|| {
        groups
            .par_iter()
            .map(|&(dim, seed)| run_group(&spec, dim, seed, verbose))
            .collect()
    });

    let mut artifacts = Vec::new();
    let mut failures = Vec::new();
    for (mut ok, mut bad) in group_results {
        artifacts.append(&mut ok);
        failures.append(&mut bad);
    }

    let first_dim = dims[0];
    let first_seed = spec.seeds[0];
    let sweep = dims.len() > 1;
    for artifact in &artifacts {
        let dir = artifact_dir(&out_dir, sweep, artifact);
        artifact
            .history
            .save(&dir)
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", dir.display())))?;
        if artifact.dimension == first_dim && artifact.seed == first_seed {
            write_run_extras(&dir, &artifact.history)?;
        }
    }

    let summaries = summarize(&spec, &dims, &artifacts);
    write_file(&out_dir.join("summary.csv"), &summary_csv(&summaries))?;
    for (name, content) in plot_scripts(&spec, sweep) {
        write_file(&out_dir.join(name), &content)?;
    }

    if !failures.is_empty() {
        return Err(CliError::Runtime(format!(
            "{} run(s) failed:\n{}",
            failures.len(),
            failures.join("\n")
        )));
    }
    Ok(ExperimentReport {
        directory: out_dir,
        summaries,
        runs: artifacts.len(),
    })
}

/// All runs sharing one (dimension, seed): strategies first (their evaluation
/// count sets the matched baseline budget), then baselines. Failed runs are
/// recorded and skipped so the rest of the group still completes.
fn run_group(
    spec: &ExperimentSpec,
    dim: usize,
    seed: u64,
    verbose: bool,
) -> (Vec<RunArtifact>, Vec<String>) {
    let mut artifacts = Vec::new();
    let mut failures = Vec::new();
    let mut matched_budget: Option<u64> = None;

    for strategy in &spec.strategies {
        let label = strategy.label();
        let note = |e: String| format!("{label} dim={dim} seed={seed}: {e}");
        let problem = match build_problem(spec, dim, seed) {
            Ok(p) => p,
            Err(e) => {
                failures.push(note(e));
                continue;
            }
        };
        let config = spec.framework_config(dim, strategy, seed);
        if verbose {
            eprintln!("running {label} dim={dim} seed={seed}");
        }
        let history = match run(problem, &config) {
            Ok(h) => h,
            Err(f) => {
                failures.push(note(f.to_string()));
                continue;
            }
        };
        matched_budget.get_or_insert(history.evaluation_count);
        let recoveries: Vec<RecoveryTime> = history
            .change_events
            .iter()
            .filter_map(|e| recovery_time(&history, e, spec.framework.recovery_band).ok())
            .collect();
        let end_error = strategy_end_error(&history);
        artifacts.push(RunArtifact {
            label,
            is_strategy: true,
            dimension: dim,
            seed,
            history,
            end_error,
            recoveries,
        });
    }

    let fallback_budget =
        spec.framework.total_iterations * spec.de_config(dim).population_size as u64;
    let budget = matched_budget.unwrap_or(fallback_budget);

    for baseline in &spec.baselines {
        let label = baseline.label();
        let note = |e: String| format!("{label} dim={dim} seed={seed}: {e}");
        if verbose {
            eprintln!("running {label} dim={dim} seed={seed} (budget {budget})");
        }
        let outcome = build_problem(spec, dim, seed).and_then(|problem| {
            let result = match baseline.kind {
                BaselineKind::DualAnnealing => {
                    anneal(&problem, &baseline.anneal_config(budget), seed)
                }
                BaselineKind::BasinHopping => {
                    basin_hop(&problem, &baseline.basin_config(budget), seed)
                }
            }
            .map_err(|e| e.to_string())?;
            baseline_artifact(spec, baseline, &problem, result, dim, seed)
        });
        match outcome {
            Ok(artifact) => artifacts.push(artifact),
            Err(e) => failures.push(note(e)),
        }
    }

    (artifacts, failures)
}

fn build_problem(
    spec: &ExperimentSpec,
    dim: usize,
    seed: u64,
) -> Result<DynamicProblem, String> {
    let bounds = spec.bounds(dim).map_err(|e| e.to_string())?;
    let schedule = spec.schedule().map_err(|e| e.to_string())?;
    make_moving_optimum_problem(dim, bounds, schedule, seed).map_err(|e| e.to_string())
}

/// Distance from the run's final best to the true optimum at the end of the
/// run.
fn strategy_end_error(history: &RunHistory) -> f64 {
    let final_best = history
        .final_best
        .as_ref()
        .expect("completed run has a final best");
    let optimum = SolutionVector::new(history.rows.last().expect("non-empty run").optimum.clone());
    final_best.solution.euclidean_distance(&optimum)
}

/// Express a baseline trace in the run-history schema so it overlays with
/// framework runs: row `t` carries the best-so-far after the share of the
/// budget a framework run would have spent by iteration `t`, and the optimum
/// column carries the true (moving) trajectory from a replay of the same
/// problem seed.
fn baseline_artifact(
    spec: &ExperimentSpec,
    section: &BaselineSection,
    problem: &DynamicProblem,
    result: BaselineResult,
    dim: usize,
    seed: u64,
) -> Result<RunArtifact, String> {
    let total = spec.framework.total_iterations;
    let evals = result.evaluations.max(1);

    let mut replay = problem.clone();
    let fingerprint = config_fingerprint(&(problem.descriptor(), section, seed))
        .map_err(|e| e.to_string())?;
    let mut history = RunHistory::new(
        fingerprint,
        problem.bounds().clone(),
        spec.framework.snapshot_stride,
    );

    for t in 1..=total {
        replay.advance_clock();
        let k = ((t as u128 * evals as u128) / total as u128) as u64;
        let k = k.clamp(1, evals);
        let fitness = result.trace[(k - 1) as usize];
        let best = result.best_at_evaluation(k - 1);
        history.rows.push(IterationRecord {
            t,
            current_best_fitness: fitness,
            best_so_far_fitness: fitness,
            cumulative_best_fitness: fitness,
            population_mean_fitness: fitness,
            best_dim1: best[0],
            best_dim2: (best.dim() > 1).then(|| best[1]),
            best_solution_full: (t % spec.framework.snapshot_stride == 0)
                .then(|| best.components().to_vec()),
            optimum: replay.optimum().components().to_vec(),
            change_flag: false,
        });
    }
    let end_error = result
        .best
        .euclidean_distance(replay.optimum());
    history.finalize(
        FinalBest {
            solution: result.best.clone(),
            fitness: result.best_fitness,
        },
        result.evaluations,
        0,
    );
    Ok(RunArtifact {
        label: section.label(),
        is_strategy: false,
        dimension: dim,
        seed,
        history,
        end_error,
        recoveries: Vec::new(),
    })
}

fn artifact_dir(out_dir: &Path, sweep: bool, artifact: &RunArtifact) -> PathBuf {
    let mut dir = out_dir.join(&artifact.label);
    if sweep {
        dir = dir.join(format!("dim_{:02}", artifact.dimension));
    }
    dir.join(format!("seed_{}", artifact.seed))
}

/// Plot-ready aggregation CSVs for one run.
fn write_run_extras(dir: &Path, history: &RunHistory) -> Result<(), CliError> {
    if let Ok(cells) = visit_density(history, 40) {
        write_file(&dir.join("visit_density.csv"), &counts_matrix_csv(&cells))?;
    }
    let hist = fitness_distribution(history, 30)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut histogram = String::from("bin_lo,bin_hi,count\n");
    for (i, &count) in hist.counts.iter().enumerate() {
        let _ = writeln!(
            histogram,
            "{},{},{}",
            format_float(hist.edges[i]),
            format_float(hist.edges[i + 1]),
            count
        );
    }
    write_file(&dir.join("fitness_histogram.csv"), &histogram)?;

    let heat = optimum_heatmap(history, 10).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&dir.join("optimum_heatmap.csv"), &float_matrix_csv(&heat))?;

    let series: Vec<f64> = history.rows.iter().map(|r| r.current_best_fitness).collect();
    let smoothed = smooth(&series, 21).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut out = String::from("t,smoothed_best_fitness\n");
    for (row, value) in history.rows.iter().zip(smoothed) {
        let _ = writeln!(out, "{},{}", row.t, format_float(value));
    }
    write_file(&dir.join("smoothed_fitness.csv"), &out)?;
    Ok(())
}

fn summarize(
    spec: &ExperimentSpec,
    dims: &[usize],
    artifacts: &[RunArtifact],
) -> Vec<CompetitorSummary> {
    let labels: Vec<(String, &'static str)> = spec
        .strategies
        .iter()
        .map(|s| (s.label(), "strategy"))
        .chain(spec.baselines.iter().map(|b| (b.label(), "baseline")))
        .collect();

    let mut out = Vec::new();
    for (label, kind) in &labels {
        for &dim in dims {
            let group: Vec<&RunArtifact> = artifacts
                .iter()
                .filter(|a| &a.label == label && a.dimension == dim)
                .collect();
            if group.is_empty() {
                continue;
            }
            let mut errors: Vec<f64> = group.iter().map(|a| a.end_error).collect();
            errors.sort_by(f64::total_cmp);
            let episodes: Vec<&RecoveryTime> =
                group.iter().flat_map(|a| a.recoveries.iter()).collect();
            let mean_recovery = if episodes.is_empty() {
                None
            } else {
                Some(
                    episodes.iter().map(|r| r.iterations as f64).sum::<f64>()
                        / episodes.len() as f64,
                )
            };
            out.push(CompetitorSummary {
                label: label.clone(),
                kind,
                dimension: dim,
                runs: group.len(),
                median_end_error: percentile(&errors, 0.5),
                iqr_end_error: percentile(&errors, 0.75) - percentile(&errors, 0.25),
                mean_recovery_iterations: mean_recovery,
                recovery_episodes: episodes.len(),
                censored_recoveries: episodes.iter().filter(|r| r.censored).count(),
                mean_evaluations: group
                    .iter()
                    .map(|a| a.history.evaluation_count as f64)
                    .sum::<f64>()
                    / group.len() as f64,
                mean_sensing_evaluations: group
                    .iter()
                    .map(|a| a.history.sensing_evaluation_count as f64)
                    .sum::<f64>()
                    / group.len() as f64,
            });
        }
    }
    out
}

/// Linear-interpolation percentile of a sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

fn summary_csv(summaries: &[CompetitorSummary]) -> String {
    let mut out = String::from(
        "competitor,kind,dimension,runs,median_end_error,iqr_end_error,\
         mean_recovery_iterations,recovery_episodes,censored_recoveries,\
         mean_evaluations,mean_sensing_evaluations\n",
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            s.label,
            s.kind,
            s.dimension,
            s.runs,
            format_float(s.median_end_error),
            format_float(s.iqr_end_error),
            s.mean_recovery_iterations
                .map(format_float)
                .unwrap_or_default(),
            s.recovery_episodes,
            s.censored_recoveries,
            format_float(s.mean_evaluations),
            format_float(s.mean_sensing_evaluations),
        );
    }
    out
}

/// Human-readable view of the summary table.
pub fn summary_text(summaries: &[CompetitorSummary]) -> String {
    let mut out = String::new();
    for s in summaries {
        let _ = write!(
            out,
            "{:<28} {:<8} dim {:>2}  runs {:>3}  median end error {:>12.5e}  IQR {:>12.5e}",
            s.label, s.kind, s.dimension, s.runs, s.median_end_error, s.iqr_end_error
        );
        if let Some(r) = s.mean_recovery_iterations {
            let _ = write!(out, "  mean recovery {r:>7.1}");
            if s.censored_recoveries > 0 {
                let _ = write!(out, " ({} censored)", s.censored_recoveries);
            }
        }
        let _ = writeln!(out, "  evals {:>10.0}", s.mean_evaluations);
    }
    out
}

/// Gnuplot recipes over the emitted CSVs. Data files only; no rendering here.
fn plot_scripts(spec: &ExperimentSpec, sweep: bool) -> Vec<(String, String)> {
    let first_seed = spec.seeds[0];
    let dim_part = if sweep {
        format!("dim_{:02}/", spec.problem.dimension.all()[0])
    } else {
        String::new()
    };
    let run_dir = |label: &str| format!("{label}/{dim_part}seed_{first_seed}");
    let lead_label = spec
        .strategies
        .first()
        .map(|s| s.label())
        .or_else(|| spec.baselines.first().map(|b| b.label()))
        .expect("validated spec has a competitor");
    let lead = run_dir(&lead_label);

    let mut scripts = Vec::new();
    scripts.push((
        "plot_fitness_history.gp".to_string(),
        format!(
            "# Best fitness per iteration, cumulative best, and population mean.\n\
             set datafile separator \",\"\n\
             set xlabel \"iteration\"\nset ylabel \"fitness\"\nset logscale y\n\
             plot \"{lead}/history.csv\" skip 1 using 1:2 with lines title \"best per iteration\", \\\n\
             \t\"\" skip 1 using 1:4 with lines title \"cumulative best\", \\\n\
             \t\"\" skip 1 using 1:5 with lines title \"population mean\"\n"
        ),
    ));
    scripts.push((
        "plot_solution_trajectory.gp".to_string(),
        format!(
            "# Path of the best solution through dimensions 1 and 2.\n\
             set datafile separator \",\"\n\
             set xlabel \"dimension 1\"\nset ylabel \"dimension 2\"\n\
             plot \"{lead}/history.csv\" skip 1 using 6:7 with linespoints pointtype 7 pointsize 0.3 title \"best-solution path\"\n"
        ),
    ));
    scripts.push((
        "plot_optimum_heatmap.gp".to_string(),
        format!(
            "# Optimum components (columns) over time steps (rows).\n\
             set datafile separator \",\"\n\
             set xlabel \"solution component\"\nset ylabel \"time step\"\n\
             plot \"{lead}/optimum_heatmap.csv\" matrix with image title \"optimum components\"\n"
        ),
    ));
    scripts.push((
        "plot_search_overview.gp".to_string(),
        format!(
            "# Smoothed fitness, visit density over dims 1-2, and the fitness histogram.\n\
             set datafile separator \",\"\n\
             set multiplot layout 1,3\n\
             set xlabel \"iteration\"\nset ylabel \"fitness\"\n\
             plot \"{lead}/smoothed_fitness.csv\" skip 1 using 1:2 with lines title \"smoothed fitness\"\n\
             set xlabel \"dimension 1 bin\"\nset ylabel \"dimension 2 bin\"\n\
             plot \"{lead}/visit_density.csv\" matrix with image title \"visit density\"\n\
             set xlabel \"fitness\"\nset ylabel \"count\"\nset style fill solid 0.6\n\
             plot \"{lead}/fitness_histogram.csv\" skip 1 using (($1+$2)/2):3 with boxes title \"fitness distribution\"\n\
             unset multiplot\n"
        ),
    ));
    if spec.strategies.len() > 1 {
        let mut body = String::from(
            "# Per-iteration best fitness of each adaptation strategy, same problem seed.\n\
             set datafile separator \",\"\n\
             set xlabel \"iteration\"\nset ylabel \"fitness\"\nset logscale y\nplot ",
        );
        for (i, s) in spec.strategies.iter().enumerate() {
            if i > 0 {
                body.push_str(", \\\n\t");
            }
            let _ = write!(
                body,
                "\"{}/history.csv\" skip 1 using 1:2 with lines title \"{}\"",
                run_dir(&s.label()),
                s.label()
            );
        }
        body.push('\n');
        scripts.push(("plot_strategy_comparison.gp".to_string(), body));
    }
    if !spec.baselines.is_empty() {
        let mut body = String::from(
            "# Adaptive runs against static baselines at the same evaluation budget.\n\
             set datafile separator \",\"\n\
             set xlabel \"iteration\"\nset ylabel \"fitness\"\nset logscale y\nplot ",
        );
        let mut first = true;
        for label in spec
            .strategies
            .iter()
            .map(|s| s.label())
            .chain(spec.baselines.iter().map(|b| b.label()))
        {
            if !first {
                body.push_str(", \\\n\t");
            }
            first = false;
            let _ = write!(
                body,
                "\"{}/history.csv\" skip 1 using 1:2 with lines title \"{label}\"",
                run_dir(&label)
            );
        }
        body.push('\n');
        scripts.push(("plot_baseline_comparison.gp".to_string(), body));
    }
    scripts
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Runtime(format!("creating {}: {e}", parent.display())))?;
    }
    std::fs::write(path, content)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}
