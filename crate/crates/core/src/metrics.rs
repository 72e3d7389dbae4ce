//! Run histories and the measurements derived from them: per-iteration
//! fitness series, visit-density grids, fitness histograms, optimum
//! heatmaps, smoothing, and lossless CSV/JSON export.
//!
//! # History CSV layout
//!
//! One row per iteration, comma-separated, in this column order:
//!
//! ```text
//! t,current_best_fitness,best_so_far_fitness,cumulative_best_fitness,
//! population_mean_fitness,best_dim1,best_dim2,change_flag,
//! best_solution_full,optimum
//! ```
//!
//! `best_so_far_fitness` is windowed (it resets at each change); the
//! cumulative series is kept separately. `best_dim2` is empty for
//! one-dimensional problems. `best_solution_full` holds the whole best vector
//! (semicolon-joined) on every `snapshot_stride`-th iteration and is empty
//! otherwise; `optimum` is the ground-truth optimum, always full. Floats are
//! printed with 17 significant digits so export → import → re-export is
//! byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::de::Population;
use crate::error::{Error, Result};
use crate::problem::{BoxBounds, DynamicProblem, SolutionVector};
use crate::sensing::ChangeEvent;

/// Default stride for retaining the full best-solution vector.
pub const DEFAULT_SNAPSHOT_STRIDE: u64 = 10;

/// Print a float with 17 significant digits; parses back to the same bits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// The best solution a run ended with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalBest {
    pub solution: SolutionVector,
    pub fitness: f64,
}

/// One iteration's measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: u64,
    /// Best cached fitness of the population this iteration.
    pub current_best_fitness: f64,
    /// Best fitness seen since the last change (resets at each change).
    pub best_so_far_fitness: f64,
    /// Best fitness seen over the whole run.
    pub cumulative_best_fitness: f64,
    /// Arithmetic mean of the population's cached fitness.
    pub population_mean_fitness: f64,
    /// First two components of the best solution (dim2 absent for D = 1).
    pub best_dim1: f64,
    pub best_dim2: Option<f64>,
    /// Full best vector, retained every `snapshot_stride`-th iteration.
    pub best_solution_full: Option<Vec<f64>>,
    /// Ground-truth optimum at this iteration (generator-aware analyses
    /// only).
    pub optimum: Vec<f64>,
    /// True on iterations where a change was detected and adapted to.
    pub change_flag: bool,
}

/// Complete record of one framework or baseline run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub rows: Vec<IterationRecord>,
    pub change_events: Vec<ChangeEvent>,
    pub final_best: Option<FinalBest>,
    pub config_fingerprint: String,
    pub evaluation_count: u64,
    pub sensing_evaluation_count: u64,
    pub bounds: BoxBounds,
    pub snapshot_stride: u64,
    /// False for histories cut short by an error.
    pub complete: bool,
}

/// The JSON side of a serialized history (everything except the rows).
#[derive(Debug, Serialize, Deserialize)]
struct HistoryEnvelope {
    config_fingerprint: String,
    evaluation_count: u64,
    sensing_evaluation_count: u64,
    complete: bool,
    snapshot_stride: u64,
    bounds: BoxBounds,
    change_events: Vec<ChangeEvent>,
    final_best: Option<FinalBest>,
}

impl RunHistory {
    pub fn new(config_fingerprint: String, bounds: BoxBounds, snapshot_stride: u64) -> Self {
        RunHistory {
            rows: Vec::new(),
            change_events: Vec::new(),
            final_best: None,
            config_fingerprint,
            evaluation_count: 0,
            sensing_evaluation_count: 0,
            bounds,
            snapshot_stride: snapshot_stride.max(1),
            complete: false,
        }
    }

    /// Append one row. The windowed best resets when `changed` is set; the
    /// cumulative best carries through. The mean is the arithmetic mean of
    /// the population's cached fitness.
    pub fn record_iteration(
        &mut self,
        pop: &Population,
        problem: &DynamicProblem,
        t: u64,
        changed: bool,
    ) {
        let current = pop.best_fitness();
        let (windowed, cumulative) = match self.rows.last() {
            Some(prev) => {
                let windowed = if changed {
                    current
                } else {
                    prev.best_so_far_fitness.min(current)
                };
                (windowed, prev.cumulative_best_fitness.min(current))
            }
            None => (current, current),
        };
        let best = pop.best().0;
        let full = if t % self.snapshot_stride == 0 {
            Some(best.components().to_vec())
        } else {
            None
        };
        self.rows.push(IterationRecord {
            t,
            current_best_fitness: current,
            best_so_far_fitness: windowed,
            cumulative_best_fitness: cumulative,
            population_mean_fitness: pop.mean_fitness(),
            best_dim1: best[0],
            best_dim2: (best.dim() > 1).then(|| best[1]),
            best_solution_full: full,
            optimum: problem.optimum().components().to_vec(),
            change_flag: changed,
        });
    }

    pub fn push_event(&mut self, event: ChangeEvent) {
        self.change_events.push(event);
    }

    /// Close the history with the final best solution and evaluation totals.
    pub fn finalize(
        &mut self,
        final_best: FinalBest,
        evaluation_count: u64,
        sensing_evaluation_count: u64,
    ) {
        self.final_best = Some(final_best);
        self.evaluation_count = evaluation_count;
        self.sensing_evaluation_count = sensing_evaluation_count;
        self.complete = true;
    }

    /// All rows as CSV (see the module docs for the column order).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(
            "t,current_best_fitness,best_so_far_fitness,cumulative_best_fitness,\
             population_mean_fitness,best_dim1,best_dim2,change_flag,\
             best_solution_full,optimum\n",
        );
        for r in &self.rows {
            let dim2 = r.best_dim2.map(format_float).unwrap_or_default();
            let full = r
                .best_solution_full
                .as_ref()
                .map(|v| join_components(v))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.t,
                format_float(r.current_best_fitness),
                format_float(r.best_so_far_fitness),
                format_float(r.cumulative_best_fitness),
                format_float(r.population_mean_fitness),
                format_float(r.best_dim1),
                dim2,
                u8::from(r.change_flag),
                full,
                join_components(&r.optimum),
            );
        }
        out
    }

    /// Everything except the rows, as pretty JSON.
    pub fn envelope_json_string(&self) -> Result<String> {
        let envelope = HistoryEnvelope {
            config_fingerprint: self.config_fingerprint.clone(),
            evaluation_count: self.evaluation_count,
            sensing_evaluation_count: self.sensing_evaluation_count,
            complete: self.complete,
            snapshot_stride: self.snapshot_stride,
            bounds: self.bounds.clone(),
            change_events: self.change_events.clone(),
            final_best: self.final_best.clone(),
        };
        let mut s = serde_json::to_string_pretty(&envelope)
            .map_err(|e| Error::Parse(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// Rebuild a history from its CSV rows and JSON envelope.
    pub fn from_strings(csv: &str, json: &str) -> Result<RunHistory> {
        let envelope: HistoryEnvelope =
            serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
        let mut rows = Vec::new();
        let mut lines = csv.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty csv".into()))?;
        if !header.starts_with("t,current_best_fitness") {
            return Err(Error::Parse(format!("unexpected csv header: {header}")));
        }
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 10 {
                return Err(Error::Parse(format!(
                    "line {}: expected 10 fields, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            let parse_f = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))
            };
            rows.push(IterationRecord {
                t: fields[0]
                    .parse::<u64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?,
                current_best_fitness: parse_f(fields[1])?,
                best_so_far_fitness: parse_f(fields[2])?,
                cumulative_best_fitness: parse_f(fields[3])?,
                population_mean_fitness: parse_f(fields[4])?,
                best_dim1: parse_f(fields[5])?,
                best_dim2: if fields[6].is_empty() {
                    None
                } else {
                    Some(parse_f(fields[6])?)
                },
                change_flag: match fields[7] {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::Parse(format!(
                            "line {}: bad change flag {other:?}",
                            lineno + 2
                        )))
                    }
                },
                best_solution_full: if fields[8].is_empty() {
                    None
                } else {
                    Some(split_components(fields[8], lineno + 2)?)
                },
                optimum: split_components(fields[9], lineno + 2)?,
            });
        }
        Ok(RunHistory {
            rows,
            change_events: envelope.change_events,
            final_best: envelope.final_best,
            config_fingerprint: envelope.config_fingerprint,
            evaluation_count: envelope.evaluation_count,
            sensing_evaluation_count: envelope.sensing_evaluation_count,
            bounds: envelope.bounds,
            snapshot_stride: envelope.snapshot_stride,
            complete: envelope.complete,
        })
    }

    /// Write `history.csv` and `history.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("history.csv"), self.to_csv_string())?;
        std::fs::write(dir.join("history.json"), self.envelope_json_string()?)?;
        Ok(())
    }

    /// Read a history back from `dir`.
    pub fn load(dir: &Path) -> Result<RunHistory> {
        let csv = std::fs::read_to_string(dir.join("history.csv"))?;
        let json = std::fs::read_to_string(dir.join("history.json"))?;
        RunHistory::from_strings(&csv, &json)
    }
}

fn join_components(v: &[f64]) -> String {
    v.iter()
        .map(|&x| format_float(x))
        .collect::<Vec<_>>()
        .join(";")
}

fn split_components(s: &str, lineno: usize) -> Result<Vec<f64>> {
    s.split(';')
        .map(|p| {
            p.parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {lineno}: {e}")))
        })
        .collect()
}

/// Counts of best-solution visits over a `grid x grid` partition of the
/// search box's first two dimensions. `out[i][j]` covers the `i`-th bin of
/// dimension 1 and the `j`-th bin of dimension 2; the total count equals the
/// number of rows.
pub fn visit_density(history: &RunHistory, grid: usize) -> Result<Vec<Vec<u64>>> {
    if grid < 2 {
        return Err(Error::InvalidConfig("visit-density grid must be >= 2".into()));
    }
    if history.bounds.dim() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: history.bounds.dim(),
        });
    }
    let mut cells = vec![vec![0u64; grid]; grid];
    let bin = |x: f64, lo: f64, hi: f64| -> usize {
        (((x - lo) / (hi - lo) * grid as f64) as usize).min(grid - 1)
    };
    for r in &history.rows {
        let i = bin(r.best_dim1, history.bounds.lower()[0], history.bounds.upper()[0]);
        let d2 = r.best_dim2.ok_or(Error::DimensionMismatch { expected: 2, got: 1 })?;
        let j = bin(d2, history.bounds.lower()[1], history.bounds.upper()[1]);
        cells[i][j] += 1;
    }
    Ok(cells)
}

/// A histogram with `edges.len() == counts.len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Histogram of the per-iteration best fitness over all rows. Counts sum to
/// the row count. A constant series lands entirely in the first bin.
pub fn fitness_distribution(history: &RunHistory, bins: usize) -> Result<Histogram> {
    if bins < 1 {
        return Err(Error::InvalidConfig("histogram needs >= 1 bin".into()));
    }
    let values: Vec<f64> = history.rows.iter().map(|r| r.current_best_fitness).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if values.is_empty() {
        lo = 0.0;
        hi = 1.0;
    } else if lo == hi {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0u64; bins];
    for &v in &values {
        let idx = (((v - lo) / (hi - lo)) * bins as f64) as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Ground-truth optimum components sampled every `stride`-th row: a
/// `(rows / stride) x D` matrix for heatmap plotting.
pub fn optimum_heatmap(history: &RunHistory, stride: usize) -> Result<Vec<Vec<f64>>> {
    if stride < 1 {
        return Err(Error::InvalidConfig("heatmap stride must be >= 1".into()));
    }
    Ok(history
        .rows
        .iter()
        .step_by(stride)
        .map(|r| r.optimum.clone())
        .collect())
}

/// Centered moving average with edge truncation (the window shrinks at the
/// boundaries). The window must be odd; the output length equals the input
/// length.
pub fn smooth(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 1 || window % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "smoothing window must be odd and >= 1, got {window}"
        )));
    }
    let half = window / 2;
    let n = series.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n.saturating_sub(1));
            let slice = &series[lo..=hi];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect())
}

/// Render a count matrix as CSV.
pub fn counts_matrix_csv(matrix: &[Vec<u64>]) -> String {
    let mut out = String::new();
    for row in matrix {
        let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Render a float matrix as CSV with lossless formatting.
pub fn float_matrix_csv(matrix: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in matrix {
        let line: Vec<String> = row.iter().map(|&c| format_float(c)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Fingerprint of any serializable configuration: FNV-1a over its canonical
/// JSON, hex-encoded.
pub fn config_fingerprint<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_string(value).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(format!("{:016x}", crate::rng::stable_hash64(json.as_bytes())))
}
