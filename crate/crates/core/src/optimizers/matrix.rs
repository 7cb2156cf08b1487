//! Trials x functions x methods, aggregated into a Table-1 style summary.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run, OptimizerConfig, OptimizerError, OptimizerKind, RunHistory};
use crate::agent::AgentTranscript;
use crate::benchfns::BenchmarkFunction;
use crate::seed;

pub const INIT_ROW: &str = "Init";

/// Output of one method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub history: RunHistory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<AgentTranscript>,
}

impl From<RunHistory> for MethodRun {
    fn from(history: RunHistory) -> Self {
        Self {
            history,
            transcript: None,
        }
    }
}

/// Anything that can spend an evaluation budget on a benchmark function.
pub trait Method: Send + Sync {
    fn name(&self) -> String;

    /// Runs once from `x0` with `steps` evaluations. `seed` seeds any randomness the
    /// method needs; it is already specific to (function, method, trial).
    fn run(
        &self,
        f: &BenchmarkFunction,
        x0: &[f64],
        steps: usize,
        seed: u64,
    ) -> Result<MethodRun, OptimizerError>;
}

impl Method for OptimizerConfig {
    fn name(&self) -> String {
        self.kind.label().to_string()
    }

    fn run(
        &self,
        f: &BenchmarkFunction,
        x0: &[f64],
        steps: usize,
        seed: u64,
    ) -> Result<MethodRun, OptimizerError> {
        let cfg = OptimizerConfig {
            steps,
            ..self.clone()
        };
        run(f, x0, &cfg, &mut seed::rng(seed)).map(MethodRun::from)
    }
}

impl Method for OptimizerKind {
    fn name(&self) -> String {
        self.label().to_string()
    }

    fn run(
        &self,
        f: &BenchmarkFunction,
        x0: &[f64],
        steps: usize,
        seed: u64,
    ) -> Result<MethodRun, OptimizerError> {
        OptimizerConfig::new(*self, steps).run(f, x0, steps, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub function: String,
    pub optimizer: String,
    pub mean: f64,
    pub std: f64,
    pub failures: usize,
    pub trials: usize,
}

impl CellStats {
    fn from_values(function: &str, optimizer: &str, values: &[f64], trials: usize) -> Self {
        let n = values.len();
        let (mean, std) = if n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let mean = values.iter().sum::<f64>() / n as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            (mean, var.sqrt())
        };
        Self {
            function: function.to_string(),
            optimizer: optimizer.to_string(),
            mean,
            std,
            failures: trials - n,
            trials,
        }
    }

    pub fn all_failed(&self) -> bool {
        self.failures == self.trials
    }
}

/// Mean/std of best-found `f` per (function, method), plus the `Init` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub functions: Vec<String>,
    /// Row labels, `Init` first.
    pub rows: Vec<String>,
    pub cells: Vec<CellStats>,
}

impl StatsTable {
    pub fn cell(&self, function: &str, row: &str) -> Option<&CellStats> {
        self.cells
            .iter()
            .find(|c| c.function == function && c.optimizer == row)
    }

    /// CSV with columns `function,optimizer,mean,std,failures`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("function,optimizer,mean,std,failures\n");
        for function in &self.functions {
            for row in &self.rows {
                if let Some(c) = self.cell(function, row) {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        csv_field(&c.function),
                        csv_field(&c.optimizer),
                        c.mean,
                        c.std,
                        c.failures
                    );
                }
            }
        }
        out
    }

    /// Aligned text table: one row per method, one column per function, `mean±std` cells.
    pub fn to_text(&self) -> String {
        let header: Vec<String> = std::iter::once("Alg.".to_string())
            .chain(self.functions.iter().cloned())
            .collect();
        let mut lines: Vec<Vec<String>> = vec![header];
        for row in &self.rows {
            let mut line = vec![if row == INIT_ROW {
                "Init f(x)".to_string()
            } else {
                row.clone()
            }];
            for function in &self.functions {
                line.push(match self.cell(function, row) {
                    Some(c) if c.all_failed() => "failed".to_string(),
                    Some(c) if c.failures > 0 => {
                        format!("{:.2}±{:.2} ({} failed)", c.mean, c.std, c.failures)
                    }
                    Some(c) => format!("{:.2}±{:.2}", c.mean, c.std),
                    None => "-".to_string(),
                });
            }
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|i| {
                lines
                    .iter()
                    .map(|l| l[i].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for (k, line) in lines.iter().enumerate() {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
            if k == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                let _ = writeln!(out, "{}", "-".repeat(total));
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One executed (function, method, trial) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRun {
    pub function: String,
    pub method: String,
    pub trial: usize,
    pub x0: Vec<f64>,
    #[serde(flatten)]
    pub run: MethodRun,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialRun {
    /// Best value when the run completed without failure.
    pub fn best_f(&self) -> Option<f64> {
        if self.error.is_some() || self.run.history.is_failed() {
            None
        } else {
            self.run.history.best_f()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixOutcome {
    pub table: StatsTable,
    pub runs: Vec<TrialRun>,
}

/// Start point for `trial` on `f`, shared by every method.
pub fn trial_start(f: &BenchmarkFunction, master_seed: u64, trial: usize) -> Vec<f64> {
    let mut rng = seed::derived_rng(master_seed, &[seed::label(&f.label()), trial as u64, 0]);
    f.sample_initial(&mut rng)
}

/// Runs every method on every function for `trials` seeded trials of `steps` evaluations.
///
/// Work is spread over the current rayon pool; the result depends only on the inputs.
pub fn run_benchmark_matrix(
    functions: &[BenchmarkFunction],
    methods: &[&dyn Method],
    trials: usize,
    steps: usize,
    master_seed: u64,
) -> Result<MatrixOutcome, OptimizerError> {
    if trials == 0 {
        return Err(OptimizerError::Config("trials must be >= 1".into()));
    }
    if steps == 0 {
        return Err(OptimizerError::Config("steps must be >= 1".into()));
    }
    let mut jobs = Vec::new();
    for (fi, f) in functions.iter().enumerate() {
        for (mi, m) in methods.iter().enumerate() {
            for trial in 0..trials {
                jobs.push((fi, f, mi, *m, trial));
            }
        }
    }
    let runs: Vec<TrialRun> = jobs
        .into_par_iter()
        .map(|(_, f, _, m, trial)| {
            let x0 = trial_start(f, master_seed, trial);
            let name = m.name();
            let s = seed::derive(
                master_seed,
                &[seed::label(&f.label()), seed::label(&name), trial as u64, 1],
            );
            let (run, error) = match m.run(f, &x0, steps, s) {
                Ok(run) => (run, None),
                Err(e) => (MethodRun::from(RunHistory::new()), Some(e.to_string())),
            };
            TrialRun {
                function: f.label(),
                method: name,
                trial,
                x0,
                run,
                error,
            }
        })
        .collect();

    let names: Vec<String> = methods.iter().map(|m| m.name()).collect();
    let table = summarize_runs(functions, &names, &runs, trials);
    Ok(MatrixOutcome { table, runs })
}

/// Rebuilds the summary table from stored runs; `Init` is `f` at each run's start point.
pub fn summarize_runs(
    functions: &[BenchmarkFunction],
    methods: &[String],
    runs: &[TrialRun],
    trials: usize,
) -> StatsTable {
    let mut rows = vec![INIT_ROW.to_string()];
    rows.extend(methods.iter().cloned());
    let mut cells = Vec::new();
    for f in functions {
        let label = f.label();
        let mut starts: Vec<(usize, f64)> = runs
            .iter()
            .filter(|r| r.function == label)
            .filter_map(|r| f.evaluate(&r.x0).ok().map(|v| (r.trial, v)))
            .collect();
        starts.sort_by_key(|(t, _)| *t);
        starts.dedup_by_key(|(t, _)| *t);
        let init: Vec<f64> = starts.into_iter().map(|(_, v)| v).collect();
        cells.push(CellStats::from_values(&label, INIT_ROW, &init, trials));
        for name in methods {
            let values: Vec<f64> = runs
                .iter()
                .filter(|r| r.function == label && &r.method == name)
                .filter_map(TrialRun::best_f)
                .collect();
            cells.push(CellStats::from_values(&label, name, &values, trials));
        }
    }
    StatsTable {
        functions: functions.iter().map(|f| f.label()).collect(),
        rows,
        cells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchfns::FunctionKind;

    fn functions() -> Vec<BenchmarkFunction> {
        let mut rng = seed::rng(1);
        [(FunctionKind::Ackley, 2), (FunctionKind::Rastrigin, 2)]
            .into_iter()
            .map(|(k, d)| BenchmarkFunction::with_random_shift(k, d, &mut rng).unwrap())
            .collect()
    }

    #[test]
    fn shape_and_single_trial_std() {
        let fs = functions();
        let methods: Vec<&dyn Method> = OptimizerKind::ALL
            .iter()
            .map(|k| k as &dyn Method)
            .collect();
        let out = run_benchmark_matrix(&fs, &methods, 1, 10, 3).unwrap();
        assert_eq!(out.table.rows.len(), 5);
        assert_eq!(out.table.cells.len(), fs.len() * 5);
        assert!(out.table.cells.iter().all(|c| c.std == 0.0));
        assert_eq!(out.runs.len(), fs.len() * 4);
    }

    #[test]
    fn start_points_shared_across_methods() {
        let fs = functions();
        let methods: Vec<&dyn Method> = OptimizerKind::ALL
            .iter()
            .map(|k| k as &dyn Method)
            .collect();
        let out = run_benchmark_matrix(&fs, &methods, 3, 5, 9).unwrap();
        for r in &out.runs {
            assert_eq!(r.run.history.records()[0].x, r.x0);
            let same: Vec<_> = out
                .runs
                .iter()
                .filter(|o| o.function == r.function && o.trial == r.trial)
                .collect();
            assert!(same.iter().all(|o| o.x0 == r.x0));
        }
    }

    #[test]
    fn deterministic_table() {
        let fs = functions();
        let methods: Vec<&dyn Method> = OptimizerKind::ALL
            .iter()
            .map(|k| k as &dyn Method)
            .collect();
        let a = run_benchmark_matrix(&fs, &methods, 4, 20, 42).unwrap();
        let b = run_benchmark_matrix(&fs, &methods, 4, 20, 42).unwrap();
        assert_eq!(a.table.to_csv(), b.table.to_csv());
        assert_eq!(a, b);
    }

    #[test]
    fn text_table_layout() {
        let fs = functions();
        let methods: Vec<&dyn Method> = OptimizerKind::ALL
            .iter()
            .map(|k| k as &dyn Method)
            .collect();
        let out = run_benchmark_matrix(&fs, &methods, 2, 5, 1).unwrap();
        let text = out.table.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("Alg."));
        assert!(lines[0].contains("2D Ackley") && lines[0].contains("2D Rastrigin"));
        assert!(lines[2].starts_with("Init f(x)"));
        assert!(lines[3].starts_with("GD"));
        assert!(lines[6].starts_with("Random"));
    }

    #[test]
    fn failures_excluded_and_counted() {
        struct Broken;
        impl Method for Broken {
            fn name(&self) -> String {
                "Broken".into()
            }
            fn run(
                &self,
                _: &BenchmarkFunction,
                _: &[f64],
                _: usize,
                _: u64,
            ) -> Result<MethodRun, OptimizerError> {
                Err(OptimizerError::Config("always".into()))
            }
        }
        let fs = functions();
        let out = run_benchmark_matrix(&fs, &[&Broken], 3, 5, 1).unwrap();
        let cell = out.table.cell(&fs[0].label(), "Broken").unwrap();
        assert_eq!(cell.failures, 3);
        assert!(cell.all_failed());
        assert!(out.table.to_csv().contains("Broken,NaN,NaN,3"));
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(run_benchmark_matrix(&functions(), &[], 0, 5, 1).is_err());
    }
}
