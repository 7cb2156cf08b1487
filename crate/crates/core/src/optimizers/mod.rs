//! Baseline optimizers sharing one evaluation budget.
//!
//! Every method records one [`StepRecord`] per objective evaluation and stops once
//! `steps` evaluations have been spent. Gradient calls are tracked separately in
//! [`RunHistory::gradient_evals`].

mod history;
pub mod matrix;
mod nelder_mead;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchfns::{BenchError, BenchmarkFunction};

pub use history::{RunHistory, StepOrigin, StepRecord};
pub use matrix::{run_benchmark_matrix, CellStats, MatrixOutcome, Method, MethodRun, StatsTable};
pub use nelder_mead::run_nelder_mead;

#[derive(Debug, Error, PartialEq)]
pub enum OptimizerError {
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Gd,
    Adam,
    NelderMead,
    RandomSearch,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [
        OptimizerKind::Gd,
        OptimizerKind::Adam,
        OptimizerKind::NelderMead,
        OptimizerKind::RandomSearch,
    ];

    /// Row label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            OptimizerKind::Gd => "GD",
            OptimizerKind::Adam => "Adam",
            OptimizerKind::NelderMead => "Nelder-Mead",
            OptimizerKind::RandomSearch => "Random",
        }
    }

    fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            OptimizerKind::Gd => &[("lr", 0.05)],
            OptimizerKind::Adam => &[("lr", 0.3), ("beta1", 0.9), ("beta2", 0.999), ("eps", 1e-8)],
            OptimizerKind::NelderMead => &[
                ("alpha", 1.0),
                ("gamma", 2.0),
                ("rho", 0.5),
                ("sigma", 0.5),
                ("simplex_step", 0.5),
            ],
            OptimizerKind::RandomSearch => &[],
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for OptimizerKind {
    type Err = OptimizerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gd" | "gradient-descent" => Ok(OptimizerKind::Gd),
            "adam" => Ok(OptimizerKind::Adam),
            "nelder-mead" | "neldermead" | "nm" => Ok(OptimizerKind::NelderMead),
            "random" | "random-search" | "randomsearch" => Ok(OptimizerKind::RandomSearch),
            other => Err(OptimizerError::Config(format!(
                "unknown optimizer '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub steps: usize,
    pub hyperparams: BTreeMap<String, f64>,
}

impl OptimizerConfig {
    /// Config with the documented default hyperparameters for `kind`.
    pub fn new(kind: OptimizerKind, steps: usize) -> Self {
        let hyperparams = kind
            .defaults()
            .iter()
            .map(|(k, v)| ((*k).to_string(), *v))
            .collect();
        Self {
            kind,
            steps,
            hyperparams,
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.hyperparams.insert(name.to_string(), value);
        self
    }

    pub fn param(&self, name: &str) -> Result<f64, OptimizerError> {
        self.hyperparams
            .get(name)
            .copied()
            .ok_or_else(|| OptimizerError::Config(format!("missing hyperparameter '{name}'")))
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.steps == 0 {
            return Err(OptimizerError::Config("steps must be >= 1".into()));
        }
        if let Some((k, v)) = self.hyperparams.iter().find(|(_, v)| !v.is_finite()) {
            return Err(OptimizerError::Config(format!(
                "hyperparameter {k} = {v} is not finite"
            )));
        }
        Ok(())
    }
}

fn check_start(
    f: &BenchmarkFunction,
    x0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<(), OptimizerError> {
    cfg.validate()?;
    if x0.len() != f.dims() {
        return Err(BenchError::DimensionMismatch {
            expected: f.dims(),
            got: x0.len(),
        }
        .into());
    }
    Ok(())
}

/// Evaluates `x`, records it, and reports whether the run may continue.
fn record_eval(f: &BenchmarkFunction, history: &mut RunHistory, x: &[f64]) -> Option<f64> {
    let value = f.evaluate(x).expect("dimension checked at start");
    if !value.is_finite() {
        history.fail(format!(
            "non-finite objective value at iteration {}",
            history.len()
        ));
        return None;
    }
    history.push(StepRecord::new(history.len(), x.to_vec(), value));
    Some(value)
}

fn finite_gradient(f: &BenchmarkFunction, history: &mut RunHistory, x: &[f64]) -> Option<Vec<f64>> {
    let g = f.gradient(x).expect("dimension checked at start");
    history.gradient_evals += 1;
    if g.iter().all(|v| v.is_finite()) {
        Some(g)
    } else {
        history.fail(format!(
            "non-finite gradient at iteration {}",
            history.len()
        ));
        None
    }
}

/// Plain gradient descent, `x <- x - lr * grad f(x)`.
pub fn run_gd(
    f: &BenchmarkFunction,
    x0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<RunHistory, OptimizerError> {
    check_start(f, x0, cfg)?;
    let lr = cfg.param("lr")?;
    if lr < 0.0 {
        return Err(OptimizerError::Config(format!("lr must be >= 0, got {lr}")));
    }
    let mut history = RunHistory::new();
    let mut x = x0.to_vec();
    for t in 0..cfg.steps {
        if record_eval(f, &mut history, &x).is_none() {
            break;
        }
        if t + 1 == cfg.steps {
            break;
        }
        let Some(g) = finite_gradient(f, &mut history, &x) else {
            break;
        };
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= lr * gi;
        }
    }
    Ok(history)
}

/// Adam with bias-corrected first and second moment estimates.
pub fn run_adam(
    f: &BenchmarkFunction,
    x0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<RunHistory, OptimizerError> {
    check_start(f, x0, cfg)?;
    let lr = cfg.param("lr")?;
    let beta1 = cfg.param("beta1")?;
    let beta2 = cfg.param("beta2")?;
    let eps = cfg.param("eps")?;
    if lr < 0.0 || !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
        return Err(OptimizerError::Config(format!(
            "adam requires lr >= 0, beta1/beta2 in [0, 1), eps > 0 (got lr={lr}, beta1={beta1}, beta2={beta2}, eps={eps})"
        )));
    }
    let dims = f.dims();
    let mut history = RunHistory::new();
    let mut x = x0.to_vec();
    let mut m = vec![0.0; dims];
    let mut v = vec![0.0; dims];
    for t in 0..cfg.steps {
        if record_eval(f, &mut history, &x).is_none() {
            break;
        }
        if t + 1 == cfg.steps {
            break;
        }
        let Some(g) = finite_gradient(f, &mut history, &x) else {
            break;
        };
        let step = (t + 1) as i32;
        let bc1 = 1.0 - beta1.powi(step);
        let bc2 = 1.0 - beta2.powi(step);
        for i in 0..dims {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            x[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(history)
}

/// Pure random search: `x0` first, then uniform samples over the function's domain.
pub fn run_random_search<R: Rng + ?Sized>(
    f: &BenchmarkFunction,
    x0: &[f64],
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<RunHistory, OptimizerError> {
    check_start(f, x0, cfg)?;
    let mut history = RunHistory::new();
    if record_eval(f, &mut history, x0).is_none() {
        return Ok(history);
    }
    for _ in 1..cfg.steps {
        let x = f.sample_initial(rng);
        if record_eval(f, &mut history, &x).is_none() {
            break;
        }
    }
    Ok(history)
}

/// Dispatches on `cfg.kind`. `rng` is only consumed by random search.
pub fn run<R: Rng + ?Sized>(
    f: &BenchmarkFunction,
    x0: &[f64],
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<RunHistory, OptimizerError> {
    match cfg.kind {
        OptimizerKind::Gd => run_gd(f, x0, cfg),
        OptimizerKind::Adam => run_adam(f, x0, cfg),
        OptimizerKind::NelderMead => run_nelder_mead(f, x0, cfg),
        OptimizerKind::RandomSearch => run_random_search(f, x0, cfg, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchfns::FunctionKind;
    use crate::seed;

    fn sphere(dims: usize) -> BenchmarkFunction {
        BenchmarkFunction::centered(FunctionKind::Sphere, dims).unwrap()
    }

    #[test]
    fn gd_contracts_on_sphere() {
        let cfg = OptimizerConfig::new(OptimizerKind::Gd, 100).with("lr", 0.1);
        let h = run_gd(&sphere(2), &[3.0, 4.0], &cfg).unwrap();
        assert_eq!(h.len(), 100);
        // |x_k| = 5 * 0.8^k, so f_99 = 25 * 0.64^99
        let expected = 25.0 * 0.64f64.powi(99);
        let last = h.records().last().unwrap().f;
        assert!((last - expected).abs() <= 1e-12 * expected.max(1e-300) + 1e-300);
        assert!(last < 1e-6);
        assert_eq!(h.gradient_evals, 99);
    }

    #[test]
    fn gd_zero_lr_is_constant() {
        let f = BenchmarkFunction::centered(FunctionKind::Ackley, 2).unwrap();
        let cfg = OptimizerConfig::new(OptimizerKind::Gd, 10).with("lr", 0.0);
        let h = run_gd(&f, &[1.0, -2.0], &cfg).unwrap();
        let f0 = f.evaluate(&[1.0, -2.0]).unwrap();
        assert!(h.records().iter().all(|r| r.f == f0));
    }

    #[test]
    fn gd_descends_on_ackley_on_average() {
        let f = BenchmarkFunction::centered(FunctionKind::Ackley, 2).unwrap();
        let cfg = OptimizerConfig::new(OptimizerKind::Gd, 100);
        let (mut init, mut fin) = (0.0, 0.0);
        for s in 0..50 {
            let x0 = f.sample_initial(&mut seed::rng(s));
            let h = run_gd(&f, &x0, &cfg).unwrap();
            init += h.records()[0].f;
            fin += h.records().last().unwrap().f;
        }
        assert!(fin <= init);
    }

    #[test]
    fn negative_lr_rejected() {
        let cfg = OptimizerConfig::new(OptimizerKind::Gd, 10).with("lr", -1.0);
        assert!(matches!(
            run_gd(&sphere(1), &[1.0], &cfg),
            Err(OptimizerError::Config(_))
        ));
    }

    #[test]
    fn adam_converges_on_sphere() {
        let cfg = OptimizerConfig::new(OptimizerKind::Adam, 100);
        let h = run_adam(&sphere(2), &[3.0, 4.0], &cfg).unwrap();
        assert_eq!(h.len(), 100);
        assert!(
            h.records().last().unwrap().f < 1e-2,
            "{}",
            h.records().last().unwrap().f
        );
    }

    #[test]
    fn adam_fixed_point_at_shift() {
        let f =
            BenchmarkFunction::new(FunctionKind::Rastrigin, vec![0.5, -1.5], -5.12, 5.12).unwrap();
        let h = run_adam(
            &f,
            &[0.5, -1.5],
            &OptimizerConfig::new(OptimizerKind::Adam, 20),
        )
        .unwrap();
        assert!(h.records().iter().all(|r| r.x == vec![0.5, -1.5]));
    }

    #[test]
    fn adam_without_moments_matches_hand_computation() {
        // beta1 = beta2 = 0: step = lr * g / (|g| + eps).
        // x0 = 3, g = 6: x1 = 3 - 0.5 * 6 / 16 = 2.8125
        // g = 5.625: x2 = 2.8125 - 0.5 * 5.625 / 15.625 = 2.6325
        let cfg = OptimizerConfig::new(OptimizerKind::Adam, 3)
            .with("lr", 0.5)
            .with("beta1", 0.0)
            .with("beta2", 0.0)
            .with("eps", 10.0);
        let h = run_adam(&sphere(1), &[3.0], &cfg).unwrap();
        assert!((h.records()[1].x[0] - 2.8125).abs() < 1e-15);
        assert!((h.records()[2].x[0] - 2.6325).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_bad_betas() {
        let cfg = OptimizerConfig::new(OptimizerKind::Adam, 3).with("beta1", 1.0);
        assert!(run_adam(&sphere(1), &[3.0], &cfg).is_err());
    }

    #[test]
    fn random_search_best_so_far_is_monotone_and_deterministic() {
        let f = sphere(2);
        let cfg = OptimizerConfig::new(OptimizerKind::RandomSearch, 100);
        let a = run_random_search(&f, &[4.0, 4.0], &cfg, &mut seed::rng(5)).unwrap();
        let b = run_random_search(&f, &[4.0, 4.0], &cfg, &mut seed::rng(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records()[0].x, vec![4.0, 4.0]);
        let curve = a.best_so_far();
        assert!(curve.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn random_search_finds_sub_25_on_sphere() {
        let f = sphere(2);
        let cfg = OptimizerConfig::new(OptimizerKind::RandomSearch, 100);
        for s in 0..50 {
            let mut rng = seed::rng(s);
            let x0 = f.sample_initial(&mut rng);
            let h = run_random_search(&f, &x0, &cfg, &mut rng).unwrap();
            assert!(h.best_f().unwrap() < 25.0);
        }
    }

    #[test]
    fn non_finite_objective_aborts_flagged() {
        let f = sphere(1);
        let cfg = OptimizerConfig::new(OptimizerKind::Gd, 10).with("lr", 1e308);
        let h = run_gd(&f, &[1e200], &cfg).unwrap();
        assert!(h.is_failed());
        assert!(h.len() < 10);
    }

    #[test]
    fn dims_checked() {
        let cfg = OptimizerConfig::new(OptimizerKind::Gd, 10);
        assert!(matches!(
            run_gd(&sphere(2), &[1.0], &cfg),
            Err(OptimizerError::Bench(_))
        ));
        let zero = OptimizerConfig::new(OptimizerKind::Gd, 0);
        assert!(run_gd(&sphere(1), &[1.0], &zero).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(
            "nelder-mead".parse::<OptimizerKind>().unwrap(),
            OptimizerKind::NelderMead
        );
        assert_eq!(
            "Random".parse::<OptimizerKind>().unwrap(),
            OptimizerKind::RandomSearch
        );
        assert!("lbfgs".parse::<OptimizerKind>().is_err());
    }
}
