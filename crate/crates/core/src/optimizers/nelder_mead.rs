//! Nelder-Mead simplex search with an evaluation budget.

use nalgebra::DMatrix;

use super::{check_start, record_eval, OptimizerConfig, OptimizerError, RunHistory};
use crate::benchfns::BenchmarkFunction;

/// Normalized volume below which the simplex counts as collapsed.
const DEGENERATE_VOLUME: f64 = 1e-14;

struct Coefficients {
    alpha: f64,
    gamma: f64,
    rho: f64,
    sigma: f64,
    step: f64,
}

/// Budget-aware evaluator: `None` once the budget is spent or the run failed.
struct Budget<'a> {
    f: &'a BenchmarkFunction,
    history: RunHistory,
    steps: usize,
    stopped: bool,
}

impl Budget<'_> {
    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        if self.stopped || self.history.len() >= self.steps {
            self.stopped = true;
            return None;
        }
        let value = record_eval(self.f, &mut self.history, x);
        if value.is_none() {
            self.stopped = true;
        }
        value
    }
}

type Vertex = (Vec<f64>, f64);

fn axis_simplex(budget: &mut Budget<'_>, origin: Vertex, step: f64) -> Option<Vec<Vertex>> {
    let mut simplex = vec![origin.clone()];
    for i in 0..origin.0.len() {
        let mut x = origin.0.clone();
        x[i] += step;
        let fx = budget.eval(&x)?;
        simplex.push((x, fx));
    }
    Some(simplex)
}

/// `|det(E)| / prod |e_i|` for the edge matrix `E` relative to the first vertex.
///
/// Equals 1 for an orthogonal simplex and 0 for a collapsed one, independent of scale.
fn normalized_volume(simplex: &[Vertex]) -> f64 {
    let n = simplex.len() - 1;
    let base = &simplex[0].0;
    let edges = DMatrix::from_fn(n, n, |r, c| simplex[c + 1].0[r] - base[r]);
    let norms: f64 = (0..n).map(|c| edges.column(c).norm()).product();
    if norms == 0.0 {
        return 0.0;
    }
    edges.determinant().abs() / norms
}

fn lerp(from: &[f64], to: &[f64], t: f64) -> Vec<f64> {
    from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
}

/// Standard reflection / expansion / contraction / shrink iteration.
///
/// The budget counts objective evaluations: the initial simplex spends `dims + 1`
/// of them, and every evaluated trial point afterwards is one record.
pub fn run_nelder_mead(
    f: &BenchmarkFunction,
    x0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<RunHistory, OptimizerError> {
    check_start(f, x0, cfg)?;
    let c = Coefficients {
        alpha: cfg.param("alpha")?,
        gamma: cfg.param("gamma")?,
        rho: cfg.param("rho")?,
        sigma: cfg.param("sigma")?,
        step: cfg.param("simplex_step")?,
    };
    if c.alpha <= 0.0
        || c.gamma <= 1.0
        || !(0.0..1.0).contains(&c.rho)
        || !(0.0..1.0).contains(&c.sigma)
        || c.step == 0.0
    {
        return Err(OptimizerError::Config(
            "nelder-mead requires alpha > 0, gamma > 1, rho and sigma in (0, 1), simplex_step != 0"
                .into(),
        ));
    }
    let mut budget = Budget {
        f,
        history: RunHistory::new(),
        steps: cfg.steps,
        stopped: false,
    };
    let _ = budget
        .eval(x0)
        .and_then(|f0| axis_simplex(&mut budget, (x0.to_vec(), f0), c.step))
        .and_then(|simplex| search(&mut budget, simplex, &c));
    Ok(budget.history)
}

fn search(budget: &mut Budget<'_>, mut simplex: Vec<Vertex>, c: &Coefficients) -> Option<()> {
    let n = simplex.len() - 1;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if normalized_volume(&simplex) < DEGENERATE_VOLUME {
            let note = format!(
                "degenerate simplex at evaluation {}; reinitialized around best vertex",
                budget.history.len()
            );
            budget.history.diagnostics.push(note);
            let best = simplex[0].clone();
            simplex = axis_simplex(budget, best, c.step)?;
            continue;
        }
        let worst = simplex[n].clone();
        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|v| v.0[i]).sum::<f64>() / n as f64)
            .collect();

        let xr = lerp(&centroid, &worst.0, -c.alpha);
        let fr = budget.eval(&xr)?;
        if fr < simplex[0].1 {
            let xe = lerp(&centroid, &xr, c.gamma);
            let fe = budget.eval(&xe)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < worst.1 {
            let xc = lerp(&centroid, &xr, c.rho);
            let fc = budget.eval(&xc)?;
            (xc, fc, fc <= fr)
        } else {
            let xc = lerp(&centroid, &worst.0, c.rho);
            let fc = budget.eval(&xc)?;
            (xc, fc, fc < worst.1)
        };
        if accept {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x = lerp(&best, &vertex.0, c.sigma);
            let fx = budget.eval(&x)?;
            *vertex = (x, fx);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchfns::FunctionKind;
    use crate::optimizers::OptimizerKind;

    fn sphere(dims: usize) -> BenchmarkFunction {
        BenchmarkFunction::centered(FunctionKind::Sphere, dims).unwrap()
    }

    #[test]
    fn converges_on_sphere_2d() {
        let cfg = OptimizerConfig::new(OptimizerKind::NelderMead, 100);
        let h = run_nelder_mead(&sphere(2), &[3.0, 4.0], &cfg).unwrap();
        assert_eq!(h.len(), 100);
        assert!(h.best_f().unwrap() < 1e-4, "{:?}", h.best_f());
    }

    #[test]
    fn first_reflection_in_1d() {
        // simplex {0, 0.1}: worst is 0.1, centroid 0, reflection 0 - 1 * (0.1 - 0) = -0.1
        let cfg = OptimizerConfig::new(OptimizerKind::NelderMead, 3).with("simplex_step", 0.1);
        let h = run_nelder_mead(&sphere(1), &[0.0], &cfg).unwrap();
        assert_eq!(h.records()[1].x, vec![0.1]);
        assert!((h.records()[2].x[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn budget_of_one() {
        let cfg = OptimizerConfig::new(OptimizerKind::NelderMead, 1);
        let h = run_nelder_mead(&sphere(2), &[3.0, 4.0], &cfg).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.records()[0].x, vec![3.0, 4.0]);
    }

    #[test]
    fn budget_is_exact_for_8d() {
        let f = BenchmarkFunction::centered(FunctionKind::Rastrigin, 8).unwrap();
        let cfg = OptimizerConfig::new(OptimizerKind::NelderMead, 100);
        let h = run_nelder_mead(&f, &[1.0; 8], &cfg).unwrap();
        assert_eq!(h.len(), 100);
    }

    #[test]
    fn volume_is_scale_free() {
        let unit = vec![
            (vec![0.0, 0.0], 0.0),
            (vec![1.0, 0.0], 0.0),
            (vec![0.0, 1.0], 0.0),
        ];
        let tiny = vec![
            (vec![0.0, 0.0], 0.0),
            (vec![1e-9, 0.0], 0.0),
            (vec![0.0, 1e-9], 0.0),
        ];
        let flat = vec![
            (vec![0.0, 0.0], 0.0),
            (vec![1.0, 0.0], 0.0),
            (vec![2.0, 1e-16], 0.0),
        ];
        assert!((normalized_volume(&unit) - 1.0).abs() < 1e-12);
        assert!((normalized_volume(&tiny) - 1.0).abs() < 1e-9);
        assert!(normalized_volume(&flat) < DEGENERATE_VOLUME);
    }

    #[test]
    fn collapsed_simplex_is_reinitialized() {
        let f = sphere(2);
        let c = Coefficients {
            alpha: 1.0,
            gamma: 2.0,
            rho: 0.5,
            sigma: 0.5,
            step: 0.5,
        };
        let mut budget = Budget {
            f: &f,
            history: RunHistory::new(),
            steps: 40,
            stopped: false,
        };
        let collinear = vec![
            (vec![1.0, 1.0], 2.0),
            (vec![2.0, 2.0], 8.0),
            (vec![3.0, 3.0], 18.0),
        ];
        assert!(search(&mut budget, collinear, &c).is_none());
        let h = budget.history;
        assert_eq!(h.len(), 40);
        assert!(h.diagnostics[0].contains("degenerate simplex"));
        // reinitialized around the best vertex (1, 1)
        assert_eq!(h.records()[0].x, vec![1.5, 1.0]);
        assert_eq!(h.records()[1].x, vec![1.0, 1.5]);
        assert!(h.best_f().unwrap() < 2.0);
    }
}
