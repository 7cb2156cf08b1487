use std::sync::Arc;
use std::thread;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::benchfns::{BenchmarkFunction, EvalPoint};
use crate::optimizers::{Method, MethodRun, OptimizerError, RunHistory, StepOrigin, StepRecord};
use crate::seed;

use super::{
    build_numopt_system_prompt, build_step_message, format_reminder, parse_proposal, Agent,
    AgentError, AgentTranscript, Proposal, ProposalError,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    /// Re-requests after an unparsable reply before the fallback point is used.
    pub max_parse_retries: u32,
    /// Extra attempts after a transport error before the run is aborted.
    pub max_transport_retries: u32,
    /// Fallback perturbation scale as a fraction of the domain span.
    pub fallback_sigma: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_parse_retries: 2,
            max_transport_retries: 3,
            fallback_sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRun {
    pub history: RunHistory,
    pub transcript: AgentTranscript,
    pub parse_failures: usize,
    pub fallbacks: usize,
    pub transport_errors: usize,
}

pub(crate) fn send_with_retries<A: Agent + ?Sized>(
    agent: &mut A,
    transcript: &AgentTranscript,
    cfg: &LoopConfig,
    errors: &mut usize,
) -> Result<String, AgentError> {
    let mut attempt = 0;
    loop {
        match agent.send(transcript) {
            Ok(reply) => return Ok(reply),
            Err(e) => {
                *errors += 1;
                if !e.is_retryable() || attempt >= cfg.max_transport_retries {
                    return Err(e);
                }
                attempt += 1;
                log::warn!(
                    "agent call failed ({e}); retry {attempt}/{}",
                    cfg.max_transport_retries
                );
                let delay = agent.retry_delay(attempt);
                if !delay.is_zero() {
                    thread::sleep(delay);
                }
            }
        }
    }
}

/// Runs `steps` proposal rounds after recording `seeds`.
///
/// Every evaluated point is either a parsed proposal or a fallback and is labelled
/// as such. A transport failure that survives the retries ends the run early with
/// the history marked failed.
pub fn optimize_with_agent<A: Agent + ?Sized, R: Rng + ?Sized>(
    agent: &mut A,
    f: &BenchmarkFunction,
    seeds: &[EvalPoint],
    steps: usize,
    cfg: &LoopConfig,
    rng: &mut R,
) -> Result<AgentRun, OptimizerError> {
    if steps == 0 {
        return Err(OptimizerError::Config(
            "agent loop needs at least one step".into(),
        ));
    }
    if seeds.is_empty() {
        return Err(OptimizerError::Config(
            "agent loop needs at least one seed point".into(),
        ));
    }
    let dims = f.dims();
    let mut history = RunHistory::new();
    for (i, s) in seeds.iter().enumerate() {
        let fx = f.evaluate(&s.x)?;
        history.push(StepRecord::new(i, s.x.clone(), fx).with_origin(StepOrigin::Seed));
    }
    let mut run = AgentRun {
        history,
        transcript: AgentTranscript::new(build_numopt_system_prompt(steps)),
        parse_failures: 0,
        fallbacks: 0,
        transport_errors: 0,
    };
    let perturb = Normal::new(0.0, cfg.fallback_sigma * f.span())
        .map_err(|e| OptimizerError::Config(format!("fallback sigma: {e}")))?;

    for iteration in 0..steps {
        let step_message = build_step_message(&run.history, iteration, steps);
        run.transcript.push_harness(step_message.clone());
        let mut accepted: Option<Proposal> = None;
        let mut last_error: Option<ProposalError> = None;
        for attempt in 0..=cfg.max_parse_retries {
            if let (true, Some(e)) = (attempt > 0, &last_error) {
                run.transcript.push_harness(format!(
                    "{}\n{}",
                    format_reminder(e, dims),
                    step_message
                ));
            }
            let reply =
                match send_with_retries(agent, &run.transcript, cfg, &mut run.transport_errors) {
                    Ok(r) => r,
                    Err(e) => {
                        run.history.fail(format!("iteration {iteration}: {e}"));
                        return Ok(run);
                    }
                };
            run.transcript.push_agent(reply.clone());
            match parse_proposal(&reply, dims) {
                Ok(p) => {
                    accepted = Some(p);
                    break;
                }
                Err(e) => {
                    run.parse_failures += 1;
                    log::debug!("iteration {iteration}: {}", e.summary());
                    last_error = Some(e);
                }
            }
        }

        let next = run.history.len();
        let record = match accepted {
            Some(p) => {
                let fx = f.evaluate(&p.x)?;
                StepRecord::new(next, p.x, fx)
                    .with_origin(StepOrigin::Agent)
                    .with_explanation(p.explanation)
            }
            None => {
                run.fallbacks += 1;
                let best = run.history.best().expect("seeded history has a best point");
                let mut x: Vec<f64> = best.x.iter().map(|v| v + perturb.sample(rng)).collect();
                f.clamp_to_domain(&mut x);
                let fx = f.evaluate(&x)?;
                StepRecord::new(next, x, fx).with_origin(StepOrigin::Fallback)
            }
        };
        if !record.f.is_finite() {
            run.history
                .fail(format!("iteration {iteration}: non-finite objective value"));
            return Ok(run);
        }
        run.history.push(record);
    }
    Ok(run)
}

/// Builds a fresh agent for one run on `f`, seeded with the given value.
pub type AgentFactory = Arc<dyn Fn(&BenchmarkFunction, u64) -> Box<dyn Agent> + Send + Sync>;

/// Adapts an agent to the benchmark matrix.
///
/// The seed points count towards the evaluation budget: `x0` is the first seed,
/// the rest are drawn uniformly, and the agent gets the remaining evaluations.
#[derive(Clone)]
pub struct AgentMethod {
    pub name: String,
    pub factory: AgentFactory,
    pub n_seeds: usize,
    pub loop_cfg: LoopConfig,
}

impl AgentMethod {
    pub fn new(name: impl Into<String>, factory: AgentFactory) -> Self {
        Self {
            name: name.into(),
            factory,
            n_seeds: 3,
            loop_cfg: LoopConfig::default(),
        }
    }

    pub fn with_seeds(mut self, n: usize) -> Self {
        self.n_seeds = n.max(1);
        self
    }
}

impl std::fmt::Debug for AgentMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentMethod")
            .field("name", &self.name)
            .field("n_seeds", &self.n_seeds)
            .field("loop_cfg", &self.loop_cfg)
            .finish()
    }
}

impl Method for AgentMethod {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn run(
        &self,
        f: &BenchmarkFunction,
        x0: &[f64],
        steps: usize,
        seed: u64,
    ) -> Result<MethodRun, OptimizerError> {
        if steps < 2 {
            return Err(OptimizerError::Config(
                "an agent run needs a budget of at least 2 evaluations".into(),
            ));
        }
        let n_seeds = self.n_seeds.clamp(1, steps - 1);
        let mut seed_rng = seed::derived_rng(seed, &[0]);
        let mut seeds = vec![f.eval_point(x0.to_vec())?];
        for _ in 1..n_seeds {
            seeds.push(f.eval_point(f.sample_initial(&mut seed_rng))?);
        }
        let mut agent = (self.factory)(f, seed::derive(seed, &[2]));
        let mut fallback_rng = seed::derived_rng(seed, &[1]);
        let run = optimize_with_agent(
            &mut agent,
            f,
            &seeds,
            steps - n_seeds,
            &self.loop_cfg,
            &mut fallback_rng,
        )?;
        let mut history = run.history;
        if run.parse_failures > 0 || run.fallbacks > 0 {
            history.diagnostics.push(format!(
                "{} unparsable replies, {} fallback points, {} transport errors",
                run.parse_failures, run.fallbacks, run.transport_errors
            ));
        }
        Ok(MethodRun {
            history,
            transcript: Some(run.transcript),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::MockAgent;
    use crate::benchfns::FunctionKind;

    struct Silent;
    impl Agent for Silent {
        fn send(&mut self, _: &AgentTranscript) -> Result<String, AgentError> {
            Ok("I would rather not say.".into())
        }
    }

    struct Broken;
    impl Agent for Broken {
        fn send(&mut self, _: &AgentTranscript) -> Result<String, AgentError> {
            Err(AgentError::Transport("connection refused".into()))
        }
    }

    fn sphere(d: usize) -> BenchmarkFunction {
        BenchmarkFunction::centered(FunctionKind::Sphere, d).unwrap()
    }

    #[test]
    fn mock_solves_one_dimensional_sphere() {
        let f = sphere(1);
        let seeds = [EvalPoint {
            x: vec![4.0],
            f: 16.0,
        }];
        let mut agent = MockAgent::for_domain(3, f.domain());
        let run = optimize_with_agent(
            &mut agent,
            &f,
            &seeds,
            30,
            &LoopConfig::default(),
            &mut seed::rng(0),
        )
        .unwrap();
        assert_eq!(run.history.len(), 31);
        assert!(
            run.history.best_f().unwrap() < 0.1,
            "{:?}",
            run.history.best_f()
        );
        assert_eq!(run.fallbacks, 0);
        assert!(run.transcript.validate().is_ok());
    }

    #[test]
    fn unparsable_agent_gets_fallbacks() {
        let f = sphere(2);
        let seeds = [EvalPoint {
            x: vec![1.0, 1.0],
            f: 2.0,
        }];
        let cfg = LoopConfig::default();
        let steps = 5;
        let run =
            optimize_with_agent(&mut Silent, &f, &seeds, steps, &cfg, &mut seed::rng(1)).unwrap();
        let records = run.history.records();
        assert_eq!(records[0].origin, StepOrigin::Seed);
        assert!(records[1..]
            .iter()
            .all(|r| r.origin == StepOrigin::Fallback));
        assert_eq!(records.len(), 1 + steps);
        let bound = 1 + 2 * steps * (1 + cfg.max_parse_retries as usize);
        assert!(run.transcript.len() <= bound);
        assert_eq!(run.transcript.len(), bound);
        assert_eq!(run.parse_failures, steps * 3);
        assert!(run.transcript.validate().is_ok());
    }

    #[test]
    fn transport_failure_aborts_with_partial_history() {
        let f = sphere(2);
        let seeds = [EvalPoint {
            x: vec![1.0, 1.0],
            f: 2.0,
        }];
        let run = optimize_with_agent(
            &mut Broken,
            &f,
            &seeds,
            5,
            &LoopConfig::default(),
            &mut seed::rng(1),
        )
        .unwrap();
        assert!(run.history.is_failed());
        assert_eq!(run.history.len(), 1);
        assert_eq!(run.transport_errors, 4);
        assert!(run.transcript.validate().is_ok());
    }

    #[test]
    fn method_respects_budget() {
        let factory: AgentFactory = Arc::new(|f, s| Box::new(MockAgent::for_domain(s, f.domain())));
        let m = AgentMethod::new("Mock", factory);
        let f = sphere(2);
        let out = m.run(&f, &[1.0, 2.0], 20, 9).unwrap();
        assert_eq!(out.history.len(), 20);
        assert_eq!(out.history.records()[0].x, vec![1.0, 2.0]);
        assert_eq!(out.history.records()[2].origin, StepOrigin::Seed);
        assert_eq!(out.history.records()[3].origin, StepOrigin::Agent);
        assert!(m.run(&f, &[1.0, 2.0], 1, 9).is_err());
        assert_eq!(m.run(&f, &[1.0, 2.0], 2, 9).unwrap().history.len(), 2);
    }

    #[test]
    fn preconditions() {
        let f = sphere(1);
        let cfg = LoopConfig::default();
        assert!(optimize_with_agent(&mut Silent, &f, &[], 3, &cfg, &mut seed::rng(0)).is_err());
        let seeds = [EvalPoint {
            x: vec![1.0],
            f: 1.0,
        }];
        assert!(optimize_with_agent(&mut Silent, &f, &seeds, 0, &cfg, &mut seed::rng(0)).is_err());
    }
}
