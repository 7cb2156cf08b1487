use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agent::{send_with_retries, Agent, AgentTranscript, LoopConfig};
use crate::env::{distance_to_goal, rollout, EnvConfig, GoalSpec};
use crate::optimizers::StepOrigin;
use crate::trace::{LandingRecord, ParamVector, TraceCache};

use super::{
    build_sas_prompt, parse_sas_response, SasError, SasMode, SasPromptConfig, SasResponse,
};

pub const SAS_SYSTEM_PROMPT: &str =
    "You are an expert in robot table tennis who analyzes execution data and tunes control parameters.";

/// Prompt and retry settings shared by retrieval and self-improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SasOptions {
    pub max_examples: usize,
    pub precision: usize,
    pub summary_columns: Option<Vec<String>>,
    pub domain_description: Option<String>,
    pub loop_cfg: LoopConfig,
}

impl Default for SasOptions {
    fn default() -> Self {
        Self {
            max_examples: 200,
            precision: 4,
            summary_columns: None,
            domain_description: None,
            loop_cfg: LoopConfig::default(),
        }
    }
}

impl SasOptions {
    pub fn prompt_config(
        &self,
        objective_text: &str,
        mode: SasMode,
        cache: &TraceCache,
    ) -> SasPromptConfig {
        let mut cfg = SasPromptConfig::new(objective_text, mode);
        cfg.max_examples = self.max_examples;
        cfg.precision = self.precision;
        cfg.bounds = *cache.bounds();
        if let Some(cols) = &self.summary_columns {
            cfg.summary_columns = Some(cols.clone());
        }
        if let Some(d) = &self.domain_description {
            cfg.domain_description = d.clone();
        }
        cfg
    }
}

fn reminder(error: &str) -> String {
    format!(
        "Your reply could not be used ({error}). Answer again using exactly the BEST / ANALYSIS / PARAMS / JUSTIFICATION format requested above."
    )
}

/// One prompt, answered with retries until the reply parses.
fn exchange(
    agent: &mut dyn Agent,
    cfg: &SasPromptConfig,
    cache: &TraceCache,
    loop_cfg: &LoopConfig,
) -> Result<(SasResponse, AgentTranscript), SasError> {
    exchange_prepared(agent, &PreparedPrompt::new(cfg.clone(), cache)?, loop_cfg)
}

/// A rendered prompt and the example ids it shows.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPrompt {
    pub cfg: SasPromptConfig,
    pub text: String,
    pub ids: Vec<usize>,
}

impl PreparedPrompt {
    pub fn new(cfg: SasPromptConfig, cache: &TraceCache) -> Result<Self, SasError> {
        let text = build_sas_prompt(&cfg, cache)?;
        let ids = cache
            .recent(cfg.max_examples)
            .iter()
            .map(|t| t.id)
            .collect();
        Ok(Self { cfg, text, ids })
    }

    /// The retrieval prompt for `objective_text`.
    pub fn retrieval(
        objective_text: &str,
        cache: &TraceCache,
        opts: &SasOptions,
    ) -> Result<Self, SasError> {
        Self::new(
            opts.prompt_config(objective_text, SasMode::RetrieveOnly, cache),
            cache,
        )
    }
}

fn exchange_prepared(
    agent: &mut dyn Agent,
    prepared: &PreparedPrompt,
    loop_cfg: &LoopConfig,
) -> Result<(SasResponse, AgentTranscript), SasError> {
    let (cfg, ids) = (&prepared.cfg, &prepared.ids);
    let mut transcript = AgentTranscript::new(SAS_SYSTEM_PROMPT);
    transcript.push_harness(prepared.text.clone());
    let mut transport_errors = 0;
    let mut last_error = String::new();
    for attempt in 0..=loop_cfg.max_parse_retries {
        if attempt > 0 {
            transcript.push_harness(reminder(&last_error));
        }
        let reply = match send_with_retries(agent, &transcript, loop_cfg, &mut transport_errors) {
            Ok(r) => r,
            Err(e) => {
                return Err(SasError::Transport {
                    message: e.to_string(),
                    transcript: Box::new(transcript),
                })
            }
        };
        transcript.push_agent(reply.clone());
        match parse_sas_response(&reply, cfg.mode, ids, &cfg.bounds) {
            Ok(r) => return Ok((r, transcript)),
            Err(e) => {
                log::debug!("unusable reply: {e}");
                last_error = e.0;
            }
        }
    }
    Err(SasError::Unparsable {
        message: last_error,
        transcript: Box::new(transcript),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieveOutput {
    pub response: SasResponse,
    pub transcript: AgentTranscript,
}

/// Asks which cached examples best fulfill `objective_text`.
pub fn retrieve(
    agent: &mut dyn Agent,
    objective_text: &str,
    cache: &TraceCache,
    opts: &SasOptions,
) -> Result<RetrieveOutput, SasError> {
    retrieve_prepared(
        agent,
        &PreparedPrompt::retrieval(objective_text, cache, opts)?,
        &opts.loop_cfg,
    )
}

/// [`retrieve`] with a prompt built once and asked repeatedly.
pub fn retrieve_prepared(
    agent: &mut dyn Agent,
    prompt: &PreparedPrompt,
    loop_cfg: &LoopConfig,
) -> Result<RetrieveOutput, SasError> {
    let (response, transcript) = exchange_prepared(agent, prompt, loop_cfg)?;
    Ok(RetrieveOutput {
        response,
        transcript,
    })
}

mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn decode<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) => s.parse().map_err(E::custom),
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        decode(Repr::deserialize(d)?)
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                if x.is_finite() {
                    seq.serialize_element(x)?;
                } else {
                    seq.serialize_element(&x.to_string())?;
                }
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<super::Repr>::deserialize(d)?
                .into_iter()
                .map(super::decode)
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Parameters as the agent wrote them; absent for fallback points.
    pub requested: Option<ParamVector>,
    /// Parameters actually executed.
    pub params: ParamVector,
    pub clamped: bool,
    pub origin: StepOrigin,
    pub trace_id: usize,
    pub landing: LandingRecord,
    #[serde(with = "nonfinite")]
    pub distance: f64,
    #[serde(with = "nonfinite")]
    pub best_distance: f64,
    pub best_ids: Vec<usize>,
    pub analysis: String,
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub objective_text: String,
    pub goal: GoalSpec,
    #[serde(with = "nonfinite::vec")]
    pub initial_distances: Vec<f64>,
    #[serde(with = "nonfinite")]
    pub initial_mean: f64,
    #[serde(with = "nonfinite")]
    pub initial_std: f64,
    pub iterations: Vec<IterationRecord>,
    #[serde(with = "nonfinite::vec")]
    pub best_so_far: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

pub const IMPROVEMENT_CSV_HEADER: &str =
    "iteration,distance,best_distance,x,y,on_table,clamped,origin";

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl ImprovementReport {
    pub fn final_best(&self) -> Option<f64> {
        self.best_so_far.last().copied()
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted.is_some()
    }

    /// Median landing x and y over the last `n` iterations.
    pub fn median_final_landing(&self, n: usize) -> Option<(f64, f64)> {
        let tail = &self.iterations[self.iterations.len().saturating_sub(n)..];
        if tail.is_empty() {
            return None;
        }
        Some((
            median(tail.iter().map(|r| r.landing.x).collect()),
            median(tail.iter().map(|r| r.landing.y).collect()),
        ))
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{IMPROVEMENT_CSV_HEADER}\n");
        for r in &self.iterations {
            let origin = match r.origin {
                StepOrigin::Fallback => "fallback",
                _ => "agent",
            };
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{},{},{}\n",
                r.iteration,
                r.distance,
                r.best_distance,
                r.landing.x,
                r.landing.y,
                r.landing.on_table,
                r.clamped,
                origin
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfImproveRun {
    pub report: ImprovementReport,
    pub transcripts: Vec<AgentTranscript>,
}

fn fallback_params<R: Rng + ?Sized>(
    cache: &TraceCache,
    goal: &GoalSpec,
    rng: &mut R,
) -> ParamVector {
    let bounds = *cache.bounds();
    let best = cache
        .traces()
        .iter()
        .min_by(|a, b| {
            distance_to_goal(&a.landing, goal)
                .total_cmp(&distance_to_goal(&b.landing, goal))
                .then(a.id.cmp(&b.id))
        })
        .expect("cache is non-empty");
    let noise = Normal::new(0.0, 0.1 * bounds.span()).expect("positive span");
    let mut p = best.params;
    for i in 0..8 {
        p[i] += noise.sample(rng);
    }
    p.clamped(&bounds).0
}

/// Prompt, execute, append; `iterations` times.
///
/// The cache only grows. Unusable replies fall back to the best example's
/// parameters plus Gaussian noise. A transport failure ends the loop early with
/// the report marked aborted.
#[allow(clippy::too_many_arguments)]
pub fn self_improve<R: Rng + ?Sized>(
    agent: &mut dyn Agent,
    env: &EnvConfig,
    goal: &GoalSpec,
    objective_text: &str,
    cache: &mut TraceCache,
    iterations: usize,
    opts: &SasOptions,
    rng: &mut R,
) -> Result<SelfImproveRun, SasError> {
    if iterations == 0 {
        return Err(SasError::Config("iterations must be at least 1".into()));
    }
    if cache.is_empty() {
        return Err(SasError::Config(
            "self-improvement needs a non-empty seed cache".into(),
        ));
    }
    goal.validate()?;
    env.validate()?;
    let initial_distances: Vec<f64> = cache
        .traces()
        .iter()
        .map(|t| distance_to_goal(&t.landing, goal))
        .collect();
    let n = initial_distances.len() as f64;
    let initial_mean = initial_distances.iter().sum::<f64>() / n;
    let initial_std = (initial_distances
        .iter()
        .map(|d| (d - initial_mean).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let mut report = ImprovementReport {
        objective_text: objective_text.to_string(),
        goal: *goal,
        initial_distances,
        initial_mean,
        initial_std,
        iterations: Vec::with_capacity(iterations),
        best_so_far: Vec::with_capacity(iterations),
        aborted: None,
    };
    let mut transcripts = Vec::with_capacity(iterations);
    let mut best = f64::INFINITY;

    for iteration in 1..=iterations {
        let cfg = opts.prompt_config(objective_text, SasMode::Synthesize, cache);
        let (response, transcript) = match exchange(agent, &cfg, cache, &opts.loop_cfg) {
            Ok((r, t)) => (Some(r), t),
            Err(SasError::Unparsable {
                message,
                transcript,
            }) => {
                log::warn!("iteration {iteration}: {message}; using the fallback point");
                (None, *transcript)
            }
            Err(SasError::Transport {
                message,
                transcript,
            }) => {
                transcripts.push(*transcript);
                report.aborted = Some(format!("iteration {iteration}: {message}"));
                break;
            }
            Err(e) => return Err(e),
        };
        transcripts.push(transcript);
        let (params, requested, clamped, origin) = match &response {
            Some(r) => (
                r.proposal.expect("synthesize replies carry a proposal"),
                r.requested,
                r.clamped,
                StepOrigin::Agent,
            ),
            None => (
                fallback_params(cache, goal, rng),
                None,
                false,
                StepOrigin::Fallback,
            ),
        };
        let trace = rollout(env, &params, rng)?;
        let landing = trace.landing.clone();
        let trace_id = cache.append(trace)?;
        let distance = distance_to_goal(&landing, goal);
        best = best.min(distance);
        report.best_so_far.push(best);
        let (best_ids, analysis, justification) = match response {
            Some(r) => (r.best_ids, r.analysis, r.justification),
            None => (Vec::new(), String::new(), String::new()),
        };
        report.iterations.push(IterationRecord {
            iteration,
            requested,
            params,
            clamped,
            origin,
            trace_id,
            landing,
            distance,
            best_distance: best,
            best_ids,
            analysis,
            justification,
        });
    }
    Ok(SelfImproveRun {
        report,
        transcripts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentError;
    use crate::env::{seed_cache, GoalKind, ParamRegion};
    use crate::seed;

    struct Fixed(&'static str);
    impl Agent for Fixed {
        fn send(&mut self, _: &AgentTranscript) -> Result<String, AgentError> {
            Ok(self.0.to_string())
        }
    }

    struct Down;
    impl Agent for Down {
        fn send(&mut self, _: &AgentTranscript) -> Result<String, AgentError> {
            Err(AgentError::Transport("down".into()))
        }
    }

    fn setup(n: usize) -> (EnvConfig, TraceCache) {
        let env = EnvConfig::sim_default();
        let cache = seed_cache(&env, &ParamRegion::left_biased(), n, &mut seed::rng(8)).unwrap();
        (env, cache)
    }

    #[test]
    fn one_iteration_appends_one_trace() {
        let (env, mut cache) = setup(4);
        let before = cache.clone();
        let mut agent =
            Fixed("BEST: 1\nPARAMS: a:1 b:1 c:1 d:1 e:1 f:1 g:1.2 h:1\nJUSTIFICATION: more g");
        let goal = GoalSpec::of(GoalKind::MaxX);
        let run = self_improve(
            &mut agent,
            &env,
            &goal,
            "right",
            &mut cache,
            1,
            &SasOptions::default(),
            &mut seed::rng(0),
        )
        .unwrap();
        assert_eq!(cache.len(), 5);
        assert_eq!(&cache.traces()[..4], before.traces());
        assert_eq!(run.report.iterations.len(), 1);
        assert_eq!(run.report.iterations[0].trace_id, 5);
        assert_eq!(run.report.iterations[0].justification, "more g");
        assert_eq!(run.transcripts.len(), 1);
    }

    #[test]
    fn clamped_proposals_are_flagged() {
        let (env, mut cache) = setup(2);
        let mut agent = Fixed("BEST: 1\nPARAMS: a:3 b:1 c:1 d:1 e:1 f:1 g:1 h:1\nJUSTIFICATION: x");
        let goal = GoalSpec::point(0.0, 1.0);
        let run = self_improve(
            &mut agent,
            &env,
            &goal,
            "o",
            &mut cache,
            2,
            &SasOptions::default(),
            &mut seed::rng(0),
        )
        .unwrap();
        let r = &run.report.iterations[0];
        assert!(r.clamped);
        assert_eq!(r.params[0], 1.5);
        assert_eq!(cache.get(r.trace_id).unwrap().params[0], 1.5);
        assert!(run
            .report
            .to_csv()
            .lines()
            .nth(1)
            .unwrap()
            .contains(",true,agent"));
    }

    #[test]
    fn unusable_replies_fall_back() {
        let (env, mut cache) = setup(3);
        let mut agent = Fixed("I am not sure.");
        let goal = GoalSpec::point(0.0, 1.0);
        let run = self_improve(
            &mut agent,
            &env,
            &goal,
            "o",
            &mut cache,
            3,
            &SasOptions::default(),
            &mut seed::rng(0),
        )
        .unwrap();
        assert!(run
            .report
            .iterations
            .iter()
            .all(|r| r.origin == StepOrigin::Fallback));
        assert!(run
            .report
            .iterations
            .iter()
            .all(|r| r.params.within(cache.bounds())));
        let curve = &run.report.best_so_far;
        assert!(curve.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn transport_failure_aborts() {
        let (env, mut cache) = setup(3);
        let goal = GoalSpec::point(0.0, 1.0);
        let run = self_improve(
            &mut Down,
            &env,
            &goal,
            "o",
            &mut cache,
            3,
            &SasOptions::default(),
            &mut seed::rng(0),
        )
        .unwrap();
        assert!(run.report.is_aborted());
        assert!(run.report.iterations.is_empty());
        assert_eq!(cache.len(), 3);
    }

    #[test]
    fn preconditions() {
        let (env, mut cache) = setup(3);
        let goal = GoalSpec::point(0.0, 1.0);
        let opts = SasOptions::default();
        assert!(self_improve(
            &mut Down,
            &env,
            &goal,
            "o",
            &mut cache,
            0,
            &opts,
            &mut seed::rng(0)
        )
        .is_err());
        let mut empty = TraceCache::new();
        assert!(self_improve(
            &mut Down,
            &env,
            &goal,
            "o",
            &mut empty,
            1,
            &opts,
            &mut seed::rng(0)
        )
        .is_err());
    }

    #[test]
    fn report_json_round_trip_with_infinite_distance() {
        let (env, mut cache) = setup(2);
        let mut agent = Fixed(
            "BEST: 1\nPARAMS: a:1.5 b:1.5 c:1 d:1.5 e:1.5 f:1.5 g:1 h:1\nJUSTIFICATION: long",
        );
        let goal = GoalSpec::of(GoalKind::MaxPeak);
        let run = self_improve(
            &mut agent,
            &env,
            &goal,
            "o",
            &mut cache,
            1,
            &SasOptions::default(),
            &mut seed::rng(0),
        )
        .unwrap();
        assert!(!run.report.iterations[0].landing.on_table);
        assert_eq!(run.report.iterations[0].distance, f64::INFINITY);
        let json = serde_json::to_string(&run.report).unwrap();
        let back: ImprovementReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, run.report);
    }

    #[test]
    fn median_of_final_landings() {
        let (env, mut cache) = setup(2);
        let mut agent =
            Fixed("BEST: 1\nPARAMS: a:1 b:1 c:1 d:1 e:1 f:1 g:1 h:1\nJUSTIFICATION: base");
        let goal = GoalSpec::point(0.0, 1.0);
        let run = self_improve(
            &mut agent,
            &env,
            &goal,
            "o",
            &mut cache,
            3,
            &SasOptions::default(),
            &mut seed::rng(0),
        )
        .unwrap();
        let (x, y) = run.report.median_final_landing(10).unwrap();
        assert!(x.abs() < 1e-12);
        assert_eq!(y, run.report.iterations[0].landing.y);
    }
}
