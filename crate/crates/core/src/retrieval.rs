//! Ground-truth ranking of cached traces for the ten retrieval objectives, and
//! Top-k scoring of an agent's answers against it.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{Agent, AgentError, AgentTranscript, Role};
use crate::env::{distance_to_goal, GoalSpec};
use crate::sas::{retrieve_prepared, PreparedPrompt, SasError, SasOptions};
use crate::seed;
use crate::trace::{ExecutionTrace, LandingRecord, TraceCache, TABLE_DEPTH, TABLE_HALF_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObjectiveId {
    O1,
    O2,
    O3,
    O4,
    O5,
    O6,
    O7,
    O8,
    O9,
    O10,
}

impl ObjectiveId {
    pub const ALL: [ObjectiveId; 10] = [
        ObjectiveId::O1,
        ObjectiveId::O2,
        ObjectiveId::O3,
        ObjectiveId::O4,
        ObjectiveId::O5,
        ObjectiveId::O6,
        ObjectiveId::O7,
        ObjectiveId::O8,
        ObjectiveId::O9,
        ObjectiveId::O10,
    ];

    /// The instruction given to the agent.
    pub fn text(self) -> &'static str {
        match self {
            ObjectiveId::O1 => "Play as far right as possible",
            ObjectiveId::O2 => "Aim the ball at the leftmost edge of the table",
            ObjectiveId::O3 => "Play the ball close to the net",
            ObjectiveId::O4 => "Land the ball in the middle of the opponent's side of the table",
            ObjectiveId::O5 => "Target the back-left corner of the opponent's court",
            ObjectiveId::O6 => "Aim the ball as close as possible to the back edge of the opponent's court",
            ObjectiveId::O7 => "Make sure to land the ball as close as possible to coordinate [0.2, 0.8, 0.0]",
            ObjectiveId::O8 => "Hit the ball as close as possible to coordinate [-0.2, 0.8, 0.0]",
            ObjectiveId::O9 => {
                "Play the balls so it achieves the maximum peak height while still landing it on the table"
            }
            ObjectiveId::O10 => "Play as shallow a ball as possible",
        }
    }

    pub fn from_text(text: &str) -> Option<Self> {
        let t = text.trim();
        Self::ALL.into_iter().find(|o| o.text() == t)
    }

    /// Score of a landing under this objective; lower is better.
    pub fn score(self, l: &LandingRecord) -> f64 {
        let dist = |tx: f64, ty: f64| ((l.x - tx).powi(2) + (l.y - ty).powi(2)).sqrt();
        match self {
            ObjectiveId::O1 => -l.x,
            ObjectiveId::O2 => l.x,
            ObjectiveId::O3 => l.y,
            ObjectiveId::O4 => dist(0.0, TABLE_DEPTH / 2.0),
            ObjectiveId::O5 => dist(-TABLE_HALF_WIDTH, TABLE_DEPTH),
            ObjectiveId::O6 => (TABLE_DEPTH - l.y).abs(),
            ObjectiveId::O7 => dist(0.2, 0.8),
            ObjectiveId::O8 => dist(-0.2, 0.8),
            ObjectiveId::O9 => -l.peak_height,
            ObjectiveId::O10 => l.peak_height,
        }
    }
}

impl fmt::Display for ObjectiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ObjectiveId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|o| o.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown objective '{s}' (expected O1..O10)"))
    }
}

/// A rule for ranking traces: one of the retrieval objectives, or a goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Objective(ObjectiveId),
    Goal(GoalSpec),
}

impl Criterion {
    /// Lower is better. Objectives send off-table landings to `+inf`.
    pub fn score(&self, l: &LandingRecord) -> f64 {
        match self {
            Criterion::Objective(o) if l.on_table => o.score(l),
            Criterion::Objective(_) => f64::INFINITY,
            Criterion::Goal(g) => distance_to_goal(l, g),
        }
    }

    /// Ids of `traces`, best first; ties go to the lower id.
    pub fn rank(&self, traces: &[ExecutionTrace]) -> Vec<usize> {
        let mut scored: Vec<(f64, usize)> = traces
            .iter()
            .map(|t| (self.score(&t.landing), t.id))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.into_iter().map(|(_, id)| id).collect()
    }
}

/// Brute-force ground truth: every cached trace, best first.
pub fn oracle_rank(objective: ObjectiveId, cache: &TraceCache) -> Vec<usize> {
    Criterion::Objective(objective).rank(cache.traces())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKResult {
    pub objective: ObjectiveId,
    pub trials: usize,
    pub top1: f64,
    pub top5: f64,
    pub top10: f64,
    pub parse_failures: usize,
}

impl TopKResult {
    pub fn parse_failure_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.parse_failures as f64 / self.trials as f64
        }
    }
}

/// Header of [`results_csv`].
pub const RESULTS_HEADER: &str = "objective,trials,top1,top5,top10,parse_failures";

pub fn results_csv(results: &[TopKResult]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{:.4},{}\n",
            r.objective, r.trials, r.top1, r.top5, r.top10, r.parse_failures
        ));
    }
    out
}

/// One retrieval question and the agent's answer.
///
/// The prompt itself is stored once per objective in [`RetrievalOutcome::prompts`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTrial {
    pub objective: ObjectiveId,
    pub trial: usize,
    pub oracle_best: usize,
    pub answer: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub prompt_sha256: String,
    /// Every agent reply, including ones rejected and retried.
    pub replies: Vec<String>,
}

/// A distinct retrieval prompt, keyed by the SHA-256 of its text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalPrompt {
    pub objective: ObjectiveId,
    pub prompt_sha256: String,
    pub system: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOutcome {
    pub results: Vec<TopKResult>,
    pub trials: Vec<RetrievalTrial>,
    pub prompts: Vec<RetrievalPrompt>,
}

fn split_transcript(objective: ObjectiveId, t: &AgentTranscript) -> (RetrievalPrompt, Vec<String>) {
    let msgs = t.messages();
    let text = |role| {
        msgs.iter()
            .find(|m| m.role == role)
            .map(|m| m.text.clone())
            .unwrap_or_default()
    };
    let prompt = text(Role::Harness);
    let prompt = RetrievalPrompt {
        objective,
        prompt_sha256: hex::encode(Sha256::digest(prompt.as_bytes())),
        system: text(Role::System),
        prompt,
    };
    let replies = msgs
        .iter()
        .filter(|m| m.role == Role::Agent)
        .map(|m| m.text.clone())
        .collect();
    (prompt, replies)
}

/// Aggregates per-trial answers into one [`TopKResult`] per objective, in order.
pub fn summarize_trials(objectives: &[ObjectiveId], trials: &[RetrievalTrial]) -> Vec<TopKResult> {
    objectives
        .iter()
        .map(|&objective| {
            let mine: Vec<&RetrievalTrial> =
                trials.iter().filter(|t| t.objective == objective).collect();
            let n = mine.len();
            let hit = |k: usize| {
                if n == 0 {
                    return 0.0;
                }
                let hits = mine
                    .iter()
                    .filter(|t| t.answer.iter().take(k).any(|&id| id == t.oracle_best))
                    .count();
                hits as f64 / n as f64
            };
            TopKResult {
                objective,
                trials: n,
                top1: hit(1),
                top5: hit(5),
                top10: hit(10),
                parse_failures: mine.iter().filter(|t| t.error.is_some()).count(),
            }
        })
        .collect()
}

/// Asks `agent` every objective `trials` times over one fixed cache.
///
/// Trials run in order on the single agent so that stateful and recorded agents
/// see a well-defined sequence. Unparsable answers count as misses.
pub fn evaluate_retrieval(
    agent: &mut dyn Agent,
    objectives: &[ObjectiveId],
    cache: &TraceCache,
    trials: usize,
    opts: &SasOptions,
) -> Result<RetrievalOutcome, SasError> {
    if trials == 0 {
        return Err(SasError::Config("trials must be at least 1".into()));
    }
    if cache.is_empty() {
        return Err(SasError::Config("retrieval needs a non-empty cache".into()));
    }
    let mut records = Vec::with_capacity(objectives.len() * trials);
    let mut prompts: Vec<RetrievalPrompt> = Vec::new();
    for &objective in objectives {
        let oracle_best = oracle_rank(objective, cache)[0];
        let prepared = PreparedPrompt::retrieval(objective.text(), cache, opts)?;
        for trial in 0..trials {
            let (answer, error, transcript) =
                match retrieve_prepared(agent, &prepared, &opts.loop_cfg) {
                    Ok(out) => (out.response.best_ids, None, out.transcript),
                    Err(SasError::Unparsable {
                        message,
                        transcript,
                    }) => (Vec::new(), Some(message), *transcript),
                    Err(e) => return Err(e),
                };
            let (prompt, replies) = split_transcript(objective, &transcript);
            let prompt_sha256 = prompt.prompt_sha256.clone();
            if !prompts.iter().any(|p| p.prompt_sha256 == prompt_sha256) {
                prompts.push(prompt);
            }
            records.push(RetrievalTrial {
                objective,
                trial,
                oracle_best,
                answer,
                error,
                prompt_sha256,
                replies,
            });
        }
    }
    Ok(RetrievalOutcome {
        results: summarize_trials(objectives, &records),
        trials: records,
        prompts,
    })
}

/// Answers every retrieval question with ten distinct ids drawn uniformly from
/// the examples in the prompt.
#[derive(Debug, Clone)]
pub struct RandomIdAgent {
    rng: seed::Rng,
}

impl RandomIdAgent {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: seed::rng(seed),
        }
    }
}

/// Ids of the `Example N:` headers in `prompt`.
pub fn prompt_example_ids(prompt: &str) -> Vec<usize> {
    prompt
        .lines()
        .filter_map(|l| {
            l.trim()
                .strip_prefix("Example ")?
                .strip_suffix(':')?
                .parse()
                .ok()
        })
        .collect()
}

impl Agent for RandomIdAgent {
    fn send(&mut self, transcript: &AgentTranscript) -> Result<String, AgentError> {
        let ids = prompt_example_ids(transcript.last_harness().unwrap_or_default());
        let picks = index::sample(&mut self.rng, ids.len(), ids.len().min(10));
        let list: Vec<String> = picks.iter().map(|i| ids[i].to_string()).collect();
        Ok(format!(
            "BEST: {}\nJUSTIFICATION: These examples were picked at random.",
            list.join(", ")
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{ParamVector, TraceRow};

    fn trace(x: f64, y: f64, on_table: bool, peak: f64) -> ExecutionTrace {
        ExecutionTrace {
            id: 0,
            params: ParamVector::ONES,
            rows: vec![TraceRow {
                time: 1,
                paddle: [0.0; 3],
                ball: [0.0, -1.0, peak],
            }],
            landing: LandingRecord {
                x,
                y,
                z: 0.0,
                on_table,
                peak_height: peak,
            },
        }
    }

    fn cache(traces: Vec<ExecutionTrace>) -> TraceCache {
        let mut c = TraceCache::new();
        for t in traces {
            c.append(t).unwrap();
        }
        c
    }

    #[test]
    fn far_right_ranking() {
        let c = cache(vec![
            trace(-0.3, 0.5, true, 0.3),
            trace(0.2, 0.5, true, 0.3),
            trace(0.5, 0.5, true, 0.3),
        ]);
        assert_eq!(oracle_rank(ObjectiveId::O1, &c), vec![3, 2, 1]);
        assert_eq!(oracle_rank(ObjectiveId::O2, &c), vec![1, 2, 3]);
    }

    #[test]
    fn coordinate_target_ranks_first() {
        let c = cache(vec![
            trace(0.1, 0.8, true, 0.3),
            trace(0.2, 0.8, true, 0.3),
            trace(-0.2, 0.8, true, 0.3),
        ]);
        assert_eq!(oracle_rank(ObjectiveId::O7, &c)[0], 2);
        assert_eq!(oracle_rank(ObjectiveId::O8, &c)[0], 3);
    }

    #[test]
    fn off_table_ranks_last() {
        let c = cache(vec![
            trace(0.0, 1.5, false, 0.9),
            trace(0.0, 0.5, true, 0.4),
            trace(0.0, 0.6, true, 0.5),
        ]);
        assert_eq!(oracle_rank(ObjectiveId::O9, &c), vec![3, 2, 1]);
        assert_eq!(oracle_rank(ObjectiveId::O6, &c), vec![3, 2, 1]);
        assert_eq!(*oracle_rank(ObjectiveId::O1, &c).last().unwrap(), 1);
    }

    #[test]
    fn ties_break_by_id() {
        let c = cache(vec![trace(0.1, 0.5, true, 0.3), trace(0.1, 0.5, true, 0.3)]);
        assert_eq!(oracle_rank(ObjectiveId::O4, &c), vec![1, 2]);
    }

    #[test]
    fn objective_text_round_trip() {
        for o in ObjectiveId::ALL {
            assert_eq!(ObjectiveId::from_text(o.text()), Some(o));
            assert_eq!(o.to_string().parse::<ObjectiveId>().unwrap(), o);
        }
        assert!("O11".parse::<ObjectiveId>().is_err());
    }

    #[test]
    fn summary_fractions() {
        let t = |answer: Vec<usize>, error: bool| RetrievalTrial {
            objective: ObjectiveId::O1,
            trial: 0,
            oracle_best: 7,
            answer,
            error: error.then(|| "bad".to_string()),
            prompt_sha256: String::new(),
            replies: Vec::new(),
        };
        let trials = vec![
            t(vec![7], false),
            t(vec![1, 2, 3, 4, 7], false),
            t(vec![1, 2, 3, 4, 5, 6, 7], false),
            t(vec![], true),
        ];
        let r = &summarize_trials(&[ObjectiveId::O1], &trials)[0];
        assert_eq!((r.top1, r.top5, r.top10), (0.25, 0.5, 0.75));
        assert_eq!(r.parse_failures, 1);
        assert!(results_csv(std::slice::from_ref(r)).contains("O1,4,0.2500,0.5000,0.7500,1"));
    }

    #[test]
    fn random_agent_picks_distinct_prompt_ids() {
        let mut t = AgentTranscript::new("s");
        let prompt: String = (1..=30).map(|i| format!("Example {i}:\n")).collect();
        t.push_harness(prompt);
        let mut a = RandomIdAgent::new(3);
        let reply = a.send(&t).unwrap();
        let line = reply
            .lines()
            .next()
            .unwrap()
            .strip_prefix("BEST: ")
            .unwrap();
        let mut ids: Vec<usize> = line.split(", ").map(|s| s.parse().unwrap()).collect();
        assert_eq!(ids.len(), 10);
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 10);
        assert!(ids.iter().all(|i| (1..=30).contains(i)));
    }
}
