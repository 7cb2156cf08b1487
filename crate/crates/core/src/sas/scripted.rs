use std::collections::HashSet;

use crate::agent::{Agent, AgentError, AgentTranscript};
use crate::retrieval::{Criterion, ObjectiveId};
use crate::trace::render::{parse_traces, trim_decimal};
use crate::trace::{ExecutionTrace, ParamBounds, ParamVector, TraceCache, PARAM_NAMES};

use super::{Scenario, EXAMPLES_LABEL, MAX_BEST_IDS, OBJECTIVE_LABEL};

/// Pearson correlation; 0 when either side has no spread.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return 0.0;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys).take(n) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx <= 1e-15 || syy <= 1e-15 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Deterministic stand-in for a language model answering SAS prompts.
///
/// It reads the objective and the example blocks from its own prompt, ranks the
/// examples with a registered scoring rule, and in synthesis mode proposes the
/// best example's parameters moved by one step on the parameter most correlated
/// with the score.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    criteria: Vec<(String, Criterion)>,
    step: f64,
    ground_truth: Option<TraceCache>,
}

impl Default for ScriptedAgent {
    fn default() -> Self {
        Self::new()
    }
}

fn line_after<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    text.lines()
        .find_map(|l| l.strip_prefix(label))
        .map(str::trim)
}

fn prompt_bounds(prompt: &str) -> ParamBounds {
    let parsed = prompt.lines().find_map(|l| {
        let rest = l.split_once("each between ")?.1;
        let (lo, rest) = rest.split_once(" and ")?;
        let hi = rest.split_whitespace().next()?.trim_end_matches(',');
        Some(ParamBounds {
            lo: lo.trim().parse().ok()?,
            hi: hi.parse().ok()?,
        })
    });
    parsed.unwrap_or_default()
}

fn key(p: &ParamVector) -> [i64; 8] {
    p.0.map(|v| (v * 1e4).round() as i64)
}

impl ScriptedAgent {
    /// Knows the ten retrieval objectives and the three self-improvement tasks.
    pub fn new() -> Self {
        let mut criteria: Vec<(String, Criterion)> = ObjectiveId::ALL
            .iter()
            .map(|o| (o.text().to_string(), Criterion::Objective(*o)))
            .collect();
        for s in Scenario::ALL {
            criteria.push((s.objective_text().to_string(), Criterion::Goal(s.goal())));
        }
        Self {
            criteria,
            step: 0.1,
            ground_truth: None,
        }
    }

    pub fn with_criterion(mut self, text: impl Into<String>, criterion: Criterion) -> Self {
        let text = text.into();
        self.criteria.retain(|(t, _)| *t != text);
        self.criteria.push((text, criterion));
        self
    }

    /// Ranks retrieval answers on the full-precision traces of `cache` instead of
    /// the rounded values in the prompt.
    pub fn with_ground_truth(mut self, cache: TraceCache) -> Self {
        self.ground_truth = Some(cache);
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        assert!(step > 0.0, "step must be positive");
        self.step = step;
        self
    }

    fn criterion(&self, objective: &str) -> Option<Criterion> {
        self.criteria
            .iter()
            .find(|(t, _)| t == objective)
            .map(|(_, c)| *c)
    }

    fn summary(traces: &[ExecutionTrace], ranking: &[usize]) -> String {
        let mut out = String::from("```\nid | landing x | landing y | on table | peak height\n");
        for id in ranking {
            if let Some(t) = traces.iter().find(|t| t.id == *id) {
                let l = &t.landing;
                out.push_str(&format!(
                    "{} | {:.4} | {:.4} | {} | {:.4}\n",
                    t.id, l.x, l.y, l.on_table, l.peak_height
                ));
            }
        }
        out.push_str("```\n");
        out
    }

    fn propose(
        &self,
        traces: &[ExecutionTrace],
        criterion: &Criterion,
        best: &ExecutionTrace,
        bounds: &ParamBounds,
    ) -> (ParamVector, Vec<f64>, Option<(usize, bool)>) {
        let scored: Vec<(&ExecutionTrace, f64)> = traces
            .iter()
            .map(|t| (t, criterion.score(&t.landing)))
            .filter(|(_, s)| s.is_finite())
            .collect();
        let scores: Vec<f64> = scored.iter().map(|(_, s)| *s).collect();
        let corr: Vec<f64> = (0..8)
            .map(|i| {
                let xs: Vec<f64> = scored.iter().map(|(t, _)| t.params[i]).collect();
                pearson(&xs, &scores)
            })
            .collect();
        let mut order: Vec<usize> = (0..8).filter(|&i| corr[i].abs() > 1e-12).collect();
        order.sort_by(|&a, &b| corr[b].abs().total_cmp(&corr[a].abs()).then(a.cmp(&b)));
        let tried: HashSet<[i64; 8]> = traces.iter().map(|t| key(&t.params)).collect();

        let mut moves: Vec<(usize, f64, bool)> = Vec::new();
        if let Some((i, dir)) = Self::momentum(traces, criterion, best) {
            moves.push((i, dir, true));
        }
        for flip in [1.0, -1.0] {
            moves.extend(order.iter().map(|&i| (i, -corr[i].signum() * flip, false)));
        }
        let mut step = self.step;
        for _ in 0..4 {
            for &(i, dir, repeat) in &moves {
                {
                    let mut cand = best.params;
                    cand[i] = (cand[i] + dir * step).clamp(bounds.lo, bounds.hi);
                    cand[i] = (cand[i] * 1e4).round() / 1e4;
                    if key(&cand) == key(&best.params) || tried.contains(&key(&cand)) {
                        continue;
                    }
                    return (cand, corr, Some((i, repeat)));
                }
            }
            step /= 2.0;
        }
        (best.params, corr, None)
    }

    /// A single-parameter move that produced `best` from an earlier, worse example.
    fn momentum(
        traces: &[ExecutionTrace],
        criterion: &Criterion,
        best: &ExecutionTrace,
    ) -> Option<(usize, f64)> {
        let score = criterion.score(&best.landing);
        traces
            .iter()
            .filter(|t| t.id < best.id)
            .rev()
            .find_map(|parent| {
                let diff: Vec<usize> = (0..8)
                    .filter(|&i| (parent.params[i] - best.params[i]).abs() > 5e-5)
                    .collect();
                match diff[..] {
                    [i] if criterion.score(&parent.landing) > score => {
                        Some((i, (best.params[i] - parent.params[i]).signum()))
                    }
                    _ => None,
                }
            })
    }

    fn reply(&self, transcript: &AgentTranscript) -> String {
        let Some(prompt) = transcript.messages().get(1).map(|m| m.text.as_str()) else {
            return "There is no prompt to answer.".into();
        };
        let Some(objective) = line_after(prompt, OBJECTIVE_LABEL) else {
            return "The prompt states no objective.".into();
        };
        let Some(criterion) = self.criterion(objective) else {
            return format!("I do not know how to score the objective \"{objective}\".");
        };
        let examples = prompt
            .split_once(&format!("\n{EXAMPLES_LABEL}\n"))
            .map_or("", |(_, rest)| rest);
        let traces = match parse_traces(examples) {
            Ok(t) if !t.is_empty() => t,
            Ok(_) => return "The prompt contains no examples.".into(),
            Err(e) => return format!("The examples could not be read: {e}"),
        };
        let synthesize = prompt.contains("\nStep 4:");
        let ranking = match (&self.ground_truth, synthesize) {
            (Some(cache), false) => {
                let ids: HashSet<usize> = traces.iter().map(|t| t.id).collect();
                let shown: Vec<ExecutionTrace> = cache
                    .traces()
                    .iter()
                    .filter(|t| ids.contains(&t.id))
                    .cloned()
                    .collect();
                criterion.rank(&shown)
            }
            _ => criterion.rank(&traces),
        };
        let best_list: Vec<String> = ranking
            .iter()
            .take(MAX_BEST_IDS)
            .map(|id| id.to_string())
            .collect();
        let mut out = Self::summary(&traces, &ranking);
        out.push_str(&format!("BEST: {}\n", best_list.join(", ")));
        if !synthesize {
            out.push_str(&format!(
                "JUSTIFICATION: Example {} scores best on the objective once every example is measured against it.\n",
                ranking[0]
            ));
            return out;
        }

        let best = traces
            .iter()
            .find(|t| t.id == ranking[0])
            .expect("ranked id is present");
        let bounds = prompt_bounds(prompt);
        let (proposal, corr, moved) = self.propose(&traces, &criterion, best, &bounds);
        let effects: Vec<String> = PARAM_NAMES
            .iter()
            .zip(&corr)
            .map(|(n, c)| format!("{n}: {c:+.2}"))
            .collect();
        out.push_str(&format!(
            "ANALYSIS: Correlation of each parameter with the distance from the objective (negative means increasing it helps): {}.\n",
            effects.join(", ")
        ));
        let values: Vec<String> = PARAM_NAMES
            .iter()
            .zip(proposal.0)
            .map(|(n, v)| format!("{n}:{}", trim_decimal(v, 4)))
            .collect();
        out.push_str(&format!("PARAMS: {}\n", values.join(" ")));
        let why = match moved {
            Some((i, repeat)) => format!(
                "Example {} is the best so far; moving {} from {} to {} {}.",
                best.id,
                PARAM_NAMES[i],
                trim_decimal(best.params[i], 4),
                trim_decimal(proposal[i], 4),
                if repeat {
                    "repeats the change that produced it"
                } else {
                    "follows its strongest correlation with the objective"
                }
            ),
            None => format!("Example {} is the best so far and no untried neighbour remains, so it is repeated.", best.id),
        };
        out.push_str(&format!("JUSTIFICATION: {why}\n"));
        out
    }
}

impl Agent for ScriptedAgent {
    fn send(&mut self, transcript: &AgentTranscript) -> Result<String, AgentError> {
        Ok(self.reply(transcript))
    }
}
