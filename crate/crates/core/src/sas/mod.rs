//! Summarize / analyze / synthesize prompting over the trace cache.

mod improve;
mod scenario;
mod scripted;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentTranscript;
use crate::env::EnvError;
use crate::trace::render::render_trace;
use crate::trace::{
    ParamBounds, ParamVector, TraceCache, TraceError, PARAM_NAMES, TABLE_DEPTH, TABLE_HALF_WIDTH,
};

pub use improve::{
    retrieve, retrieve_prepared, self_improve, ImprovementReport, IterationRecord, PreparedPrompt,
    RetrieveOutput, SasOptions, SelfImproveRun, IMPROVEMENT_CSV_HEADER, SAS_SYSTEM_PROMPT,
};
pub use scenario::Scenario;
pub use scripted::{pearson, ScriptedAgent};

/// Line that introduces the objective in every prompt.
pub const OBJECTIVE_LABEL: &str = "Objective:";
/// Line after which the rendered examples follow.
pub const EXAMPLES_LABEL: &str = "Examples:";

pub const DEFAULT_SUMMARY_COLUMNS: [&str; 5] =
    ["id", "landing x", "landing y", "on table", "peak height"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SasMode {
    RetrieveOnly,
    Synthesize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SasPromptConfig {
    pub domain_description: String,
    pub objective_text: String,
    pub mode: SasMode,
    pub summary_columns: Option<Vec<String>>,
    pub max_examples: usize,
    /// Decimals used when rendering traces.
    pub precision: usize,
    pub bounds: ParamBounds,
}

/// Table-tennis domain and coordinate frame, as given to the agent.
pub fn default_domain_description() -> String {
    format!(
        "A robot arm plays table tennis. It returns each incoming ball with a stroke whose \
actuator velocities are scaled by eight attenuation parameters a, b, c, d, e, f, g and h.
Coordinates are in meters. The origin is the center of the net on the table surface. \
The y axis points away from the robot across the opponent's side, whose back edge is at y = {depth}. \
The x axis points to the robot's right; the table spans x from -{hw} to {hw}. The z axis points up \
and the table surface is at z = 0.
Each example lists its parameters, where the ball landed and whether it landed on the opponent's side \
of the table (On Table), followed by the paddle and ball positions at every time step.",
        depth = TABLE_DEPTH,
        hw = TABLE_HALF_WIDTH,
    )
}

impl SasPromptConfig {
    pub fn new(objective_text: impl Into<String>, mode: SasMode) -> Self {
        Self {
            domain_description: default_domain_description(),
            objective_text: objective_text.into(),
            mode,
            summary_columns: Some(
                DEFAULT_SUMMARY_COLUMNS
                    .iter()
                    .map(|c| c.to_string())
                    .collect(),
            ),
            max_examples: 200,
            precision: 4,
            bounds: ParamBounds::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SasError> {
        if self.objective_text.trim().is_empty() {
            return Err(SasError::Config("objective text must not be empty".into()));
        }
        if self.max_examples == 0 {
            return Err(SasError::Config("max_examples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SasError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unusable reply after retries: {message}")]
    Unparsable {
        message: String,
        transcript: Box<AgentTranscript>,
    },
    #[error("agent unreachable: {message}")]
    Transport {
        message: String,
        transcript: Box<AgentTranscript>,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Builds the prompt: domain, objective, step instructions, reply format, then
/// the most recent `max_examples` traces.
pub fn build_sas_prompt(cfg: &SasPromptConfig, cache: &TraceCache) -> Result<String, SasError> {
    cfg.validate()?;
    if cache.is_empty() {
        return Err(SasError::Config(
            "the prompt needs at least one example".into(),
        ));
    }
    let synthesize = cfg.mode == SasMode::Synthesize;
    let columns = match &cfg.summary_columns {
        Some(cols) if !cols.is_empty() => format!("with the columns: {}", cols.join(", ")),
        _ => "and choose informative columns".to_string(),
    };
    let lo = crate::trace::render::trim_decimal(cfg.bounds.lo, 4);
    let hi = crate::trace::render::trim_decimal(cfg.bounds.hi, 4);

    let mut out = String::new();
    out.push_str(cfg.domain_description.trim_end());
    out.push_str("\n\n");
    out.push_str(&format!(
        "{OBJECTIVE_LABEL} {}\n\n",
        cfg.objective_text.trim()
    ));
    out.push_str("Work through the following steps.\n");
    out.push_str(&format!("Step 1: Summarize all examples in a table {columns}. Put the table in a fenced code block.\n"));
    out.push_str(
        "Step 2: Identify the examples that best fulfill the objective. List up to 10 example ids, best first.\n",
    );
    if synthesize {
        out.push_str(
            "Step 3: Analyze the examples to identify the impact of each variable a to h on the execution trace and on where the ball lands.\n",
        );
        out.push_str(&format!(
            "Step 4: Propose a new set of parameters a to h, each between {lo} and {hi}, that fulfills the objective better than the examples so far.\n"
        ));
    }
    out.push_str("\nAnswer in exactly this format:\n");
    out.push_str("```\n<summary table>\n```\n");
    out.push_str("BEST: <example ids separated by commas, best first>\n");
    if synthesize {
        out.push_str("ANALYSIS: <the effect of each parameter>\n");
        out.push_str("PARAMS: a:<v> b:<v> c:<v> d:<v> e:<v> f:<v> g:<v> h:<v>\n");
        out.push_str("JUSTIFICATION: <why this parameter set should work>\n");
    } else {
        out.push_str("JUSTIFICATION: <why these examples fit the objective>\n");
    }
    out.push_str(&format!("\n{EXAMPLES_LABEL}\n"));
    for t in cache.recent(cfg.max_examples) {
        out.push('\n');
        out.push_str(&render_trace(t, cfg.precision));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub id: usize,
    pub features: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SasResponse {
    pub summary_rows: Vec<SummaryRow>,
    pub best_ids: Vec<usize>,
    pub analysis: String,
    pub proposal: Option<ParamVector>,
    /// Proposal as written, before clamping.
    pub requested: Option<ParamVector>,
    pub clamped: bool,
    pub justification: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct SasParseError(pub String);

/// Maximum ids kept from a `BEST:` line.
pub const MAX_BEST_IDS: usize = 10;

const MARKERS: [&str; 4] = ["BEST:", "ANALYSIS:", "PARAMS:", "JUSTIFICATION:"];

fn clean(line: &str) -> String {
    line.replace(['*', '`'], "").trim().to_string()
}

fn marker_of(line: &str) -> Option<(&'static str, String)> {
    let c = clean(line);
    MARKERS.iter().find_map(|m| {
        (c.len() >= m.len() && c[..m.len()].eq_ignore_ascii_case(m))
            .then(|| (*m, c[m.len()..].trim().to_string()))
    })
}

/// Text of each marked section; a section runs until the next marker.
fn sections(text: &str) -> BTreeMap<&'static str, String> {
    let mut out: BTreeMap<&'static str, String> = BTreeMap::new();
    let mut current: Option<&'static str> = None;
    let mut in_fence = false;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            in_fence = !in_fence;
            continue;
        }
        if in_fence {
            continue;
        }
        if let Some((m, rest)) = marker_of(line) {
            if out.contains_key(m) {
                current = None;
                continue;
            }
            out.insert(m, rest);
            current = Some(m);
        } else if let Some(m) = current {
            let s = out.get_mut(m).expect("section exists");
            s.push('\n');
            s.push_str(line);
        }
    }
    for v in out.values_mut() {
        *v = v.trim().to_string();
    }
    out
}

fn split_cells(line: &str) -> Vec<String> {
    let l = line.trim().trim_matches('|');
    let cells: Vec<&str> = if l.contains('|') {
        l.split('|').collect()
    } else if l.contains(',') {
        l.split(',').collect()
    } else {
        l.split_whitespace().collect()
    };
    cells.into_iter().map(|c| c.trim().to_string()).collect()
}

fn summary_rows(text: &str) -> Vec<SummaryRow> {
    let Some(start) = text.find("```") else {
        return Vec::new();
    };
    let after = &text[start + 3..];
    let body = after.split_once('\n').map_or("", |(_, b)| b);
    let block = body.split("```").next().unwrap_or("");
    let mut header: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    for line in block.lines() {
        let l = line.trim();
        if l.is_empty() || l.chars().all(|c| "-|:+ =".contains(c)) {
            continue;
        }
        let cells = split_cells(l);
        let id = cells
            .first()
            .and_then(|c| c.trim_start_matches('#').parse::<usize>().ok());
        match id {
            None if header.is_empty() => header = cells,
            None => {}
            Some(id) => {
                let features = cells
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(i, v)| {
                        (
                            header.get(i).cloned().unwrap_or_else(|| format!("col{i}")),
                            v.clone(),
                        )
                    })
                    .collect();
                rows.push(SummaryRow { id, features });
            }
        }
    }
    rows
}

fn parse_params(line: &str) -> Result<ParamVector, SasParseError> {
    let mut values = [f64::NAN; 8];
    let mut seen = [false; 8];
    for token in line.replace(',', " ").split_whitespace() {
        let Some((name, value)) = token.split_once(['=', ':']) else {
            continue;
        };
        let mut chars = name.trim().chars();
        let (Some(c), None) = (chars.next(), chars.next()) else {
            continue;
        };
        let Some(i) = ParamVector::index_of(c.to_ascii_lowercase()) else {
            continue;
        };
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| SasParseError(format!("PARAMS: '{token}' is not a number")))?;
        if !v.is_finite() {
            return Err(SasParseError(format!("PARAMS: '{token}' is not finite")));
        }
        values[i] = v;
        seen[i] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(SasParseError(format!(
            "PARAMS: missing value for '{}'",
            PARAM_NAMES[i]
        )));
    }
    Ok(ParamVector(values))
}

/// Parses a reply in the mandated BEST / ANALYSIS / PARAMS / JUSTIFICATION format.
///
/// Ids not in `cache_ids` are dropped with a warning; out-of-bounds parameters are
/// clamped and flagged.
pub fn parse_sas_response(
    text: &str,
    mode: SasMode,
    cache_ids: &[usize],
    bounds: &ParamBounds,
) -> Result<SasResponse, SasParseError> {
    let sec = sections(text);
    let mut warnings = Vec::new();
    let mut best_ids = Vec::new();
    match sec.get("BEST:") {
        Some(list) => {
            for token in list
                .split(|c: char| !c.is_ascii_digit())
                .filter(|t| !t.is_empty())
            {
                let Ok(id) = token.parse::<usize>() else {
                    continue;
                };
                if !cache_ids.contains(&id) {
                    warnings.push(format!("BEST: dropped unknown example id {id}"));
                    log::warn!("BEST lists unknown example id {id}");
                } else if !best_ids.contains(&id) && best_ids.len() < MAX_BEST_IDS {
                    best_ids.push(id);
                }
            }
        }
        None if mode == SasMode::RetrieveOnly => {
            return Err(SasParseError("missing BEST: line".into()))
        }
        None => {}
    }
    if mode == SasMode::RetrieveOnly && best_ids.is_empty() {
        return Err(SasParseError(
            "BEST: names no example from the prompt".into(),
        ));
    }
    let (proposal, requested, clamped) = match mode {
        SasMode::Synthesize => {
            let line = sec
                .get("PARAMS:")
                .ok_or_else(|| SasParseError("missing PARAMS: line".into()))?;
            let first = line.lines().next().unwrap_or("");
            let raw = parse_params(first)?;
            let (p, clamped) = raw.clamped(bounds);
            if clamped {
                warnings.push(format!(
                    "PARAMS: clamped {raw} into [{}, {}]",
                    bounds.lo, bounds.hi
                ));
            }
            (Some(p), Some(raw), clamped)
        }
        SasMode::RetrieveOnly => (None, None, false),
    };
    Ok(SasResponse {
        summary_rows: summary_rows(text),
        best_ids,
        analysis: sec.get("ANALYSIS:").cloned().unwrap_or_default(),
        proposal,
        requested,
        clamped,
        justification: sec.get("JUSTIFICATION:").cloned().unwrap_or_default(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{seed_cache, EnvConfig, ParamRegion};
    use crate::seed;

    fn cache(n: usize) -> TraceCache {
        seed_cache(
            &EnvConfig::sim_default(),
            &ParamRegion::full(&ParamBounds::default()),
            n,
            &mut seed::rng(4),
        )
        .unwrap()
    }

    #[test]
    fn retrieve_prompt_has_no_synthesis_steps() {
        let cfg = SasPromptConfig::new("Hit to the top edge of the table", SasMode::RetrieveOnly);
        let p = build_sas_prompt(&cfg, &cache(3)).unwrap();
        assert!(p.contains("Hit to the top edge of the table"));
        assert!(!p.contains("Step 3") && !p.contains("Step 4") && !p.contains("PARAMS:"));
        assert_eq!(p.matches("\nExample ").count(), 3);
        assert!(p.find("Objective:").unwrap() < p.find("Step 1").unwrap());
        assert!(p.find("Step 2").unwrap() < p.find("Example 1:").unwrap());
    }

    #[test]
    fn synthesize_prompt_mentions_variable_impact() {
        let cfg = SasPromptConfig::new("Hit the ball to the far right!", SasMode::Synthesize);
        let p = build_sas_prompt(&cfg, &cache(2)).unwrap();
        assert!(p.contains("the impact of each variable"));
        assert!(p.contains("Step 4") && p.contains("PARAMS: a:<v>"));
        assert!(p.contains("y = 1.37") && p.contains("0.7625"));
    }

    #[test]
    fn prompt_truncates_to_recent_examples() {
        let mut cfg = SasPromptConfig::new("x", SasMode::RetrieveOnly);
        cfg.max_examples = 2;
        let p = build_sas_prompt(&cfg, &cache(5)).unwrap();
        assert!(!p.contains("Example 3:") && p.contains("Example 4:") && p.contains("Example 5:"));
        cfg.summary_columns = None;
        assert!(build_sas_prompt(&cfg, &cache(1))
            .unwrap()
            .contains("choose informative columns"));
    }

    #[test]
    fn prompt_errors() {
        let cfg = SasPromptConfig::new("x", SasMode::RetrieveOnly);
        assert!(build_sas_prompt(&cfg, &TraceCache::new()).is_err());
        let empty = SasPromptConfig::new("  ", SasMode::RetrieveOnly);
        assert!(build_sas_prompt(&empty, &cache(1)).is_err());
    }

    const REPLY: &str = "Here is my analysis.\n\
```\n\
| id | landing x | landing y |\n\
|----|-----------|-----------|\n\
| 17 | 0.3 | 0.8 |\n\
| 4 | -0.1 | 0.5 |\n\
```\n\
**BEST:** 17, 99, 4, 17\n\
ANALYSIS: g moves the ball right.\n\
h matters less.\n\
PARAMS: a:1.1 b:1.2 c:0.7 d:1.1 e:1.1 f:1.1 g:1.1 h:1.5\n\
JUSTIFICATION: Keep what worked.\n";

    #[test]
    fn parses_full_reply() {
        let ids: Vec<usize> = (1..=20).collect();
        let r =
            parse_sas_response(REPLY, SasMode::Synthesize, &ids, &ParamBounds::default()).unwrap();
        assert_eq!(r.best_ids, vec![17, 4]);
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.analysis, "g moves the ball right.\nh matters less.");
        assert_eq!(
            r.proposal,
            Some(ParamVector([1.1, 1.2, 0.7, 1.1, 1.1, 1.1, 1.1, 1.5]))
        );
        assert!(!r.clamped);
        assert_eq!(r.justification, "Keep what worked.");
        assert_eq!(r.summary_rows.len(), 2);
        assert_eq!(r.summary_rows[0].id, 17);
        assert_eq!(r.summary_rows[0].features["landing x"], "0.3");
    }

    #[test]
    fn single_best_id() {
        let r = parse_sas_response(
            "BEST: 17",
            SasMode::RetrieveOnly,
            &[17],
            &ParamBounds::default(),
        )
        .unwrap();
        assert_eq!(r.best_ids, vec![17]);
        assert!(r.proposal.is_none());
    }

    #[test]
    fn best_list_is_capped() {
        let ids: Vec<usize> = (1..=30).collect();
        let list: Vec<String> = (1..=15).map(|i| i.to_string()).collect();
        let text = format!("BEST: {}", list.join(", "));
        let r = parse_sas_response(&text, SasMode::RetrieveOnly, &ids, &ParamBounds::default())
            .unwrap();
        assert_eq!(r.best_ids, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn clamps_out_of_bounds_proposals() {
        let text = "BEST: 1\nPARAMS: a:2.0 b:1 c:1 d:1 e:1 f:1 g:0.1 h:1\nJUSTIFICATION: bold";
        let r =
            parse_sas_response(text, SasMode::Synthesize, &[1], &ParamBounds::default()).unwrap();
        assert!(r.clamped);
        assert_eq!(r.proposal.unwrap()[0], 1.5);
        assert_eq!(r.proposal.unwrap()[6], 0.5);
        assert_eq!(r.requested.unwrap()[0], 2.0);
    }

    #[test]
    fn grammar_errors() {
        let b = ParamBounds::default();
        assert!(
            parse_sas_response("BEST: 1\nJUSTIFICATION: x", SasMode::Synthesize, &[1], &b).is_err()
        );
        assert!(parse_sas_response("no markers here", SasMode::RetrieveOnly, &[1], &b).is_err());
        assert!(parse_sas_response("BEST: 5", SasMode::RetrieveOnly, &[1], &b).is_err());
        let missing_h = "PARAMS: a:1 b:1 c:1 d:1 e:1 f:1 g:1";
        let e = parse_sas_response(missing_h, SasMode::Synthesize, &[1], &b).unwrap_err();
        assert!(e.0.contains("'h'"));
    }
}
