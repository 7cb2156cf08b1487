use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Agent, AgentError, AgentTranscript};

/// One recorded exchange: hash of the transcript sent, and the reply received.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub prompt_sha256: String,
    pub response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MismatchPolicy {
    /// Only a response recorded for this exact transcript is acceptable.
    #[default]
    Strict,
    /// Falls back to the next unused response when the hash is unknown.
    Lenient,
}

pub fn load_fixture(path: &Path) -> Result<Vec<FixtureEntry>, AgentError> {
    let text = fs::read_to_string(path)
        .map_err(|e| AgentError::Replay(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| AgentError::Replay(format!("{}: line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn save_fixture(path: &Path, entries: &[FixtureEntry]) -> Result<(), AgentError> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("fixture entry serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| AgentError::Replay(format!("{}: {e}", path.display())))
}

/// Answers from a recorded fixture; each entry is used at most once.
///
/// Lookup is by transcript hash, so one fixture can serve several independent runs
/// in any order.
#[derive(Debug, Clone)]
pub struct ReplayAgent {
    entries: Arc<Vec<FixtureEntry>>,
    used: Vec<bool>,
    policy: MismatchPolicy,
}

impl ReplayAgent {
    pub fn new(entries: Vec<FixtureEntry>, policy: MismatchPolicy) -> Self {
        Self::shared(Arc::new(entries), policy)
    }

    pub fn shared(entries: Arc<Vec<FixtureEntry>>, policy: MismatchPolicy) -> Self {
        let used = vec![false; entries.len()];
        Self {
            entries,
            used,
            policy,
        }
    }

    pub fn remaining(&self) -> usize {
        self.used.iter().filter(|u| !**u).count()
    }
}

impl Agent for ReplayAgent {
    fn send(&mut self, transcript: &AgentTranscript) -> Result<String, AgentError> {
        if self.remaining() == 0 {
            return Err(AgentError::Replay(format!(
                "fixture exhausted after {} responses",
                self.entries.len()
            )));
        }
        let hash = transcript.prompt_sha256();
        let hit = (0..self.entries.len())
            .find(|&i| !self.used[i] && self.entries[i].prompt_sha256 == hash);
        let index = match (hit, self.policy) {
            (Some(i), _) => i,
            (None, MismatchPolicy::Strict) => {
                return Err(AgentError::Replay(format!(
                    "prompt hash mismatch: nothing recorded for {hash}"
                )))
            }
            (None, MismatchPolicy::Lenient) => {
                let i = self
                    .used
                    .iter()
                    .position(|u| !*u)
                    .expect("an unused entry remains");
                log::warn!(
                    "prompt hash {hash} not in fixture; replaying entry {}",
                    i + 1
                );
                i
            }
        };
        self.used[index] = true;
        Ok(self.entries[index].response.clone())
    }
}

pub type FixtureSink = Arc<Mutex<Vec<FixtureEntry>>>;

/// Passes calls through to `inner` and records every successful exchange.
pub struct RecordingAgent<A> {
    inner: A,
    sink: FixtureSink,
}

impl<A: Agent> RecordingAgent<A> {
    pub fn new(inner: A, sink: FixtureSink) -> Self {
        Self { inner, sink }
    }
}

impl<A: Agent> Agent for RecordingAgent<A> {
    fn send(&mut self, transcript: &AgentTranscript) -> Result<String, AgentError> {
        let response = self.inner.send(transcript)?;
        self.sink
            .lock()
            .expect("fixture sink poisoned")
            .push(FixtureEntry {
                prompt_sha256: transcript.prompt_sha256(),
                response: response.clone(),
            });
        Ok(response)
    }

    fn retry_delay(&self, attempt: u32) -> Duration {
        self.inner.retry_delay(attempt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{optimize_with_agent, LoopConfig, MockAgent};
    use crate::benchfns::{BenchmarkFunction, FunctionKind};
    use crate::seed;

    fn transcript(tag: &str) -> AgentTranscript {
        let mut t = AgentTranscript::new("sys");
        t.push_harness(tag);
        t
    }

    fn entry(t: &AgentTranscript, r: &str) -> FixtureEntry {
        FixtureEntry {
            prompt_sha256: t.prompt_sha256(),
            response: r.into(),
        }
    }

    #[test]
    fn answers_exactly_n_calls() {
        let t = transcript("a");
        let mut agent =
            ReplayAgent::new(vec![entry(&t, "1"), entry(&t, "2")], MismatchPolicy::Strict);
        assert_eq!(agent.send(&t).unwrap(), "1");
        assert_eq!(agent.send(&t).unwrap(), "2");
        let err = agent.send(&t).unwrap_err();
        assert!(err.to_string().contains("exhausted"));
        assert!(!err.is_retryable());
    }

    #[test]
    fn strict_and_lenient_mismatch() {
        let a = transcript("a");
        let b = transcript("b");
        let mut strict = ReplayAgent::new(vec![entry(&a, "1")], MismatchPolicy::Strict);
        assert!(strict
            .send(&b)
            .unwrap_err()
            .to_string()
            .contains("mismatch"));
        let mut lenient = ReplayAgent::new(vec![entry(&a, "1")], MismatchPolicy::Lenient);
        assert_eq!(lenient.send(&b).unwrap(), "1");
    }

    #[test]
    fn replaying_a_recording_is_bit_identical() {
        let f = BenchmarkFunction::centered(FunctionKind::Rastrigin, 2).unwrap();
        let seeds = [f.eval_point(vec![2.0, -3.0]).unwrap()];
        let cfg = LoopConfig::default();
        let sink = FixtureSink::default();
        let mut recorder = RecordingAgent::new(MockAgent::for_domain(11, f.domain()), sink.clone());
        let live =
            optimize_with_agent(&mut recorder, &f, &seeds, 25, &cfg, &mut seed::rng(5)).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.jsonl");
        save_fixture(&path, &sink.lock().unwrap()).unwrap();
        let entries = load_fixture(&path).unwrap();
        assert_eq!(entries.len(), 25);

        let mut replay = ReplayAgent::new(entries, MismatchPolicy::Strict);
        let again =
            optimize_with_agent(&mut replay, &f, &seeds, 25, &cfg, &mut seed::rng(5)).unwrap();
        assert_eq!(again, live);
        assert_eq!(replay.remaining(), 0);
    }
}
