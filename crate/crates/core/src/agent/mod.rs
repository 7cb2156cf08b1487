//! Conversational optimizer protocol.
//!
//! The harness opens with a system prompt, then alternates step messages and agent
//! replies. Replies carry a proposal line `x: ...` and an optional `Explanation:`.
//! Any [`Agent`] can sit on the other end: a chat-completion endpoint ([`HttpAgent`]),
//! a deterministic heuristic ([`MockAgent`]), or a recorded session ([`ReplayAgent`]).

mod http;
mod mock;
mod optimize;
mod parse;
mod prompt;
mod replay;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{AgentEndpointConfig, HttpAgent};
pub use mock::MockAgent;
pub(crate) use optimize::send_with_retries;
pub use optimize::{optimize_with_agent, AgentFactory, AgentMethod, AgentRun, LoopConfig};
pub use parse::{parse_proposal, Proposal, ProposalError};
pub use prompt::{
    build_numopt_system_prompt, build_step_message, format_reminder, parse_seed_line,
    render_seed_line, FALLBACK_MARKER,
};
pub use replay::{
    load_fixture, save_fixture, FixtureEntry, FixtureSink, MismatchPolicy, RecordingAgent,
    ReplayAgent,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    Harness,
    Agent,
}

impl Role {
    /// Chat-completion role name.
    pub fn chat_role(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::Harness => "user",
            Role::Agent => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentMessage {
    pub role: Role,
    pub text: String,
}

/// Placeholder stored when an agent answers with nothing.
pub const EMPTY_REPLY: &str = "<empty reply>";

#[derive(Debug, Error, PartialEq)]
pub enum TranscriptError {
    #[error("transcript must start with a system message")]
    MissingSystem,
    #[error("message {index}: expected {expected:?}, found {found:?}")]
    Alternation {
        index: usize,
        expected: Role,
        found: Role,
    },
    #[error("message {0} is empty")]
    Empty(usize),
}

/// System prompt followed by alternating harness / agent messages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTranscript {
    messages: Vec<AgentMessage>,
}

impl AgentTranscript {
    pub fn new(system: impl Into<String>) -> Self {
        let text = system.into();
        assert!(!text.is_empty(), "system prompt must not be empty");
        Self {
            messages: vec![AgentMessage {
                role: Role::System,
                text,
            }],
        }
    }

    pub fn messages(&self) -> &[AgentMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Role the next message must have.
    pub fn expects(&self) -> Role {
        match self.messages.last().map(|m| m.role) {
            Some(Role::Harness) => Role::Agent,
            _ => Role::Harness,
        }
    }

    fn push(&mut self, role: Role, text: String) {
        assert_eq!(self.expects(), role, "transcript roles must alternate");
        self.messages.push(AgentMessage { role, text });
    }

    pub fn push_harness(&mut self, text: impl Into<String>) {
        let text = text.into();
        assert!(!text.is_empty(), "harness message must not be empty");
        self.push(Role::Harness, text);
    }

    /// Records an agent reply. Empty replies are stored as [`EMPTY_REPLY`].
    pub fn push_agent(&mut self, text: impl Into<String>) {
        let text = text.into();
        let text = if text.trim().is_empty() {
            EMPTY_REPLY.to_string()
        } else {
            text
        };
        self.push(Role::Agent, text);
    }

    pub fn last(&self) -> Option<&AgentMessage> {
        self.messages.last()
    }

    /// Checks the invariants of a transcript built elsewhere (e.g. deserialized).
    pub fn validate(&self) -> Result<(), TranscriptError> {
        let first = self
            .messages
            .first()
            .ok_or(TranscriptError::MissingSystem)?;
        if first.role != Role::System {
            return Err(TranscriptError::MissingSystem);
        }
        for (i, m) in self.messages.iter().enumerate() {
            if m.text.is_empty() {
                return Err(TranscriptError::Empty(i));
            }
            if i == 0 {
                continue;
            }
            let expected = if i % 2 == 1 {
                Role::Harness
            } else {
                Role::Agent
            };
            if m.role != expected {
                return Err(TranscriptError::Alternation {
                    index: i,
                    expected,
                    found: m.role,
                });
            }
        }
        Ok(())
    }

    /// SHA-256 (hex) of the canonical JSON encoding of the messages.
    pub fn prompt_sha256(&self) -> String {
        let canonical = serde_json::to_string(&self.messages).expect("messages serialize");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Text of the latest harness message.
    pub fn last_harness(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::Harness)
            .map(|m| m.text.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("replay error: {0}")]
    Replay(String),
}

impl AgentError {
    /// Transport errors are worth retrying; replay errors are not.
    pub fn is_retryable(&self) -> bool {
        matches!(self, AgentError::Transport(_))
    }
}

/// The other side of the conversation.
pub trait Agent: Send {
    /// Answers the latest harness message given the whole transcript.
    fn send(&mut self, transcript: &AgentTranscript) -> Result<String, AgentError>;

    /// Delay before retry number `attempt` (1-based) after a transport error.
    fn retry_delay(&self, _attempt: u32) -> Duration {
        Duration::ZERO
    }
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn send(&mut self, transcript: &AgentTranscript) -> Result<String, AgentError> {
        (**self).send(transcript)
    }

    fn retry_delay(&self, attempt: u32) -> Duration {
        (**self).retry_delay(attempt)
    }
}

impl fmt::Display for AgentTranscript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.messages {
            writeln!(f, "[{}]\n{}\n", m.role.chat_role(), m.text)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternation_enforced_and_validated() {
        let mut t = AgentTranscript::new("sys");
        assert_eq!(t.expects(), Role::Harness);
        t.push_harness("step");
        assert_eq!(t.expects(), Role::Agent);
        t.push_agent("");
        assert_eq!(t.last().unwrap().text, EMPTY_REPLY);
        assert!(t.validate().is_ok());
        assert_eq!(t.last_harness(), Some("step"));
    }

    #[test]
    #[should_panic(expected = "alternate")]
    fn double_harness_panics() {
        let mut t = AgentTranscript::new("sys");
        t.push_harness("a");
        t.push_harness("b");
    }

    #[test]
    fn validate_catches_bad_json_transcripts() {
        let bad: AgentTranscript = serde_json::from_str(
            r#"{"messages":[{"role":"system","text":"s"},{"role":"agent","text":"x"}]}"#,
        )
        .unwrap();
        assert!(matches!(
            bad.validate(),
            Err(TranscriptError::Alternation { index: 1, .. })
        ));
        let none: AgentTranscript = serde_json::from_str(r#"{"messages":[]}"#).unwrap();
        assert_eq!(none.validate(), Err(TranscriptError::MissingSystem));
    }

    #[test]
    fn hash_depends_on_content() {
        let mut a = AgentTranscript::new("sys");
        a.push_harness("one");
        let mut b = AgentTranscript::new("sys");
        b.push_harness("two");
        assert_ne!(a.prompt_sha256(), b.prompt_sha256());
        assert_eq!(a.prompt_sha256(), a.clone().prompt_sha256());
        assert_eq!(a.prompt_sha256().len(), 64);
    }
}
