use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Agent, AgentError, AgentTranscript};

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

/// Where and how to reach a chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEndpointConfig {
    pub base_url: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env_var: String,
    #[serde(rename = "timeout_secs", with = "secs", default = "default_timeout")]
    pub timeout: Duration,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub temperature: f64,
    /// Process-wide ceiling on request rate.
    #[serde(default = "default_rpm")]
    pub requests_per_minute: f64,
}

fn default_timeout() -> Duration {
    Duration::from_secs(60)
}

fn default_retries() -> u32 {
    3
}

fn default_rpm() -> f64 {
    60.0
}

impl AgentEndpointConfig {
    pub fn new(
        base_url: impl Into<String>,
        model_id: impl Into<String>,
        api_key_env_var: impl Into<String>,
    ) -> Self {
        Self {
            base_url: base_url.into(),
            model_id: model_id.into(),
            api_key_env_var: api_key_env_var.into(),
            timeout: default_timeout(),
            max_retries: default_retries(),
            temperature: 0.0,
            requests_per_minute: default_rpm(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.base_url.trim().is_empty() {
            return Err("base_url must not be empty".into());
        }
        if self.model_id.trim().is_empty() {
            return Err("model_id must not be empty".into());
        }
        if self.timeout.is_zero() {
            return Err("timeout must be positive".into());
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(format!(
                "temperature must be a non-negative number, got {}",
                self.temperature
            ));
        }
        if !(self.requests_per_minute.is_finite() && self.requests_per_minute > 0.0) {
            return Err("requests_per_minute must be positive".into());
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

struct Bucket {
    per_minute: f64,
    tokens: f64,
    refilled: Instant,
}

static BUCKET: Mutex<Option<Bucket>> = Mutex::new(None);

/// Blocks until the process-wide token bucket grants one request.
fn acquire(per_minute: f64) {
    loop {
        let wait = {
            let mut guard = BUCKET.lock().unwrap_or_else(|p| p.into_inner());
            let now = Instant::now();
            let bucket = guard.get_or_insert(Bucket {
                per_minute,
                tokens: 1.0,
                refilled: now,
            });
            if bucket.per_minute != per_minute {
                bucket.per_minute = per_minute;
                bucket.tokens = bucket.tokens.min(1.0);
            }
            let rate = bucket.per_minute / 60.0;
            bucket.tokens =
                (bucket.tokens + now.duration_since(bucket.refilled).as_secs_f64() * rate).min(1.0);
            bucket.refilled = now;
            if bucket.tokens >= 1.0 {
                bucket.tokens -= 1.0;
                return;
            }
            Duration::from_secs_f64((1.0 - bucket.tokens) / rate)
        };
        thread::sleep(wait);
    }
}

/// Agent backed by an OpenAI-compatible chat-completion endpoint.
pub struct HttpAgent {
    config: AgentEndpointConfig,
    api_key: String,
    client: ureq::Agent,
}

impl HttpAgent {
    /// Reads the API key from the configured environment variable.
    pub fn new(config: AgentEndpointConfig) -> Result<Self, AgentError> {
        let key = std::env::var(&config.api_key_env_var).map_err(|_| {
            AgentError::Transport(format!(
                "environment variable {} is not set",
                config.api_key_env_var
            ))
        })?;
        Self::with_key(config, key)
    }

    pub fn with_key(
        config: AgentEndpointConfig,
        api_key: impl Into<String>,
    ) -> Result<Self, AgentError> {
        config.validate().map_err(AgentError::Transport)?;
        let client: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            api_key: api_key.into(),
            client,
        })
    }

    pub fn config(&self) -> &AgentEndpointConfig {
        &self.config
    }

    fn request_body(&self, transcript: &AgentTranscript) -> Value {
        let messages: Vec<Value> = transcript
            .messages()
            .iter()
            .map(|m| json!({"role": m.role.chat_role(), "content": m.text}))
            .collect();
        json!({
            "model": self.config.model_id,
            "messages": messages,
            "temperature": self.config.temperature,
        })
    }
}

/// Assistant text of a chat-completion reply.
pub(crate) fn reply_text(body: &Value) -> Option<String> {
    body.pointer("/choices/0/message/content")?
        .as_str()
        .map(str::to_string)
}

impl Agent for HttpAgent {
    fn send(&mut self, transcript: &AgentTranscript) -> Result<String, AgentError> {
        acquire(self.config.requests_per_minute);
        let mut response = self
            .client
            .post(&self.config.endpoint())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(self.request_body(transcript))
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        if status >= 400 {
            let snippet: String = text.chars().take(200).collect();
            return Err(AgentError::Transport(format!("HTTP {status}: {snippet}")));
        }
        let body: Value = serde_json::from_str(&text)
            .map_err(|e| AgentError::Transport(format!("malformed reply: {e}")))?;
        reply_text(&body)
            .ok_or_else(|| AgentError::Transport("reply has no choices[0].message.content".into()))
    }

    fn retry_delay(&self, attempt: u32) -> Duration {
        Duration::from_millis(500u64 << attempt.saturating_sub(1).min(4))
    }
}
