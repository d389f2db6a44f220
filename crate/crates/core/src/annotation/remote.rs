use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::parse::{parse_critical, parse_reply};
use super::prompt::{render_prompt, utterance_label, AnnotationRequest, ContextMode, Instruction};
use super::{AnnotationError, AnnotationRecord, Annotator};

/// The only place the endpoint secret is read from.
pub const API_KEY_ENV: &str = "ANNOTATOR_API_KEY";

const REPROMPT: &str = "\n\nYour previous reply could not be parsed. Reply with only the JSON object described in the formatting instructions.";

/// Connection settings. Deliberately has no credential field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    /// Requests per second across all threads; 0 disables the limit.
    #[serde(default)]
    pub rate_limit_per_sec: f64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Transport retries after the first attempt.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First backoff; doubles per retry.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub temperature: f64,
}

fn default_in_flight() -> usize {
    4
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}
fn default_timeout() -> u64 {
    60
}

impl RemoteConfig {
    /// Identifier used in request fingerprints.
    pub fn annotator_id(&self) -> String {
        format!("remote/{}@{}", self.model, self.endpoint)
    }

    pub fn new(endpoint: &str, model: &str) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            rate_limit_per_sec: 0.0,
            max_in_flight: default_in_flight(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            timeout_secs: default_timeout(),
            temperature: 0.0,
        }
    }
}

/// Chat-completion annotator.
pub struct RemoteAnnotator {
    config: RemoteConfig,
    api_key: String,
    agent: ureq::Agent,
    next_slot: Mutex<Option<Instant>>,
    calls: AtomicUsize,
}

impl RemoteAnnotator {
    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env(config: RemoteConfig) -> Result<Self, AnnotationError> {
        let key = std::env::var(API_KEY_ENV).map_err(|_| AnnotationError::MissingCredential(API_KEY_ENV))?;
        Ok(Self::with_api_key(config, key))
    }

    pub fn with_api_key(config: RemoteConfig, api_key: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            api_key,
            agent,
            next_slot: Mutex::new(None),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// HTTP requests sent so far, retries included.
    pub fn network_calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn wait_for_slot(&self) {
        if self.config.rate_limit_per_sec <= 0.0 {
            return;
        }
        let interval = Duration::from_secs_f64(1.0 / self.config.rate_limit_per_sec);
        let wait = {
            let mut slot = self.next_slot.lock().expect("rate limiter lock");
            let now = Instant::now();
            let start = slot.map_or(now, |s| s.max(now));
            *slot = Some(start + interval);
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    fn send_once(&self, prompt: &str) -> Result<String, (bool, String)> {
        self.wait_for_slot();
        self.calls.fetch_add(1, Ordering::Relaxed);
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| (true, e.to_string()))?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| (true, e.to_string()))?;
        if !(200..300).contains(&status) {
            let retryable = status == 429 || status >= 500;
            return Err((retryable, format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
        }
        Ok(text)
    }

    /// One completion, retrying transport failures with exponential backoff.
    /// Returns the assistant message text.
    pub fn complete(&self, prompt: &str) -> Result<String, AnnotationError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.send_once(prompt) {
                Ok(body) => return message_content(&body),
                Err((retryable, message)) => {
                    if !retryable || attempts > self.config.max_retries {
                        return Err(AnnotationError::Transport { attempts, message });
                    }
                    let backoff = self.config.backoff_ms.saturating_mul(1 << (attempts - 1).min(16));
                    std::thread::sleep(Duration::from_millis(backoff));
                }
            }
        }
    }

    /// Sends `prompt`, parses with `parse`, and re-prompts once if the reply
    /// is unparseable. Returns the parsed value and every raw reply.
    fn ask<T>(
        &self,
        prompt: &str,
        parse: impl Fn(&str) -> Result<T, AnnotationError>,
    ) -> Result<(T, String), AnnotationError> {
        let reply = self.complete(prompt)?;
        match parse(&reply) {
            Err(AnnotationError::UnparseableReply { .. }) => {
                let retry = self.complete(&format!("{prompt}{REPROMPT}"))?;
                parse(&retry).map(|v| (v, retry))
            }
            other => other.map(|v| (v, reply)),
        }
    }

    fn annotate_offline(&self, request: &AnnotationRequest) -> Result<(Vec<i64>, Option<usize>, String), AnnotationError> {
        let prompt = render_prompt(request)?;
        match request.instruction {
            Instruction::Direct => {
                let keys = request.expected_keys();
                let (scores, raw) = self.ask(&prompt, |r| parse_reply(r, &keys, request.bounds))?;
                Ok((scores, None, raw))
            }
            Instruction::Singular => {
                let name = request.display_name().to_string();
                let candidates: Vec<(usize, String)> =
                    request.agent_turns().into_iter().map(|t| (t, utterance_label(t, &name))).collect();
                let (critical, raw) = self.ask(&prompt, |r| parse_critical(r, &candidates))?;
                Ok((Vec::new(), Some(critical), raw))
            }
        }
    }
}

/// `choices[0].message.content` of a chat-completion response body.
fn message_content(body: &str) -> Result<String, AnnotationError> {
    let value: Value = serde_json::from_str(body).map_err(|e| AnnotationError::UnparseableReply {
        reason: format!("response body is not JSON: {e}"),
        raw_reply: body.to_string(),
    })?;
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| AnnotationError::UnparseableReply {
            reason: "response has no choices[0].message.content".into(),
            raw_reply: body.to_string(),
        })
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl Annotator for RemoteAnnotator {
    fn annotator_id(&self) -> String {
        self.config.annotator_id()
    }

    fn max_in_flight(&self) -> Option<usize> {
        Some(self.config.max_in_flight.max(1))
    }

    fn annotate(&self, request: &AnnotationRequest) -> Result<AnnotationRecord, AnnotationError> {
        request.validate()?;
        let mut record = AnnotationRecord::skeleton(request, &self.annotator_id());
        match (request.context, request.instruction) {
            (ContextMode::Offline, _) => {
                let (scores, critical, raw) = self.annotate_offline(request)?;
                record.raw_reply = raw;
                match critical {
                    Some(c) => record.one_hot(c),
                    None => record.scores = scores,
                }
            }
            (ContextMode::Online, Instruction::Direct) => {
                // One prefix request per utterance; its last score is kept.
                let mut replies = Vec::new();
                for turn in request.agent_turns() {
                    let (scores, _, raw) = self.annotate_offline(&request.truncated(turn))?;
                    record.scores.push(*scores.last().expect("prefix ends with an agent utterance"));
                    replies.push(raw);
                }
                record.raw_reply = serde_json::to_string(&replies).expect("strings serialize");
            }
            (ContextMode::Online, Instruction::Singular) => {
                return Err(AnnotationError::Unsupported(
                    "singular attribution needs the complete episode".into(),
                ))
            }
        }
        record.timestamp = unix_now();
        Ok(record)
    }
}
