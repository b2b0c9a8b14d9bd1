//! Context embedding: ten LLM-estimated percentiles describing a task's
//! free-form context text, each normalized to `[0, 1]`.
//!
//! One prompt is issued per query variable. Replies are cached per
//! `(context, variable)` in a JSON-lines file so embeddings are reproducible
//! and offline runs need no network. [`stub_embedder`] provides a
//! deterministic hash-based stand-in for tests and dry runs.

mod cache;

pub use cache::{CacheRecord, EmbeddingCache};

use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Query variables, in embedding order.
pub const CONTEXT_QUERIES: [&str; CONTEXT_DIM] = [
    "the urgency of the task",
    "the importance of the task",
    "the risk involved in the task",
    "the distance the robot should keep to humans during the task",
    "the distance the robot should keep to objects during the task",
    "the speed with which the robot should move",
    "the importance of comfort versus efficiency in the task",
    "to what extent bumping into a human would be justified",
    "to what extent bumping into an object would be justified",
    "the importance of moving in a predictable way",
];

/// Short names for the query variables, used in CSV headers and reports.
pub const CONTEXT_NAMES: [&str; CONTEXT_DIM] = [
    "ctx_urgency",
    "ctx_importance",
    "ctx_risk",
    "ctx_distance_humans",
    "ctx_distance_objects",
    "ctx_speed",
    "ctx_comfort_vs_efficiency",
    "ctx_bump_human_justified",
    "ctx_bump_object_justified",
    "ctx_predictability",
];

pub const CONTEXT_DIM: usize = 10;

const PROMPT_TEMPLATE: &str = "I will give a task description for a robot. I want you to reply with the percentile \
(a number from 0 to 100) that corresponds to <VARIABLE> in comparison with that of other tasks you could imagine. \
I don't want an explanation, only the percentile. Take your time to think, but respond with a single integer from 0 to 100.";

#[derive(Debug, thiserror::Error)]
pub enum ContextError {
    #[error("unknown context variable {0:?}")]
    UnknownVariable(String),
    #[error("malformed reply for {variable:?}: {reply:?}")]
    MalformedReply { variable: String, reply: String },
    #[error("LLM client failed after {attempts} attempts: {message}")]
    Client { attempts: u32, message: String },
    #[error("context cache is missing {0:?} and no client is available")]
    NotCached(String),
    #[error("context cache I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// A failed request from an [`LlmClient`].
#[derive(Debug, Clone, thiserror::Error)]
#[error("{0}")]
pub struct ClientError(pub String);

/// Anything that turns one prompt into one reply.
pub trait LlmClient: Sync {
    fn complete(&self, prompt: &str) -> Result<String, ClientError>;
}

impl<F> LlmClient for F
where
    F: Fn(&str) -> Result<String, ClientError> + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        self(prompt)
    }
}

/// `c_t`: ten values in `[0, 1]`, ordered as [`CONTEXT_QUERIES`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextVector(pub [f64; CONTEXT_DIM]);

impl ContextVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Value by query text or short name.
    pub fn get(&self, variable: &str) -> Option<f64> {
        CONTEXT_QUERIES
            .iter()
            .position(|q| *q == variable)
            .or_else(|| CONTEXT_NAMES.iter().position(|n| *n == variable))
            .map(|i| self.0[i])
    }
}

/// The percentile prompt for one query variable.
pub fn build_prompt(variable: &str) -> Result<String, ContextError> {
    if !CONTEXT_QUERIES.contains(&variable) {
        return Err(ContextError::UnknownVariable(variable.to_string()));
    }
    Ok(PROMPT_TEMPLATE.replace("<VARIABLE>", variable))
}

/// The full message sent to the model: the prompt followed by the task text.
pub fn build_message(variable: &str, context: &str) -> Result<String, ContextError> {
    Ok(format!("{}\n\nTask description: {}", build_prompt(variable)?, context.trim()))
}

fn integers() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").expect("static regex"))
}

/// Parses a reply holding exactly one integer in `0..=100` and returns it.
pub fn parse_percentile_int(reply: &str) -> Option<u8> {
    let mut found = integers().find_iter(reply);
    let only = found.next()?;
    if found.next().is_some() {
        return None;
    }
    let v: i64 = only.as_str().parse().ok()?;
    u8::try_from(v).ok().filter(|v| *v <= 100)
}

/// Reply text → value in `[0, 1]`.
pub fn parse_percentile(reply: &str) -> Result<f64, ContextError> {
    parse_percentile_int(reply)
        .map(|p| p as f64 / 100.0)
        .ok_or_else(|| ContextError::MalformedReply { variable: String::new(), reply: reply.to_string() })
}

/// Retry policy for live queries: `max_attempts` tries with exponential
/// backoff starting at `base_delay`, capped at `max_delay`.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 4, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(8) }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self { max_attempts, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1 << attempt.min(16)).min(self.max_delay)
    }
}

fn query_one(client: &dyn LlmClient, variable: &str, context: &str, retry: &RetryPolicy) -> Result<u8, ContextError> {
    let message = build_message(variable, context)?;
    let mut last_reply = None;
    let mut last_error = String::new();
    for attempt in 0..retry.max_attempts.max(1) {
        if attempt > 0 {
            std::thread::sleep(retry.delay(attempt - 1));
        }
        match client.complete(&message) {
            Ok(reply) => match parse_percentile_int(&reply) {
                Some(p) => return Ok(p),
                None => last_reply = Some(reply),
            },
            Err(e) => last_error = e.0,
        }
    }
    match last_reply {
        Some(reply) => Err(ContextError::MalformedReply { variable: variable.to_string(), reply }),
        None => Err(ContextError::Client { attempts: retry.max_attempts.max(1), message: last_error }),
    }
}

/// Embeds a context text. Cached answers are used first; missing ones are
/// requested concurrently from `client` and appended to the cache. With no
/// client, any missing entry is an error.
pub fn embed_context(
    text: &str,
    client: Option<&dyn LlmClient>,
    cache: &EmbeddingCache,
    retry: &RetryPolicy,
) -> Result<ContextVector, ContextError> {
    let mut percentiles = [None; CONTEXT_DIM];
    for (slot, q) in percentiles.iter_mut().zip(CONTEXT_QUERIES) {
        *slot = cache.get(text, q);
    }
    let missing: Vec<usize> = (0..CONTEXT_DIM).filter(|&i| percentiles[i].is_none()).collect();
    if !missing.is_empty() {
        let client = client.ok_or_else(|| ContextError::NotCached(text.to_string()))?;
        let answers: Vec<(usize, Result<u8, ContextError>)> = std::thread::scope(|s| {
            let handles: Vec<_> = missing
                .iter()
                .map(|&i| s.spawn(move || (i, query_one(client, CONTEXT_QUERIES[i], text, retry))))
                .collect();
            handles.into_iter().map(|h| h.join().expect("query thread panicked")).collect()
        });
        for (i, answer) in answers {
            let p = answer?;
            cache.insert(text, CONTEXT_QUERIES[i], p)?;
            percentiles[i] = Some(p);
        }
    }
    Ok(ContextVector(percentiles.map(|p| p.expect("all filled") as f64 / 100.0)))
}

/// Deterministic offline embedding: each value is the top 53 bits of
/// `SHA-256(text ‖ 0x00 ‖ query)` scaled to `[0, 1]`.
pub fn stub_embedder(text: &str) -> ContextVector {
    let mut out = [0.0; CONTEXT_DIM];
    for (v, q) in out.iter_mut().zip(CONTEXT_QUERIES) {
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        h.update([0u8]);
        h.update(q.as_bytes());
        let digest = h.finalize();
        let word = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
        *v = (word >> 11) as f64 / ((1u64 << 53) - 1) as f64;
    }
    ContextVector(out)
}
