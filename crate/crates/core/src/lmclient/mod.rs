//! Completion backends with token log-likelihoods.
//!
//! [`CompletionBackend`] is the raw transport: one request in, one completion out.
//! [`LmClient`] wraps a backend with the retry policy, client-side stop handling
//! and label-token scoring.

mod http;
mod mock;

pub use http::{HttpBackend, HttpConfig, API_KEY_ENV};
pub use mock::{mock_tokenize, MockBackend, MockConfig};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sampling parameters for one completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub max_tokens: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub stop: Vec<String>,
    /// Number of top alternatives to return per token; 0 disables them.
    pub logprob_top_k: usize,
    /// Sampling seed forwarded to backends that accept one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_tokens: 80,
            temperature: 1.0,
            top_p: 1.0,
            frequency_penalty: 0.02,
            stop: Vec::new(),
            logprob_top_k: 0,
            seed: None,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_tokens < 1 {
            return Err("max_tokens must be at least 1".into());
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            ));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if !self.frequency_penalty.is_finite() {
            return Err("frequency_penalty must be finite".into());
        }
        Ok(())
    }
}

/// A request as it goes over the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub stop: Vec<String>,
    pub logprobs: usize,
    pub echo: bool,
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, params: &GenerationParams) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens: params.max_tokens,
            temperature: params.temperature,
            top_p: params.top_p,
            frequency_penalty: params.frequency_penalty,
            stop: params.stop.clone(),
            logprobs: params.logprob_top_k,
            echo: false,
            seed: params.seed,
        }
    }

    /// Scores `prompt` itself: no generation, prompt tokens echoed with logprobs.
    pub fn echo_scoring(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens: 0,
            temperature: 1.0,
            top_p: 1.0,
            frequency_penalty: 0.0,
            stop: Vec::new(),
            logprobs: 0,
            echo: true,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
    pub top_alternatives: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub tokens: Vec<TokenLogprob>,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("rate limited (HTTP {status}): {message}")]
    RateLimited { status: u16, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server error (HTTP {status}): {message}")]
    Server { status: u16, message: String },
    #[error("authentication failed (HTTP {status}): {message}")]
    Auth { status: u16, message: String },
    #[error("request rejected (HTTP {status}): {message}")]
    InvalidRequest { status: u16, message: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("mock backend: {0}")]
    Mock(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::RateLimited { .. }
                | BackendError::Transport(_)
                | BackendError::Server { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("label candidates must be non-empty and distinct")]
    InvalidCandidates,
    #[error("label token {0:?} spans more than one backend token")]
    MultiTokenVerbalizer(String),
    #[error("no score available for {0:?}")]
    Missing(Vec<String>),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// A completions endpoint.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError>;

    fn model_name(&self) -> &str;

    /// Whether `echo` scoring requests are supported.
    fn supports_echo(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_attempts: 1,
            ..Self::default()
        }
    }

    /// Delay before retry number `retry` (0-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let ms = self.initial_backoff_ms as f64 * self.multiplier.powi(retry as i32);
        Duration::from_millis(ms.min(self.max_backoff_ms as f64) as u64)
    }
}

/// Backend plus retry policy and request accounting. Safe to share across threads.
pub struct LmClient {
    backend: Arc<dyn CompletionBackend>,
    retry: RetryPolicy,
    requests: AtomicU64,
}

impl LmClient {
    pub fn new(backend: Arc<dyn CompletionBackend>, retry: RetryPolicy) -> Self {
        Self {
            backend,
            retry,
            requests: AtomicU64::new(0),
        }
    }

    pub fn model_name(&self) -> &str {
        self.backend.model_name()
    }

    /// Backend calls issued so far, retries included.
    pub fn requests_made(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn send(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let mut retry = 0;
        loop {
            self.requests.fetch_add(1, Ordering::Relaxed);
            match self.backend.complete(request) {
                Ok(c) => return Ok(c),
                Err(e) if e.is_retryable() && retry + 1 < self.retry.max_attempts => {
                    let wait = self.retry.backoff(retry);
                    log::warn!("{e}; retrying in {wait:?}");
                    std::thread::sleep(wait);
                    retry += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Generates a continuation. The returned text never contains a stop sequence.
    pub fn complete(
        &self,
        prompt: &str,
        params: &GenerationParams,
    ) -> Result<Completion, BackendError> {
        let completion = self.send(&CompletionRequest::new(prompt, params))?;
        Ok(apply_stops(completion, &params.stop))
    }

    /// Log-likelihood of each candidate as the next token after `context`.
    ///
    /// Reads the top alternatives of a one-token completion; candidates absent
    /// from them are scored individually with an echo request.
    pub fn score_label_tokens(
        &self,
        context: &str,
        candidates: &[String],
    ) -> Result<BTreeMap<String, f64>, ScoreError> {
        if candidates.is_empty()
            || candidates
                .iter()
                .enumerate()
                .any(|(i, c)| c.is_empty() || candidates[..i].contains(c))
        {
            return Err(ScoreError::InvalidCandidates);
        }
        let params = GenerationParams {
            max_tokens: 1,
            frequency_penalty: 0.0,
            logprob_top_k: candidates.len(),
            ..GenerationParams::default()
        };
        let completion = self.send(&CompletionRequest::new(context, &params))?;
        let alternatives = completion.tokens.first().map(|t| &t.top_alternatives);

        let mut scores = BTreeMap::new();
        let mut missing = Vec::new();
        for candidate in candidates {
            let matched: Vec<f64> = alternatives
                .into_iter()
                .flatten()
                .filter(|(tok, _)| tok.trim() == candidate)
                .map(|(_, &lp)| lp)
                .collect();
            if matched.is_empty() {
                missing.push(candidate.clone());
            } else {
                scores.insert(candidate.clone(), log_sum_exp(&matched));
            }
        }
        if missing.is_empty() {
            return Ok(scores);
        }
        if !self.backend.supports_echo() {
            return Err(ScoreError::Missing(missing));
        }
        for candidate in missing {
            let echoed = self.send(&CompletionRequest::echo_scoring(format!(
                "{context}{candidate}"
            )))?;
            let lp = tail_logprob(&echoed.tokens, &candidate)?;
            scores.insert(candidate, lp);
        }
        Ok(scores)
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-likelihood of the echoed tokens that spell `candidate` at the end of the
/// prompt. A leading space merged into the candidate's token is tolerated.
fn tail_logprob(tokens: &[TokenLogprob], candidate: &str) -> Result<f64, ScoreError> {
    let mut tail = String::new();
    let mut used = 0;
    for tok in tokens.iter().rev() {
        tail.insert_str(0, &tok.token);
        used += 1;
        if tail.trim_start().len() >= candidate.len() {
            break;
        }
    }
    if !tail.trim_start().ends_with(candidate) {
        return Err(ScoreError::Missing(vec![candidate.to_string()]));
    }
    if used > 1 {
        return Err(ScoreError::MultiTokenVerbalizer(candidate.to_string()));
    }
    Ok(tokens[tokens.len() - 1].logprob)
}

/// Cuts the completion at the earliest stop sequence.
fn apply_stops(mut completion: Completion, stops: &[String]) -> Completion {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| completion.text.find(s.as_str()))
        .min();
    let Some(cut) = cut else {
        return completion;
    };
    completion.text.truncate(cut);
    let mut len = 0;
    let keep = completion
        .tokens
        .iter()
        .take_while(|t| {
            len += t.token.len();
            len <= cut
        })
        .count();
    completion.tokens.truncate(keep);
    completion.finish_reason = FinishReason::Stop;
    completion
}
