use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    BackendError, Completion, CompletionBackend, CompletionRequest, FinishReason, TokenLogprob,
};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "MIXPROMPT_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    /// Server root; requests go to `<base_url>/v1/completions`.
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

/// Client for a completions endpoint (`POST /v1/completions`).
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(config: &HttpConfig, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Self {
            agent,
            endpoint: format!("{}/v1/completions", config.base_url.trim_end_matches('/')),
            model: config.model.clone(),
            api_key,
        }
    }

    /// Reads the API key from [`API_KEY_ENV`], if set.
    pub fn from_env(config: &HttpConfig) -> Self {
        Self::new(
            config,
            std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        )
    }
}

/// The JSON body sent for `request`.
pub fn request_body(model: &str, request: &CompletionRequest) -> Value {
    let mut body = json!({
        "model": model,
        "prompt": request.prompt,
        "max_tokens": request.max_tokens,
        "temperature": request.temperature,
        "top_p": request.top_p,
        "frequency_penalty": request.frequency_penalty,
        "stop": if request.stop.is_empty() { Value::Null } else { json!(request.stop) },
        "logprobs": request.logprobs,
        "echo": request.echo,
    });
    if let Some(seed) = request.seed {
        body["seed"] = json!(seed);
    }
    body
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    text: String,
    #[serde(default)]
    logprobs: Option<WireLogprobs>,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireLogprobs {
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    top_logprobs: Option<Vec<Option<BTreeMap<String, f64>>>>,
}

/// Decodes a successful response body.
pub fn parse_response(body: &str) -> Result<Completion, BackendError> {
    let wire: WireResponse =
        serde_json::from_str(body).map_err(|e| BackendError::Protocol(e.to_string()))?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::Protocol("response has no choices".into()))?;
    let tokens = match choice.logprobs {
        None => Vec::new(),
        Some(lp) => {
            if lp.token_logprobs.len() != lp.tokens.len() {
                return Err(BackendError::Protocol(
                    "tokens and token_logprobs differ in length".into(),
                ));
            }
            let mut top = lp.top_logprobs.unwrap_or_default().into_iter();
            lp.tokens
                .into_iter()
                .zip(lp.token_logprobs)
                .map(|(token, logprob)| TokenLogprob {
                    token,
                    // The first echoed token has no conditional likelihood.
                    logprob: logprob.unwrap_or(0.0),
                    top_alternatives: top.next().flatten().unwrap_or_default(),
                })
                .collect()
        }
    };
    let finish_reason = match choice.finish_reason.as_deref() {
        Some("stop") => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        _ => FinishReason::Other,
    };
    Ok(Completion {
        text: choice.text,
        tokens,
        finish_reason,
    })
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| v["error"]["message"].as_str().map(str::to_string))
        .unwrap_or_else(|| body.chars().take(200).collect())
}

/// Maps a non-success HTTP status onto the error taxonomy.
pub fn status_error(status: u16, body: &str) -> BackendError {
    let message = error_message(body);
    match status {
        429 => BackendError::RateLimited { status, message },
        401 | 403 => BackendError::Auth { status, message },
        408 => BackendError::Transport(format!("HTTP 408: {message}")),
        500..=599 => BackendError::Server { status, message },
        _ => BackendError::InvalidRequest { status, message },
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let mut req = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = req
            .send_json(request_body(&self.model, request))
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(status_error(status, &body));
        }
        parse_response(&body)
    }

    fn model_name(&self) -> &str {
        &self.model
    }
}
