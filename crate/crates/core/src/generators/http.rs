//! Client for OpenAI-compatible `/completions` endpoints that return
//! per-token logprobs.
//!
//! Raw logits are not exposed over this protocol, so each token's
//! `max_logit` is the largest returned log-probability at that position and
//! the observation is tagged [`ScoreSource::LogprobsProxy`].

use super::{GeneratedStep, Generator, GeneratorError, GeneratorSpec, StepRequest, API_KEY_ENV};
use crate::confidence::{ScoreSource, TokenObservation};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::time::Duration;

const MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: usize,
    stop: [&'a str; 1],
    logprobs: u32,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
    /// vLLM extension: the matched stop string, or null when generation hit
    /// end-of-sequence.
    #[serde(default)]
    stop_reason: Option<serde_json::Value>,
    #[serde(default)]
    logprobs: Option<Logprobs>,
}

#[derive(Debug, Deserialize)]
struct Logprobs {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    top_logprobs: Option<Vec<Option<HashMap<String, f64>>>>,
}

#[derive(Debug, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

pub struct HttpGenerator {
    spec: GeneratorSpec,
    client: reqwest::blocking::Client,
    completions_url: String,
    models_url: String,
    api_key: Option<String>,
    backoff: Duration,
}

impl std::fmt::Debug for HttpGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpGenerator")
            .field("spec", &self.spec)
            .field("completions_url", &self.completions_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpGenerator {
    /// Builds a client; the bearer token is read from `STEER_API_KEY`.
    pub fn new(spec: GeneratorSpec) -> Result<Self, GeneratorError> {
        spec.validate()?;
        let base = spec
            .endpoint
            .as_deref()
            .ok_or_else(|| GeneratorError::InvalidSpec("http backend needs an endpoint".into()))?
            .trim_end_matches('/')
            .to_string();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| GeneratorError::Transport(e.to_string()))?;
        Ok(Self {
            completions_url: format!("{base}/completions"),
            models_url: format!("{base}/models"),
            spec,
            client,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            backoff: Duration::from_millis(250),
        })
    }

    /// Base delay before the first retry; doubles on each further attempt.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    fn post_once(&self, body: &CompletionRequest<'_>) -> Result<CompletionResponse, Attempt> {
        let mut req = self.client.post(&self.completions_url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(GeneratorError::Transport(e.to_string())))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(GeneratorError::Transport(e.to_string())))?;
        if !status.is_success() {
            let err = GeneratorError::Status { status: status.as_u16(), body: text };
            return Err(if status.is_server_error() { Attempt::Retry(err) } else { Attempt::Fatal(err) });
        }
        serde_json::from_str(&text).map_err(|e| Attempt::Fatal(GeneratorError::Malformed(e.to_string())))
    }

    fn post(&self, body: &CompletionRequest<'_>) -> Result<CompletionResponse, GeneratorError> {
        let mut delay = self.backoff;
        let mut attempt = 1;
        loop {
            match self.post_once(body) {
                Ok(r) => return Ok(r),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) if attempt >= MAX_ATTEMPTS => return Err(e),
                Err(Attempt::Retry(_)) => {
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }
}

enum Attempt {
    Retry(GeneratorError),
    Fatal(GeneratorError),
}

fn observations(logprobs: Logprobs) -> Result<Vec<TokenObservation>, GeneratorError> {
    if logprobs.tokens.len() != logprobs.token_logprobs.len() {
        return Err(GeneratorError::Malformed("tokens and token_logprobs differ in length".into()));
    }
    let top = logprobs.top_logprobs.unwrap_or_default();
    logprobs
        .tokens
        .into_iter()
        .zip(logprobs.token_logprobs)
        .enumerate()
        .map(|(i, (text, lp))| {
            let sampled = lp.ok_or(GeneratorError::MissingLogprobs)?;
            let best = top
                .get(i)
                .and_then(|m| m.as_ref())
                .map(|m| m.values().copied().fold(sampled, f64::max))
                .unwrap_or(sampled);
            if !best.is_finite() || best > 0.0 {
                return Err(GeneratorError::Malformed(format!("token {i} has logprob {best}")));
            }
            Ok(TokenObservation {
                text,
                max_logit: best,
                max_prob: Some(best.exp()),
                entropy: None,
                source: ScoreSource::LogprobsProxy,
            })
        })
        .collect()
}

impl Generator for HttpGenerator {
    fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    fn generate_step(&self, request: &StepRequest<'_>) -> Result<GeneratedStep, GeneratorError> {
        let body = CompletionRequest {
            model: &self.spec.name,
            prompt: request.prompt,
            temperature: self.spec.temperature,
            max_tokens: self.spec.max_tokens_per_step,
            stop: [&self.spec.stop_sequence],
            logprobs: 1,
        };
        let resp = self.post(&body)?;
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GeneratorError::Malformed("no choices".into()))?;
        let logprobs = choice.logprobs.ok_or(GeneratorError::MissingLogprobs)?;
        let tokens = observations(logprobs)?;
        if tokens.is_empty() {
            return Err(GeneratorError::MissingLogprobs);
        }
        let stopped_on_sequence = matches!(choice.stop_reason, Some(serde_json::Value::String(_)));
        let eos = choice.finish_reason.as_deref() == Some("stop") && !stopped_on_sequence;
        let usage = resp.usage.unwrap_or(Usage { prompt_tokens: 0, completion_tokens: 0 });
        Ok(GeneratedStep {
            text: choice.text,
            completion_tokens: usage.completion_tokens.max(tokens.len() as u64),
            tokens,
            eos,
            prompt_tokens: usage.prompt_tokens,
        })
    }

    fn preflight(&self) -> Result<(), GeneratorError> {
        let mut req = self.client.get(&self.models_url).timeout(Duration::from_secs(10));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        // Any HTTP answer proves the server is reachable.
        req.send().map(|_| ()).map_err(|e| GeneratorError::Transport(e.to_string()))
    }
}
