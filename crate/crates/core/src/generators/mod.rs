//! Step generators: the interface the engine drives, plus a scripted
//! simulator and an HTTP client for OpenAI-compatible completion servers.

mod http;
mod scenario;
mod scripted;
pub mod stub;

pub use http::HttpGenerator;
pub use scenario::{
    synth_scenario, Component, ComponentSpec, ScriptQuestion, ScriptStep, ScriptToken, ScriptedScenario, StepVariant,
    SynthSpec, SCENARIO_SCHEMA_VERSION,
};
pub use scripted::ScriptedGenerator;

use crate::confidence::TokenObservation;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STEP_SEPARATOR: &str = "\n\n";
pub const API_KEY_ENV: &str = "STEER_API_KEY";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("response carries no logprobs; refusing to invent confidences")]
    MissingLogprobs,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("script for question {question} has no step {step}")]
    ScriptExhausted { question: String, step: usize },
    #[error("scenario has no question {0}")]
    UnknownQuestion(String),
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Scripted,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub name: String,
    /// Model parameter count, used for FLOPs accounting.
    pub param_count: u64,
    pub backend: Backend,
    /// Base URL of the server, e.g. `http://localhost:8000/v1` (http only).
    pub endpoint: Option<String>,
    pub temperature: f64,
    pub stop_sequence: String,
    pub max_tokens_per_step: usize,
}

impl GeneratorSpec {
    pub fn scripted(name: impl Into<String>, param_count: u64) -> Self {
        Self {
            name: name.into(),
            param_count,
            backend: Backend::Scripted,
            endpoint: None,
            temperature: 0.7,
            stop_sequence: STEP_SEPARATOR.to_string(),
            max_tokens_per_step: 512,
        }
    }

    pub fn http(name: impl Into<String>, param_count: u64, endpoint: impl Into<String>) -> Self {
        Self {
            backend: Backend::Http,
            endpoint: Some(endpoint.into()),
            ..Self::scripted(name, param_count)
        }
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.param_count == 0 {
            return Err(GeneratorError::InvalidSpec(format!("{}: param_count must be positive", self.name)));
        }
        if self.max_tokens_per_step == 0 {
            return Err(GeneratorError::InvalidSpec(format!("{}: max_tokens_per_step must be positive", self.name)));
        }
        if !(self.temperature >= 0.0) {
            return Err(GeneratorError::InvalidSpec(format!("{}: temperature must be >= 0", self.name)));
        }
        if self.stop_sequence.is_empty() {
            return Err(GeneratorError::InvalidSpec(format!("{}: stop_sequence is empty", self.name)));
        }
        match (self.backend, &self.endpoint) {
            (Backend::Http, None) => Err(GeneratorError::InvalidSpec(format!("{}: http backend needs an endpoint", self.name))),
            (Backend::Scripted, Some(_)) => Err(GeneratorError::InvalidSpec(format!(
                "{}: endpoint is only valid for the http backend",
                self.name
            ))),
            _ => Ok(()),
        }
    }
}

/// One generation call: continue `prompt` by one reasoning step.
#[derive(Debug, Clone, Copy)]
pub struct StepRequest<'a> {
    pub question_id: &'a str,
    pub step_index: usize,
    pub prompt: &'a str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedStep {
    pub text: String,
    pub tokens: Vec<TokenObservation>,
    /// The generator reached end-of-sequence.
    pub eos: bool,
    /// Tokens actually produced (and paid for).
    pub completion_tokens: u64,
    pub prompt_tokens: u64,
}

pub trait Generator: Send + Sync {
    fn spec(&self) -> &GeneratorSpec;

    fn generate_step(&self, request: &StepRequest<'_>) -> Result<GeneratedStep, GeneratorError>;

    /// Cheap reachability check run before any trace starts.
    fn preflight(&self) -> Result<(), GeneratorError> {
        Ok(())
    }
}
