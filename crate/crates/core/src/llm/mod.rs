//! Model backends and the parser for their output.
//!
//! A backend turns a [`CompletionRequest`] into raw text. Two are provided:
//! a [`ScriptedBackend`] that replays recorded replies for hermetic runs and
//! an [`HttpBackend`] that calls a chat-completions endpoint.

mod http;
mod parse;
mod scripted;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpBackend;
pub use parse::{parse_agent_output, render_steps, AgentStep, ParseError, StepKind};
pub use scripted::{prompt_digest, ScriptEntry, ScriptedBackend, DIGEST_MARKER};

/// Sampling parameters shared by every request of a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingParams {
    pub max_new_tokens: u32,
    pub top_p: f64,
    pub temperature: f64,
    pub repetition_penalty: f64,
    pub stop_sequences: Vec<String>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            max_new_tokens: 300,
            top_p: 0.85,
            temperature: 0.5,
            repetition_penalty: 1.1,
            stop_sequences: Vec::new(),
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::InvalidRequest(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_new_tokens must be positive".into(),
            ));
        }
        if !self.repetition_penalty.is_finite() || self.repetition_penalty <= 0.0 {
            return Err(BackendError::InvalidRequest(format!(
                "repetition_penalty must be positive, got {}",
                self.repetition_penalty
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    #[serde(flatten)]
    pub params: SamplingParams,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self::with_params(prompt, SamplingParams::default())
    }

    pub fn with_params(prompt: impl Into<String>, params: SamplingParams) -> Self {
        Self {
            prompt: prompt.into(),
            params,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        self.params.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum BackendError {
    #[error("script error: {0}")]
    Script(String),
    #[error("backend configuration error: {0}")]
    Configuration(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend error after {attempts} attempt(s): {message}")]
    Remote {
        message: String,
        status: Option<u16>,
        attempts: u32,
    },
}

impl BackendError {
    pub fn code(&self) -> &'static str {
        match self {
            BackendError::Script(_) => "script_error",
            BackendError::Configuration(_) => "configuration_error",
            BackendError::InvalidRequest(_) => "invalid_request",
            BackendError::Remote { .. } => "backend_error",
        }
    }

    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            BackendError::Configuration(_) | BackendError::InvalidRequest(_)
        )
    }
}

/// The agent's model. Implementations must be safe to share across threads.
pub trait LanguageModel: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;

    /// A handle for an independent conversation. Stateless backends return a
    /// clone; the scripted backend returns a fresh cursor over the same script.
    fn fork(&self) -> Arc<dyn LanguageModel>;

    fn name(&self) -> &str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    #[serde(alias = "http")]
    #[value(name = "http", alias = "http_chat", alias = "http-chat")]
    HttpChat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    /// Script file for the scripted backend.
    pub script: Option<PathBuf>,
    pub timeout_secs: u64,
    /// Some hosted chat APIs reject `repetition_penalty`.
    pub send_repetition_penalty: bool,
    pub sampling: SamplingParams,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Scripted,
            endpoint: None,
            model_name: None,
            script: None,
            timeout_secs: 60,
            send_repetition_penalty: true,
            sampling: SamplingParams::default(),
        }
    }
}

pub const API_KEY_ENV: &str = "RAISE_API_KEY";

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        self.sampling.validate()?;
        match self.kind {
            BackendKind::HttpChat => {
                if self.endpoint.as_deref().is_none_or(str::is_empty)
                    || self.model_name.as_deref().is_none_or(str::is_empty)
                {
                    return Err(BackendError::Configuration(
                        "http_chat backend requires endpoint and model_name".into(),
                    ));
                }
            }
            BackendKind::Scripted => {
                if self.script.is_none() {
                    return Err(BackendError::Configuration(
                        "scripted backend requires a script file".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Builds the configured backend. The API key is read from `RAISE_API_KEY`.
    pub fn build(&self) -> Result<Arc<dyn LanguageModel>, BackendError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Scripted => Arc::new(ScriptedBackend::load(
                self.script.as_deref().expect("validated"),
            )?),
            BackendKind::HttpChat => Arc::new(HttpBackend::new(
                self.clone(),
                std::env::var(API_KEY_ENV).ok(),
            )?),
        })
    }
}
