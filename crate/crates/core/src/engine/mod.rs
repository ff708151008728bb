//! Chat-completion engines and the prompts sent to them.

mod http;
pub mod prompt;
mod scripted;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpEngine, API_KEY_ENV, ENDPOINT_ENV};
pub use prompt::{render_prompt, Phase, PromptError, PromptInputs, PromptSettings, PromptTemplates};
pub use scripted::{parse_transcript, ScriptedEngine, ScriptedTranscript, TranscriptFile};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("engine `{engine}` unavailable after {attempts} attempt(s): {last_error}")]
    Unavailable {
        engine: String,
        attempts: u32,
        last_error: String,
    },
    #[error("engine `{engine}` rejected the request with HTTP {status}: {body}")]
    Rejected { engine: String, status: u16, body: String },
    #[error("scripted engine `{0}` has no responses left")]
    TranscriptExhausted(String),
    #[error("engine `{engine}` returned no message text: {detail}")]
    MalformedResponse { engine: String, detail: String },
    #[error("engine configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Anything that turns a chat request into assistant text.
pub trait ChatEngine: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String, EngineError>;
}

pub type SharedEngine = Arc<dyn ChatEngine>;

/// One prompt/response pair, kept for traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub phase: String,
    pub engine: String,
    pub request: ChatRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Renders the prompt for `phase`, sends it and records the exchange.
pub fn exchange(
    engine: &dyn ChatEngine,
    templates: &PromptTemplates,
    phase: Phase,
    inputs: &PromptInputs<'_>,
    settings: &PromptSettings,
    log: &mut Vec<Exchange>,
) -> Result<String, CallError> {
    let request = render_prompt(templates, phase, inputs, settings)?;
    let result = engine.complete(&request);
    log.push(Exchange {
        phase: phase.as_str().to_string(),
        engine: engine.name().to_string(),
        request,
        response: result.as_ref().ok().cloned(),
        error: result.as_ref().err().map(ToString::to_string),
    });
    Ok(result?)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CallError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Http,
    Scripted,
}

/// Serializable description of an engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineRef {
    pub name: String,
    pub kind: EngineKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Requests per minute; `None` means unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit_rpm: Option<f64>,
    #[serde(default = "default_backoff_ms")]
    pub retry_base_delay_ms: u64,
}

fn default_timeout() -> f64 {
    120.0
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

/// Default model ids for the two roles.
pub const DEFAULT_FORWARD_MODEL: &str = "Qwen/Qwen2.5-Coder-3B-Instruct";
pub const DEFAULT_BACKWARD_MODEL: &str = "Qwen/Qwen3-1.7B";

impl EngineRef {
    pub fn http(name: impl Into<String>, endpoint_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: EngineKind::Http,
            endpoint_url: Some(endpoint_url.into()),
            model_id: Some(model_id.into()),
            request_timeout_secs: default_timeout(),
            max_retries: default_retries(),
            rate_limit_rpm: None,
            retry_base_delay_ms: default_backoff_ms(),
        }
    }

    pub fn scripted(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: EngineKind::Scripted,
            endpoint_url: None,
            model_id: None,
            request_timeout_secs: default_timeout(),
            max_retries: 0,
            rate_limit_rpm: None,
            retry_base_delay_ms: default_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.kind == EngineKind::Http {
            let missing = |what: &str| EngineError::Config(format!("http engine `{}` needs {what}", self.name));
            if self.endpoint_url.as_deref().map_or(true, str::is_empty) {
                return Err(missing("an endpoint_url"));
            }
            if self.model_id.as_deref().map_or(true, str::is_empty) {
                return Err(missing("a model_id"));
            }
        }
        if !(self.request_timeout_secs > 0.0) {
            return Err(EngineError::Config("request_timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_secs)
    }

    /// Builds an HTTP engine. Scripted engines are built from a transcript instead.
    pub fn connect(&self) -> Result<SharedEngine, EngineError> {
        self.validate()?;
        match self.kind {
            EngineKind::Http => Ok(Arc::new(HttpEngine::new(self.clone())?)),
            EngineKind::Scripted => Err(EngineError::Config(format!(
                "scripted engine `{}` must be built from a transcript",
                self.name
            ))),
        }
    }
}
