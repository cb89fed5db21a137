//! Chat-completion client surface shared by taggers and the benchmark harness.
//!
//! Everything goes through [`LanguageModel`]. Implementations: [`HttpModel`]
//! for real endpoints, [`MockModel`] for tests, [`RecordReplay`] for
//! committed fixtures, and [`Limited`] to bound request rate and concurrency.

mod http;
mod limit;
mod mock;
mod replay;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use http::{HttpModel, Provider, RetryPolicy};
pub use limit::Limited;
pub use mock::MockModel;
pub use replay::{FixtureStore, RecordReplay, ReplayMode};

use crate::model::{canonical_hash, Digest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system: String,
    pub user: String,
    pub max_output_tokens: u32,
    /// Must be 0 unless `thinking` is enabled, which supersedes it.
    pub temperature: f32,
    pub thinking: bool,
    pub model_id: String,
}

impl CompletionRequest {
    /// Deterministic request: temperature 0, no thinking.
    pub fn new(
        model_id: impl Into<String>,
        system: impl Into<String>,
        user: impl Into<String>,
        max_output_tokens: u32,
    ) -> Self {
        Self {
            system: system.into(),
            user: user.into(),
            max_output_tokens,
            temperature: 0.0,
            thinking: false,
            model_id: model_id.into(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_output_tokens must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 1]",
                self.temperature
            )));
        }
        if !self.thinking && self.temperature != 0.0 {
            return Err(GatewayError::InvalidRequest(
                "temperature must be 0 when thinking is disabled".into(),
            ));
        }
        Ok(())
    }

    /// Identity of the full request, used to name replay fixtures.
    pub fn digest(&self) -> Digest {
        canonical_hash(self).expect("request serializes")
    }

    /// Identity of the prompt text alone (system + user).
    pub fn prompt_digest(&self) -> Digest {
        prompt_digest(&self.system, &self.user)
    }
}

pub fn prompt_digest(system: &str, user: &str) -> Digest {
    canonical_hash(&serde_json::json!({ "system": system, "user": user })).expect("prompt serializes")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    #[serde(default)]
    pub usage: Usage,
    #[serde(default)]
    pub latency_ms: u64,
    /// 1-based attempt that succeeded.
    #[serde(default = "one")]
    pub attempt: u32,
}

fn one() -> u32 {
    1
}

impl CompletionResult {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            reasoning: None,
            usage: Usage::default(),
            latency_ms: 0,
            attempt: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("throttled after {attempts} attempts")]
    Throttled { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("context window exceeded: {0}")]
    ContextWindowExceeded(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("no replay fixture for request {0}")]
    FixtureMiss(Digest),
    #[error("fixture store: {0}")]
    Fixture(#[from] std::io::Error),
    #[error("missing configuration: {0}")]
    Config(String),
}

impl GatewayError {
    /// Errors worth retrying with backoff.
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::Throttled { .. } | GatewayError::Transport(_))
    }
}

pub trait LanguageModel: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError>;
}

impl<T: LanguageModel + ?Sized> LanguageModel for Arc<T> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        (**self).complete(req)
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for &T {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        (**self).complete(req)
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for Box<T> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        (**self).complete(req)
    }
}
