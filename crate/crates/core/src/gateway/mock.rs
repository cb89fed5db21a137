use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{CompletionRequest, CompletionResult, GatewayError, LanguageModel, Usage};
use crate::model::Digest;
use crate::tokens::EstimatorMode;

type Responder = dyn Fn(&CompletionRequest) -> Result<String, GatewayError> + Send + Sync;

/// Deterministic in-process model.
pub struct MockModel {
    responder: Box<Responder>,
    calls: AtomicUsize,
}

impl MockModel {
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&CompletionRequest) -> Result<String, GatewayError> + Send + Sync + 'static,
    {
        Self {
            responder: Box::new(f),
            calls: AtomicUsize::new(0),
        }
    }

    /// Answers keyed by [`CompletionRequest::prompt_digest`]. Unknown prompts
    /// are a provider error.
    pub fn from_table(table: HashMap<Digest, String>) -> Self {
        Self::from_fn(move |req| {
            let key = req.prompt_digest();
            table
                .get(&key)
                .cloned()
                .ok_or_else(|| GatewayError::Provider(format!("mock has no answer for {key}")))
        })
    }

    pub fn constant(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::from_fn(move |_| Ok(text.clone()))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl std::fmt::Debug for MockModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockModel").field("calls", &self.calls()).finish()
    }
}

impl LanguageModel for MockModel {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        req.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = (self.responder)(req)?;
        let est = EstimatorMode::CharsDiv4;
        Ok(CompletionResult {
            usage: Usage {
                input_tokens: (est.estimate(&req.system) + est.estimate(&req.user)) as u64,
                output_tokens: est.estimate(&text) as u64,
            },
            ..CompletionResult::text(text)
        })
    }
}
