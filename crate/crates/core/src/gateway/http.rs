use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CompletionRequest, CompletionResult, GatewayError, LanguageModel, Usage};

pub const ENV_ENDPOINT: &str = "TAGFORGE_ENDPOINT";
pub const ENV_API_KEY: &str = "TAGFORGE_API_KEY";
pub const ENV_MODEL: &str = "TAGFORGE_MODEL";
pub const ENV_PROVIDER: &str = "TAGFORGE_PROVIDER";

/// Wire format of the chat endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    /// `POST .../chat/completions` with a `messages` array.
    #[default]
    OpenAi,
    /// `POST .../messages` with a top-level `system` field.
    Anthropic,
}

impl std::str::FromStr for Provider {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "openai" | "open_ai" => Ok(Provider::OpenAi),
            "anthropic" => Ok(Provider::Anthropic),
            other => Err(GatewayError::Config(format!("unknown provider {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 500,
            timeout_ms: 60_000,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1 << attempt.min(16)))
    }
}

pub struct HttpModel {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: String,
    provider: Provider,
    retry: RetryPolicy,
}

impl std::fmt::Debug for HttpModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpModel")
            .field("endpoint", &self.endpoint)
            .field("provider", &self.provider)
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

impl HttpModel {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: impl Into<String>,
        provider: Provider,
        retry: RetryPolicy,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(retry.timeout_ms))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            provider,
            retry,
        })
    }

    /// Build from `TAGFORGE_ENDPOINT`, `TAGFORGE_API_KEY` and optionally
    /// `TAGFORGE_PROVIDER`.
    pub fn from_env(retry: RetryPolicy) -> Result<Self, GatewayError> {
        let var = |k: &str| std::env::var(k).map_err(|_| GatewayError::Config(format!("{k} not set")));
        let provider = match std::env::var(ENV_PROVIDER) {
            Ok(p) => p.parse()?,
            Err(_) => Provider::default(),
        };
        Self::new(var(ENV_ENDPOINT)?, var(ENV_API_KEY)?, provider, retry)
    }

    /// Model id from `TAGFORGE_MODEL`.
    pub fn model_id_from_env() -> Option<String> {
        std::env::var(ENV_MODEL).ok()
    }

    fn body(&self, req: &CompletionRequest) -> Value {
        match self.provider {
            Provider::OpenAi => json!({
                "model": req.model_id,
                "messages": [
                    {"role": "system", "content": req.system},
                    {"role": "user", "content": req.user},
                ],
                "max_tokens": req.max_output_tokens,
                "temperature": req.temperature,
            }),
            Provider::Anthropic => {
                let mut body = json!({
                    "model": req.model_id,
                    "system": req.system,
                    "messages": [{"role": "user", "content": req.user}],
                    "max_tokens": req.max_output_tokens,
                });
                if req.thinking {
                    let budget = (req.max_output_tokens * 3 / 4).max(1);
                    body["thinking"] = json!({"type": "enabled", "budget_tokens": budget});
                } else {
                    body["temperature"] = json!(req.temperature);
                }
                body
            }
        }
    }

    fn send_once(&self, req: &CompletionRequest) -> Result<(String, Option<String>, Usage), GatewayError> {
        let mut builder = self.client.post(&self.endpoint).json(&self.body(req));
        builder = match self.provider {
            Provider::OpenAi => builder.bearer_auth(&self.api_key),
            Provider::Anthropic => builder
                .header("x-api-key", &self.api_key)
                .header("anthropic-version", "2023-06-01"),
        };
        let resp = builder.send().map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        let v: Value =
            serde_json::from_str(&text).map_err(|e| GatewayError::Provider(format!("invalid JSON response: {e}")))?;
        parse_response(self.provider, &v)
    }
}

fn classify_status(status: u16, body: &str) -> GatewayError {
    let lower = body.to_ascii_lowercase();
    match status {
        401 | 403 => GatewayError::Auth(body.to_string()),
        429 | 529 | 503 => GatewayError::Throttled { attempts: 1 },
        400 | 413
            if ["context", "too long", "too many tokens", "maximum"]
                .iter()
                .any(|k| lower.contains(k)) =>
        {
            GatewayError::ContextWindowExceeded(body.to_string())
        }
        500..=599 => GatewayError::Transport(format!("HTTP {status}: {body}")),
        _ => GatewayError::Provider(format!("HTTP {status}: {body}")),
    }
}

fn parse_response(provider: Provider, v: &Value) -> Result<(String, Option<String>, Usage), GatewayError> {
    let missing = || GatewayError::Provider(format!("unexpected response shape: {v}"));
    let u = |key: &str| v["usage"][key].as_u64().unwrap_or(0);
    match provider {
        Provider::OpenAi => {
            let text = v["choices"][0]["message"]["content"].as_str().ok_or_else(missing)?;
            Ok((
                text.to_string(),
                None,
                Usage {
                    input_tokens: u("prompt_tokens"),
                    output_tokens: u("completion_tokens"),
                },
            ))
        }
        Provider::Anthropic => {
            let blocks = v["content"].as_array().ok_or_else(missing)?;
            let mut text = String::new();
            let mut reasoning: Option<String> = None;
            for b in blocks {
                match b["type"].as_str() {
                    Some("text") => text.push_str(b["text"].as_str().unwrap_or_default()),
                    Some("thinking") => reasoning
                        .get_or_insert_with(String::new)
                        .push_str(b["thinking"].as_str().unwrap_or_default()),
                    _ => {}
                }
            }
            Ok((
                text,
                reasoning,
                Usage {
                    input_tokens: u("input_tokens"),
                    output_tokens: u("output_tokens"),
                },
            ))
        }
    }
}

impl LanguageModel for HttpModel {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        req.validate()?;
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.send_once(req) {
                Ok((text, reasoning, usage)) => {
                    return Ok(CompletionResult {
                        text,
                        reasoning,
                        usage,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempt,
                    })
                }
                Err(e) if e.is_transient() && attempt <= self.retry.max_retries => {
                    log::warn!("attempt {attempt} failed ({e}); retrying");
                    std::thread::sleep(self.retry.delay(attempt - 1));
                }
                Err(GatewayError::Throttled { .. }) => return Err(GatewayError::Throttled { attempts: attempt }),
                Err(e) => return Err(e),
            }
        }
    }
}
