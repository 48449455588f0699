//! Completion-API access.
//!
//! [`Completer`] is the single seam the generation pipeline talks to. Two
//! implementations ship: [`HttpCompleter`] for an OpenAI-compatible
//! `/v1/completions` endpoint and [`ReplayCompleter`], which serves recorded
//! completions keyed by a hash of the exact prompt.

mod http;
mod replay;
mod score;

use std::time::Duration;

use thiserror::Error;

pub use http::HttpCompleter;
pub use replay::{prompt_hash, ReplayCompleter, ReplayStore};
pub use score::{parse_similarity_score, ScoreParseError, CLAMP_BAND};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("gateway configuration: {0}")]
    Config(String),
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("request rejected with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("giving up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("malformed completion response: {0}")]
    Protocol(String),
    #[error("no recorded completion for prompt hash {hash}")]
    ReplayMiss { hash: String },
    #[error("replay store {path}:{line}: {message}")]
    ReplayCorrupt {
        path: String,
        line: usize,
        message: String,
    },
    #[error("replay store i/o: {0}")]
    ReplayIo(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop: Option<Vec<String>>,
}

impl CompletionRequest {
    /// Decoding settings used for sentence reconstruction.
    pub fn generation(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens: 64,
            temperature: 0.7,
            stop: None,
        }
    }

    /// Decoding settings used for similarity scoring.
    pub fn scoring(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens: 8,
            temperature: 0.0,
            stop: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.is_empty() {
            return Err(GatewayError::Config("empty prompt".into()));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::Config("max_tokens must be at least 1".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::Config(format!(
                "temperature {} must be non-negative",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionResponse {
    pub text: String,
    pub request_id: String,
}

/// Anything that can turn a prompt into a completion.
///
/// Implementations must be shareable across threads; callers may issue up to
/// [`Completer::max_concurrency`] requests at once.
pub trait Completer: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError>;

    fn max_concurrency(&self) -> usize {
        1
    }
}

impl<C: Completer + ?Sized> Completer for &C {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        (**self).complete(request)
    }

    fn max_concurrency(&self) -> usize {
        (**self).max_concurrency()
    }
}

impl<C: Completer + ?Sized> Completer for Box<C> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        (**self).complete(request)
    }

    fn max_concurrency(&self) -> usize {
        (**self).max_concurrency()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    /// Full URL of the completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub auth_env: String,
    /// Maximum requests in flight at once.
    pub concurrency: usize,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub timeout: Duration,
    /// Minimum spacing between the starts of consecutive requests.
    pub min_interval: Duration,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/completions".into(),
            model: "text-davinci-003".into(),
            auth_env: "OPENAI_API_KEY".into(),
            concurrency: 4,
            max_retries: 5,
            timeout: Duration::from_secs(60),
            min_interval: Duration::from_millis(50),
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.concurrency == 0 {
            return Err(GatewayError::Config("concurrency must be at least 1".into()));
        }
        if self.endpoint.is_empty() {
            return Err(GatewayError::Config("endpoint is empty".into()));
        }
        Ok(())
    }

    /// Delay before retry number `retry` (0-based), doubling from the initial backoff.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.min(20));
        self.initial_backoff
            .saturating_mul(factor)
            .min(self.max_backoff)
    }
}
