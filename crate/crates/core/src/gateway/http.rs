use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::Value;

use super::{Completer, CompletionRequest, CompletionResponse, GatewayConfig, GatewayError};

/// Blocking client for an OpenAI-compatible completions endpoint.
///
/// Bounded in-flight requests, a minimum spacing between request starts, and
/// exponential backoff on 429, 5xx, timeouts and transport errors. Every
/// attempt, retries included, goes through both limits.
pub struct HttpCompleter {
    config: GatewayConfig,
    token: String,
    agent: ureq::Agent,
    permits: Semaphore,
    next_start: Mutex<Option<Instant>>,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    stop: Option<&'a [String]>,
}

enum Attempt {
    Done(CompletionResponse),
    Retry {
        reason: String,
        retry_after: Option<Duration>,
    },
}

impl HttpCompleter {
    /// Reads the bearer token from `config.auth_env`; fails before any request
    /// if it is unset or empty.
    pub fn new(config: GatewayConfig) -> Result<Self, GatewayError> {
        let token = std::env::var(&config.auth_env).map_err(|_| {
            GatewayError::Config(format!(
                "auth token environment variable {} is not set",
                config.auth_env
            ))
        })?;
        Self::with_token(config, token)
    }

    pub fn with_token(config: GatewayConfig, token: impl Into<String>) -> Result<Self, GatewayError> {
        config.validate()?;
        let token = token.into();
        if token.trim().is_empty() {
            return Err(GatewayError::Config("auth token is empty".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            permits: Semaphore::new(config.concurrency),
            next_start: Mutex::new(None),
            config,
            token,
            agent,
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Block until this attempt may start without violating the minimum interval.
    fn wait_for_slot(&self) {
        let start = {
            let mut next = self.next_start.lock().expect("rate limiter lock");
            let now = Instant::now();
            let start = match *next {
                Some(t) if t > now => t,
                _ => now,
            };
            *next = Some(start + self.config.min_interval);
            start
        };
        let now = Instant::now();
        if start > now {
            thread::sleep(start - now);
        }
    }

    fn attempt(&self, body: &str) -> Result<Attempt, GatewayError> {
        let _permit = self.permits.acquire();
        self.wait_for_slot();
        let result = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.token))
            .header("Content-Type", "application/json")
            .send(body);
        let mut response = match result {
            Ok(r) => r,
            Err(e) => {
                return Ok(Attempt::Retry {
                    reason: format!("transport: {e}"),
                    retry_after: None,
                })
            }
        };
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(Duration::from_secs_f64);
        let header_id = response
            .headers()
            .get("x-request-id")
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => {
                return Ok(Attempt::Retry {
                    reason: format!("reading body: {e}"),
                    retry_after: None,
                })
            }
        };
        match status {
            200..=299 => parse_completion(&text, header_id).map(Attempt::Done),
            401 | 403 => Err(GatewayError::Auth { status }),
            429 | 500..=599 => Ok(Attempt::Retry {
                reason: format!("HTTP {status}"),
                retry_after,
            }),
            _ => Err(GatewayError::Rejected {
                status,
                body: text.chars().take(200).collect(),
            }),
        }
    }
}

impl Completer for HttpCompleter {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        request.validate()?;
        let body = serde_json::to_string(&WireRequest {
            model: &self.config.model,
            prompt: &request.prompt,
            max_tokens: request.max_tokens,
            temperature: request.temperature,
            stop: request.stop.as_deref(),
        })
        .expect("request serializes");

        let mut retry = 0;
        loop {
            match self.attempt(&body)? {
                Attempt::Done(resp) => return Ok(resp),
                Attempt::Retry {
                    reason,
                    retry_after,
                } => {
                    if retry >= self.config.max_retries {
                        return Err(GatewayError::Exhausted {
                            attempts: retry + 1,
                            last: reason,
                        });
                    }
                    let delay = retry_after
                        .map_or(self.config.backoff(retry), |ra| ra.max(self.config.backoff(retry)))
                        .min(self.config.max_backoff);
                    log::warn!("completion attempt {} failed ({reason}); retrying in {delay:?}", retry + 1);
                    thread::sleep(delay);
                    retry += 1;
                }
            }
        }
    }

    fn max_concurrency(&self) -> usize {
        self.config.concurrency
    }
}

fn parse_completion(body: &str, header_id: Option<String>) -> Result<CompletionResponse, GatewayError> {
    let json: Value =
        serde_json::from_str(body).map_err(|e| GatewayError::Protocol(e.to_string()))?;
    let text = json
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("text"))
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::Protocol("missing choices[0].text".into()))?;
    let request_id = json
        .get("id")
        .and_then(Value::as_str)
        .map(str::to_string)
        .or(header_id)
        .unwrap_or_default();
    Ok(CompletionResponse {
        text: text.to_string(),
        request_id,
    })
}

struct Semaphore {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().expect("semaphore lock");
        while *n == 0 {
            n = self.freed.wait(n).expect("semaphore lock");
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().expect("semaphore lock") += 1;
        self.0.freed.notify_one();
    }
}
