//! Access to language-model backends over a minimal chat-completion protocol,
//! with bounded retries, deterministic stubs and record/replay cassettes.
//!
//! Credentials are referenced by environment variable name only. The token
//! value is read at call time, handed to the transport and never stored in a
//! config, log line, error message or cassette.

mod cassette;
mod extract;
mod transport;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{ExternalPlayer, Prompt};

pub use cassette::{
    record_replay, Cassette, CassetteMode, CassetteRecord, CassetteWriter, ExchangeSource,
};
pub use extract::{extract_action, ExtractionError};
pub use transport::{
    ChatMessage, ChatRequest, ChatResponse, RecommendationStub, StubScript, Transport,
    TransportFailure, UreqTransport,
};

pub const MAX_RETRIES_LIMIT: u32 = 8;
pub const DEFAULT_MAX_CONCURRENT: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub backend_id: String,
    /// `http(s)://...` for a live service, `stub:recommendation`, or
    /// `stub:script:<path to StubScript JSON>`.
    pub endpoint: String,
    pub model_name: String,
    /// Name of the environment variable holding the token, if one is needed.
    #[serde(default)]
    pub auth_token_ref: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    #[serde(default)]
    pub max_concurrent: Option<usize>,
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout_ms == 0 {
            return Err(GatewayError::InvalidConfig(format!(
                "{}: timeout_ms must be positive",
                self.backend_id
            )));
        }
        if self.max_retries > MAX_RETRIES_LIMIT {
            return Err(GatewayError::InvalidConfig(format!(
                "{}: max_retries {} exceeds {MAX_RETRIES_LIMIT}",
                self.backend_id, self.max_retries
            )));
        }
        if self.max_concurrent == Some(0) {
            return Err(GatewayError::InvalidConfig(format!(
                "{}: max_concurrent must be at least 1",
                self.backend_id
            )));
        }
        Ok(())
    }

    /// A stub backend that answers with the critic's recommendation.
    pub fn recommendation_stub(backend_id: &str) -> Self {
        BackendConfig {
            backend_id: backend_id.to_string(),
            endpoint: "stub:recommendation".into(),
            model_name: "stub".into(),
            auth_token_ref: None,
            timeout_ms: 1_000,
            max_retries: 0,
            backoff_base_ms: 0,
            max_concurrent: None,
        }
    }
}

/// A list of backends, as read from a config file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub backends: Vec<BackendConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub response_text: String,
    pub latency_ms: u64,
    /// Network attempts made; 0 when served from a cassette.
    pub attempt_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend answered with status {status} after {attempts} attempt(s)")]
    Remote { status: u16, attempts: u32 },
    #[error("auth token variable {var} is not set")]
    AuthMissing { var: String, attempts: u32 },
    #[error("invalid gateway configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown backend {0:?}")]
    UnknownBackend(String),
    #[error("no recorded exchange for prompt digest {0}")]
    CassetteMiss(String),
    #[error("cassette line {line} is corrupt: {reason}")]
    CassetteCorrupt { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl GatewayError {
    pub fn attempts(&self) -> u32 {
        match self {
            GatewayError::Timeout { attempts }
            | GatewayError::Transport { attempts, .. }
            | GatewayError::Remote { attempts, .. }
            | GatewayError::AuthMissing { attempts, .. } => *attempts,
            _ => 0,
        }
    }
}

/// Delay before retry number `attempt` (0-based): base × 2^attempt, saturating.
pub fn backoff_delay(backoff_base_ms: u64, attempt: u32) -> Duration {
    let factor = 1u64.checked_shl(attempt).unwrap_or(u64::MAX);
    Duration::from_millis(backoff_base_ms.saturating_mul(factor))
}

fn redact(message: String, secret: Option<&str>) -> String {
    match secret {
        Some(s) if !s.is_empty() => message.replace(s, "[redacted]"),
        _ => message,
    }
}

/// One request with retries: at most `max_retries + 1` attempts, sleeping
/// `backoff_delay(base, n)` after the n-th failure. `calls` counts attempts
/// that reached the transport.
pub fn complete(
    config: &BackendConfig,
    transport: &dyn Transport,
    prompt: &Prompt,
    temperature: f64,
    calls: Option<&AtomicUsize>,
) -> Result<ChatExchange, GatewayError> {
    config.validate()?;
    let token = match &config.auth_token_ref {
        Some(var) => Some(std::env::var(var).map_err(|_| GatewayError::AuthMissing {
            var: var.clone(),
            attempts: 0,
        })?),
        None => None,
    };
    let request = ChatRequest {
        model_name: config.model_name.clone(),
        messages: vec![
            ChatMessage {
                role: "system".into(),
                content: prompt.system.clone(),
            },
            ChatMessage {
                role: "user".into(),
                content: prompt.user.clone(),
            },
        ],
        temperature,
    };
    let timeout = Duration::from_millis(config.timeout_ms);
    let started = Instant::now();
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        if let Some(c) = calls {
            c.fetch_add(1, Ordering::SeqCst);
        }
        match transport.send(&config.endpoint, &request, token.as_deref(), timeout) {
            Ok(reply) => {
                return Ok(ChatExchange {
                    system: prompt.system.clone(),
                    user: prompt.user.clone(),
                    temperature,
                    response_text: reply,
                    latency_ms: started.elapsed().as_millis() as u64,
                    attempt_count: attempt,
                })
            }
            Err(failure) => {
                if !failure.retryable() || attempt > config.max_retries {
                    return Err(match failure {
                        TransportFailure::Timeout => GatewayError::Timeout { attempts: attempt },
                        TransportFailure::Status(status) => GatewayError::Remote {
                            status,
                            attempts: attempt,
                        },
                        TransportFailure::Io(message) => GatewayError::Transport {
                            attempts: attempt,
                            message: redact(message, token.as_deref()),
                        },
                    });
                }
                std::thread::sleep(backoff_delay(config.backoff_base_ms, attempt - 1));
            }
        }
    }
}

/// Counting semaphore bounding in-flight requests per backend.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn new(n: usize) -> Self {
        Slots {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock poisoned");
        }
        *free -= 1;
        SlotGuard { slots: self }
    }
}

struct SlotGuard<'a> {
    slots: &'a Slots,
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.slots.free.lock().expect("slot lock poisoned") += 1;
        self.slots.cv.notify_one();
    }
}

struct Backend {
    config: BackendConfig,
    transport: Arc<dyn Transport>,
    slots: Slots,
}

/// Routes requests to configured backends, optionally through a cassette.
pub struct Gateway {
    backends: BTreeMap<String, Backend>,
    source: ExchangeSource,
    live_calls: AtomicUsize,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backends", &self.backends.keys().collect::<Vec<_>>())
            .field("source", &self.source)
            .field("live_calls", &self.live_calls())
            .finish()
    }
}

impl Default for Gateway {
    fn default() -> Self {
        Gateway::new()
    }
}

impl Gateway {
    pub fn new() -> Self {
        Gateway {
            backends: BTreeMap::new(),
            source: ExchangeSource::Live,
            live_calls: AtomicUsize::new(0),
        }
    }

    /// Builds transports from endpoint strings.
    pub fn from_config(config: &GatewayConfig) -> Result<Self, GatewayError> {
        let mut gw = Gateway::new();
        for b in &config.backends {
            let transport: Arc<dyn Transport> = if b.endpoint == "stub:recommendation" {
                Arc::new(RecommendationStub)
            } else if let Some(path) = b.endpoint.strip_prefix("stub:script:") {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| GatewayError::Io(format!("{path}: {e}")))?;
                let script: StubScript = serde_json::from_str(&text)
                    .map_err(|e| GatewayError::InvalidConfig(format!("{path}: {e}")))?;
                Arc::new(script)
            } else if b.endpoint.starts_with("http://") || b.endpoint.starts_with("https://") {
                Arc::new(UreqTransport)
            } else {
                return Err(GatewayError::InvalidConfig(format!(
                    "{}: unsupported endpoint {:?}",
                    b.backend_id, b.endpoint
                )));
            };
            gw.add_backend(b.clone(), transport)?;
        }
        Ok(gw)
    }

    pub fn add_backend(
        &mut self,
        config: BackendConfig,
        transport: Arc<dyn Transport>,
    ) -> Result<(), GatewayError> {
        config.validate()?;
        if self.backends.contains_key(&config.backend_id) {
            return Err(GatewayError::InvalidConfig(format!(
                "duplicate backend {}",
                config.backend_id
            )));
        }
        let slots = Slots::new(config.max_concurrent.unwrap_or(DEFAULT_MAX_CONCURRENT));
        self.backends.insert(
            config.backend_id.clone(),
            Backend {
                config,
                transport,
                slots,
            },
        );
        Ok(())
    }

    pub fn with_cassette(mut self, mode: CassetteMode, path: Option<&Path>) -> Result<Self, GatewayError> {
        self.source = record_replay(mode, path)?;
        Ok(self)
    }

    pub fn backend_ids(&self) -> Vec<&str> {
        self.backends.keys().map(String::as_str).collect()
    }

    pub fn configs(&self) -> Vec<&BackendConfig> {
        self.backends.values().map(|b| &b.config).collect()
    }

    /// Attempts that reached a transport so far.
    pub fn live_calls(&self) -> usize {
        self.live_calls.load(Ordering::SeqCst)
    }

    pub fn complete(
        &self,
        backend_id: &str,
        prompt: &Prompt,
        temperature: f64,
    ) -> Result<ChatExchange, GatewayError> {
        let backend = self
            .backends
            .get(backend_id)
            .ok_or_else(|| GatewayError::UnknownBackend(backend_id.to_string()))?;
        if let ExchangeSource::Replay(cassette) = &self.source {
            let record = cassette.take(&prompt.digest())?;
            return Ok(ChatExchange {
                system: prompt.system.clone(),
                user: prompt.user.clone(),
                temperature,
                response_text: record.reply,
                latency_ms: record.latency_ms,
                attempt_count: 0,
            });
        }
        let exchange = {
            let _slot = backend.slots.acquire();
            complete(
                &backend.config,
                backend.transport.as_ref(),
                prompt,
                temperature,
                Some(&self.live_calls),
            )?
        };
        if let ExchangeSource::Record(writer) = &self.source {
            writer.append(&CassetteRecord {
                prompt_digest: prompt.digest(),
                reply: exchange.response_text.clone(),
                latency_ms: exchange.latency_ms,
            })?;
        }
        Ok(exchange)
    }
}

impl ExternalPlayer for Gateway {
    fn reply(
        &self,
        backend_id: &str,
        prompt: &Prompt,
        temperature: f64,
    ) -> Result<String, GatewayError> {
        self.complete(backend_id, prompt, temperature)
            .map(|x| x.response_text)
    }
}
