use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::digest::short_hash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Wire request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_name: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn system(&self) -> &str {
        self.message("system")
    }

    pub fn user(&self) -> &str {
        self.message("user")
    }

    fn message(&self, role: &str) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == role)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }

    /// Same value as `Prompt::digest` for the prompt this request carries.
    pub fn prompt_digest(&self) -> String {
        short_hash(format!("{}\n\n{}", self.system(), self.user()).as_bytes())
    }
}

/// Wire response body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    Timeout,
    Io(String),
    Status(u16),
}

impl TransportFailure {
    /// Timeouts, I/O errors, 429 and 5xx are worth another attempt.
    pub fn retryable(&self) -> bool {
        match self {
            TransportFailure::Timeout | TransportFailure::Io(_) => true,
            TransportFailure::Status(s) => *s == 429 || *s >= 500,
        }
    }
}

/// One attempt at one request. Implementations must not retry internally.
pub trait Transport: Send + Sync {
    fn send(
        &self,
        endpoint: &str,
        request: &ChatRequest,
        auth_token: Option<&str>,
        timeout: Duration,
    ) -> Result<String, TransportFailure>;
}

/// JSON over HTTP(S).
#[derive(Debug, Default)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn send(
        &self,
        endpoint: &str,
        request: &ChatRequest,
        auth_token: Option<&str>,
        timeout: Duration,
    ) -> Result<String, TransportFailure> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut call = agent.post(endpoint);
        if let Some(token) = auth_token {
            call = call.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = call.send_json(request).map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportFailure::Timeout,
            ureq::Error::StatusCode(s) => TransportFailure::Status(s),
            other => TransportFailure::Io(other.to_string()),
        })?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(TransportFailure::Status(status));
        }
        let body: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| TransportFailure::Io(format!("bad response body: {e}")))?;
        Ok(body.content)
    }
}

/// Deterministic replies keyed by prompt digest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StubScript {
    pub replies: BTreeMap<String, String>,
    pub fallback_reply: Option<String>,
}

impl Transport for StubScript {
    fn send(
        &self,
        _endpoint: &str,
        request: &ChatRequest,
        _auth_token: Option<&str>,
        _timeout: Duration,
    ) -> Result<String, TransportFailure> {
        self.replies
            .get(&request.prompt_digest())
            .or(self.fallback_reply.as_ref())
            .cloned()
            .ok_or(TransportFailure::Status(404))
    }
}

/// Echoes the critic's recommendation from the prompt, or the first legal
/// action when there is none. Stands in for a player that always follows the
/// critique.
#[derive(Debug, Clone, Copy, Default)]
pub struct RecommendationStub;

fn line_after<'a>(text: &'a str, header: &str) -> Option<&'a str> {
    let mut lines = text.lines();
    lines.find(|l| *l == header)?;
    lines.next().filter(|l| !l.is_empty())
}

impl Transport for RecommendationStub {
    fn send(
        &self,
        _endpoint: &str,
        request: &ChatRequest,
        _auth_token: Option<&str>,
        _timeout: Duration,
    ) -> Result<String, TransportFailure> {
        let user = request.user();
        let reply = line_after(user, "Recommended action:")
            .or_else(|| line_after(user, "Legal actions:"))
            .unwrap_or("look");
        Ok(reply.to_string())
    }
}
