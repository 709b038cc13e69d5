//! Completion backends.
//!
//! [`CompletionProvider`] is the single seam between the session loop and a
//! language model. [`ScriptedProvider`] replays canned replies for offline
//! runs; [`RemoteProvider`] speaks the chat-completions JSON protocol.

mod remote;
mod scripted;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::{RemoteProvider, ENDPOINT_ENV, KEY_ENV};
pub use scripted::{parse_script, ProviderScript, ScriptedProvider, SCRIPT_SEPARATOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderMessage {
    pub role: Role,
    pub content: String,
}

impl ProviderMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }

    fn len(&self) -> usize {
        self.content.chars().count()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("completion timed out")]
    Timeout,
    #[error("remote returned status {code}: {body}")]
    RemoteStatus { code: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("script exhausted after {0} responses")]
    ScriptExhausted(usize),
    #[error("no credentials: set {KEY_ENV}")]
    AuthMissing,
    #[error("no endpoint: set {ENDPOINT_ENV}")]
    EndpointMissing,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
}

impl ProviderError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ProviderError::Timeout => "provider_timeout",
            ProviderError::RemoteStatus { .. } => "provider_status",
            ProviderError::MalformedResponse(_) => "provider_malformed",
            ProviderError::ScriptExhausted(_) => "script_exhausted",
            ProviderError::AuthMissing => "provider_auth_missing",
            ProviderError::EndpointMissing => "provider_endpoint_missing",
            ProviderError::InvalidRequest(_) => "provider_invalid_request",
            ProviderError::Transport(_) => "provider_transport",
        }
    }
}

pub const DEFAULT_MODEL: &str = "gpt-4-vision-preview";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionParams {
    pub model_id: String,
    pub temperature: f64,
    pub max_response_chars: usize,
    pub timeout_seconds: f64,
    pub history_char_budget: usize,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            model_id: DEFAULT_MODEL.to_string(),
            temperature: 0.7,
            max_response_chars: 2000,
            timeout_seconds: 60.0,
            history_char_budget: 24_000,
        }
    }
}

impl CompletionParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.model_id.trim().is_empty() {
            return Err("model_id must not be empty".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_response_chars == 0 {
            return Err("max_response_chars must be positive".into());
        }
        if !(self.timeout_seconds.is_finite() && self.timeout_seconds > 0.0) {
            return Err("timeout_seconds must be positive".into());
        }
        if self.history_char_budget == 0 {
            return Err("history_char_budget must be positive".into());
        }
        Ok(())
    }
}

pub trait CompletionProvider: Send {
    fn complete(
        &mut self,
        messages: &[ProviderMessage],
        params: &CompletionParams,
    ) -> Result<String, ProviderError>;
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for Box<P> {
    fn complete(
        &mut self,
        messages: &[ProviderMessage],
        params: &CompletionParams,
    ) -> Result<String, ProviderError> {
        (**self).complete(messages, params)
    }
}

pub(crate) fn check_request(messages: &[ProviderMessage]) -> Result<(), ProviderError> {
    match messages.first() {
        None => Err(ProviderError::InvalidRequest("no messages".into())),
        Some(m) if m.role != Role::System => Err(ProviderError::InvalidRequest(
            "first message must have the system role".into(),
        )),
        Some(_) => Ok(()),
    }
}

pub(crate) fn truncate_chars(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((cut, _)) => text[..cut].to_string(),
        None => text.to_string(),
    }
}

/// Keeps the system message plus the longest suffix of the remaining
/// messages whose combined content length fits `budget_chars`. The system
/// message is not counted against the budget and is always kept.
pub fn truncate_history(messages: &[ProviderMessage], budget_chars: usize) -> Vec<ProviderMessage> {
    let Some((system, rest)) = messages.split_first() else {
        return Vec::new();
    };
    let mut used = 0usize;
    let mut keep_from = rest.len();
    for (i, m) in rest.iter().enumerate().rev() {
        used += m.len();
        if used > budget_chars {
            break;
        }
        keep_from = i;
    }
    let mut out = Vec::with_capacity(1 + rest.len() - keep_from);
    out.push(system.clone());
    out.extend_from_slice(&rest[keep_from..]);
    out
}

/// True if the system message alone is longer than the history budget.
pub fn system_exceeds_budget(messages: &[ProviderMessage], budget_chars: usize) -> bool {
    messages.first().is_some_and(|m| m.len() > budget_chars)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(role: Role, n: usize) -> ProviderMessage {
        ProviderMessage::new(role, "x".repeat(n))
    }

    #[test]
    fn truncation_keeps_suffix() {
        let list = vec![msg(Role::System, 10), msg(Role::User, 10), msg(Role::Assistant, 10)];
        let out = truncate_history(&list, 15);
        assert_eq!(out, vec![list[0].clone(), list[2].clone()]);
        assert_eq!(truncate_history(&list, 30), list);
        assert_eq!(truncate_history(&list, 5), vec![list[0].clone()]);
    }

    #[test]
    fn truncation_counts_chars_not_bytes() {
        let list = vec![
            msg(Role::System, 1),
            ProviderMessage::new(Role::User, "ééé"),
        ];
        assert_eq!(truncate_history(&list, 3).len(), 2);
    }

    #[test]
    fn params_defaults_and_bounds() {
        let p = CompletionParams::default();
        assert_eq!(p.temperature, 0.7);
        assert_eq!(p.timeout_seconds, 60.0);
        assert_eq!(p.max_response_chars, 2000);
        assert_eq!(p.history_char_budget, 24_000);
        assert!(p.validate().is_ok());
        let bad = CompletionParams {
            temperature: 2.5,
            ..p.clone()
        };
        assert!(bad.validate().is_err());
        let bad = CompletionParams {
            timeout_seconds: 0.0,
            ..p
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn char_truncation() {
        assert_eq!(truncate_chars("héllo", 2), "hé");
        assert_eq!(truncate_chars("hi", 10), "hi");
    }
}
