use std::io;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{check_request, truncate_chars, CompletionParams, CompletionProvider, ProviderError, ProviderMessage};

pub const KEY_ENV: &str = "PARLEY_PROVIDER_KEY";
pub const ENDPOINT_ENV: &str = "PARLEY_PROVIDER_URL";

const BODY_EXCERPT_CHARS: usize = 200;

/// Chat-completions client. Retries once on timeout or a 5xx status.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    endpoint: Option<String>,
    api_key: Option<String>,
    retry_backoff: Duration,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

impl RemoteProvider {
    pub fn new(endpoint: Option<String>, api_key: Option<String>) -> Self {
        Self {
            endpoint,
            api_key: api_key.filter(|k| !k.is_empty()),
            retry_backoff: Duration::from_secs(2),
        }
    }

    pub fn from_env() -> Self {
        Self::new(std::env::var(ENDPOINT_ENV).ok(), std::env::var(KEY_ENV).ok())
    }

    pub fn with_retry_backoff(mut self, backoff: Duration) -> Self {
        self.retry_backoff = backoff;
        self
    }

    fn attempt(
        &self,
        endpoint: &str,
        key: &str,
        messages: &[ProviderMessage],
        params: &CompletionParams,
    ) -> Result<String, ProviderError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(params.timeout_seconds)))
            .http_status_as_error(false)
            .build()
            .into();
        let body = json!({
            "model": params.model_id,
            "messages": messages,
            "temperature": params.temperature,
        });
        let mut response = agent
            .post(endpoint)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(&body)
            .map_err(map_transport)?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(map_transport)?;
        if !(200..300).contains(&status) {
            return Err(ProviderError::RemoteStatus {
                code: status,
                body: truncate_chars(&text, BODY_EXCERPT_CHARS),
            });
        }
        let parsed: CompletionResponse = serde_json::from_str(&text)
            .map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::MalformedResponse("no choices[0].message.content".into()))
    }
}

fn map_transport(err: ureq::Error) -> ProviderError {
    match err {
        ureq::Error::Timeout(_) => ProviderError::Timeout,
        ureq::Error::Io(e) if matches!(e.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock) => {
            ProviderError::Timeout
        }
        other => ProviderError::Transport(other.to_string()),
    }
}

fn retryable(err: &ProviderError) -> bool {
    match err {
        ProviderError::Timeout => true,
        ProviderError::RemoteStatus { code, .. } => (500..600).contains(code),
        _ => false,
    }
}

impl CompletionProvider for RemoteProvider {
    fn complete(
        &mut self,
        messages: &[ProviderMessage],
        params: &CompletionParams,
    ) -> Result<String, ProviderError> {
        let key = self.api_key.as_deref().ok_or(ProviderError::AuthMissing)?;
        let endpoint = self.endpoint.as_deref().ok_or(ProviderError::EndpointMissing)?;
        check_request(messages)?;
        let reply = match self.attempt(endpoint, key, messages, params) {
            Err(e) if retryable(&e) => {
                tracing::warn!(error = %e, "completion failed, retrying once");
                std::thread::sleep(self.retry_backoff);
                self.attempt(endpoint, key, messages, params)?
            }
            other => other?,
        };
        Ok(truncate_chars(&reply, params.max_response_chars))
    }
}
