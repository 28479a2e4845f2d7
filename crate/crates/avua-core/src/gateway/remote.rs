//! Remote HTTP completion backend.

use serde::{Deserialize, Serialize};

use super::{CompletionBackend, GatewayError, PromptBundle};

#[derive(Serialize)]
struct CompletionRequest<'a> {
    system: &'a str,
    user: &'a str,
    temperature: f64,
    max_tokens: u32,
    stop: &'a [String],
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// POSTs `{system, user, temperature, max_tokens, stop}` to a single
/// endpoint and expects `{text}` back.
pub struct RemoteBackend {
    url: String,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(url: impl Into<String>) -> Self {
        RemoteBackend {
            url: url.into(),
            agent: ureq::AgentBuilder::new().build(),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl CompletionBackend for RemoteBackend {
    fn complete(&self, bundle: &PromptBundle) -> Result<String, GatewayError> {
        let body = CompletionRequest {
            system: &bundle.system_text,
            user: &bundle.user_text,
            temperature: bundle.decoding.temperature,
            max_tokens: bundle.decoding.max_tokens,
            stop: &bundle.decoding.stop_sequences,
        };
        let response = self
            .agent
            .post(&self.url)
            .send_json(serde_json::to_value(&body).expect("request serializes"))
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let parsed: CompletionResponse = response
            .into_json()
            .map_err(|e| GatewayError::Transport(format!("bad response body: {e}")))?;
        Ok(parsed.text)
    }
}
