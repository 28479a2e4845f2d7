//! Remote tool adapter speaking the `/invoke` wire protocol.

use serde::{Deserialize, Serialize};

use super::{AdapterError, AdapterRequest, AdapterResponse, ToolAdapter};

#[derive(Serialize)]
struct InvokeRequest<'a> {
    tool: &'a str,
    frame_indices: &'a [u32],
    query: Option<&'a str>,
}

#[derive(Deserialize)]
struct InvokeResponse {
    observation: String,
    #[serde(default)]
    frames_consumed: Option<u64>,
    #[serde(default)]
    metadata: serde_json::Value,
}

/// POSTs `{tool, frame_indices, query}` to `<base>/invoke` and expects
/// `{observation, frames_consumed, metadata}` back. Frame charging stays
/// local; the server's `frames_consumed` is carried as advisory metadata.
pub struct HttpToolAdapter {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpToolAdapter {
    pub fn new(base_url: impl Into<String>) -> Self {
        let mut base_url = base_url.into();
        while base_url.ends_with('/') {
            base_url.pop();
        }
        HttpToolAdapter {
            base_url,
            agent: ureq::AgentBuilder::new().build(),
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/invoke", self.base_url)
    }
}

impl ToolAdapter for HttpToolAdapter {
    fn call(&self, request: &AdapterRequest) -> Result<AdapterResponse, AdapterError> {
        let body = InvokeRequest {
            tool: &request.tool.name,
            frame_indices: request.frames,
            query: request.query,
        };
        let response = self
            .agent
            .post(&self.endpoint())
            .send_json(serde_json::to_value(&body).expect("request serializes"))
            .map_err(|e| AdapterError(e.to_string()))?;
        let parsed: InvokeResponse = response
            .into_json()
            .map_err(|e| AdapterError(format!("bad response body: {e}")))?;
        Ok(AdapterResponse {
            text: parsed.observation,
            frames_consumed: parsed.frames_consumed,
            metadata: parsed.metadata,
        })
    }
}
