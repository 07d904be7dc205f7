use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{Backend, BackendFailure, GatewayError, ModelRequest};

/// Backend for OpenAI-compatible `/chat/completions` endpoints.
pub struct OpenAiBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: String,
}

impl OpenAiBackend {
    pub fn new(endpoint: &str, model: &str, api_key: &str, timeout: Duration) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(OpenAiBackend { client, endpoint: endpoint.into(), model: model.into(), api_key: api_key.into() })
    }

    pub fn body(&self, request: &ModelRequest) -> Value {
        let mut content = vec![json!({"type": "text", "text": request.rendered_text})];
        for img in &request.images {
            let data = base64::engine::general_purpose::STANDARD.encode(img);
            content.push(json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{data}")}}));
        }
        json!({
            "model": self.model,
            "temperature": request.decode_params.temperature,
            "max_tokens": request.decode_params.max_output_tokens,
            "messages": [{"role": "user", "content": content}],
        })
    }
}

impl Backend for OpenAiBackend {
    fn name(&self) -> &str {
        &self.model
    }

    fn send(&self, request: &ModelRequest) -> Result<String, BackendFailure> {
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&self.body(request))
            .send()
            .map_err(|e| BackendFailure::Transient(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendFailure::Transient(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendFailure::Transient(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(BackendFailure::Rejected(format!("HTTP {status}: {text}")));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| BackendFailure::Transient(format!("bad response body: {e}")))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendFailure::Transient("response has no message content".into()))
    }
}
