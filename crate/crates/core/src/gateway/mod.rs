//! Chat-completion gateway with mixed text and image inputs.
//!
//! Responses are parsed best-effort into JSON; a parse failure is reported
//! on the response, never as an error.

mod json;
mod mock;
mod openai;
mod templates;

use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use json::recover_json;
pub use mock::{MockBackend, Transcript, TranscriptEntry};
pub use openai::OpenAiBackend;
pub use templates::{placeholders, render, render_positional, render_template, InstructionId, ResponseShape};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("template placeholder {{{0}}} has no binding")]
    MissingBinding(String),
    #[error("unknown instruction id {0:?}")]
    UnknownInstruction(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failed after {attempts} attempts: {last}")]
    TransportExhausted { attempts: u32, last: String },
    #[error("backend rejected the request: {0}")]
    BackendRejected(String),
    #[error("model configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams { temperature: 0.0, max_output_tokens: 8192 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRequest {
    pub instruction_id: InstructionId,
    pub rendered_text: String,
    /// PNG-encoded screenshots, in prompt order.
    pub images: Vec<Vec<u8>>,
    pub decode_params: DecodeParams,
}

impl ModelRequest {
    pub fn text(instruction_id: InstructionId, rendered_text: String) -> Self {
        ModelRequest { instruction_id, rendered_text, images: Vec::new(), decode_params: DecodeParams::default() }
    }

    pub fn with_images(mut self, images: Vec<Vec<u8>>) -> Self {
        self.images = images;
        self
    }

    fn validate(&self) -> Result<(), GatewayError> {
        if self.rendered_text.is_empty() {
            return Err(GatewayError::InvalidRequest("empty prompt".into()));
        }
        for (i, img) in self.images.iter().enumerate() {
            image::load_from_memory_with_format(img, image::ImageFormat::Png)
                .map_err(|e| GatewayError::InvalidRequest(format!("image {i} does not decode: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub raw_text: String,
    pub parsed: Option<serde_json::Value>,
    pub parse_error: Option<String>,
}

impl ModelResponse {
    pub fn from_raw(raw_text: String, shape: ResponseShape) -> Self {
        match recover_json(&raw_text, shape) {
            Ok(v) => ModelResponse { raw_text, parsed: Some(v), parse_error: None },
            Err(e) => ModelResponse { raw_text, parsed: None, parse_error: Some(e) },
        }
    }
}

/// Failure reported by a backend for a single attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendFailure {
    Transient(String),
    Rejected(String),
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn send(&self, request: &ModelRequest) -> Result<String, BackendFailure>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::from_secs(1) }
    }
}

/// One completed call, kept for traces and protocol checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub instruction_id: InstructionId,
    pub image_count: usize,
    pub prompt_chars: usize,
    pub attempts: u32,
    pub parsed: bool,
    #[serde(skip)]
    pub prompt: String,
}

pub struct Gateway {
    backend: Box<dyn Backend>,
    retry: RetryPolicy,
    decode: DecodeParams,
    log: Mutex<Vec<CallRecord>>,
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>) -> Self {
        Gateway { backend, retry: RetryPolicy::default(), decode: DecodeParams::default(), log: Mutex::new(Vec::new()) }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_decode_params(mut self, decode: DecodeParams) -> Self {
        self.decode = decode;
        self
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn decode_params(&self) -> DecodeParams {
        self.decode
    }

    /// Builds a request with the gateway's decode parameters.
    pub fn request(&self, id: InstructionId, rendered_text: String, images: Vec<Vec<u8>>) -> ModelRequest {
        ModelRequest { instruction_id: id, rendered_text, images, decode_params: self.decode }
    }

    pub fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        request.validate()?;
        let attempts = self.retry.attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
            }
            match self.backend.send(request) {
                Ok(raw) => {
                    let resp = ModelResponse::from_raw(raw, request.instruction_id.shape());
                    self.log.lock().unwrap().push(CallRecord {
                        instruction_id: request.instruction_id,
                        image_count: request.images.len(),
                        prompt_chars: request.rendered_text.chars().count(),
                        attempts: attempt + 1,
                        parsed: resp.parsed.is_some(),
                        prompt: request.rendered_text.clone(),
                    });
                    return Ok(resp);
                }
                Err(BackendFailure::Rejected(msg)) => return Err(GatewayError::BackendRejected(msg)),
                Err(BackendFailure::Transient(msg)) => last = msg,
            }
        }
        Err(GatewayError::TransportExhausted { attempts, last })
    }

    /// Calls completed so far, in completion order.
    pub fn calls(&self) -> Vec<CallRecord> {
        self.log.lock().unwrap().clone()
    }

    pub fn call_count(&self, id: InstructionId) -> usize {
        self.log.lock().unwrap().iter().filter(|c| c.instruction_id == id).count()
    }
}

/// Backend selection read from a JSON file, with environment overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// `mock` or `openai`.
    pub backend: String,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub transcript: Option<String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backend: "openai".into(),
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            transcript: None,
            temperature: 0.0,
            max_output_tokens: 8192,
            retries: 3,
            backoff_ms: 1000,
            timeout_secs: 120,
        }
    }
}

impl ModelConfig {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ModelConfig =
            serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        cfg.apply_env();
        Ok(cfg)
    }

    /// Applies `VGS_MODEL_BACKEND`, `VGS_MODEL_ENDPOINT` and `VGS_MODEL_NAME`.
    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var("VGS_MODEL_BACKEND") {
            self.backend = v;
        }
        if let Ok(v) = std::env::var("VGS_MODEL_ENDPOINT") {
            self.endpoint = v;
        }
        if let Ok(v) = std::env::var("VGS_MODEL_NAME") {
            self.model = v;
        }
    }

    pub fn decode_params(&self) -> DecodeParams {
        DecodeParams { temperature: self.temperature, max_output_tokens: self.max_output_tokens }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy { attempts: self.retries, base_delay: Duration::from_millis(self.backoff_ms) }
    }

    /// Builds the configured live backend. Mock backends are built from a
    /// [`Transcript`] instead.
    pub fn build_backend(&self) -> Result<Box<dyn Backend>, GatewayError> {
        match self.backend.as_str() {
            "openai" => {
                let key = std::env::var(&self.api_key_env)
                    .map_err(|_| GatewayError::Config(format!("environment variable {} is not set", self.api_key_env)))?;
                Ok(Box::new(OpenAiBackend::new(&self.endpoint, &self.model, &key, Duration::from_secs(self.timeout_secs))?))
            }
            "mock" => {
                let path = self.transcript.as_ref().ok_or_else(|| GatewayError::Config("mock backend needs a transcript".into()))?;
                Ok(Box::new(MockBackend::new(Transcript::load(Path::new(path))?.entries)))
            }
            other => Err(GatewayError::Config(format!("unknown backend {other:?}"))),
        }
    }
}
