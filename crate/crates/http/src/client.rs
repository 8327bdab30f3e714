use std::thread::sleep;
use std::time::{Duration, Instant};

use gwm_core::clients::{
    serialize_tokens_as_text, CompleteRequest, CompleteResponse, DecoderClient, DecoderRequest, DecoderResponse,
    EmbedRequest, EmbedResponse, GenerateImageRequest, GenerateImageResponse, ResponsePayload,
};
use gwm_core::{GwmError, Result};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{COMPLETE_PATH, EMBED_PATH, GENERATE_IMAGE_PATH, REQUEST_ID_HEADER};

/// Connection settings of a decoder service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpConfig {
    pub url: String,
    pub timeout_ms: u64,
    /// Extra attempts after the first one for timeouts, connection errors and 5xx.
    pub retries: u32,
    /// Delay before the first retry; doubles on every further retry.
    pub backoff_ms: u64,
    /// When false, graph tokens are serialized into the prompt instead of sent as
    /// arrays.
    pub soft_tokens: bool,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self { url: "http://127.0.0.1:8077".into(), timeout_ms: 30_000, retries: 3, backoff_ms: 100, soft_tokens: true }
    }
}

/// Blocking client; share it across threads freely.
#[derive(Debug, Clone)]
pub struct HttpDecoderClient {
    config: HttpConfig,
    http: reqwest::blocking::Client,
}

impl HttpDecoderClient {
    pub fn new(config: HttpConfig) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| GwmError::InvalidArgument(format!("http client: {e}")))?;
        Ok(Self { config, http })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B, request_id: &str) -> Result<R> {
        let url = format!("{}{path}", self.config.url.trim_end_matches('/'));
        let mut last_error = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                log::debug!("retrying {url} in {delay} ms after: {last_error}");
                sleep(Duration::from_millis(delay));
            }
            let resp = match self.http.post(&url).header(REQUEST_ID_HEADER, request_id).json(body).send() {
                Ok(r) => r,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            if status == StatusCode::TOO_MANY_REQUESTS {
                return Err(GwmError::Overloaded(format!("{url} answered 429")));
            }
            if status.is_server_error() {
                last_error = format!("HTTP {status}");
                continue;
            }
            if !status.is_success() {
                return Err(GwmError::BadResponse(format!("{url} answered {status}")));
            }
            let bytes = match resp.bytes() {
                Ok(b) => b,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            return serde_json::from_slice(&bytes).map_err(|e| GwmError::BadResponse(format!("{url}: {e}")));
        }
        Err(GwmError::DecoderUnavailable(format!(
            "{url} failed after {} attempts: {last_error}",
            self.config.retries + 1
        )))
    }

    fn respond(&self, request_id: String, started: Instant, payload: ResponsePayload, dropped: bool) -> DecoderResponse {
        DecoderResponse {
            request_id,
            service_id: self.config.url.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
            payload,
            soft_tokens_dropped: dropped,
        }
    }

    /// Moves tokens into the prompt when soft tokens are disabled.
    fn fallback(&self, prompt: &str, tokens: &Option<Vec<Vec<f32>>>) -> Option<String> {
        match tokens {
            Some(t) if !self.config.soft_tokens => Some(format!("{}\n{prompt}", serialize_tokens_as_text(t))),
            _ => None,
        }
    }
}

impl DecoderClient for HttpDecoderClient {
    fn service_id(&self) -> &str {
        &self.config.url
    }

    fn llm_complete(&self, req: &CompleteRequest) -> Result<DecoderResponse> {
        let started = Instant::now();
        let (req, dropped) = match self.fallback(&req.prompt, &req.graph_tokens) {
            Some(prompt) => (CompleteRequest { prompt, max_tokens: req.max_tokens, graph_tokens: None }, true),
            None => (req.clone(), false),
        };
        let id = DecoderRequest::Complete(req.clone()).request_id();
        let r: CompleteResponse = self.post(COMPLETE_PATH, &req, &id)?;
        Ok(self.respond(id, started, ResponsePayload::Text(r.text), dropped))
    }

    fn generate_image(&self, req: &GenerateImageRequest) -> Result<DecoderResponse> {
        let started = Instant::now();
        let (req, dropped) = match self.fallback(&req.prompt, &req.condition_tokens) {
            Some(prompt) => (GenerateImageRequest { prompt, condition_tokens: None }, true),
            None => (req.clone(), false),
        };
        let id = DecoderRequest::GenerateImage(req.clone()).request_id();
        let r: GenerateImageResponse = self.post(GENERATE_IMAGE_PATH, &req, &id)?;
        Ok(self.respond(id, started, ResponsePayload::ImageRef(r.image_ref), dropped))
    }

    fn embed(&self, req: &EmbedRequest) -> Result<DecoderResponse> {
        let started = Instant::now();
        let id = DecoderRequest::Embed(req.clone()).request_id();
        let r: EmbedResponse = self.post(EMBED_PATH, req, &id)?;
        Ok(self.respond(id, started, ResponsePayload::Vector(r.vector), false))
    }
}
