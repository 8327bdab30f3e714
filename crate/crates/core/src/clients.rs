//! Request and response messages for external decoder, image-generation and embedding
//! services, and the client trait every transport implements.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GwmError, Result};
use crate::graph::Modality;

/// Prompt prefix used to ask a text decoder for an image caption.
pub const CAPTION_PROMPT_PREFIX: &str = "Describe the image in one sentence. IMAGE:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteRequest {
    pub prompt: String,
    pub max_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_tokens: Option<Vec<Vec<f32>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateImageRequest {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_tokens: Option<Vec<Vec<f32>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub modality: Modality,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateImageResponse {
    pub image_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vector: Vec<f32>,
}

/// Any request a pipeline can send to a service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecoderRequest {
    Complete(CompleteRequest),
    GenerateImage(GenerateImageRequest),
    Embed(EmbedRequest),
}

impl DecoderRequest {
    /// Content-derived request id; retries of the same request reuse it.
    pub fn request_id(&self) -> String {
        let body = serde_json::to_vec(self).expect("requests serialize");
        hex::encode(&Sha256::digest(&body)[..16])
    }

    pub fn prompt(&self) -> Option<&str> {
        match self {
            DecoderRequest::Complete(r) => Some(&r.prompt),
            DecoderRequest::GenerateImage(r) => Some(&r.prompt),
            DecoderRequest::Embed(_) => None,
        }
    }

    /// Soft graph tokens attached to a completion or generation request.
    pub fn graph_tokens(&self) -> Option<&[Vec<f32>]> {
        match self {
            DecoderRequest::Complete(r) => r.graph_tokens.as_deref(),
            DecoderRequest::GenerateImage(r) => r.condition_tokens.as_deref(),
            DecoderRequest::Embed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponsePayload {
    Text(String),
    ImageRef(String),
    Vector(Vec<f32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderResponse {
    pub request_id: String,
    pub service_id: String,
    pub latency_ms: u64,
    pub payload: ResponsePayload,
    /// Set when graph tokens could not travel as soft tokens and were serialized
    /// into the prompt instead.
    #[serde(default)]
    pub soft_tokens_dropped: bool,
}

impl DecoderResponse {
    pub fn text(&self) -> Option<&str> {
        match &self.payload {
            ResponsePayload::Text(t) => Some(t),
            _ => None,
        }
    }

    pub fn image_ref(&self) -> Option<&str> {
        match &self.payload {
            ResponsePayload::ImageRef(r) => Some(r),
            _ => None,
        }
    }

    pub fn vector(&self) -> Option<&[f32]> {
        match &self.payload {
            ResponsePayload::Vector(v) => Some(v),
            _ => None,
        }
    }
}

/// A text decoder, image generator and embedder behind one transport.
///
/// Implementations must be safe to share across threads; every call carries only
/// per-request state.
pub trait DecoderClient: Send + Sync {
    fn service_id(&self) -> &str;

    fn llm_complete(&self, req: &CompleteRequest) -> Result<DecoderResponse>;

    fn generate_image(&self, req: &GenerateImageRequest) -> Result<DecoderResponse>;

    fn embed(&self, req: &EmbedRequest) -> Result<DecoderResponse>;

    fn call(&self, req: &DecoderRequest) -> Result<DecoderResponse> {
        match req {
            DecoderRequest::Complete(r) => self.llm_complete(r),
            DecoderRequest::GenerateImage(r) => self.generate_image(r),
            DecoderRequest::Embed(r) => self.embed(r),
        }
    }
}

/// Embeds `content` and checks the vector length against `expected_dim`.
pub fn embed_checked(
    client: &dyn DecoderClient,
    modality: Modality,
    content: &str,
    expected_dim: usize,
) -> Result<Vec<f32>> {
    let resp = client.embed(&EmbedRequest { modality, content: content.to_string() })?;
    let v = resp
        .vector()
        .ok_or_else(|| GwmError::BadResponse("embed response carries no vector".into()))?;
    if v.len() != expected_dim {
        return Err(GwmError::DimensionMismatch { modality, expected: expected_dim, got: v.len() });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(GwmError::BadResponse("embedding contains non-finite values".into()));
    }
    Ok(v.to_vec())
}

/// Asks the text decoder for a caption of an image reference.
pub fn caption_image(client: &dyn DecoderClient, image_ref: &str) -> Result<String> {
    let resp = client.llm_complete(&CompleteRequest {
        prompt: format!("{CAPTION_PROMPT_PREFIX}{image_ref}"),
        max_tokens: 64,
        graph_tokens: None,
    })?;
    resp.text()
        .map(str::to_string)
        .ok_or_else(|| GwmError::BadResponse("caption response carries no text".into()))
}

/// Serializes graph tokens into text for services that only accept prompts.
pub fn serialize_tokens_as_text(tokens: &[Vec<f32>]) -> String {
    let rows: Vec<String> = tokens
        .iter()
        .map(|t| {
            let vals: Vec<String> = t.iter().map(|v| format!("{v}")).collect();
            format!("[{}]", vals.join(","))
        })
        .collect();
    format!("GRAPH_TOKENS: [{}]", rows.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_ids_are_content_derived() {
        let a = DecoderRequest::Embed(EmbedRequest { modality: Modality::Text, content: "x".into() });
        let b = DecoderRequest::Embed(EmbedRequest { modality: Modality::Text, content: "y".into() });
        assert_eq!(a.request_id(), a.clone().request_id());
        assert_ne!(a.request_id(), b.request_id());
        assert_eq!(a.request_id().len(), 32);
    }

    #[test]
    fn wire_shapes() {
        let r = CompleteRequest { prompt: "p".into(), max_tokens: 8, graph_tokens: None };
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"prompt":"p","max_tokens":8}"#);
        let e = EmbedRequest { modality: Modality::Table, content: "a is 1".into() };
        assert_eq!(serde_json::to_string(&e).unwrap(), r#"{"modality":"table","content":"a is 1"}"#);
        assert!(serde_json::from_str::<CompleteResponse>("{}").is_err());
    }

    #[test]
    fn token_text_serialization() {
        assert_eq!(serialize_tokens_as_text(&[vec![1.0, -0.5], vec![0.0]]), "GRAPH_TOKENS: [[1,-0.5],[0]]");
    }
}
