//! Deterministic in-process decoder suite.
//!
//! Every response is a pure function of the request and the mock seed:
//!
//! * `embed` expands `(modality, content, seed)` into a stream of SHA-256 blocks,
//!   maps each little-endian `u32` to `[-1, 1)` and scales to unit norm.
//! * `llm_complete` echoes the text after the first `ANSWER:` marker, up to the next
//!   `,` `.` `;` `]` or newline. Caption prompts yield `MOCK_CAPTION:<image_ref>`.
//!   Anything else yields `MOCK_COMPLETION:<digest>`.
//! * `generate_image` returns `mock-image:<digest>` over the prompt and token bits.

use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use crate::clients::{
    CompleteRequest, DecoderClient, DecoderRequest, DecoderResponse, EmbedRequest, GenerateImageRequest,
    ResponsePayload, CAPTION_PROMPT_PREFIX,
};
use crate::error::{GwmError, Result};
use crate::graph::{Modality, ModalityDims};

pub const ANSWER_MARKER: &str = "ANSWER:";

/// Unit-norm pseudo-embedding of `content`.
pub fn mock_embedding(modality: Modality, content: &str, seed: u64, dim: usize) -> Vec<f32> {
    let mut raw = Vec::with_capacity(dim);
    let mut block: u64 = 0;
    while raw.len() < dim {
        let mut h = Sha256::new();
        h.update(b"gwm-mock-embed\0");
        h.update(modality.as_str().as_bytes());
        h.update([0u8]);
        h.update(content.as_bytes());
        h.update([0u8]);
        h.update(seed.to_le_bytes());
        h.update(block.to_le_bytes());
        let digest = h.finalize();
        for chunk in digest.chunks_exact(4) {
            if raw.len() == dim {
                break;
            }
            let u = u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            raw.push((u as f64 + 0.5) / 4_294_967_296.0 * 2.0 - 1.0);
        }
        block += 1;
    }
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    raw.into_iter().map(|x| (x / norm) as f32).collect()
}

/// The completion rule described in the module docs.
pub fn mock_completion(prompt: &str) -> String {
    if let Some(image_ref) = prompt.strip_prefix(CAPTION_PROMPT_PREFIX) {
        return format!("MOCK_CAPTION:{image_ref}");
    }
    if let Some(pos) = prompt.find(ANSWER_MARKER) {
        let rest = &prompt[pos + ANSWER_MARKER.len()..];
        let end = rest.find([',', '.', ';', ']', '\n']).unwrap_or(rest.len());
        return rest[..end].trim().to_string();
    }
    let digest = Sha256::digest(prompt.as_bytes());
    format!("MOCK_COMPLETION:{}", hex::encode(&digest[..8]))
}

pub fn mock_image_ref(prompt: &str, tokens: Option<&[Vec<f32>]>) -> String {
    let mut h = Sha256::new();
    h.update(prompt.as_bytes());
    if let Some(tokens) = tokens {
        for t in tokens {
            h.update((t.len() as u64).to_le_bytes());
            for v in t {
                h.update(v.to_bits().to_le_bytes());
            }
        }
    }
    format!("mock-image:{}", hex::encode(&h.finalize()[..16]))
}

/// In-process mock of all three services.
#[derive(Debug, Clone)]
pub struct MockDecoder {
    pub seed: u64,
    pub dims: ModalityDims,
}

impl Default for MockDecoder {
    fn default() -> Self {
        Self { seed: 0, dims: ModalityDims::default() }
    }
}

impl MockDecoder {
    pub fn new(seed: u64, dims: ModalityDims) -> Self {
        Self { seed, dims }
    }

    fn respond(&self, req: DecoderRequest, payload: ResponsePayload) -> DecoderResponse {
        DecoderResponse {
            request_id: req.request_id(),
            service_id: "mock".into(),
            latency_ms: 0,
            payload,
            soft_tokens_dropped: false,
        }
    }
}

impl DecoderClient for MockDecoder {
    fn service_id(&self) -> &str {
        "mock"
    }

    fn llm_complete(&self, req: &CompleteRequest) -> Result<DecoderResponse> {
        let text = mock_completion(&req.prompt);
        Ok(self.respond(DecoderRequest::Complete(req.clone()), ResponsePayload::Text(text)))
    }

    fn generate_image(&self, req: &GenerateImageRequest) -> Result<DecoderResponse> {
        let r = mock_image_ref(&req.prompt, req.condition_tokens.as_deref());
        Ok(self.respond(DecoderRequest::GenerateImage(req.clone()), ResponsePayload::ImageRef(r)))
    }

    fn embed(&self, req: &EmbedRequest) -> Result<DecoderResponse> {
        let v = mock_embedding(req.modality, &req.content, self.seed, self.dims.dim(req.modality));
        Ok(self.respond(DecoderRequest::Embed(req.clone()), ResponsePayload::Vector(v)))
    }
}

/// Failure pattern of a [`FaultyDecoder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Every call fails as unavailable (e.g. a timeout).
    Unavailable,
    /// Every call is rejected as overloaded.
    Overloaded,
    /// The first `n` calls fail as unavailable, later calls succeed.
    FailFirst(usize),
    /// Only text completions fail; embeddings keep working.
    CompletionsUnavailable,
    /// Completions succeed with text no task parser accepts.
    Garbled,
}

/// Wraps a client and injects failures for atomicity tests.
#[derive(Debug)]
pub struct FaultyDecoder<C> {
    inner: C,
    fault: Fault,
    calls: AtomicUsize,
}

impl<C: DecoderClient> FaultyDecoder<C> {
    pub fn new(inner: C, fault: Fault) -> Self {
        Self { inner, fault, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn gate(&self, completion: bool) -> Result<()> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        match self.fault {
            Fault::Unavailable => Err(GwmError::DecoderUnavailable("injected timeout".into())),
            Fault::Overloaded => Err(GwmError::Overloaded("injected 429".into())),
            Fault::FailFirst(k) if n < k => {
                Err(GwmError::DecoderUnavailable(format!("injected failure {}", n + 1)))
            }
            Fault::CompletionsUnavailable if completion => {
                Err(GwmError::DecoderUnavailable("injected completion timeout".into()))
            }
            _ => Ok(()),
        }
    }
}

impl<C: DecoderClient> DecoderClient for FaultyDecoder<C> {
    fn service_id(&self) -> &str {
        self.inner.service_id()
    }

    fn llm_complete(&self, req: &CompleteRequest) -> Result<DecoderResponse> {
        self.gate(true)?;
        let mut resp = self.inner.llm_complete(req)?;
        if self.fault == Fault::Garbled {
            resp.payload = ResponsePayload::Text("~~garbled~~".into());
        }
        Ok(resp)
    }

    fn generate_image(&self, req: &GenerateImageRequest) -> Result<DecoderResponse> {
        self.gate(true)?;
        self.inner.generate_image(req)
    }

    fn embed(&self, req: &EmbedRequest) -> Result<DecoderResponse> {
        self.gate(false)?;
        self.inner.embed(req)
    }
}
