//! HTTP transport for decoder services and a deterministic mock service.
//!
//! Wire protocol (JSON over `POST`):
//!
//! | path | request | response |
//! |------|---------|----------|
//! | `/v1/complete` | `{prompt, max_tokens, graph_tokens?}` | `{text}` |
//! | `/v1/generate_image` | `{prompt, condition_tokens?}` | `{image_ref}` |
//! | `/v1/embed` | `{modality, content}` | `{vector}` |

mod client;
mod server;

pub use client::{HttpConfig, HttpDecoderClient};
pub use server::{router, serve, serve_blocking, MockServer};

pub const COMPLETE_PATH: &str = "/v1/complete";
pub const GENERATE_IMAGE_PATH: &str = "/v1/generate_image";
pub const EMBED_PATH: &str = "/v1/embed";
/// Header carrying the client-generated idempotency key.
pub const REQUEST_ID_HEADER: &str = "x-request-id";
