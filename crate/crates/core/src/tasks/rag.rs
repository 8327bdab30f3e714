//! Retrieval-augmented generation: document chunks as state nodes joined by
//! similarity edges.

use serde::{Deserialize, Serialize};

use crate::clients::DecoderClient;
use crate::edges::{knn_implicit_edges, EmbeddingSource};
use crate::embed::embed_state;
use crate::error::{GwmError, Result};
use crate::graph::{GraphOptions, GraphState, MultiModalNode};

pub const MIN_CHUNK_TOKENS: usize = 16;

/// Neighbour count and similarity floor for implicit edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
    pub threshold: f64,
}

/// Splits `document` into runs of `chunk_tokens` whitespace tokens; the last chunk
/// takes the remainder. Each chunk keeps the document's own spacing between its
/// tokens.
pub fn chunk_document(document: &str, chunk_tokens: usize) -> Result<Vec<String>> {
    if chunk_tokens < MIN_CHUNK_TOKENS {
        return Err(GwmError::InvalidArgument(format!(
            "chunk size {chunk_tokens} is below the minimum of {MIN_CHUNK_TOKENS}"
        )));
    }
    let base = document.as_ptr() as usize;
    let spans: Vec<(usize, usize)> = document
        .split_whitespace()
        .map(|t| {
            let start = t.as_ptr() as usize - base;
            (start, start + t.len())
        })
        .collect();
    if spans.is_empty() {
        return Err(GwmError::EmptyDocument);
    }
    Ok(spans
        .chunks(chunk_tokens)
        .map(|c| document[c[0].0..c[c.len() - 1].1].to_string())
        .collect())
}

/// Chunks, embeds (text modality) and links a document. Node ids are `chunk-NNNN` in
/// document order. `k` is capped at one less than the chunk count.
pub fn build_rag_graph(
    document: &str,
    chunk_tokens: usize,
    embedder: &dyn DecoderClient,
    knn: KnnParams,
    options: GraphOptions,
) -> Result<GraphState> {
    let chunks = chunk_document(document, chunk_tokens)?;
    let mut edit = GraphState::new(options).edit();
    for (i, c) in chunks.iter().enumerate() {
        edit.add_node(MultiModalNode::text_node(format!("chunk-{i:04}"), c.as_str()))?;
    }
    let state = embed_state(&edit.commit(), embedder)?;
    let k = knn.k.min(state.len() - 1);
    if k == 0 {
        return Ok(state);
    }
    knn_implicit_edges(&state, EmbeddingSource::Text, k, knn.threshold)
}
