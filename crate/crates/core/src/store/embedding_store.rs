//! Binary embedding matrices (`GWME`).
//!
//! Layout, little-endian throughout:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `GWME` |
//! | 4     | format version (u32) |
//! | 8     | rows (u64) |
//! | 8     | cols (u64) |
//! | 32    | SHA-256 of the node order |
//! | 4·rows·cols | row-major f32 body |

use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{GwmError, Result};
use crate::graph::{GraphState, Modality, NodeId};
use crate::scalar::Scalar;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"GWME";
pub const EMBEDDING_FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 32;

/// Digest of a node ordering: SHA-256 over each id followed by a NUL byte.
pub fn node_order_digest(order: &[NodeId]) -> [u8; 32] {
    let mut h = Sha256::new();
    for id in order {
        h.update(id.as_str().as_bytes());
        h.update([0u8]);
    }
    h.finalize().into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub digest: [u8; 32],
    pub values: Array2<f32>,
}

impl EmbeddingStore {
    pub fn new(order: &[NodeId], values: Array2<f32>) -> Result<Self> {
        if values.nrows() != order.len() {
            return Err(GwmError::ShapeMismatch(format!("{} rows for {} nodes", values.nrows(), order.len())));
        }
        Ok(Self { digest: node_order_digest(order), values })
    }

    /// `[e_a | e_t | e_b]` per node, absent or stale slots as zeros.
    pub fn from_state(state: &GraphState) -> Self {
        let dims = *state.dims();
        let mut values = Array2::<f32>::zeros((state.len(), dims.total()));
        for (i, n) in state.nodes().enumerate() {
            values.row_mut(i).assign(&ndarray::Array1::from(n.concat_embedding(&dims)));
        }
        Self { digest: node_order_digest(&state.node_order()), values }
    }

    /// Converts a kernel-precision matrix.
    pub fn from_matrix<T: Scalar>(order: &[NodeId], m: &Array2<T>) -> Result<Self> {
        Self::new(order, m.mapv(|v| v.to_f32_lossy()))
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn matches(&self, state: &GraphState) -> bool {
        self.digest == node_order_digest(&state.node_order())
    }

    /// Writes the stored slots into `state` as one new snapshot. A modality block that
    /// is entirely zero is treated as absent and leaves the slot untouched.
    pub fn apply_to(&self, state: &GraphState) -> Result<GraphState> {
        if !self.matches(state) {
            return Err(GwmError::SchemaViolation("embedding store was written for a different node order".into()));
        }
        let dims = *state.dims();
        if self.cols() != dims.total() {
            return Err(GwmError::ShapeMismatch(format!("store has {} columns, graph expects {}", self.cols(), dims.total())));
        }
        let mut edit = state.edit();
        for (i, n) in state.nodes().enumerate() {
            for m in Modality::ALL {
                let off = dims.offset(m);
                let block: Vec<f32> = self.values.row(i).iter().skip(off).take(dims.dim(m)).copied().collect();
                if block.iter().all(|&v| v == 0.0) || !n.has_modality(m) {
                    continue;
                }
                edit.set_embedding(n.id().as_str(), m, block)?;
            }
        }
        Ok(edit.commit())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&EMBEDDING_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols() as u64).to_le_bytes());
        out.extend_from_slice(&self.digest);
        for v in self.values.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| GwmError::SchemaViolation(format!("embedding store: {m}"));
        if bytes.len() < HEADER_LEN {
            return Err(bad("truncated header"));
        }
        if &bytes[..4] != EMBEDDING_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != EMBEDDING_FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
        let digest: [u8; 32] = bytes[24..56].try_into().expect("32 bytes");
        let body = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| usize::try_from(n).ok())
            .ok_or_else(|| bad("dimensions overflow"))?;
        if bytes.len() - HEADER_LEN != body {
            return Err(bad(&format!("body has {} bytes, header implies {body}", bytes.len() - HEADER_LEN)));
        }
        let values: Vec<f32> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let values = Array2::from_shape_vec((rows as usize, cols as usize), values).map_err(|e| bad(&e.to_string()))?;
        Ok(Self { digest, values })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
