//! Graph world model runtime.
//!
//! The world state is a graph of multi-modal nodes joined by explicit and implicit
//! edges ([`graph`]). Actions resolve to target nodes ([`action`]), node information is
//! aggregated either as text ([`token`]) or as embeddings ([`embed`]), a decoder
//! service answers ([`clients`]), and the answer is applied back to the state as a
//! transition ([`transition`]).
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the `f64` instantiation used throughout the pipeline.

pub mod action;
pub mod clients;
pub mod edges;
pub mod embed;
pub mod error;
pub mod graph;
pub mod mock;
pub mod scalar;
pub mod sparse;
pub mod step;
pub mod store;
pub mod tasks;
pub mod templates;
pub mod token;
pub mod transition;

pub use error::{GwmError, Result};
pub use graph::{Edge, EdgeKind, GraphState, Modality, ModalityDims, MultiModalNode, NodeId, TablePayload};
pub use scalar::Scalar;

pub type HopStack = embed::HopStack<f64>;
pub type HopStack32 = embed::HopStack<f32>;
pub type Projector = embed::Projector<f64>;
pub type Projector32 = embed::Projector<f32>;
pub type GraphTokens = embed::GraphTokens<f64>;
pub type NormalizedAdjacency = edges::NormalizedAdjacency<f64>;
pub type CsrMatrix = sparse::CsrMatrix<f64>;
pub type EmbeddingMatrix = embed::EmbeddingMatrix<f64>;
