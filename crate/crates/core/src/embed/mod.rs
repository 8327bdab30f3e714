//! Embedding-level message passing: per-node embedding assembly, parameter-free
//! multi-hop propagation, the per-hop fusion projector and its proxy trainer.

mod assemble;
mod projector;
mod propagate;
mod train;

pub use assemble::{assemble_embeddings, embed_state, modality_content, EmbeddingMatrix};
pub use projector::{fuse, fuse_heterogeneous, scope_inputs, Activation, AffineMap, GraphTargets, GraphTokens, Projector, TargetScope};
pub use propagate::{propagate, propagate_heterogeneous, propagate_state, HeteroHopStack, HopStack};
pub use train::{projector_loss_and_gradient, train_projector_proxy, ProjectorGradient, TrainConfig, TrainReport, TrainingPair};
