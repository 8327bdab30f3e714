//! On-disk formats: JSON graph files, binary embedding stores and projector
//! checkpoints.

mod checkpoint;
mod embedding_store;
mod graph_file;

pub use checkpoint::{
    load_projector, projector_from_bytes, projector_to_bytes, save_projector, CHECKPOINT_FORMAT_VERSION, CHECKPOINT_MAGIC,
};
pub use embedding_store::{node_order_digest, EmbeddingStore, EMBEDDING_FORMAT_VERSION, EMBEDDING_MAGIC};
pub use graph_file::{graph_from_json, graph_to_json, load_graph, save_graph, ReadMode, GRAPH_FORMAT, GRAPH_FORMAT_VERSION};

/// `(format name, version)` of every on-disk format.
pub fn format_versions() -> [(&'static str, u32); 3] {
    [
        ("graph (*.gwm.json)", GRAPH_FORMAT_VERSION),
        ("embedding store (GWME)", EMBEDDING_FORMAT_VERSION),
        ("projector checkpoint (GWMP)", CHECKPOINT_FORMAT_VERSION),
    ]
}
