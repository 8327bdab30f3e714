mod common;

use common::*;
use gwm_core::embed::embed_state;
use gwm_core::graph::GraphOptions;
use gwm_core::mock::MockDecoder;
use gwm_core::store::{graph_from_json, graph_to_json, load_graph, save_graph, EmbeddingStore, ReadMode};
use gwm_core::{GraphState, GwmError, MultiModalNode};

fn embedded(seed: u64) -> GraphState {
    let mut r = rng(seed);
    let state = random_rich_graph(&mut r, 15);
    embed_state(&state, &MockDecoder::new(seed, *state.dims())).unwrap()
}

#[test]
fn graph_files_round_trip_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.gwm.json");
    let state = embedded(1);
    save_graph(&state, &path).unwrap();
    let back = load_graph(&path, ReadMode::Strict).unwrap();
    assert_eq!(back, state);
    assert_eq!(graph_to_json(&back), std::fs::read_to_string(&path).unwrap());
}

#[test]
fn unknown_keys_are_rejected_strictly_and_dropped_leniently() {
    let state = embedded(2);
    let mut v: serde_json::Value = serde_json::from_str(&graph_to_json(&state)).unwrap();
    v["nodes"][0]["colour"] = "red".into();
    v["extra"] = 1.into();
    let text = v.to_string();
    assert!(matches!(graph_from_json(&text, ReadMode::Strict), Err(GwmError::SchemaViolation(_))));
    assert_eq!(graph_from_json(&text, ReadMode::Lenient).unwrap(), state);
}

#[test]
fn malformed_graph_files_are_schema_violations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.gwm.json");
    std::fs::write(&path, [0xff, 0xfe, 0x00]).unwrap();
    assert!(matches!(load_graph(&path, ReadMode::Lenient), Err(GwmError::SchemaViolation(_))));
    assert!(graph_from_json("{\"nodes\": 3}", ReadMode::Lenient).is_err());
    assert!(matches!(load_graph(dir.path().join("missing"), ReadMode::Strict), Err(GwmError::Io(_))));
}

#[test]
fn embedding_stores_round_trip_and_restore_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.gwme");
    let state = embedded(3);
    let store = EmbeddingStore::from_state(&state);
    assert_eq!((store.rows(), store.cols()), (state.len(), state.dims().total()));
    store.save(&path).unwrap();
    let back = EmbeddingStore::load(&path).unwrap();
    assert_eq!(back, store);
    assert_eq!(back.to_bytes(), std::fs::read(&path).unwrap());

    let bare = random_rich_graph(&mut rng(3), 15);
    let restored = back.apply_to(&bare).unwrap();
    for (a, b) in restored.nodes().zip(state.nodes()) {
        assert_eq!(a.concat_embedding(state.dims()), b.concat_embedding(state.dims()));
    }
}

#[test]
fn stores_refuse_a_different_node_order() {
    let state = embedded(4);
    let store = EmbeddingStore::from_state(&state);
    let other = state.add_node(MultiModalNode::text_node("zz-extra", "x")).unwrap();
    assert!(!store.matches(&other));
    assert!(matches!(store.apply_to(&other), Err(GwmError::SchemaViolation(_))));
}

#[test]
fn corrupt_store_headers_are_rejected() {
    let bytes = EmbeddingStore::from_state(&embedded(5)).to_bytes();
    let mut magic = bytes.clone();
    magic[0] ^= 1;
    assert!(matches!(EmbeddingStore::from_bytes(&magic), Err(GwmError::SchemaViolation(_))));
    assert!(matches!(EmbeddingStore::from_bytes(&bytes[..bytes.len() - 1]), Err(GwmError::SchemaViolation(_))));
    assert!(matches!(EmbeddingStore::from_bytes(&bytes[..10]), Err(GwmError::SchemaViolation(_))));
}

#[test]
fn default_options_survive_a_round_trip() {
    let state = GraphState::new(GraphOptions::default()).add_node(MultiModalNode::text_node("a", "x")).unwrap();
    assert_eq!(graph_from_json(&graph_to_json(&state), ReadMode::Strict).unwrap(), state);
}
