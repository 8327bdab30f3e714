//! Shared generators and dense-arithmetic oracles for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use gwm_core::graph::{AdjacencyWeighting, GraphOptions};
use gwm_core::{Edge, GraphState, Modality, ModalityDims, MultiModalNode, TablePayload};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SMALL_DIMS: ModalityDims = ModalityDims { image: 4, text: 6, table: 5 };

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn task_fixtures() -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixture_dir().join("tasks"))
        .expect("task fixture directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.to_string_lossy().ends_with(".task.json"))
        .collect();
    paths.sort();
    paths
}

pub fn node_id(i: usize) -> String {
    format!("n{i:03}")
}

/// Text-only graph with `n` nodes; every pair gets an explicit edge with probability
/// `p_explicit` and, independently, an implicit edge with a random weight in (0, 1].
pub fn random_graph(rng: &mut impl Rng, n: usize, p_explicit: f64, p_implicit: f64) -> GraphState {
    let options = GraphOptions { allow_self_loops: false, dims: SMALL_DIMS };
    let mut edit = GraphState::new(options).edit();
    for i in 0..n {
        edit.add_node(MultiModalNode::text_node(node_id(i), format!("node {i}"))).unwrap();
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p_explicit) {
                edit.add_edge(Edge::explicit(node_id(i), node_id(j))).unwrap();
            }
            if rng.random_bool(p_implicit) {
                let w = 1.0 - rng.random_range(0.0..1.0);
                edit.add_edge(Edge::implicit(node_id(i), node_id(j), w)).unwrap();
            }
        }
    }
    edit.commit()
}

/// Graph with random payloads, edge types and embedding slots.
pub fn random_rich_graph(rng: &mut impl Rng, n: usize) -> GraphState {
    let options = GraphOptions { allow_self_loops: rng.random_bool(0.3), dims: SMALL_DIMS };
    let mut edit = GraphState::new(options).edit();
    for i in 0..n {
        let mut node = MultiModalNode::new(format!("node-{i}-é{}", rng.random_range(0..1000)));
        let mask = rng.random_range(1..8u8);
        if mask & 1 != 0 {
            node = node.with_text(format!("text \"{i}\"\nline {}", rng.random::<u32>()));
        }
        if mask & 2 != 0 {
            let cols: Vec<String> = (0..rng.random_range(1..4)).map(|c| format!("col{c}")).collect();
            let vals: Vec<String> = cols.iter().map(|_| format!("{:.3}", rng.random::<f64>())).collect();
            node = node.with_table(TablePayload::new(cols, vals).unwrap());
        }
        if mask & 4 != 0 {
            node = node.with_image_ref(format!("img/{i}.png"));
        }
        let id = node.id().to_string();
        let modalities: Vec<Modality> = node.modalities().collect();
        edit.add_node(node).unwrap();
        for m in modalities {
            if rng.random_bool(0.6) {
                let v: Vec<f32> = (0..SMALL_DIMS.dim(m)).map(|_| rng.random_range(-1.0f32..1.0)).collect();
                edit.set_embedding(&id, m, v).unwrap();
            }
        }
    }
    let ids: Vec<String> = edit.state().node_order().iter().map(|i| i.to_string()).collect();
    for a in 0..n {
        for b in a..n {
            if a == b && !options.allow_self_loops {
                continue;
            }
            if rng.random_bool(0.15) {
                let mut e = Edge::explicit(ids[a].clone(), ids[b].clone());
                if rng.random_bool(0.5) {
                    e = e.with_type(["cites", "next", "interaction"][rng.random_range(0..3)]);
                }
                edit.add_edge(e).unwrap();
            }
            if a != b && rng.random_bool(0.1) {
                edit.add_edge(Edge::implicit(ids[a].clone(), ids[b].clone(), rng.random_range(0.01..1.0))).unwrap();
            }
        }
    }
    edit.commit()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// Dense `A` in insertion order, rebuilt from the edge list.
pub fn dense_adjacency(state: &GraphState, weighting: AdjacencyWeighting) -> Array2<f64> {
    let n = state.len();
    let mut a = Array2::<f64>::zeros((n, n));
    for e in state.edges() {
        let i = state.index_of(e.src.as_str()).unwrap();
        let j = state.index_of(e.dst.as_str()).unwrap();
        let w = match weighting {
            AdjacencyWeighting::Binary => 1.0,
            AdjacencyWeighting::Weighted => e.weight,
        };
        a[[i, j]] = f64::max(a[[i, j]], w);
        a[[j, i]] = a[[i, j]];
    }
    a
}

/// `D^{-1/2} A D^{-1/2}` with zero rows for isolated nodes.
pub fn dense_normalized(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| {
        if a[[i, j]] == 0.0 {
            0.0
        } else {
            a[[i, j]] / (deg[i].sqrt() * deg[j].sqrt())
        }
    })
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Max-abs error relative to the oracle's largest entry.
pub fn rel_err(got: &Array2<f64>, oracle: &Array2<f64>) -> f64 {
    let scale = oracle.iter().map(|v| v.abs()).fold(0.0, f64::max);
    max_abs_diff(got, oracle) / scale.max(f64::MIN_POSITIVE)
}

/// Exhaustive cosine ranking: score descending, id ascending.
pub fn brute_force_top_k(query: &[f32], vectors: &[Vec<f32>], ids: &[String], k: usize) -> Vec<String> {
    let norm = |v: &[f32]| v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    let qn = norm(query);
    let mut scored: Vec<(f64, &String)> = vectors
        .iter()
        .zip(ids)
        .map(|(v, id)| {
            let dot: f64 = v.iter().zip(query).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
            let denom = norm(v) * qn;
            (if denom == 0.0 { 0.0 } else { dot / denom }, id)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(k).map(|(_, id)| id.clone()).collect()
}

/// Triangle `0-1-2` with the pendant path `2-3-4-5`.
pub fn triangle_plus_path() -> GraphState {
    let options = GraphOptions { allow_self_loops: false, dims: SMALL_DIMS };
    let mut edit = GraphState::new(options).edit();
    for i in 0..6 {
        edit.add_node(MultiModalNode::text_node(node_id(i), format!("node {i}"))).unwrap();
    }
    for (a, b) in [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5)] {
        edit.add_edge(Edge::explicit(node_id(a), node_id(b))).unwrap();
    }
    edit.commit()
}

/// Population variance of every column.
pub fn column_variances(m: &Array2<f64>) -> Vec<f64> {
    m.columns().into_iter().map(|c| c.var(0.0)).collect()
}
