//! Implicit-edge construction by embedding similarity and symmetric normalization
//! `Ã = D^{-1/2} A D^{-1/2}`.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GwmError, Result};
use crate::graph::{Adjacency, Edge, EdgeKey, EdgeKind, GraphState, Modality, ModalityDims, MultiModalNode, NodeId};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

/// Which embedding of a node similarity is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    /// Zero-filled concatenation `e_v` of all slots; needs at least one slot set.
    #[default]
    Concat,
    Image,
    Text,
    Table,
}

impl EmbeddingSource {
    pub fn modality(self) -> Option<Modality> {
        match self {
            EmbeddingSource::Concat => None,
            EmbeddingSource::Image => Some(Modality::Image),
            EmbeddingSource::Text => Some(Modality::Text),
            EmbeddingSource::Table => Some(Modality::Table),
        }
    }

    /// Width of the vectors this source yields.
    pub fn dim(self, dims: &ModalityDims) -> usize {
        self.modality().map_or(dims.total(), |m| dims.dim(m))
    }

    /// The node's vector under this source, or `None` when the slot is empty.
    pub fn vector(self, node: &MultiModalNode, dims: &ModalityDims) -> Option<Vec<f32>> {
        match self.modality() {
            Some(m) => node.embedding(m).map(<[f32]>::to_vec),
            None => node.has_any_embedding().then(|| node.concat_embedding(dims)),
        }
    }
}

impl std::str::FromStr for EmbeddingSource {
    type Err = GwmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(EmbeddingSource::Concat),
            "image" => Ok(EmbeddingSource::Image),
            "text" => Ok(EmbeddingSource::Text),
            "table" => Ok(EmbeddingSource::Table),
            other => Err(GwmError::InvalidArgument(format!("unknown embedding source `{other}`"))),
        }
    }
}

/// Cosine similarity in `f64`; zero vectors score 0 against everything.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn unit(v: &[f32]) -> Vec<f64> {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|&x| x as f64 / norm).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Collects one vector per node in insertion order.
pub fn node_vectors(state: &GraphState, source: EmbeddingSource) -> Result<Vec<Vec<f32>>> {
    state
        .nodes()
        .map(|n| {
            source
                .vector(n, state.dims())
                .ok_or_else(|| GwmError::MissingEmbedding(n.id().to_string()))
        })
        .collect()
}

/// Ranked neighbours of `i`: similarity descending, node id ascending.
fn ranked_neighbours(
    i: usize,
    units: &[Vec<f64>],
    ids: &[NodeId],
    k: usize,
    threshold: f64,
) -> Vec<(usize, f64)> {
    let mut cands: Vec<(usize, f64)> = (0..units.len())
        .filter(|&j| j != i)
        .map(|j| (j, dot(&units[i], &units[j])))
        .filter(|&(_, s)| s >= threshold)
        .collect();
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| ids[a.0].cmp(&ids[b.0])));
    cands.truncate(k);
    cands
}

/// Adds implicit edges from every node to its `k` most similar nodes with similarity
/// at least `threshold`. Directed choices are unioned into undirected edges; pairs
/// already joined by an untyped implicit edge are left alone, so the operation is
/// idempotent.
pub fn knn_implicit_edges(
    state: &GraphState,
    source: EmbeddingSource,
    k: usize,
    threshold: f64,
) -> Result<GraphState> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(GwmError::InvalidThreshold(threshold));
    }
    let n = state.len();
    if k == 0 || k >= n {
        return Err(GwmError::DegenerateK { k, nodes: n });
    }
    let vectors = node_vectors(state, source)?;
    let units: Vec<Vec<f64>> = vectors.iter().map(|v| unit(v)).collect();
    let ids = state.node_order();

    let choices: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| ranked_neighbours(i, &units, &ids, k, threshold))
        .collect();

    let mut edit = state.edit();
    let mut seen: HashSet<EdgeKey> = HashSet::new();
    for (i, row) in choices.into_iter().enumerate() {
        for (j, sim) in row {
            let key = EdgeKey::new(ids[i].clone(), ids[j].clone(), EdgeKind::Implicit, None);
            if state.contains_edge(&key) || !seen.insert(key) {
                continue;
            }
            let weight = sim.clamp(0.0, 1.0);
            edit.add_edge(Edge::implicit(ids[i].clone(), ids[j].clone(), weight))?;
        }
    }
    if seen.is_empty() {
        return Ok(state.clone());
    }
    Ok(edit.commit())
}

/// Symmetric-normalized adjacency over a recorded node order.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency<T> {
    pub matrix: CsrMatrix<T>,
    pub node_order: Vec<NodeId>,
    pub built_from_version: u64,
}

impl<T: Scalar> NormalizedAdjacency<T> {
    pub fn len(&self) -> usize {
        self.node_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_order.is_empty()
    }
}

/// `Ã[i][j] = A[i][j] / sqrt(d_i d_j)`. Rows and columns of zero-degree nodes stay zero.
pub fn normalize_matrix<T: Scalar>(a: &CsrMatrix<T>) -> Result<CsrMatrix<T>> {
    if let Some((i, j)) = a.asymmetry() {
        return Err(GwmError::AsymmetricInput(i, j));
    }
    if let Some((i, j, _)) = a.iter().find(|&(_, _, v)| v < T::zero() || !v.is_finite()) {
        return Err(GwmError::NegativeEntry(i, j));
    }
    let deg = a.row_sums();
    Ok(a.map_values(|i, j, v| v / (deg[i] * deg[j]).sqrt()))
}

pub fn normalize_adjacency<T: Scalar>(adj: &Adjacency<T>) -> Result<NormalizedAdjacency<T>> {
    Ok(NormalizedAdjacency {
        matrix: normalize_matrix(&adj.matrix)?,
        node_order: adj.node_order.clone(),
        built_from_version: adj.version,
    })
}

/// Power-iteration estimate of the largest absolute eigenvalue. The start vector is
/// drawn from a ChaCha8 stream seeded with `seed`.
pub fn spectral_radius_estimate<T: Scalar>(m: &CsrMatrix<T>, iters: usize, seed: u64) -> T {
    let n = m.rows();
    if n == 0 || m.nnz() == 0 {
        return T::zero();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<T> = (0..n).map(|_| T::of(rng.random_range(-1.0..1.0))).collect();
    let norm = |v: &[T]| v.iter().map(|&e| e * e).sum::<T>().sqrt();
    let n0 = norm(&x);
    x.iter_mut().for_each(|e| *e = *e / n0);
    let mut estimate = T::zero();
    for _ in 0..iters.max(1) {
        let y = m.mul_vec(&x).expect("square matrix");
        estimate = norm(&y);
        if estimate == T::zero() {
            return T::zero();
        }
        x = y.into_iter().map(|e| e / estimate).collect();
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{AdjacencyWeighting, GraphOptions, MultiModalNode};

    fn dims3() -> ModalityDims {
        ModalityDims { image: 1, text: 3, table: 1 }
    }

    fn with_text_vectors(vs: &[(&str, [f32; 3])]) -> GraphState {
        let s = GraphState::new(GraphOptions { dims: dims3(), ..Default::default() });
        let mut e = s.edit();
        for (id, v) in vs {
            e.add_node(MultiModalNode::text_node(*id, *id)).unwrap();
            e.set_embedding(id, Modality::Text, v.to_vec()).unwrap();
        }
        e.commit()
    }

    #[test]
    fn identical_vectors_collapse_to_two_edges() {
        let s = with_text_vectors(&[("a", [1.0, 0.0, 0.0]), ("b", [1.0, 0.0, 0.0]), ("c", [1.0, 0.0, 0.0])]);
        let out = knn_implicit_edges(&s, EmbeddingSource::Text, 1, 0.0).unwrap();
        let mut keys: Vec<(String, String)> =
            out.edges().map(|e| (e.key().lo.to_string(), e.key().hi.to_string())).collect();
        keys.sort();
        assert_eq!(keys, vec![("a".into(), "b".into()), ("a".into(), "c".into())]);
        assert!(out.edges().all(|e| e.weight == 1.0));
    }

    #[test]
    fn orthogonal_vectors_yield_no_edges() {
        let s = with_text_vectors(&[("a", [1.0, 0.0, 0.0]), ("b", [0.0, 1.0, 0.0]), ("c", [0.0, 0.0, 1.0])]);
        let out = knn_implicit_edges(&s, EmbeddingSource::Text, 2, 0.5).unwrap();
        assert_eq!(out.edge_count(), 0);
    }

    #[test]
    fn knn_errors() {
        let s = with_text_vectors(&[("a", [1.0, 0.0, 0.0]), ("b", [0.0, 1.0, 0.0])]);
        assert_eq!(
            knn_implicit_edges(&s, EmbeddingSource::Text, 2, 0.0).unwrap_err(),
            GwmError::DegenerateK { k: 2, nodes: 2 }
        );
        assert_eq!(
            knn_implicit_edges(&s, EmbeddingSource::Image, 1, 0.0).unwrap_err(),
            GwmError::MissingEmbedding("a".into())
        );
        assert!(knn_implicit_edges(&s, EmbeddingSource::Text, 1, 1.5).is_err());
    }

    #[test]
    fn knn_is_idempotent() {
        let s = with_text_vectors(&[
            ("a", [1.0, 0.1, 0.0]),
            ("b", [0.9, 0.2, 0.1]),
            ("c", [0.0, 1.0, 0.3]),
            ("d", [0.1, 0.8, 0.5]),
        ]);
        let once = knn_implicit_edges(&s, EmbeddingSource::Text, 2, -1.0).unwrap();
        let twice = knn_implicit_edges(&once, EmbeddingSource::Text, 2, -1.0).unwrap();
        assert_eq!(once.edge_count(), twice.edge_count());
        assert_eq!(once, twice);
    }

    #[test]
    fn cosine_of_zero_vector_is_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_edge_normalizes_to_itself() {
        let a = CsrMatrix::from_rows(2, vec![vec![(1, 1.0)], vec![(0, 1.0)]]).unwrap();
        let n = normalize_matrix(&a).unwrap();
        assert_eq!(n, a);
        assert_eq!(spectral_radius_estimate(&n, 50, 3), 1.0);
    }

    #[test]
    fn triangle_and_star_entries() {
        let k3 = CsrMatrix::from_rows(
            3,
            vec![vec![(1, 1.0), (2, 1.0)], vec![(0, 1.0), (2, 1.0)], vec![(0, 1.0), (1, 1.0)]],
        )
        .unwrap();
        let n = normalize_matrix(&k3).unwrap();
        assert!(n.iter().all(|(_, _, v)| v == 0.5));

        let star = CsrMatrix::from_rows(
            4,
            vec![vec![(1, 1.0), (2, 1.0), (3, 1.0)], vec![(0, 1.0)], vec![(0, 1.0)], vec![(0, 1.0)]],
        )
        .unwrap();
        let n = normalize_matrix(&star).unwrap();
        for j in 1..4 {
            assert!((n.get(0, j) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn isolated_rows_stay_zero() {
        let a = CsrMatrix::from_rows(3, vec![vec![(1, 1.0)], vec![(0, 1.0)], vec![]]).unwrap();
        let n = normalize_matrix(&a).unwrap();
        assert_eq!(n.row(2).0.len(), 0);
    }

    #[test]
    fn asymmetric_and_negative_inputs_fail() {
        let a = CsrMatrix::from_rows(2, vec![vec![(1, 1.0)], vec![]]).unwrap();
        assert_eq!(normalize_matrix(&a).unwrap_err(), GwmError::AsymmetricInput(0, 1));
        let neg = CsrMatrix::from_rows(2, vec![vec![(1, -1.0)], vec![(0, -1.0)]]).unwrap();
        assert_eq!(normalize_matrix(&neg).unwrap_err(), GwmError::NegativeEntry(0, 1));
    }

    #[test]
    fn zero_matrix_has_zero_radius() {
        assert_eq!(spectral_radius_estimate(&CsrMatrix::<f64>::zeros(4, 4), 10, 0), 0.0);
    }

    #[test]
    fn normalize_adjacency_records_provenance() {
        let s = with_text_vectors(&[("a", [1.0, 0.0, 0.0]), ("b", [1.0, 0.0, 0.0])]);
        let s = s.add_edge(Edge::explicit("a", "b")).unwrap();
        let adj = s.adjacency::<f64>(&EdgeKind::ALL, None, AdjacencyWeighting::Binary).unwrap();
        let n = normalize_adjacency(&adj).unwrap();
        assert_eq!(n.built_from_version, s.version());
        assert_eq!(n.node_order, s.node_order());
    }
}
