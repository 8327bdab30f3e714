use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::edges::{normalize_adjacency, NormalizedAdjacency};
use crate::error::{GwmError, Result};
use crate::graph::{AdjacencyWeighting, EdgeKind, GraphState, NodeId};
use crate::scalar::Scalar;

/// Retained hop embeddings `[X_e, X_e^(1), ..., X_e^(L)]`, all `n × d` over one node order.
#[derive(Debug, Clone, PartialEq)]
pub struct HopStack<T> {
    hops: Vec<Array2<T>>,
    node_order: Vec<NodeId>,
    source_version: u64,
}

impl<T: Scalar> HopStack<T> {
    pub fn new(hops: Vec<Array2<T>>, node_order: Vec<NodeId>, source_version: u64) -> Result<Self> {
        let first = hops.first().ok_or_else(|| GwmError::ShapeMismatch("hop stack is empty".into()))?;
        let shape = first.dim();
        if shape.0 != node_order.len() {
            return Err(GwmError::ShapeMismatch(format!(
                "{} rows for {} nodes",
                shape.0,
                node_order.len()
            )));
        }
        if hops.iter().any(|h| h.dim() != shape) {
            return Err(GwmError::ShapeMismatch("hop matrices differ in shape".into()));
        }
        Ok(Self { hops, node_order, source_version })
    }

    pub fn hops(&self) -> &[Array2<T>] {
        &self.hops
    }

    pub fn hop(&self, l: usize) -> &Array2<T> {
        &self.hops[l]
    }

    /// Number of propagation steps `L`; the stack holds `L + 1` matrices.
    pub fn depth(&self) -> usize {
        self.hops.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.hops[0].ncols()
    }

    pub fn len(&self) -> usize {
        self.node_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_order.is_empty()
    }

    pub fn node_order(&self) -> &[NodeId] {
        &self.node_order
    }

    pub fn source_version(&self) -> u64 {
        self.source_version
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.node_order.iter().position(|n| n.as_str() == id)
    }

    /// Row-wise concatenation `[X_e | X_e^(1) | ... | X_e^(L)]`.
    pub fn concat_features(&self) -> Array2<T> {
        let views: Vec<ArrayView2<'_, T>> = self.hops.iter().map(|h| h.view()).collect();
        concatenate(Axis(1), &views).expect("hops share row count")
    }
}

/// `hops[l] = Ã · hops[l-1]`, so `hops[l] = Ã^l X`. `hops = 0` keeps only `X`.
pub fn propagate<T: Scalar>(
    x: ArrayView2<'_, T>,
    adj: &NormalizedAdjacency<T>,
    hops: usize,
) -> Result<HopStack<T>> {
    if x.nrows() != adj.matrix.rows() {
        return Err(GwmError::ShapeMismatch(format!(
            "embedding matrix has {} rows, adjacency has {}",
            x.nrows(),
            adj.matrix.rows()
        )));
    }
    let mut stack = Vec::with_capacity(hops + 1);
    stack.push(x.to_owned());
    for l in 1..=hops {
        let next = adj.matrix.mul_dense(stack[l - 1].view())?;
        stack.push(next);
    }
    HopStack::new(stack, adj.node_order.clone(), adj.built_from_version)
}

/// Builds `Ã` from a snapshot and propagates `x` (rows in snapshot order).
pub fn propagate_state<T: Scalar>(
    state: &GraphState,
    x: ArrayView2<'_, T>,
    hops: usize,
    weighting: AdjacencyWeighting,
) -> Result<HopStack<T>> {
    let adj = state.adjacency::<T>(&EdgeKind::ALL, None, weighting)?;
    propagate(x, &normalize_adjacency(&adj)?, hops)
}

/// One hop stack per edge type, in first-seen type order.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroHopStack<T> {
    pub per_type: Vec<(String, HopStack<T>)>,
}

/// Separate multi-hop aggregation for each edge type of a heterogeneous graph.
pub fn propagate_heterogeneous<T: Scalar>(
    state: &GraphState,
    x: ArrayView2<'_, T>,
    hops: usize,
    weighting: AdjacencyWeighting,
) -> Result<HeteroHopStack<T>> {
    let types = state.edge_types();
    if types.is_empty() {
        return Err(GwmError::InvalidArgument("graph has no typed edges".into()));
    }
    let per_type = types
        .into_iter()
        .map(|t| {
            let adj = state.adjacency::<T>(&EdgeKind::ALL, Some(&t), weighting)?;
            Ok((t, propagate(x, &normalize_adjacency(&adj)?, hops)?))
        })
        .collect::<Result<_>>()?;
    Ok(HeteroHopStack { per_type })
}
