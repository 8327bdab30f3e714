//! Recommendation: users and items as state nodes, interactions as typed edges.

use std::collections::HashSet;

use crate::error::{GwmError, Result};
use crate::graph::{Edge, GraphOptions, GraphState, MultiModalNode, NodeId};

pub const INTERACTION_EDGE_TYPE: &str = "interaction";

/// Users first, then items, then one `interaction` edge per distinct pair. Both
/// endpoints of an interaction must be declared on the right side.
pub fn build_bipartite_rec_graph(
    users: Vec<MultiModalNode>,
    items: Vec<MultiModalNode>,
    interactions: &[(NodeId, NodeId)],
    options: GraphOptions,
) -> Result<GraphState> {
    let user_ids: HashSet<NodeId> = users.iter().map(|n| n.id().clone()).collect();
    let item_ids: HashSet<NodeId> = items.iter().map(|n| n.id().clone()).collect();
    let mut edit = GraphState::new(options).edit();
    for n in users.into_iter().chain(items) {
        edit.add_node(n)?;
    }
    for (u, i) in interactions {
        if !user_ids.contains(u) || !item_ids.contains(i) {
            return Err(GwmError::DanglingInteraction(format!("{u} -> {i}")));
        }
        let edge = Edge::explicit(u.clone(), i.clone()).with_type(INTERACTION_EDGE_TYPE);
        if !edit.state().contains_edge(&edge.key()) {
            edit.add_edge(edge)?;
        }
    }
    Ok(edit.commit())
}
