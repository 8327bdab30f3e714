//! `*.task.json` fixture files: a task, a graph recipe and one action.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rag::{build_rag_graph, KnnParams};
use super::rec::build_bipartite_rec_graph;
use super::TaskSpec;
use crate::action::ActionNode;
use crate::clients::DecoderClient;
use crate::embed::embed_state;
use crate::error::{GwmError, Result};
use crate::graph::{Edge, GraphOptions, GraphState, MultiModalNode, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphRecipe {
    /// Chunk a document and link chunks by similarity.
    Document { text: String, chunk_tokens: usize, knn: KnnParams },
    /// Users, items and their interactions.
    Bipartite {
        users: Vec<MultiModalNode>,
        items: Vec<MultiModalNode>,
        interactions: Vec<(NodeId, NodeId)>,
    },
    /// Nodes and edges given verbatim.
    Inline {
        nodes: Vec<MultiModalNode>,
        #[serde(default)]
        edges: Vec<Edge>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFixture {
    pub name: String,
    pub spec: TaskSpec,
    pub graph: GraphRecipe,
    pub action: ActionNode,
}

impl TaskFixture {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| GwmError::SchemaViolation(format!("task fixture: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Builds the graph and fills every embedding slot from `embedder`.
    pub fn build_graph(&self, embedder: &dyn DecoderClient, options: GraphOptions) -> Result<GraphState> {
        let state = match &self.graph {
            GraphRecipe::Document { text, chunk_tokens, knn } => {
                return build_rag_graph(text, *chunk_tokens, embedder, *knn, options);
            }
            GraphRecipe::Bipartite { users, items, interactions } => {
                build_bipartite_rec_graph(users.clone(), items.clone(), interactions, options)?
            }
            GraphRecipe::Inline { nodes, edges } => GraphState::from_parts(1, nodes.clone(), edges.clone(), options)?,
        };
        embed_state(&state, embedder)
    }
}
