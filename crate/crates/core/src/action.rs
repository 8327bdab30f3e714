//! Action nodes and their resolution to target state nodes `v_r = R(v, a)`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edges::{cosine, EmbeddingSource};
use crate::embed::{GraphTargets, TargetScope};
use crate::error::{GwmError, Result};
use crate::graph::{GraphState, NodeId};
use crate::templates::TemplateRegistry;

/// Default number of nodes an unintended action retrieves.
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionLevel {
    Node,
    Edge,
    Graph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionKind {
    /// Targets declared up front at node, edge or graph level.
    Intended { targets: TargetScope },
    /// Targets found by top-k similarity to the query.
    Unintended { query_text: String, k: usize },
}

/// A task query posed against the world state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionNode {
    pub id: String,
    pub kind: ActionKind,
    pub template_id: String,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl ActionNode {
    pub fn intended(id: impl Into<String>, targets: TargetScope, template_id: impl Into<String>) -> Self {
        Self { id: id.into(), kind: ActionKind::Intended { targets }, template_id: template_id.into(), params: BTreeMap::new() }
    }

    pub fn unintended(id: impl Into<String>, query_text: impl Into<String>, k: usize, template_id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind: ActionKind::Unintended { query_text: query_text.into(), k },
            template_id: template_id.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, slot: impl Into<String>, value: impl Into<String>) -> Self {
        self.params.insert(slot.into(), value.into());
        self
    }

    pub fn level(&self) -> ActionLevel {
        match &self.kind {
            ActionKind::Intended { targets: TargetScope::Node(_) } => ActionLevel::Node,
            ActionKind::Intended { targets: TargetScope::Edge(..) } => ActionLevel::Edge,
            ActionKind::Intended { targets: TargetScope::Graph(_) } | ActionKind::Unintended { .. } => ActionLevel::Graph,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ActionKind::Unintended { k: 0, .. } => Err(GwmError::InvalidAction("unintended k must be at least 1".into())),
            ActionKind::Intended { targets: TargetScope::Graph(GraphTargets::Nodes(ids)) } if ids.is_empty() => {
                Err(GwmError::InvalidAction("graph-level action needs at least one target".into()))
            }
            _ => Ok(()),
        }
    }
}

/// How unintended actions score nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalOptions {
    pub source: EmbeddingSource,
    /// Neighbourhood expansion after top-k; retrieved nodes come first, then newly
    /// reached nodes by id.
    pub expand_hops: usize,
}

/// Exact top-k by cosine similarity: score descending, id ascending on ties.
pub fn top_k_cosine(query: &[f32], vectors: &[Vec<f32>], ids: &[NodeId], k: usize) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = vectors.par_iter().map(|v| cosine(query, v)).enumerate().collect();
    let cmp = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then_with(|| ids[a.0].cmp(&ids[b.0]));
    let k = k.min(scored.len());
    if k == 0 {
        return Vec::new();
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    scored
}

fn check_ref(state: &GraphState, id: &NodeId) -> Result<NodeId> {
    if state.contains(id.as_str()) {
        Ok(id.clone())
    } else {
        Err(GwmError::UnresolvedRef(id.to_string()))
    }
}

/// Resolves an action to its target nodes.
pub fn resolve_targets(
    state: &GraphState,
    action: &ActionNode,
    query_embedding: Option<&[f32]>,
    options: &RetrievalOptions,
) -> Result<Vec<NodeId>> {
    action.validate()?;
    match &action.kind {
        ActionKind::Intended { targets } => match targets {
            TargetScope::Node(id) => Ok(vec![check_ref(state, id)?]),
            TargetScope::Edge(a, b) => Ok(vec![check_ref(state, a)?, check_ref(state, b)?]),
            TargetScope::Graph(GraphTargets::All) => {
                if state.is_empty() {
                    return Err(GwmError::EmptyGraph);
                }
                Ok(state.node_order())
            }
            TargetScope::Graph(GraphTargets::Nodes(ids)) => ids.iter().map(|id| check_ref(state, id)).collect(),
        },
        ActionKind::Unintended { k, .. } => {
            if state.is_empty() {
                return Err(GwmError::EmptyGraph);
            }
            let query = query_embedding.ok_or_else(|| GwmError::MissingEmbedding(format!("query of action `{}`", action.id)))?;
            let dim = options.source.dim(state.dims());
            if query.len() != dim {
                return Err(GwmError::ShapeMismatch(format!("query has {} entries, expected {dim}", query.len())));
            }
            let vectors = crate::edges::node_vectors(state, options.source)?;
            let ids = state.node_order();
            let top: Vec<NodeId> = top_k_cosine(query, &vectors, &ids, *k).into_iter().map(|(i, _)| ids[i].clone()).collect();
            Ok(expand(state, top, options.expand_hops))
        }
    }
}

fn expand(state: &GraphState, seeds: Vec<NodeId>, hops: usize) -> Vec<NodeId> {
    if hops == 0 {
        return seeds;
    }
    let order = state.node_order();
    let neighbors = state.neighbor_lists();
    let mut dist: Vec<Option<usize>> = vec![None; order.len()];
    let mut queue = VecDeque::new();
    for s in &seeds {
        let i = state.index_of(s.as_str()).expect("retrieved ids exist");
        dist[i] = Some(0);
        queue.push_back(i);
    }
    let mut reached = BTreeSet::new();
    while let Some(v) = queue.pop_front() {
        let d = dist[v].expect("queued");
        if d == hops {
            continue;
        }
        for &u in &neighbors[v] {
            if dist[u].is_none() {
                dist[u] = Some(d + 1);
                reached.insert(order[u].clone());
                queue.push_back(u);
            }
        }
    }
    seeds.into_iter().chain(reached).collect()
}

/// Fills the action's template. Slot values come from the action params, overridden
/// by `target_texts`.
pub fn render_action_prompt(
    action: &ActionNode,
    target_texts: &BTreeMap<String, String>,
    registry: &TemplateRegistry,
) -> Result<String> {
    let template = registry.get(&action.template_id)?;
    let mut values = action.params.clone();
    values.extend(target_texts.iter().map(|(k, v)| (k.clone(), v.clone())));
    template.render(&values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphOptions, Modality, ModalityDims, MultiModalNode};
    use crate::templates::ids;

    fn state() -> GraphState {
        let dims = ModalityDims { image: 1, text: 2, table: 1 };
        let mut e = GraphState::new(GraphOptions { dims, ..Default::default() }).edit();
        for (id, v) in [("n1", [1.0, 0.0]), ("n2", [0.0, 1.0]), ("n3", [0.6, 0.8]), ("n7", [-1.0, 0.0])] {
            e.add_node(MultiModalNode::text_node(id, id)).unwrap();
            e.set_embedding(id, Modality::Text, v.to_vec()).unwrap();
        }
        e.commit()
    }

    #[test]
    fn intended_routes_verbatim() {
        let a = ActionNode::intended("a", TargetScope::Node("n7".into()), ids::NODE_CLASSIFICATION_CORA);
        assert_eq!(resolve_targets(&state(), &a, None, &Default::default()).unwrap(), vec![NodeId::from("n7")]);
        let bad = ActionNode::intended("a", TargetScope::Node("zz".into()), ids::NODE_CLASSIFICATION_CORA);
        assert_eq!(resolve_targets(&state(), &bad, None, &Default::default()).unwrap_err(), GwmError::UnresolvedRef("zz".into()));
        let all = ActionNode::intended("a", TargetScope::Graph(GraphTargets::All), ids::PLANNING_OPTIMIZATION);
        assert_eq!(resolve_targets(&state(), &all, None, &Default::default()).unwrap().len(), 4);
    }

    #[test]
    fn unintended_self_similarity_wins() {
        let s = state();
        let q = s.node("n3").unwrap().concat_embedding(s.dims());
        let a = ActionNode::unintended("a", "q", 1, ids::RETRIEVAL_AUGMENTED_GENERATION);
        assert_eq!(resolve_targets(&s, &a, Some(&q), &Default::default()).unwrap(), vec![NodeId::from("n3")]);
        let text = RetrievalOptions { source: EmbeddingSource::Text, expand_hops: 0 };
        let a2 = ActionNode::unintended("a", "q", 2, ids::RETRIEVAL_AUGMENTED_GENERATION);
        // n1 (0.6) and n2 (0.8) against n3's text vector; n3 itself first
        assert_eq!(
            resolve_targets(&s, &a2, Some(&[0.6, 0.8]), &text).unwrap(),
            vec![NodeId::from("n3"), NodeId::from("n2")]
        );
    }

    #[test]
    fn unintended_errors() {
        let a = ActionNode::unintended("a", "q", 1, ids::RETRIEVAL_AUGMENTED_GENERATION);
        assert!(matches!(resolve_targets(&state(), &a, None, &Default::default()), Err(GwmError::MissingEmbedding(_))));
        assert_eq!(resolve_targets(&GraphState::default(), &a, Some(&[1.0]), &Default::default()).unwrap_err(), GwmError::EmptyGraph);
        let zero_k = ActionNode::unintended("a", "q", 0, ids::RETRIEVAL_AUGMENTED_GENERATION);
        assert!(matches!(resolve_targets(&state(), &zero_k, Some(&[0.0; 4]), &Default::default()), Err(GwmError::InvalidAction(_))));
        let s = state().add_node(MultiModalNode::text_node("bare", "no embedding")).unwrap();
        assert_eq!(
            resolve_targets(&s, &a, Some(&[0.0, 1.0, 0.0, 0.0]), &Default::default()).unwrap_err(),
            GwmError::MissingEmbedding("bare".into())
        );
    }

    #[test]
    fn zero_query_ties_break_by_id() {
        let a = ActionNode::unintended("a", "q", 3, ids::RETRIEVAL_AUGMENTED_GENERATION);
        let got = resolve_targets(&state(), &a, Some(&[0.0; 4]), &Default::default()).unwrap();
        assert_eq!(got, vec![NodeId::from("n1"), NodeId::from("n2"), NodeId::from("n3")]);
    }

    #[test]
    fn expansion_appends_neighbours() {
        let s = state().add_edge(crate::graph::Edge::explicit("n3", "n7")).unwrap();
        let a = ActionNode::unintended("a", "q", 1, ids::RETRIEVAL_AUGMENTED_GENERATION);
        let opts = RetrievalOptions { source: EmbeddingSource::Text, expand_hops: 1 };
        assert_eq!(
            resolve_targets(&s, &a, Some(&[0.6, 0.8]), &opts).unwrap(),
            vec![NodeId::from("n3"), NodeId::from("n7")]
        );
    }

    #[test]
    fn render_prompts() {
        let r = TemplateRegistry::builtin();
        let a = ActionNode::intended("a", TargetScope::Node("n1".into()), ids::NODE_CLASSIFICATION_CORA);
        let texts = BTreeMap::from([("node".to_string(), "a paper".to_string())]);
        let p = render_action_prompt(&a, &texts, &r).unwrap();
        assert!(p.contains("we need to classify the center node into 7 classes"));
        assert_eq!(render_action_prompt(&a, &BTreeMap::new(), &r).unwrap_err(), GwmError::MissingSlot("node".into()));
        let rag = ActionNode::unintended("r", "q", 5, ids::RETRIEVAL_AUGMENTED_GENERATION).with_param("user query", "who?");
        let docs = BTreeMap::from([("retrieved documents".to_string(), "[doc one]".to_string())]);
        let p = render_action_prompt(&rag, &docs, &r).unwrap();
        assert!(p.contains("who?") && p.contains("[doc one]"));
        assert!(p.contains("Retrieval-Augmented Generation task for improving response quality"));
    }
}
