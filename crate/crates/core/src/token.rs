//! Token-level message passing: modalities rendered as text, unified per node, and
//! aggregated over neighbours with the aggregation prompt under a token budget.
//!
//! `h_v^(0) = v_c` and `h_v^(l) = f_v(h_v^(l-1), [h_u^(l-1) : u ∈ N(v)])`, where each
//! neighbour entry is wrapped in square brackets, entries are joined with `", "` and
//! neighbours are listed by node id ascending.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use crate::clients::{caption_image, DecoderClient};
use crate::error::{GwmError, Result};
use crate::graph::{GraphState, MultiModalNode, NodeId, TablePayload};
use crate::templates::{builtin_template, ids};

/// Placeholder for a modality a node does not have.
pub const MISSING_MODALITY: &str = "N/A";

/// `"{col_1} is {val_1}, {col_2} is {val_2}, ..."`.
pub fn table_to_text(table: &TablePayload) -> String {
    table.pairs().map(|(c, v)| format!("{c} is {v}")).collect::<Vec<_>>().join(", ")
}

/// A node's unified text `v_c` and its per-hop aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedTextNode {
    pub node_id: NodeId,
    pub v_c: String,
    /// `hop_texts[l] = h_v^(l)`; `hop_texts[0] == v_c`.
    pub hop_texts: Vec<String>,
}

/// Renders the unification prompt for a node. Images are captioned through
/// `captioner`; tables are flattened with [`table_to_text`].
pub fn unify_node_text(node: &MultiModalNode, captioner: &dyn DecoderClient) -> Result<UnifiedTextNode> {
    let image = match node.image_ref() {
        Some(r) => caption_image(captioner, r).map_err(|e| match e {
            GwmError::DecoderUnavailable(m) | GwmError::Overloaded(m) => GwmError::CaptionerUnavailable(m),
            other => other,
        })?,
        None => MISSING_MODALITY.to_string(),
    };
    let text = node.text().unwrap_or(MISSING_MODALITY);
    let table = node.table().map(table_to_text).unwrap_or_else(|| MISSING_MODALITY.to_string());
    let v_c = unify_texts(&image, text, &table);
    Ok(UnifiedTextNode { node_id: node.id().clone(), hop_texts: vec![v_c.clone()], v_c })
}

/// Fills the unification prompt with already-textual modalities.
pub fn unify_texts(image_description: &str, original_text: &str, table_description: &str) -> String {
    builtin_template(ids::UNIFY_MODALITIES)
        .render_with(&[
            ("image's text description", image_description),
            ("original text", original_text),
            ("table description", table_description),
        ])
        .expect("all unification slots supplied")
}

/// Unified text of every node in the snapshot.
pub fn unify_all(state: &GraphState, captioner: &dyn DecoderClient) -> Result<HashMap<NodeId, UnifiedTextNode>> {
    state.nodes().map(|n| Ok((n.id().clone(), unify_node_text(n, captioner)?))).collect()
}

/// Service-provided token counting.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

#[derive(Clone, Default)]
pub enum Tokenizer {
    /// Whitespace-separated words.
    #[default]
    Whitespace,
    /// `ceil(chars / 4)`.
    CharsOver4,
    External(Arc<dyn TokenCounter>),
}

impl fmt::Debug for Tokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tokenizer::Whitespace => f.write_str("Whitespace"),
            Tokenizer::CharsOver4 => f.write_str("CharsOver4"),
            Tokenizer::External(_) => f.write_str("External"),
        }
    }
}

impl Tokenizer {
    pub fn count(&self, text: &str) -> usize {
        match self {
            Tokenizer::Whitespace => text.split_whitespace().count(),
            Tokenizer::CharsOver4 => text.chars().count().div_ceil(4),
            Tokenizer::External(c) => c.count(text),
        }
    }

    /// Whether every substring counts at most as many tokens as the whole string.
    fn substring_monotone(&self) -> bool {
        !matches!(self, Tokenizer::External(_))
    }
}

#[derive(Debug, Clone)]
pub struct TokenBudget {
    pub max_tokens: usize,
    pub tokenizer: Tokenizer,
}

impl Default for TokenBudget {
    fn default() -> Self {
        Self { max_tokens: 2048, tokenizer: Tokenizer::Whitespace }
    }
}

impl TokenBudget {
    pub fn new(max_tokens: usize) -> Self {
        Self { max_tokens, ..Default::default() }
    }

    pub fn count(&self, text: &str) -> usize {
        self.tokenizer.count(text)
    }

    pub fn fits(&self, text: &str) -> bool {
        self.count(text) <= self.max_tokens
    }
}

/// Result of one token-level pass around a center node.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenPass {
    /// `h_center^(L)`.
    pub text: String,
    /// `h_center^(l)` for `l = 0..=L` under the final neighbour selection.
    pub hop_texts: Vec<String>,
    /// Nodes evicted to respect the budget, in eviction order.
    pub dropped: Vec<NodeId>,
    pub tokens: usize,
}

struct Renderer<'a> {
    neighbors: &'a [Vec<usize>],
    base: &'a [Option<&'a str>],
    included: &'a [bool],
    budget: &'a TokenBudget,
    memo: HashMap<(usize, usize), Option<String>>,
}

impl Renderer<'_> {
    /// `h_v^(l)`, or `None` once an intermediate text already overflows the budget.
    fn hop_text(&mut self, v: usize, l: usize) -> Option<String> {
        if let Some(hit) = self.memo.get(&(v, l)) {
            return hit.clone();
        }
        let out = if l == 0 {
            Some(self.base[v].expect("included nodes have unified text").to_string())
        } else {
            self.aggregate(v, l)
        };
        let out = out.filter(|t| !self.budget.tokenizer.substring_monotone() || self.budget.fits(t));
        self.memo.insert((v, l), out.clone());
        out
    }

    fn aggregate(&mut self, v: usize, l: usize) -> Option<String> {
        let own = self.hop_text(v, l - 1)?;
        let mut entries = Vec::new();
        let neighbors = self.neighbors;
        for &u in &neighbors[v] {
            if self.included[u] {
                entries.push(format!("[{}]", self.hop_text(u, l - 1)?));
            }
        }
        Some(aggregate_texts(&own, &entries.join(", ")))
    }
}

/// Fills the aggregation prompt for a center text and a rendered neighbour section.
pub fn aggregate_texts(center: &str, neighbors: &str) -> String {
    builtin_template(ids::AGGREGATE_NEIGHBORS)
        .render_with(&[("center node", center), ("neighbor nodes", neighbors)])
        .expect("all aggregation slots supplied")
}

fn distances(neighbors: &[Vec<usize>], center: usize, max: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; neighbors.len()];
    dist[center] = Some(0);
    let mut queue = VecDeque::from([center]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].expect("queued nodes have a distance");
        if d == max {
            continue;
        }
        for &u in &neighbors[v] {
            if dist[u].is_none() {
                dist[u] = Some(d + 1);
                queue.push_back(u);
            }
        }
    }
    dist
}

/// Runs `hops` rounds of token-level message passing around `center` and returns
/// `h_center^(hops)`. When the result would exceed the budget, whole neighbour
/// entries are evicted, farthest hop first and larger ids first within a hop.
pub fn token_message_pass(
    state: &GraphState,
    unified: &HashMap<NodeId, UnifiedTextNode>,
    center: &str,
    hops: usize,
    budget: &TokenBudget,
) -> Result<String> {
    token_message_pass_detailed(state, unified, center, hops, budget).map(|p| p.text)
}

pub fn token_message_pass_detailed(
    state: &GraphState,
    unified: &HashMap<NodeId, UnifiedTextNode>,
    center: &str,
    hops: usize,
    budget: &TokenBudget,
) -> Result<TokenPass> {
    let c = state.index_of(center).ok_or_else(|| GwmError::CenterMissing(center.to_string()))?;
    let order = state.node_order();
    let neighbors = state.neighbor_lists();
    let dist = distances(&neighbors, c, hops);

    let mut base: Vec<Option<&str>> = vec![None; order.len()];
    for (i, d) in dist.iter().enumerate() {
        if d.is_some() {
            let u = unified.get(&order[i]).ok_or_else(|| GwmError::MissingUnifiedText(order[i].to_string()))?;
            base[i] = Some(u.v_c.as_str());
        }
    }

    // eviction order: farthest hop first, then descending id
    let mut candidates: Vec<usize> = (0..order.len()).filter(|&i| i != c && dist[i].is_some()).collect();
    candidates.sort_by(|&a, &b| dist[b].cmp(&dist[a]).then_with(|| order[b].cmp(&order[a])));

    let render = |dropped: usize| -> Option<(String, Vec<String>)> {
        let mut included: Vec<bool> = dist.iter().map(Option::is_some).collect();
        for &i in &candidates[..dropped] {
            included[i] = false;
        }
        let mut r = Renderer { neighbors: &neighbors, base: &base, included: &included, budget, memo: HashMap::new() };
        let text = r.hop_text(c, hops)?;
        if !budget.fits(&text) {
            return None;
        }
        let hop_texts = (0..=hops).map(|l| r.hop_text(c, l).expect("prefix hops fit")).collect();
        Some((text, hop_texts))
    };

    // smallest eviction count that fits; rendered length shrinks monotonically with evictions
    let (mut lo, mut hi) = (0usize, candidates.len());
    let Some(mut best) = render(hi) else {
        let mut included: Vec<bool> = vec![false; order.len()];
        included[c] = true;
        let unlimited = TokenBudget { max_tokens: usize::MAX, tokenizer: budget.tokenizer.clone() };
        let mut r = Renderer { neighbors: &neighbors, base: &base, included: &included, budget: &unlimited, memo: HashMap::new() };
        let needed = budget.count(&r.hop_text(c, hops).expect("unbounded render"));
        return Err(GwmError::BudgetTooSmallForCenter { needed, budget: budget.max_tokens });
    };
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match render(mid) {
            Some(found) => {
                best = found;
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    let dropped: Vec<NodeId> = candidates[..hi].iter().map(|&i| order[i].clone()).collect();
    let tokens = budget.count(&best.0);
    Ok(TokenPass { text: best.0, hop_texts: best.1, dropped, tokens })
}

/// Ids within `hops` of `center`, excluding the center.
pub fn neighborhood(state: &GraphState, center: &str, hops: usize) -> Result<BTreeSet<NodeId>> {
    let c = state.index_of(center).ok_or_else(|| GwmError::CenterMissing(center.to_string()))?;
    let order = state.node_order();
    let dist = distances(&state.neighbor_lists(), c, hops);
    Ok(dist
        .iter()
        .enumerate()
        .filter(|&(i, d)| i != c && d.is_some())
        .map(|(i, _)| order[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use crate::mock::MockDecoder;

    fn unified_of(state: &GraphState) -> HashMap<NodeId, UnifiedTextNode> {
        unify_all(state, &MockDecoder::default()).unwrap()
    }

    #[test]
    fn table_text_format() {
        assert_eq!(table_to_text(&TablePayload::new(["age"], ["3"]).unwrap()), "age is 3");
        assert_eq!(table_to_text(&TablePayload::new(["a", "b"], ["1", "2"]).unwrap()), "a is 1, b is 2");
    }

    #[test]
    fn unify_text_only_and_table_only() {
        let mock = MockDecoder::default();
        let u = unify_node_text(&MultiModalNode::text_node("n", "hello"), &mock).unwrap();
        assert_eq!(
            u.v_c,
            "The image's text description is: N/A, original text is: hello, table description is: N/A."
        );
        assert_eq!(u.hop_texts, vec![u.v_c.clone()]);
        let t = MultiModalNode::new("t").with_table(TablePayload::new(["a"], ["1"]).unwrap());
        let u = unify_node_text(&t, &mock).unwrap();
        assert!(u.v_c.ends_with("table description is: a is 1."));
    }

    #[test]
    fn unify_image_uses_captioner() {
        let n = MultiModalNode::new("i").with_image_ref("img/3.png");
        let u = unify_node_text(&n, &MockDecoder::default()).unwrap();
        assert!(u.v_c.contains("MOCK_CAPTION:img/3.png"));
        let down = crate::mock::FaultyDecoder::new(MockDecoder::default(), crate::mock::Fault::Unavailable);
        assert!(matches!(unify_node_text(&n, &down), Err(GwmError::CaptionerUnavailable(_))));
    }

    #[test]
    fn isolated_center_has_empty_neighbor_section() {
        let s = GraphState::default().add_node(MultiModalNode::text_node("a", "x")).unwrap();
        let out = token_message_pass(&s, &unified_of(&s), "a", 1, &TokenBudget::default()).unwrap();
        assert!(out.ends_with("and the text descriptions of the neighboring nodes are: ."));
    }

    #[test]
    fn zero_hops_is_unified_text() {
        let s = GraphState::default().add_node(MultiModalNode::text_node("a", "x")).unwrap();
        let u = unified_of(&s);
        let out = token_message_pass(&s, &u, "a", 0, &TokenBudget::default()).unwrap();
        assert_eq!(out, u[&NodeId::from("a")].v_c);
    }

    #[test]
    fn missing_center_and_tiny_budget() {
        let s = GraphState::default().add_node(MultiModalNode::text_node("a", "x")).unwrap();
        let u = unified_of(&s);
        assert_eq!(
            token_message_pass(&s, &u, "zz", 1, &TokenBudget::default()).unwrap_err(),
            GwmError::CenterMissing("zz".into())
        );
        assert!(matches!(
            token_message_pass(&s, &u, "a", 1, &TokenBudget::new(5)),
            Err(GwmError::BudgetTooSmallForCenter { budget: 5, .. })
        ));
    }

    #[test]
    fn budget_evicts_farthest_first() {
        let mut e = GraphState::default().edit();
        for id in ["a", "b", "c", "d"] {
            e.add_node(MultiModalNode::text_node(id, format!("text of {id}"))).unwrap();
        }
        e.add_edge(Edge::explicit("a", "b")).unwrap();
        e.add_edge(Edge::explicit("a", "c")).unwrap();
        e.add_edge(Edge::explicit("c", "d")).unwrap();
        let s = e.commit();
        let u = unified_of(&s);
        let full = token_message_pass_detailed(&s, &u, "a", 2, &TokenBudget::new(100_000)).unwrap();
        assert!(full.dropped.is_empty());
        let tight = token_message_pass_detailed(&s, &u, "a", 2, &TokenBudget::new(full.tokens - 1)).unwrap();
        assert_eq!(tight.dropped, vec![NodeId::from("d")]);
        assert!(tight.tokens < full.tokens);
        assert_eq!(tight.hop_texts.len(), 3);
    }

    #[test]
    fn tokenizers_count() {
        assert_eq!(Tokenizer::Whitespace.count(" a  b\nc "), 3);
        assert_eq!(Tokenizer::CharsOver4.count("abcde"), 2);
        struct Fixed;
        impl TokenCounter for Fixed {
            fn count(&self, _: &str) -> usize {
                7
            }
        }
        assert_eq!(Tokenizer::External(Arc::new(Fixed)).count("x"), 7);
    }
}
