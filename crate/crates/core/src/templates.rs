//! Prompt templates with named `{slot}` placeholders and the built-in registry of
//! action, unification and aggregation prompts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{GwmError, Result};

/// Built-in template ids.
pub mod ids {
    pub const MULTIMODAL_GENERATION: &str = "multimodal-generation";
    pub const MULTIMODAL_MATCHING: &str = "multimodal-matching";
    pub const RECOMMENDATION: &str = "recommendation";
    pub const NODE_CLASSIFICATION_CORA: &str = "node-classification-cora";
    pub const NODE_CLASSIFICATION_PUBMED: &str = "node-classification-pubmed";
    pub const LINK_PREDICTION: &str = "link-prediction";
    pub const GRAPH_CLASSIFICATION_HIV: &str = "graph-classification-hiv";
    pub const MULTI_AGENT_COLLABORATION: &str = "multi-agent-collaboration";
    pub const RETRIEVAL_AUGMENTED_GENERATION: &str = "retrieval-augmented-generation";
    pub const PLANNING_OPTIMIZATION: &str = "planning-optimization";
    pub const UNIFY_MODALITIES: &str = "unify-modalities";
    pub const AGGREGATE_NEIGHBORS: &str = "aggregate-neighbors";

    /// Every action template (excludes the two message-passing templates).
    pub const ACTIONS: [&str; 10] = [
        MULTIMODAL_GENERATION,
        MULTIMODAL_MATCHING,
        RECOMMENDATION,
        NODE_CLASSIFICATION_CORA,
        NODE_CLASSIFICATION_PUBMED,
        LINK_PREDICTION,
        GRAPH_CLASSIFICATION_HIV,
        MULTI_AGENT_COLLABORATION,
        RETRIEVAL_AUGMENTED_GENERATION,
        PLANNING_OPTIMIZATION,
    ];
}

pub const CORA_LABELS: [&str; 7] = [
    "Case Based",
    "Genetic Algorithms",
    "Neural Networks",
    "Probabilistic Methods",
    "Reinforcement Learning",
    "Rule Learning",
    "Theory",
];

pub const PUBMED_LABELS: [&str; 3] =
    ["Diabetes Mellitus Experimental", "Diabetes Mellitus Type 1", "Diabetes Mellitus Type 2"];

const BUILTIN: [(&str, &str); 12] = [
    (
        ids::MULTIMODAL_GENERATION,
        "This is a multi-modal generation task. Please predict the missing modality based on the given modality: {modality}.",
    ),
    (
        ids::MULTIMODAL_MATCHING,
        "This task involves matching multi-modal information. Given two modalities: {modality 1} and {modality 2}, please determine whether they correspond with each other.",
    ),
    (
        ids::RECOMMENDATION,
        "This is a recommendation task. Given the user node and item node: {user node} and {item node}, please tell me whether these two nodes should connect to each other.",
    ),
    (
        ids::NODE_CLASSIFICATION_CORA,
        "Given a node-centered graph: {node}, each node represents a paper, we need to classify the center node into 7 classes: Case Based, Genetic Algorithms, Neural Networks, Probabilistic Methods, Reinforcement Learning, Rule Learning, Theory, please tell me which class the center node belongs to?",
    ),
    (
        ids::NODE_CLASSIFICATION_PUBMED,
        "Given a node-centered graph: {node}, each node represents a paper about Diabetes, we need to classify the center node into 3 classes: Diabetes Mellitus Experimental, Diabetes Mellitus Type 1, and Diabetes Mellitus Type 2, please tell me which class the center node belongs to?",
    ),
    (
        ids::LINK_PREDICTION,
        "Given two nodes information: {node 1} and {node 2}, please tell me whether two center nodes in the subgraphs should connect to each other.",
    ),
    (
        ids::GRAPH_CLASSIFICATION_HIV,
        "Human immunodeficiency viruses (HIV) are a type of retrovirus, which induces acquired immune deficiency syndrome (AIDs). Please determine whether this molecule {molecule} is effective for this assay.",
    ),
    (
        ids::MULTI_AGENT_COLLABORATION,
        "This is a Multi-Agent Collaborative Generation task for creating dynamic conversational interactions. Given a user query: {user query} and context of three distinct agents: {Patient Agent Context}, {Measurement Agent Context}, and {Moderato Agent Context}, Please generate a well-rounded response to the user's question.",
    ),
    (
        ids::RETRIEVAL_AUGMENTED_GENERATION,
        "This is a Retrieval-Augmented Generation task for improving response quality in dialogue systems. Given a user query: {user query} and a set of retrieved documents: {retrieved documents}, the goal is to generate a coherent and contextually relevant response. Please generate a response that integrates information from the retrieved documents to accurately address the user's query.",
    ),
    (
        ids::PLANNING_OPTIMIZATION,
        "This is an embodied household task, please predict the next decision-making behavior based on multimodal historical information: {historical information}.",
    ),
    (
        ids::UNIFY_MODALITIES,
        "The image's text description is: {image's text description}, original text is: {original text}, table description is: {table description}.",
    ),
    (
        ids::AGGREGATE_NEIGHBORS,
        "The text description of the central node is: {center node}, and the text descriptions of the neighboring nodes are: {neighbor nodes}.",
    ),
];

/// A shared, parsed built-in template.
pub fn builtin_template(id: &str) -> &'static PromptTemplate {
    static BUILTIN_REGISTRY: OnceLock<TemplateRegistry> = OnceLock::new();
    BUILTIN_REGISTRY
        .get_or_init(TemplateRegistry::builtin)
        .get(id)
        .expect("id names a built-in template")
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Literal(String),
    Slot(String),
}

fn parse_body(id: &str, body: &str) -> Result<Vec<Piece>> {
    let malformed = |reason: &str| GwmError::MalformedTemplate { id: id.to_string(), reason: reason.to_string() };
    let mut pieces = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find(['{', '}']) {
        if rest.as_bytes()[open] == b'}' {
            return Err(malformed("unmatched `}`"));
        }
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or_else(|| malformed("unclosed `{`"))?;
        let name = &after[..close];
        if name.is_empty() || name.contains('{') {
            return Err(malformed("empty or nested slot"));
        }
        if open > 0 {
            pieces.push(Piece::Literal(rest[..open].to_string()));
        }
        pieces.push(Piece::Slot(name.to_string()));
        rest = &after[close + 1..];
    }
    if !rest.is_empty() {
        pieces.push(Piece::Literal(rest.to_string()));
    }
    Ok(pieces)
}

/// A prompt body with `{slot}` placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate", into = "RawTemplate")]
pub struct PromptTemplate {
    id: String,
    body: String,
    slots: Vec<String>,
    #[serde(skip)]
    pieces: Vec<Piece>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTemplate {
    id: String,
    body: String,
    slots: Vec<String>,
}

impl TryFrom<RawTemplate> for PromptTemplate {
    type Error = GwmError;

    fn try_from(raw: RawTemplate) -> Result<Self> {
        PromptTemplate::new(raw.id, raw.body, raw.slots)
    }
}

impl From<PromptTemplate> for RawTemplate {
    fn from(t: PromptTemplate) -> Self {
        RawTemplate { id: t.id, body: t.body, slots: t.slots }
    }
}

impl PromptTemplate {
    /// Validates that the placeholders in `body` are exactly `slots`.
    pub fn new(id: impl Into<String>, body: impl Into<String>, slots: Vec<String>) -> Result<Self> {
        let (id, body) = (id.into(), body.into());
        let pieces = parse_body(&id, &body)?;
        let found: BTreeSet<&str> = pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.as_str()),
                Piece::Literal(_) => None,
            })
            .collect();
        let declared: BTreeSet<&str> = slots.iter().map(String::as_str).collect();
        if found != declared || declared.len() != slots.len() {
            return Err(GwmError::MalformedTemplate {
                id,
                reason: format!("declared slots {declared:?} but body uses {found:?}"),
            });
        }
        Ok(Self { id, body, slots, pieces })
    }

    /// Builds a template whose slot list is read from the body, in first-use order.
    pub fn from_body(id: impl Into<String>, body: impl Into<String>) -> Result<Self> {
        let (id, body) = (id.into(), body.into());
        let mut slots: Vec<String> = Vec::new();
        for p in parse_body(&id, &body)? {
            if let Piece::Slot(s) = p {
                if !slots.contains(&s) {
                    slots.push(s);
                }
            }
        }
        Self::new(id, body, slots)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn slots(&self) -> &[String] {
        &self.slots
    }

    /// Fills every slot in one pass; slot values are inserted verbatim and never rescanned.
    pub fn render(&self, values: &BTreeMap<String, String>) -> Result<String> {
        if let Some(missing) = self.slots.iter().find(|s| !values.contains_key(*s)) {
            return Err(GwmError::MissingSlot(missing.clone()));
        }
        let mut out = String::with_capacity(self.body.len());
        for p in &self.pieces {
            match p {
                Piece::Literal(l) => out.push_str(l),
                Piece::Slot(s) => out.push_str(&values[s]),
            }
        }
        Ok(out)
    }

    /// Convenience over [`render`](Self::render) for literal slot lists.
    pub fn render_with(&self, values: &[(&str, &str)]) -> Result<String> {
        let map = values.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        self.render(&map)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    templates: Vec<PromptTemplate>,
}

/// Id-indexed template collection, serialized as `templates.gwm.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateRegistry {
    templates: IndexMap<String, PromptTemplate>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateRegistry {
    pub fn empty() -> Self {
        Self { templates: IndexMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        for (id, body) in BUILTIN {
            r.insert(PromptTemplate::from_body(id, body).expect("built-in templates are well formed"));
        }
        r
    }

    pub fn insert(&mut self, t: PromptTemplate) -> Option<PromptTemplate> {
        self.templates.insert(t.id.clone(), t)
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate> {
        self.templates.get(id).ok_or_else(|| GwmError::UnknownTemplate(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.templates.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn to_json(&self) -> String {
        let file = RegistryFile { templates: self.templates.values().cloned().collect() };
        serde_json::to_string_pretty(&file).expect("registry serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: RegistryFile = serde_json::from_str(s).map_err(|e| GwmError::SchemaViolation(e.to_string()))?;
        let mut r = Self::empty();
        for t in file.templates {
            if r.insert(t.clone()).is_some() {
                return Err(GwmError::SchemaViolation(format!("duplicate template id `{}`", t.id)));
            }
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_every_action_template() {
        let r = TemplateRegistry::builtin();
        for id in ids::ACTIONS {
            assert!(r.contains(id), "{id}");
        }
        assert_eq!(r.len(), 12);
    }

    #[test]
    fn render_and_missing_slot() {
        let t = PromptTemplate::from_body("t", "a {x} b {y}.").unwrap();
        assert_eq!(t.slots(), &["x".to_string(), "y".to_string()]);
        assert_eq!(t.render_with(&[("x", "{y}"), ("y", "2")]).unwrap(), "a {y} b 2.");
        assert_eq!(t.render_with(&[("x", "1")]).unwrap_err(), GwmError::MissingSlot("y".into()));
    }

    #[test]
    fn malformed_bodies_are_rejected() {
        assert!(PromptTemplate::from_body("t", "a {x").is_err());
        assert!(PromptTemplate::from_body("t", "a } b").is_err());
        assert!(PromptTemplate::from_body("t", "a {} b").is_err());
        assert!(PromptTemplate::new("t", "a {x}", vec!["y".into()]).is_err());
    }

    #[test]
    fn registry_json_round_trip() {
        let r = TemplateRegistry::builtin();
        let back = TemplateRegistry::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert!(TemplateRegistry::from_json(r#"{"templates":[],"extra":1}"#).is_err());
    }
}
