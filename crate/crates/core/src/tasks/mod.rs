//! Task adapters: how each task builds its graph, which template it prompts with, and
//! how decoder answers map back onto transitions or prediction records.

mod ablation;
mod fixture;
mod rag;
mod rec;

pub use ablation::{
    hop_ablation, ridge_fit, AblationRow, LinearProbe, RidgeProbe, SyntheticFixture, SyntheticGraphSpec, RIDGE_LAMBDA,
};
pub use fixture::{GraphRecipe, TaskFixture};
pub use rag::{build_rag_graph, chunk_document, KnnParams, MIN_CHUNK_TOKENS};
pub use rec::{build_bipartite_rec_graph, INTERACTION_EDGE_TYPE};

use serde::{Deserialize, Serialize};

use crate::action::{ActionLevel, ActionNode};
use crate::clients::DecoderResponse;
use crate::error::{GwmError, Result};
use crate::graph::{Edge, EdgeKind, EdgeKey, GraphState, ModalityPayload, MultiModalNode, NodeId};
use crate::templates::{ids, TemplateRegistry, CORA_LABELS, PUBMED_LABELS};
use crate::transition::{NodePatch, Provenance, Transition, TransitionKind};

/// Edge type of the edge linking a planning state to its successor.
pub const NEXT_STATE_EDGE_TYPE: &str = "next";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Rag,
    Recommendation,
    GraphPrediction(ActionLevel),
    Planning,
    MultiModalGeneration,
    MultiModalMatch,
    MultiAgent,
}

/// How a decoder answer is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParserKind {
    /// First token `yes` adds an edge between the two targets, `no` records a no-op.
    YesNoEdge,
    /// Longest case-insensitive match against the task's label set.
    Label,
    /// The text is recorded as is.
    FreeText,
    /// The text becomes a new state node linked from the last target.
    NextState,
    /// The generated image or text is written onto the first target.
    Generated,
}

impl TaskKind {
    /// The task a built-in action template belongs to.
    pub fn for_template(template_id: &str) -> Option<TaskKind> {
        Some(match template_id {
            ids::MULTIMODAL_GENERATION => TaskKind::MultiModalGeneration,
            ids::MULTIMODAL_MATCHING => TaskKind::MultiModalMatch,
            ids::RECOMMENDATION => TaskKind::Recommendation,
            ids::NODE_CLASSIFICATION_CORA | ids::NODE_CLASSIFICATION_PUBMED => TaskKind::GraphPrediction(ActionLevel::Node),
            ids::LINK_PREDICTION => TaskKind::GraphPrediction(ActionLevel::Edge),
            ids::GRAPH_CLASSIFICATION_HIV => TaskKind::GraphPrediction(ActionLevel::Graph),
            ids::MULTI_AGENT_COLLABORATION => TaskKind::MultiAgent,
            ids::RETRIEVAL_AUGMENTED_GENERATION => TaskKind::Rag,
            ids::PLANNING_OPTIMIZATION => TaskKind::Planning,
            _ => return None,
        })
    }

    /// Level at which the task's actions address the graph.
    pub fn level(self) -> ActionLevel {
        match self {
            TaskKind::Recommendation | TaskKind::MultiModalMatch => ActionLevel::Edge,
            TaskKind::GraphPrediction(l) => l,
            TaskKind::MultiModalGeneration => ActionLevel::Node,
            TaskKind::Rag | TaskKind::Planning | TaskKind::MultiAgent => ActionLevel::Graph,
        }
    }

    pub fn default_parser(self) -> ParserKind {
        match self {
            TaskKind::Recommendation | TaskKind::GraphPrediction(ActionLevel::Edge) => ParserKind::YesNoEdge,
            TaskKind::GraphPrediction(ActionLevel::Node) => ParserKind::Label,
            TaskKind::Planning => ParserKind::NextState,
            TaskKind::MultiModalGeneration => ParserKind::Generated,
            TaskKind::Rag
            | TaskKind::GraphPrediction(ActionLevel::Graph)
            | TaskKind::MultiModalMatch
            | TaskKind::MultiAgent => ParserKind::FreeText,
        }
    }
}

/// Everything a task adds on top of an action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task: TaskKind,
    pub template_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parser: Option<ParserKind>,
    /// Label set for the label parser; the built-in classification templates supply
    /// their own when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
    /// Type of edges added by a `yes` answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_type: Option<String>,
    /// Answer-format line appended to every prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    /// Template slots receiving target texts, in target order. Defaults to every slot
    /// the action does not fill itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_slots: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<String>,
}

impl TaskSpec {
    pub fn new(task: TaskKind, template_id: impl Into<String>) -> Self {
        Self {
            task,
            template_id: template_id.into(),
            parser: None,
            labels: Vec::new(),
            edge_type: None,
            instruction: None,
            target_slots: None,
            metrics: Vec::new(),
        }
    }

    pub fn with_instruction(mut self, instruction: impl Into<String>) -> Self {
        self.instruction = Some(instruction.into());
        self
    }

    pub fn parser(&self) -> ParserKind {
        self.parser.unwrap_or_else(|| self.task.default_parser())
    }

    pub fn label_set(&self) -> Vec<String> {
        if !self.labels.is_empty() {
            return self.labels.clone();
        }
        let builtin: &[&str] = match self.template_id.as_str() {
            ids::NODE_CLASSIFICATION_CORA => &CORA_LABELS,
            ids::NODE_CLASSIFICATION_PUBMED => &PUBMED_LABELS,
            _ => &[],
        };
        builtin.iter().map(|s| s.to_string()).collect()
    }

    pub fn yes_edge_type(&self) -> Option<String> {
        match (&self.edge_type, self.task) {
            (Some(t), _) => Some(t.clone()),
            (None, TaskKind::Recommendation) => Some(INTERACTION_EDGE_TYPE.to_string()),
            (None, _) => None,
        }
    }

    /// Checks the template exists and the parser has what it needs.
    pub fn validate(&self, registry: &TemplateRegistry) -> Result<()> {
        let template = registry.get(&self.template_id)?;
        if self.parser() == ParserKind::Label && self.label_set().is_empty() {
            return Err(GwmError::InvalidArgument(format!(
                "task on template `{}` parses labels but has no label set",
                self.template_id
            )));
        }
        if let Some(slots) = &self.target_slots {
            if let Some(s) = slots.iter().find(|s| !template.slots().contains(s)) {
                return Err(GwmError::InvalidArgument(format!(
                    "template `{}` has no slot `{s}`",
                    self.template_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Answer {
    /// A yes/no decision on a candidate edge.
    Edge { src: NodeId, dst: NodeId, connect: bool },
    Label { label: String },
    Text { text: String },
}

/// A parsed answer that leaves the state as it is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub action_id: String,
    pub response_id: String,
    pub task: TaskKind,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedAnswer {
    Transition(Transition),
    Prediction(PredictionRecord),
}

fn unparseable(task: TaskKind, text: &str) -> GwmError {
    GwmError::UnparseableResponse(format!("{task:?} answer {text:?}"))
}

fn first_word(text: &str) -> Option<String> {
    let w = text.split_whitespace().next()?;
    let w = w.trim_matches(|c: char| !c.is_alphanumeric());
    Some(w.to_lowercase())
}

/// Longest label occurring in `text`, compared case-insensitively; earlier labels win
/// ties.
pub fn match_label<'a>(text: &str, labels: &'a [String]) -> Option<&'a str> {
    let lower = text.to_lowercase();
    let mut best: Option<&String> = None;
    for l in labels {
        if lower.contains(&l.to_lowercase()) && best.is_none_or(|b| l.len() > b.len()) {
            best = Some(l);
        }
    }
    best.map(String::as_str)
}

fn fresh_node_id(state: &GraphState, stem: &str) -> NodeId {
    if !state.contains(stem) {
        return NodeId::new(stem);
    }
    (1..)
        .map(|n| format!("{stem}-{n}"))
        .find(|id| !state.contains(id))
        .map(NodeId::new)
        .expect("unbounded suffix search")
}

/// Maps a decoder response onto a transition or a prediction record.
///
/// `targets` are the resolved targets of `action` against `state`.
pub fn parse_decoder_answer(
    task: &TaskSpec,
    action: &ActionNode,
    targets: &[NodeId],
    response: &DecoderResponse,
    state: &GraphState,
) -> Result<ParsedAnswer> {
    let provenance = Provenance { action_id: action.id.clone(), response_id: response.request_id.clone() };
    let record = |answer: Answer| {
        ParsedAnswer::Prediction(PredictionRecord {
            action_id: action.id.clone(),
            response_id: response.request_id.clone(),
            task: task.task,
            answer,
        })
    };
    let text = || {
        response
            .text()
            .ok_or_else(|| GwmError::UnparseableResponse(format!("{:?} expects a text answer", task.task)))
    };
    match task.parser() {
        ParserKind::YesNoEdge => {
            let [a, b] = targets else {
                return Err(GwmError::InvalidAction(format!(
                    "edge answer needs two targets, action `{}` resolved {}",
                    action.id,
                    targets.len()
                )));
            };
            let t = text()?;
            let connect = match first_word(t).as_deref() {
                Some("yes") => true,
                Some("no") => false,
                _ => return Err(unparseable(task.task, t)),
            };
            let edge_type = task.yes_edge_type();
            let key = EdgeKey::new(a.clone(), b.clone(), EdgeKind::Explicit, edge_type.clone());
            if connect && !state.contains_edge(&key) {
                let mut edge = Edge::explicit(a.clone(), b.clone());
                edge.edge_type = edge_type;
                let kind = TransitionKind::UpdateEdges { add: vec![edge], remove: vec![] };
                return Ok(ParsedAnswer::Transition(Transition::new(kind, provenance, state)));
            }
            Ok(record(Answer::Edge { src: a.clone(), dst: b.clone(), connect }))
        }
        ParserKind::Label => {
            let t = text()?;
            let labels = task.label_set();
            let label = match_label(t, &labels).ok_or_else(|| unparseable(task.task, t))?;
            Ok(record(Answer::Label { label: label.to_string() }))
        }
        ParserKind::FreeText => {
            let t = text()?;
            if t.trim().is_empty() {
                return Err(unparseable(task.task, t));
            }
            Ok(record(Answer::Text { text: t.to_string() }))
        }
        ParserKind::NextState => {
            let t = text()?;
            if t.trim().is_empty() {
                return Err(unparseable(task.task, t));
            }
            let stem = format!("{}-{}", action.id, &response.request_id[..8.min(response.request_id.len())]);
            let id = fresh_node_id(state, &stem);
            let edges = match targets.last() {
                Some(prev) => vec![Edge::explicit(prev.clone(), id.clone()).with_type(NEXT_STATE_EDGE_TYPE)],
                None => vec![],
            };
            let kind = TransitionKind::UpdateGraph { nodes: vec![MultiModalNode::text_node(id, t)], edges };
            Ok(ParsedAnswer::Transition(Transition::new(kind, provenance, state)))
        }
        ParserKind::Generated => {
            let target = targets.first().ok_or_else(|| {
                GwmError::InvalidAction(format!("action `{}` resolved no target to write to", action.id))
            })?;
            let payload = if let Some(r) = response.image_ref() {
                ModalityPayload::ImageRef(r.to_string())
            } else if let Some(t) = response.text().filter(|t| !t.trim().is_empty()) {
                ModalityPayload::Text(t.to_string())
            } else {
                return Err(GwmError::UnparseableResponse("generation response carries no content".into()));
            };
            let kind = TransitionKind::UpdateNodes { patches: vec![NodePatch { id: target.clone(), payload }] };
            Ok(ParsedAnswer::Transition(Transition::new(kind, provenance, state)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(ls: &[&str]) -> Vec<String> {
        ls.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn longest_label_wins() {
        let ls = labels(&["Diabetes Mellitus Type 1", "Type 1", "Theory"]);
        assert_eq!(match_label("it is diabetes mellitus type 1.", &ls), Some("Diabetes Mellitus Type 1"));
        assert_eq!(match_label("THEORY", &ls), Some("Theory"));
        assert_eq!(match_label("none", &ls), None);
    }

    #[test]
    fn first_word_strips_punctuation() {
        assert_eq!(first_word("Yes, they should").as_deref(), Some("yes"));
        assert_eq!(first_word("  \"no\"").as_deref(), Some("no"));
        assert_eq!(first_word("   "), None);
    }

    #[test]
    fn default_parsers() {
        assert_eq!(TaskKind::Recommendation.default_parser(), ParserKind::YesNoEdge);
        assert_eq!(TaskKind::GraphPrediction(ActionLevel::Node).default_parser(), ParserKind::Label);
        assert_eq!(TaskKind::GraphPrediction(ActionLevel::Graph).default_parser(), ParserKind::FreeText);
        let s = TaskSpec::new(TaskKind::GraphPrediction(ActionLevel::Node), ids::NODE_CLASSIFICATION_PUBMED);
        assert_eq!(s.label_set().len(), 3);
    }
}
