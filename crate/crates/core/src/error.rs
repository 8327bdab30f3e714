use thiserror::Error;

use crate::graph::Modality;

/// Errors returned by the graph world model runtime.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GwmError {
    // graph state
    #[error("node id `{0}` already present")]
    DuplicateId(String),
    #[error("node `{0}` carries no modality (text, table or image)")]
    EmptyNode(String),
    #[error("invalid table payload: {0}")]
    InvalidTable(String),
    #[error("edge endpoint `{0}` does not exist")]
    DanglingEndpoint(String),
    #[error("edge {src}–{dst} ({kind}) already present")]
    DuplicateEdge { src: String, dst: String, kind: String },
    #[error("self-edge on `{0}` is not allowed")]
    SelfLoop(String),
    #[error("invalid edge weight {0}")]
    InvalidWeight(f64),
    #[error("unknown edge type `{0}`")]
    UnknownEdgeType(String),
    #[error("node `{0}` not found")]
    UnknownNode(String),
    #[error("edge {0}–{1} not found")]
    UnknownEdge(String, String),

    // kernels
    #[error("adjacency matrix is not symmetric at ({0}, {1})")]
    AsymmetricInput(usize, usize),
    #[error("adjacency matrix has a negative or non-finite entry at ({0}, {1})")]
    NegativeEntry(usize, usize),
    #[error("node `{0}` has no embedding in the requested slot")]
    MissingEmbedding(String),
    #[error("k = {k} is degenerate for a graph with {nodes} nodes")]
    DegenerateK { k: usize, nodes: usize },
    #[error("invalid threshold {0}; expected a value in [-1, 1]")]
    InvalidThreshold(f64),
    #[error("{modality} embedding has dimension {got}, expected {expected}")]
    DimensionMismatch { modality: Modality, expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("target scope does not resolve: {0}")]
    ScopeUnresolved(String),
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // token message passing
    #[error("center node `{0}` not found")]
    CenterMissing(String),
    #[error("center text alone needs {needed} tokens, budget is {budget}")]
    BudgetTooSmallForCenter { needed: usize, budget: usize },
    #[error("captioner unavailable: {0}")]
    CaptionerUnavailable(String),
    #[error("unified text missing for node `{0}`")]
    MissingUnifiedText(String),

    // actions
    #[error("reference `{0}` does not resolve in the snapshot")]
    UnresolvedRef(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("template `{0}` is not registered")]
    UnknownTemplate(String),
    #[error("missing value for template slot `{0}`")]
    MissingSlot(String),
    #[error("malformed template `{id}`: {reason}")]
    MalformedTemplate { id: String, reason: String },
    #[error("invalid action: {0}")]
    InvalidAction(String),

    // transitions
    #[error("stale transition: {0}")]
    StaleTransition(String),
    #[error("decoder unavailable: {0}")]
    DecoderUnavailable(String),
    #[error("decoder overloaded: {0}")]
    Overloaded(String),
    #[error("bad decoder response: {0}")]
    BadResponse(String),
    #[error("unparseable decoder response: {0}")]
    UnparseableResponse(String),

    // tasks
    #[error("document is empty")]
    EmptyDocument,
    #[error("interaction `{0}` references an unknown or misplaced id")]
    DanglingInteraction(String),
    #[error("degenerate fixture: {0}")]
    DegenerateFixture(String),

    // persistence
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("config error: {0}")]
    Config(String),
}

impl From<std::io::Error> for GwmError {
    fn from(e: std::io::Error) -> Self {
        GwmError::Io(e.to_string())
    }
}

pub type Result<T, E = GwmError> = std::result::Result<T, E>;
