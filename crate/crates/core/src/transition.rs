//! State transitions `s_{t+1} = f_tr(s_t, a_t)`: explicit, replayable values applied
//! to a snapshot, and a JSON-lines log of them.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{GwmError, Result};
use crate::graph::{Edge, EdgeKey, GraphState, ModalityPayload, MultiModalNode, NodeId};

/// New content for one modality of an existing node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodePatch {
    pub id: NodeId,
    pub payload: ModalityPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransitionKind {
    UpdateNodes { patches: Vec<NodePatch> },
    /// Removals are applied before additions.
    UpdateEdges {
        #[serde(default)]
        add: Vec<Edge>,
        #[serde(default)]
        remove: Vec<EdgeKey>,
    },
    /// Nodes are inserted before edges.
    UpdateGraph {
        #[serde(default)]
        nodes: Vec<MultiModalNode>,
        #[serde(default)]
        edges: Vec<Edge>,
    },
}

/// The action and decoder response a transition came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub action_id: String,
    pub response_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub kind: TransitionKind,
    pub provenance: Provenance,
    /// Version of the snapshot the transition was built against.
    pub base_version: u64,
}

impl Transition {
    pub fn new(kind: TransitionKind, provenance: Provenance, base: &GraphState) -> Self {
        Self { kind, provenance, base_version: base.version() }
    }
}

/// Applies `t` to `state` and publishes one new snapshot.
pub fn apply(state: &GraphState, t: &Transition) -> Result<GraphState> {
    if t.base_version != state.version() {
        return Err(GwmError::StaleTransition(format!(
            "built against version {}, state is at {}",
            t.base_version,
            state.version()
        )));
    }
    let mut edit = state.edit();
    match &t.kind {
        TransitionKind::UpdateNodes { patches } => {
            for p in patches {
                edit.set_payload(p.id.as_str(), p.payload.clone())?;
            }
        }
        TransitionKind::UpdateEdges { add, remove } => {
            for key in remove {
                edit.remove_edge(key).map_err(|_| {
                    GwmError::StaleTransition(format!("edge {}-{} does not exist", key.lo, key.hi))
                })?;
            }
            for e in add {
                edit.add_edge(e.clone())?;
            }
        }
        TransitionKind::UpdateGraph { nodes, edges } => {
            for n in nodes {
                edit.add_node(n.clone())?;
            }
            for e in edges {
                edit.add_edge(e.clone())?;
            }
        }
    }
    Ok(edit.commit())
}

/// Applies transitions in order.
pub fn replay(state: &GraphState, transitions: &[Transition]) -> Result<GraphState> {
    transitions.iter().try_fold(state.clone(), |s, t| apply(&s, t))
}

/// Append-only JSON-lines file of transitions.
#[derive(Debug)]
pub struct TransitionLog {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl TransitionLog {
    /// Opens `path` for appending, creating it if needed.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, writer: BufWriter::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one line and flushes it.
    pub fn append(&mut self, t: &Transition) -> Result<()> {
        let line = serde_json::to_string(t).expect("transitions serialize");
        writeln!(self.writer, "{line}")?;
        self.writer.flush()?;
        Ok(())
    }

    /// Reads every transition; blank lines are skipped.
    pub fn read(path: impl AsRef<Path>) -> Result<Vec<Transition>> {
        let reader = BufReader::new(File::open(path)?);
        let mut out = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t = serde_json::from_str(&line)
                .map_err(|e| GwmError::SchemaViolation(format!("transition log line {}: {e}", n + 1)))?;
            out.push(t);
        }
        Ok(out)
    }
}
