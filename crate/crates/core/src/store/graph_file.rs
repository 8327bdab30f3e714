//! `*.gwm.json` graph files.
//!
//! Output is pretty-printed JSON with a trailing newline; saving a loaded file
//! reproduces it byte for byte. Strict reading rejects unknown keys, lenient reading
//! drops them.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{GwmError, Result};
use crate::graph::{Edge, GraphOptions, GraphState, MultiModalNode};

pub const GRAPH_FORMAT: &str = "gwm-graph";
pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    format: String,
    format_version: u32,
    version: u64,
    options: GraphOptions,
    nodes: Vec<MultiModalNode>,
    edges: Vec<Edge>,
}

enum Schema {
    Leaf,
    Object(&'static [(&'static str, Schema)]),
    List(&'static Schema),
}

const STAMPED: Schema = Schema::Object(&[("values", Schema::Leaf), ("revision", Schema::Leaf)]);
const NODE: Schema = Schema::Object(&[
    ("id", Schema::Leaf),
    ("text", Schema::Leaf),
    ("table", Schema::Object(&[("columns", Schema::Leaf), ("values", Schema::Leaf)])),
    ("image_ref", Schema::Leaf),
    ("revisions", Schema::Leaf),
    ("embeddings", Schema::Object(&[("image", STAMPED), ("text", STAMPED), ("table", STAMPED)])),
]);
const EDGE: Schema = Schema::Object(&[
    ("src", Schema::Leaf),
    ("dst", Schema::Leaf),
    ("kind", Schema::Leaf),
    ("weight", Schema::Leaf),
    ("edge_type", Schema::Leaf),
]);
const FILE: Schema = Schema::Object(&[
    ("format", Schema::Leaf),
    ("format_version", Schema::Leaf),
    ("version", Schema::Leaf),
    (
        "options",
        Schema::Object(&[
            ("allow_self_loops", Schema::Leaf),
            ("dims", Schema::Object(&[("image", Schema::Leaf), ("text", Schema::Leaf), ("table", Schema::Leaf)])),
        ]),
    ),
    ("nodes", Schema::List(&NODE)),
    ("edges", Schema::List(&EDGE)),
]);

/// Checks (strict) or removes (lenient) keys the schema does not know.
fn prune(value: &mut Value, schema: &Schema, mode: ReadMode, path: &str) -> Result<()> {
    match (schema, value) {
        (Schema::Object(fields), Value::Object(map)) => {
            let unknown: Vec<String> = map.keys().filter(|k| !fields.iter().any(|(f, _)| f == k)).cloned().collect();
            if let (ReadMode::Strict, Some(k)) = (mode, unknown.first()) {
                return Err(GwmError::SchemaViolation(format!("unknown key `{path}.{k}`")));
            }
            for k in unknown {
                map.remove(&k);
            }
            for (name, sub) in fields.iter() {
                if let Some(v) = map.get_mut(*name) {
                    prune(v, sub, mode, &format!("{path}.{name}"))?;
                }
            }
            Ok(())
        }
        (Schema::List(item), Value::Array(items)) => {
            for (i, v) in items.iter_mut().enumerate() {
                prune(v, item, mode, &format!("{path}[{i}]"))?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Canonical text of a snapshot.
pub fn graph_to_json(state: &GraphState) -> String {
    let file = GraphFile {
        format: GRAPH_FORMAT.to_string(),
        format_version: GRAPH_FORMAT_VERSION,
        version: state.version(),
        options: *state.options(),
        nodes: state.nodes().cloned().collect(),
        edges: state.edges().cloned().collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("graph files serialize");
    s.push('\n');
    s
}

pub fn graph_from_json(text: &str, mode: ReadMode) -> Result<GraphState> {
    let schema_err = |e: serde_json::Error| GwmError::SchemaViolation(e.to_string());
    let mut value: Value = serde_json::from_str(text).map_err(schema_err)?;
    if !value.is_object() {
        return Err(GwmError::SchemaViolation("graph file is not a JSON object".into()));
    }
    prune(&mut value, &FILE, mode, "$")?;
    let obj: &Map<String, Value> = value.as_object().expect("checked above");
    if obj.get("format").and_then(Value::as_str) != Some(GRAPH_FORMAT) {
        return Err(GwmError::SchemaViolation(format!("not a `{GRAPH_FORMAT}` file")));
    }
    match obj.get("format_version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(GRAPH_FORMAT_VERSION) => {}
        other => return Err(GwmError::SchemaViolation(format!("unsupported format version {other:?}"))),
    }
    let file: GraphFile = serde_json::from_value(value).map_err(schema_err)?;
    GraphState::from_parts(file.version, file.nodes, file.edges, file.options).map_err(|e| match e {
        GwmError::Io(_) | GwmError::SchemaViolation(_) => e,
        other => GwmError::SchemaViolation(other.to_string()),
    })
}

pub fn save_graph(state: &GraphState, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, graph_to_json(state))?;
    Ok(())
}

pub fn load_graph(path: impl AsRef<Path>, mode: ReadMode) -> Result<GraphState> {
    let bytes = std::fs::read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| GwmError::SchemaViolation(format!("graph file is not UTF-8: {e}")))?;
    graph_from_json(text, mode)
}
