//! World state: multi-modal nodes, explicit and implicit edges, versioned snapshots.
//!
//! A [`GraphState`] is an immutable value. Every mutation goes through a
//! [`GraphEdit`], which works on a private copy and publishes it as a new snapshot
//! with `version + 1` on [`GraphEdit::commit`]. Edges are undirected: `(a, b)` and
//! `(b, a)` address the same edge.

use std::borrow::Borrow;
use std::collections::BTreeSet;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{GwmError, Result};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

/// Identifier of a state node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

/// Input modality of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
    Table,
}

impl Modality {
    /// Concatenation order of embedding slots: image, text, table.
    pub const ALL: [Modality; 3] = [Modality::Image, Modality::Text, Modality::Table];

    fn slot(self) -> usize {
        match self {
            Modality::Image => 0,
            Modality::Text => 1,
            Modality::Table => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Image => "image",
            Modality::Text => "text",
            Modality::Table => "table",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Modality {
    type Err = GwmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(Modality::Image),
            "text" => Ok(Modality::Text),
            "table" => Ok(Modality::Table),
            other => Err(GwmError::InvalidArgument(format!("unknown modality `{other}`"))),
        }
    }
}

/// Per-modality embedding widths. The defaults concatenate to 2048.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityDims {
    pub image: usize,
    pub text: usize,
    pub table: usize,
}

impl Default for ModalityDims {
    fn default() -> Self {
        Self { image: 512, text: 768, table: 768 }
    }
}

impl ModalityDims {
    pub fn dim(&self, m: Modality) -> usize {
        match m {
            Modality::Image => self.image,
            Modality::Text => self.text,
            Modality::Table => self.table,
        }
    }

    /// Column offset of a modality inside the concatenated vector.
    pub fn offset(&self, m: Modality) -> usize {
        match m {
            Modality::Image => 0,
            Modality::Text => self.image,
            Modality::Table => self.image + self.text,
        }
    }

    pub fn total(&self) -> usize {
        self.image + self.text + self.table
    }
}

/// Column/value table payload of a node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct TablePayload {
    columns: Vec<String>,
    values: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    columns: Vec<String>,
    values: Vec<String>,
}

impl TryFrom<RawTable> for TablePayload {
    type Error = GwmError;

    fn try_from(raw: RawTable) -> Result<Self> {
        TablePayload::new(raw.columns, raw.values)
    }
}

impl From<TablePayload> for RawTable {
    fn from(t: TablePayload) -> Self {
        RawTable { columns: t.columns, values: t.values }
    }
}

impl TablePayload {
    pub fn new<C, V>(columns: C, values: V) -> Result<Self>
    where
        C: IntoIterator,
        C::Item: Into<String>,
        V: IntoIterator,
        V::Item: Into<String>,
    {
        let columns: Vec<String> = columns.into_iter().map(Into::into).collect();
        let values: Vec<String> = values.into_iter().map(Into::into).collect();
        if columns.is_empty() {
            return Err(GwmError::InvalidTable("table has no columns".into()));
        }
        if columns.len() != values.len() {
            return Err(GwmError::InvalidTable(format!(
                "{} columns but {} values",
                columns.len(),
                values.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for c in &columns {
            if c.is_empty() {
                return Err(GwmError::InvalidTable("empty column name".into()));
            }
            if !seen.insert(c.as_str()) {
                return Err(GwmError::InvalidTable(format!("duplicate column `{c}`")));
            }
        }
        Ok(Self { columns, values })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.columns.iter().map(String::as_str).zip(self.values.iter().map(String::as_str))
    }
}

/// An embedding slot value, stamped with the content revision it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StampedEmbedding {
    pub values: Vec<f32>,
    pub revision: u64,
}

/// One state node `v = [v^a, v^b, v^e]` with its embedding slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NodeRecord", into = "NodeRecord")]
pub struct MultiModalNode {
    id: NodeId,
    text: Option<String>,
    table: Option<TablePayload>,
    image_ref: Option<String>,
    revisions: [u64; 3],
    embeddings: [Option<StampedEmbedding>; 3],
}

impl MultiModalNode {
    pub fn new(id: impl Into<NodeId>) -> Self {
        Self {
            id: id.into(),
            text: None,
            table: None,
            image_ref: None,
            revisions: [0; 3],
            embeddings: [None, None, None],
        }
    }

    pub fn text_node(id: impl Into<NodeId>, text: impl Into<String>) -> Self {
        Self::new(id).with_text(text)
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    pub fn with_table(mut self, table: TablePayload) -> Self {
        self.table = Some(table);
        self
    }

    pub fn with_image_ref(mut self, image_ref: impl Into<String>) -> Self {
        self.image_ref = Some(image_ref.into());
        self
    }

    pub fn id(&self) -> &NodeId {
        &self.id
    }

    pub fn text(&self) -> Option<&str> {
        self.text.as_deref()
    }

    pub fn table(&self) -> Option<&TablePayload> {
        self.table.as_ref()
    }

    pub fn image_ref(&self) -> Option<&str> {
        self.image_ref.as_deref()
    }

    pub fn has_modality(&self, m: Modality) -> bool {
        match m {
            Modality::Image => self.image_ref.is_some(),
            Modality::Text => self.text.is_some(),
            Modality::Table => self.table.is_some(),
        }
    }

    pub fn modalities(&self) -> impl Iterator<Item = Modality> + '_ {
        Modality::ALL.into_iter().filter(|m| self.has_modality(*m))
    }

    pub fn is_empty(&self) -> bool {
        self.modalities().next().is_none()
    }

    /// Current content revision of a modality; bumped whenever its payload changes.
    pub fn revision(&self, m: Modality) -> u64 {
        self.revisions[m.slot()]
    }

    /// The embedding of a modality, if set and computed from the current content.
    pub fn embedding(&self, m: Modality) -> Option<&[f32]> {
        self.embeddings[m.slot()]
            .as_ref()
            .filter(|e| e.revision == self.revisions[m.slot()])
            .map(|e| e.values.as_slice())
    }

    pub fn has_any_embedding(&self) -> bool {
        Modality::ALL.iter().any(|m| self.embedding(*m).is_some())
    }

    /// Zero-filled concatenation `[e_a | e_t | e_b]` of the fresh embedding slots.
    pub fn concat_embedding(&self, dims: &ModalityDims) -> Vec<f32> {
        let mut out = vec![0.0f32; dims.total()];
        for m in Modality::ALL {
            if let Some(e) = self.embedding(m) {
                let off = dims.offset(m);
                out[off..off + e.len()].copy_from_slice(e);
            }
        }
        out
    }

    /// The stored slot of a modality, fresh or not.
    pub fn stored_embedding(&self, m: Modality) -> Option<&StampedEmbedding> {
        self.embeddings[m.slot()].as_ref()
    }

    pub(crate) fn set_payload(&mut self, payload: ModalityPayload) {
        let m = payload.modality();
        match payload {
            ModalityPayload::Text(t) => self.text = Some(t),
            ModalityPayload::Table(t) => self.table = Some(t),
            ModalityPayload::ImageRef(r) => self.image_ref = Some(r),
        }
        self.revisions[m.slot()] += 1;
        self.embeddings[m.slot()] = None;
    }

    fn set_embedding_unchecked(&mut self, m: Modality, values: Vec<f32>) {
        let revision = self.revisions[m.slot()];
        self.embeddings[m.slot()] = Some(StampedEmbedding { values, revision });
    }

    fn clear_embedding(&mut self, m: Modality) {
        self.embeddings[m.slot()] = None;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct EmbeddingSlots {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<StampedEmbedding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<StampedEmbedding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<StampedEmbedding>,
}

impl EmbeddingSlots {
    fn is_empty(&self) -> bool {
        self.image.is_none() && self.text.is_none() && self.table.is_none()
    }
}

fn is_zero_revisions(r: &[u64; 3]) -> bool {
    r == &[0; 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NodeRecord {
    id: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<TablePayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_ref: Option<String>,
    /// Content revisions in image, text, table order.
    #[serde(default, skip_serializing_if = "is_zero_revisions")]
    revisions: [u64; 3],
    #[serde(default, skip_serializing_if = "EmbeddingSlots::is_empty")]
    embeddings: EmbeddingSlots,
}

impl TryFrom<NodeRecord> for MultiModalNode {
    type Error = GwmError;

    fn try_from(r: NodeRecord) -> Result<Self> {
        for (m, slot) in [(Modality::Image, &r.embeddings.image), (Modality::Text, &r.embeddings.text), (Modality::Table, &r.embeddings.table)] {
            if let Some(e) = slot {
                if e.revision > r.revisions[m.slot()] || e.values.iter().any(|v| !v.is_finite()) {
                    return Err(GwmError::SchemaViolation(format!("invalid {m} embedding on node `{}`", r.id)));
                }
            }
        }
        Ok(Self {
            id: r.id,
            text: r.text,
            table: r.table,
            image_ref: r.image_ref,
            revisions: r.revisions,
            embeddings: [r.embeddings.image, r.embeddings.text, r.embeddings.table],
        })
    }
}

impl From<MultiModalNode> for NodeRecord {
    fn from(n: MultiModalNode) -> Self {
        let [image, text, table] = n.embeddings;
        Self {
            id: n.id,
            text: n.text,
            table: n.table,
            image_ref: n.image_ref,
            revisions: n.revisions,
            embeddings: EmbeddingSlots { image, text, table },
        }
    }
}

/// Replacement content for one modality of a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityPayload {
    Text(String),
    Table(TablePayload),
    ImageRef(String),
}

impl ModalityPayload {
    pub fn modality(&self) -> Modality {
        match self {
            ModalityPayload::Text(_) => Modality::Text,
            ModalityPayload::Table(_) => Modality::Table,
            ModalityPayload::ImageRef(_) => Modality::Image,
        }
    }
}

/// Provenance class of an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    /// Ground-truth or expert-known relation.
    Explicit,
    /// Relation derived from embedding similarity.
    Implicit,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 2] = [EdgeKind::Explicit, EdgeKind::Implicit];
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::Explicit => "explicit",
            EdgeKind::Implicit => "implicit",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_type: Option<String>,
}

impl Edge {
    pub fn explicit(src: impl Into<NodeId>, dst: impl Into<NodeId>) -> Self {
        Self { src: src.into(), dst: dst.into(), kind: EdgeKind::Explicit, weight: 1.0, edge_type: None }
    }

    pub fn implicit(src: impl Into<NodeId>, dst: impl Into<NodeId>, weight: f64) -> Self {
        Self { src: src.into(), dst: dst.into(), kind: EdgeKind::Implicit, weight, edge_type: None }
    }

    pub fn with_type(mut self, edge_type: impl Into<String>) -> Self {
        self.edge_type = Some(edge_type.into());
        self
    }

    pub fn key(&self) -> EdgeKey {
        EdgeKey::new(self.src.clone(), self.dst.clone(), self.kind, self.edge_type.clone())
    }
}

/// Orientation-free identity of an edge: `(min, max, kind, edge_type)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeKey {
    pub lo: NodeId,
    pub hi: NodeId,
    pub kind: EdgeKind,
    pub edge_type: Option<String>,
}

impl EdgeKey {
    pub fn new(a: NodeId, b: NodeId, kind: EdgeKind, edge_type: Option<String>) -> Self {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        Self { lo, hi, kind, edge_type }
    }
}

/// How adjacency entries are valued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjacencyWeighting {
    /// 1 for every connected pair.
    #[default]
    Binary,
    /// Edge weight; the largest weight wins when several edges join a pair.
    Weighted,
}

/// Options fixed for a state lineage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphOptions {
    pub allow_self_loops: bool,
    pub dims: ModalityDims,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self { allow_self_loops: false, dims: ModalityDims::default() }
    }
}

/// Adjacency over a recorded node ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency<T> {
    pub matrix: CsrMatrix<T>,
    pub node_order: Vec<NodeId>,
    pub version: u64,
}

/// Immutable snapshot of the world state `G = (V, E)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    version: u64,
    nodes: IndexMap<NodeId, MultiModalNode>,
    edges: IndexMap<EdgeKey, Edge>,
    options: GraphOptions,
}

impl Default for GraphState {
    fn default() -> Self {
        Self::new(GraphOptions::default())
    }
}

impl GraphState {
    pub fn new(options: GraphOptions) -> Self {
        Self { version: 0, nodes: IndexMap::new(), edges: IndexMap::new(), options }
    }

    /// Rebuilds a snapshot at a given version, validating every invariant.
    pub fn from_parts(
        version: u64,
        nodes: Vec<MultiModalNode>,
        edges: Vec<Edge>,
        options: GraphOptions,
    ) -> Result<Self> {
        let mut edit = GraphEdit { state: GraphState::new(options) };
        for n in nodes {
            edit.add_node(n)?;
        }
        for e in edges {
            edit.add_edge(e)?;
        }
        let mut state = edit.state;
        state.version = version;
        Ok(state)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn options(&self) -> &GraphOptions {
        &self.options
    }

    pub fn dims(&self) -> &ModalityDims {
        &self.options.dims
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &MultiModalNode> {
        self.nodes.values()
    }

    pub fn node(&self, id: &str) -> Option<&MultiModalNode> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    /// Position of a node in the insertion order.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.get_index_of(id)
    }

    pub fn node_order(&self) -> Vec<NodeId> {
        self.nodes.keys().cloned().collect()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn edge(&self, key: &EdgeKey) -> Option<&Edge> {
        self.edges.get(key)
    }

    pub fn contains_edge(&self, key: &EdgeKey) -> bool {
        self.edges.contains_key(key)
    }

    /// Whether any edge of any kind or type joins `a` and `b`.
    pub fn connected(&self, a: &str, b: &str) -> bool {
        self.edges.values().any(|e| {
            (e.src.as_str() == a && e.dst.as_str() == b) || (e.src.as_str() == b && e.dst.as_str() == a)
        })
    }

    /// Distinct edge types in first-seen order.
    pub fn edge_types(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for t in self.edges.values().filter_map(|e| e.edge_type.as_ref()) {
            if !out.contains(t) {
                out.push(t.clone());
            }
        }
        out
    }

    pub fn is_heterogeneous(&self) -> bool {
        !self.edge_types().is_empty()
    }

    /// Neighbour indices of every node, each list sorted by node id ascending.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.nodes.len()];
        for e in self.edges.values() {
            let a = self.index_of(e.src.as_str()).expect("edge endpoints resolve");
            let b = self.index_of(e.dst.as_str()).expect("edge endpoints resolve");
            sets[a].insert(b);
            sets[b].insert(a);
        }
        let order = self.node_order();
        sets.into_iter()
            .map(|s| {
                let mut v: Vec<usize> = s.into_iter().collect();
                v.sort_by(|&x, &y| order[x].cmp(&order[y]));
                v
            })
            .collect()
    }

    /// Symmetric adjacency over insertion order, restricted to `kinds` and optionally
    /// to one edge type.
    pub fn adjacency<T: Scalar>(
        &self,
        kinds: &[EdgeKind],
        edge_type: Option<&str>,
        weighting: AdjacencyWeighting,
    ) -> Result<Adjacency<T>> {
        if let Some(t) = edge_type {
            if !self.edges.values().any(|e| e.edge_type.as_deref() == Some(t)) {
                return Err(GwmError::UnknownEdgeType(t.to_string()));
            }
        }
        let n = self.nodes.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for e in self.edges.values() {
            if !kinds.contains(&e.kind) {
                continue;
            }
            if edge_type.is_some() && e.edge_type.as_deref() != edge_type {
                continue;
            }
            let i = self.index_of(e.src.as_str()).expect("edge endpoints resolve");
            let j = self.index_of(e.dst.as_str()).expect("edge endpoints resolve");
            let w = match weighting {
                AdjacencyWeighting::Binary => 1.0,
                AdjacencyWeighting::Weighted => e.weight,
            };
            upsert_max(&mut rows[i], j, w);
            if i != j {
                upsert_max(&mut rows[j], i, w);
            }
        }
        let rows = rows
            .into_iter()
            .map(|r| r.into_iter().map(|(j, w)| (j, T::of(w))).collect())
            .collect();
        Ok(Adjacency {
            matrix: CsrMatrix::from_rows(n, rows)?,
            node_order: self.node_order(),
            version: self.version,
        })
    }

    /// Starts a batch of mutations that publishes as one new version.
    pub fn edit(&self) -> GraphEdit {
        GraphEdit { state: self.clone() }
    }

    pub fn add_node(&self, node: MultiModalNode) -> Result<GraphState> {
        let mut e = self.edit();
        e.add_node(node)?;
        Ok(e.commit())
    }

    pub fn add_edge(&self, edge: Edge) -> Result<GraphState> {
        let mut e = self.edit();
        e.add_edge(edge)?;
        Ok(e.commit())
    }

    pub fn remove_node(&self, id: &str) -> Result<GraphState> {
        let mut e = self.edit();
        e.remove_node(id)?;
        Ok(e.commit())
    }

    pub fn remove_edge(&self, key: &EdgeKey) -> Result<GraphState> {
        let mut e = self.edit();
        e.remove_edge(key)?;
        Ok(e.commit())
    }
}

fn upsert_max(row: &mut Vec<(usize, f64)>, j: usize, w: f64) {
    match row.iter_mut().find(|(c, _)| *c == j) {
        Some(slot) => slot.1 = slot.1.max(w),
        None => row.push((j, w)),
    }
}

/// Pending mutations on a private copy of a snapshot.
#[derive(Debug, Clone)]
pub struct GraphEdit {
    state: GraphState,
}

impl GraphEdit {
    /// Read access to the pending state.
    pub fn state(&self) -> &GraphState {
        &self.state
    }

    pub fn add_node(&mut self, node: MultiModalNode) -> Result<()> {
        if node.is_empty() {
            return Err(GwmError::EmptyNode(node.id.to_string()));
        }
        if self.state.nodes.contains_key(node.id.as_str()) {
            return Err(GwmError::DuplicateId(node.id.to_string()));
        }
        for m in Modality::ALL {
            if let Some(e) = &node.embeddings[m.slot()] {
                check_dim(&self.state.options.dims, m, e.values.len())?;
            }
        }
        self.state.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    pub fn add_edge(&mut self, edge: Edge) -> Result<()> {
        for end in [&edge.src, &edge.dst] {
            if !self.state.nodes.contains_key(end.as_str()) {
                return Err(GwmError::DanglingEndpoint(end.to_string()));
            }
        }
        if edge.src == edge.dst && !self.state.options.allow_self_loops {
            return Err(GwmError::SelfLoop(edge.src.to_string()));
        }
        let valid = match edge.kind {
            EdgeKind::Explicit => edge.weight.is_finite() && edge.weight >= 0.0,
            EdgeKind::Implicit => (0.0..=1.0).contains(&edge.weight),
        };
        if !valid {
            return Err(GwmError::InvalidWeight(edge.weight));
        }
        let key = edge.key();
        if self.state.edges.contains_key(&key) {
            return Err(GwmError::DuplicateEdge {
                src: edge.src.to_string(),
                dst: edge.dst.to_string(),
                kind: edge.kind.to_string(),
            });
        }
        self.state.edges.insert(key, edge);
        Ok(())
    }

    /// Removes a node together with every incident edge.
    pub fn remove_node(&mut self, id: &str) -> Result<MultiModalNode> {
        let node = self
            .state
            .nodes
            .shift_remove(id)
            .ok_or_else(|| GwmError::UnknownNode(id.to_string()))?;
        self.state.edges.retain(|k, _| k.lo.as_str() != id && k.hi.as_str() != id);
        Ok(node)
    }

    pub fn remove_edge(&mut self, key: &EdgeKey) -> Result<Edge> {
        self.state
            .edges
            .shift_remove(key)
            .ok_or_else(|| GwmError::UnknownEdge(key.lo.to_string(), key.hi.to_string()))
    }

    /// Replaces one modality payload and clears the matching embedding slot.
    pub fn set_payload(&mut self, id: &str, payload: ModalityPayload) -> Result<()> {
        let node = self
            .state
            .nodes
            .get_mut(id)
            .ok_or_else(|| GwmError::UnknownNode(id.to_string()))?;
        node.set_payload(payload);
        Ok(())
    }

    /// Stores an embedding for a modality the node actually has.
    pub fn set_embedding(&mut self, id: &str, modality: Modality, values: Vec<f32>) -> Result<()> {
        check_dim(&self.state.options.dims, modality, values.len())?;
        let node = self
            .state
            .nodes
            .get_mut(id)
            .ok_or_else(|| GwmError::UnknownNode(id.to_string()))?;
        if !node.has_modality(modality) {
            return Err(GwmError::InvalidArgument(format!(
                "node `{id}` has no {modality} payload to embed"
            )));
        }
        node.set_embedding_unchecked(modality, values);
        Ok(())
    }

    pub fn clear_embedding(&mut self, id: &str, modality: Modality) -> Result<()> {
        self.state
            .nodes
            .get_mut(id)
            .ok_or_else(|| GwmError::UnknownNode(id.to_string()))?
            .clear_embedding(modality);
        Ok(())
    }

    /// Publishes the pending state as `version + 1`.
    pub fn commit(mut self) -> GraphState {
        self.state.version += 1;
        self.state
    }
}

fn check_dim(dims: &ModalityDims, m: Modality, got: usize) -> Result<()> {
    let expected = dims.dim(m);
    if got != expected {
        return Err(GwmError::DimensionMismatch { modality: m, expected, got });
    }
    Ok(())
}
