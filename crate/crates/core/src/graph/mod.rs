//! Directed property graph with a closed six-kind entity schema, open
//! relations, n-ary hyper-edge attributes and source indexing.
//!
//! Storage is directed. [`LifeGraph::neighbors`] exposes the undirected
//! traversal view used by retrieval and analysis.

mod dot;
mod persist;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use persist::{GRAPH_FILE_EXTENSION, GRAPH_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("label is empty after normalization")]
    EmptyLabel,
    #[error("relation is empty")]
    EmptyRelation,
    #[error("date label {0:?} is not a full ISO-8601 calendar date (YYYY-MM-DD)")]
    InvalidDate(String),
    #[error("referential integrity violated: node {0} does not exist")]
    DanglingEndpoint(NodeId),
    #[error("attribute {key:?} references missing node {node}")]
    DanglingAttribute { key: String, node: NodeId },
    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(NodeId),
    #[error("node {0} not found")]
    NodeNotFound(NodeId),
    #[error("duplicate entity {kind}:{label} (nodes {first} and {second})")]
    DuplicateEntity {
        kind: EntityKind,
        label: String,
        first: NodeId,
        second: NodeId,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// The closed entity schema. Exactly six kinds exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityKind {
    PersonAnimal,
    Event,
    Date,
    Location,
    Activity,
    Object,
}

impl EntityKind {
    pub const ALL: [EntityKind; 6] = [
        EntityKind::PersonAnimal,
        EntityKind::Event,
        EntityKind::Date,
        EntityKind::Location,
        EntityKind::Activity,
        EntityKind::Object,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::PersonAnimal => "PersonAnimal",
            EntityKind::Event => "Event",
            EntityKind::Date => "Date",
            EntityKind::Location => "Location",
            EntityKind::Activity => "Activity",
            EntityKind::Object => "Object",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
#[error("unknown entity kind {0:?}")]
pub struct UnknownKind(pub String);

impl FromStr for EntityKind {
    type Err = UnknownKind;

    /// Case-insensitive; ignores spaces, `_`, `-` and `/` so that
    /// "Person/Animal" and "person_animal" both parse.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let squashed: String = s
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-' | '/'))
            .flat_map(char::to_lowercase)
            .collect();
        EntityKind::ALL
            .into_iter()
            .find(|k| k.as_str().to_lowercase() == squashed)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

/// Trim, case-fold and collapse internal whitespace runs.
pub fn normalize_label(label: &str) -> String {
    label
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub String);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl NodeId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl EdgeId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn short_hash(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.as_bytes());
        hasher.update([0u8]);
    }
    hex::encode(&hasher.finalize()[..8])
}

/// Deterministic id derived from the entity's kind and normalized label.
pub fn node_id_for(kind: EntityKind, label: &str) -> NodeId {
    NodeId(format!("n{}", short_hash(&[kind.as_str(), &normalize_label(label)])))
}

/// Pointer from a graph element back to a source image or text record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MediaRef {
    pub media_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
}

impl MediaRef {
    pub fn new(media_id: impl Into<String>, date: Option<NaiveDate>) -> Self {
        Self {
            media_id: media_id.into(),
            date,
        }
    }
}

/// A hyper-edge attribute value: free text, or a reference to another node
/// taking part in the n-ary fact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Text(String),
    Entity { node: NodeId },
}

impl AttrValue {
    pub fn text(s: impl Into<String>) -> Self {
        AttrValue::Text(s.into())
    }

    pub fn entity(id: NodeId) -> Self {
        AttrValue::Entity { node: id }
    }
}

pub type NodeAttrs = BTreeMap<String, String>;
pub type EdgeAttrs = BTreeMap<String, Vec<AttrValue>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: EntityKind,
    pub label: String,
    #[serde(default)]
    pub attrs: NodeAttrs,
    #[serde(default)]
    pub source_refs: BTreeSet<MediaRef>,
}

impl Node {
    pub fn normalized_label(&self) -> String {
        normalize_label(&self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperEdge {
    pub id: EdgeId,
    pub subject: NodeId,
    pub relation: String,
    pub object: NodeId,
    #[serde(default)]
    pub attrs: EdgeAttrs,
    #[serde(default)]
    pub source_refs: BTreeSet<MediaRef>,
}

impl HyperEdge {
    pub fn endpoints(&self) -> [&NodeId; 2] {
        [&self.subject, &self.object]
    }

    /// Node ids referenced from attribute values.
    pub fn attr_entities(&self) -> impl Iterator<Item = (&str, &NodeId)> {
        self.attrs.iter().flat_map(|(k, vs)| {
            vs.iter().filter_map(move |v| match v {
                AttrValue::Entity { node } => Some((k.as_str(), node)),
                AttrValue::Text(_) => None,
            })
        })
    }
}

/// Canonical attribute string; values are sorted so permuted lists hash alike.
fn canonical_attrs(attrs: &EdgeAttrs) -> String {
    let canon: BTreeMap<&String, Vec<&AttrValue>> = attrs
        .iter()
        .map(|(k, vs)| {
            let mut vs: Vec<&AttrValue> = vs.iter().collect();
            vs.sort();
            (k, vs)
        })
        .collect();
    serde_json::to_string(&canon).expect("attrs serialize")
}

pub fn edge_id_for(subject: &NodeId, relation: &str, object: &NodeId, attrs: &EdgeAttrs) -> EdgeId {
    EdgeId(format!(
        "e{}",
        short_hash(&[subject.as_str(), relation, object.as_str(), &canonical_attrs(attrs)])
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// The queried node is the edge's subject.
    Outgoing,
    /// The queried node is the edge's object.
    Incoming,
}

#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'g> {
    pub edge: &'g HyperEdge,
    pub node: &'g Node,
    pub direction: Direction,
}

#[derive(Debug, Clone, Default)]
pub struct LifeGraph {
    owner: String,
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeId, HyperEdge>,
    by_label: BTreeMap<(EntityKind, String), NodeId>,
    adjacency: BTreeMap<NodeId, BTreeSet<(EdgeId, Direction)>>,
}

impl PartialEq for LifeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.owner == other.owner && self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Eq for LifeGraph {}

impl LifeGraph {
    pub fn new(owner: impl Into<String>) -> Self {
        Self {
            owner: owner.into(),
            ..Default::default()
        }
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &HyperEdge> {
        self.edges.values()
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn edge(&self, id: &EdgeId) -> Option<&HyperEdge> {
        self.edges.get(id)
    }

    pub fn contains_node(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn find_node(&self, kind: EntityKind, label: &str) -> Option<&Node> {
        self.by_label
            .get(&(kind, normalize_label(label)))
            .and_then(|id| self.nodes.get(id))
    }

    /// Nodes of any kind whose normalized label equals `label`'s.
    pub fn find_by_label(&self, label: &str) -> Vec<&Node> {
        let norm = normalize_label(label);
        EntityKind::ALL
            .iter()
            .filter_map(|k| self.by_label.get(&(*k, norm.clone())))
            .filter_map(|id| self.nodes.get(id))
            .collect()
    }

    /// Inserts a node, or merges into the existing node with the same kind
    /// and normalized label (first writer wins per attribute key, source
    /// refs are unioned).
    pub fn add_node(
        &mut self,
        kind: EntityKind,
        label: &str,
        attrs: NodeAttrs,
        source_refs: impl IntoIterator<Item = MediaRef>,
    ) -> Result<NodeId> {
        let norm = normalize_label(label);
        if norm.is_empty() {
            return Err(GraphError::EmptyLabel);
        }
        if kind == EntityKind::Date && NaiveDate::parse_from_str(&norm, "%Y-%m-%d").is_err() {
            return Err(GraphError::InvalidDate(label.to_string()));
        }
        if let Some(id) = self.by_label.get(&(kind, norm.clone())) {
            let node = self.nodes.get_mut(id).expect("label index in sync");
            for (k, v) in attrs {
                node.attrs.entry(k).or_insert(v);
            }
            node.source_refs.extend(source_refs);
            return Ok(id.clone());
        }
        let id = node_id_for(kind, &norm);
        let display = label.split_whitespace().collect::<Vec<_>>().join(" ");
        self.nodes.insert(
            id.clone(),
            Node {
                id: id.clone(),
                kind,
                label: display,
                attrs,
                source_refs: source_refs.into_iter().collect(),
            },
        );
        self.by_label.insert((kind, norm), id.clone());
        self.adjacency.entry(id.clone()).or_default();
        Ok(id)
    }

    /// Inserts a directed edge. A duplicate (subject, relation, object, attrs)
    /// merges into the existing edge by unioning source refs.
    pub fn add_edge(
        &mut self,
        subject: &NodeId,
        relation: &str,
        object: &NodeId,
        attrs: EdgeAttrs,
        source_refs: impl IntoIterator<Item = MediaRef>,
    ) -> Result<EdgeId> {
        let relation = relation.trim();
        if relation.is_empty() {
            return Err(GraphError::EmptyRelation);
        }
        for id in [subject, object] {
            if !self.nodes.contains_key(id) {
                return Err(GraphError::DanglingEndpoint(id.clone()));
            }
        }
        if subject == object {
            return Err(GraphError::SelfLoop(subject.clone()));
        }
        for (key, values) in &attrs {
            for v in values {
                if let AttrValue::Entity { node } = v {
                    if !self.nodes.contains_key(node) {
                        return Err(GraphError::DanglingAttribute {
                            key: key.clone(),
                            node: node.clone(),
                        });
                    }
                }
            }
        }
        let id = edge_id_for(subject, relation, object, &attrs);
        if let Some(existing) = self.edges.get_mut(&id) {
            existing.source_refs.extend(source_refs);
            return Ok(id);
        }
        self.edges.insert(
            id.clone(),
            HyperEdge {
                id: id.clone(),
                subject: subject.clone(),
                relation: relation.to_string(),
                object: object.clone(),
                attrs,
                source_refs: source_refs.into_iter().collect(),
            },
        );
        self.link(&id, subject, object);
        Ok(id)
    }

    fn link(&mut self, id: &EdgeId, subject: &NodeId, object: &NodeId) {
        self.adjacency
            .entry(subject.clone())
            .or_default()
            .insert((id.clone(), Direction::Outgoing));
        self.adjacency
            .entry(object.clone())
            .or_default()
            .insert((id.clone(), Direction::Incoming));
    }

    /// Undirected neighborhood: every edge where `id` is subject or object,
    /// paired with the node at the other end. Ordered by edge id.
    pub fn neighbors(&self, id: &NodeId) -> Result<Vec<Neighbor<'_>>> {
        let adj = self
            .adjacency
            .get(id)
            .ok_or_else(|| GraphError::NodeNotFound(id.clone()))?;
        Ok(adj
            .iter()
            .map(|(eid, direction)| {
                let edge = &self.edges[eid];
                let other = match direction {
                    Direction::Outgoing => &edge.object,
                    Direction::Incoming => &edge.subject,
                };
                Neighbor {
                    edge,
                    node: &self.nodes[other],
                    direction: *direction,
                }
            })
            .collect())
    }

    /// Undirected degree (in + out, parallel edges counted).
    pub fn degree(&self, id: &NodeId) -> usize {
        self.adjacency.get(id).map_or(0, BTreeSet::len)
    }

    /// Checks referential integrity, label dedup and non-empty labels and
    /// relations.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen: BTreeMap<(EntityKind, String), &NodeId> = BTreeMap::new();
        for node in self.nodes.values() {
            let norm = node.normalized_label();
            if norm.is_empty() {
                return Err(GraphError::EmptyLabel);
            }
            if let Some(first) = seen.insert((node.kind, norm.clone()), &node.id) {
                return Err(GraphError::DuplicateEntity {
                    kind: node.kind,
                    label: norm,
                    first: first.clone(),
                    second: node.id.clone(),
                });
            }
        }
        for edge in self.edges.values() {
            if edge.relation.trim().is_empty() {
                return Err(GraphError::EmptyRelation);
            }
            for id in edge.endpoints() {
                if !self.nodes.contains_key(id) {
                    return Err(GraphError::DanglingEndpoint(id.clone()));
                }
            }
            for (key, node) in edge.attr_entities() {
                if !self.nodes.contains_key(node) {
                    return Err(GraphError::DanglingAttribute {
                        key: key.to_string(),
                        node: node.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Human-readable label for an attribute value.
    pub fn render_attr_value(&self, value: &AttrValue) -> String {
        match value {
            AttrValue::Text(t) => t.clone(),
            AttrValue::Entity { node } => self
                .nodes
                .get(node)
                .map_or_else(|| node.to_string(), |n| n.label.clone()),
        }
    }

    /// `relation<key: [a, b], key2: c>`, or just `relation` without attrs.
    pub fn render_relation(&self, edge: &HyperEdge) -> String {
        if edge.attrs.is_empty() {
            return edge.relation.clone();
        }
        let parts: Vec<String> = edge
            .attrs
            .iter()
            .map(|(k, vs)| {
                let rendered: Vec<String> = vs.iter().map(|v| self.render_attr_value(v)).collect();
                if rendered.len() == 1 {
                    format!("{k}: {}", rendered[0])
                } else {
                    format!("{k}: [{}]", rendered.join(", "))
                }
            })
            .collect();
        format!("{}<{}>", edge.relation, parts.join(", "))
    }

    // Raw insertion used by the loader; invariants are checked afterwards.
    fn insert_loaded_node(&mut self, node: Node) {
        self.by_label
            .insert((node.kind, node.normalized_label()), node.id.clone());
        self.adjacency.entry(node.id.clone()).or_default();
        self.nodes.insert(node.id.clone(), node);
    }

    fn insert_loaded_edge(&mut self, edge: HyperEdge) {
        let (id, s, o) = (edge.id.clone(), edge.subject.clone(), edge.object.clone());
        self.edges.insert(id.clone(), edge);
        self.link(&id, &s, &o);
    }
}
