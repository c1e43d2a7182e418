//! Typed, layered, directed multigraph with canonical JSON serialization.
//!
//! Nodes are keyed by id and edges by `(src, dst, kind)`; both live in ordered
//! collections, so serialization depends only on the graph's value.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Panel,
    /// Story-level character identity.
    Character,
    CharacterInstance,
    Object,
    Action,
    Dialogue,
    Event,
    MacroEvent,
}

impl NodeKind {
    pub fn layer(self) -> Layer {
        match self {
            NodeKind::Event | NodeKind::MacroEvent => Layer::EventLayer,
            _ => Layer::PanelLayer,
        }
    }

    /// Kinds whose nodes must carry a `label` attribute.
    pub fn requires_label(self) -> bool {
        matches!(
            self,
            NodeKind::Action | NodeKind::Event | NodeKind::MacroEvent | NodeKind::Object
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    CoOccursWith,
    HasAgent,
    ActsOn,
    /// Text-image link from a dialogue to its panel.
    GroundedIn,
    /// Character instance to story-level entity.
    RefersTo,
    PrecedesReading,
    PrecedesStorytime,
    /// Panel to the event it realizes.
    Instantiates,
    SubeventOf,
    Precedes,
    /// Event-level co-occurrence; stored once, read symmetrically.
    CoOccurs,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 11] = [
        EdgeKind::CoOccursWith,
        EdgeKind::HasAgent,
        EdgeKind::ActsOn,
        EdgeKind::GroundedIn,
        EdgeKind::RefersTo,
        EdgeKind::PrecedesReading,
        EdgeKind::PrecedesStorytime,
        EdgeKind::Instantiates,
        EdgeKind::SubeventOf,
        EdgeKind::Precedes,
        EdgeKind::CoOccurs,
    ];

    pub fn is_acyclic(self) -> bool {
        matches!(
            self,
            EdgeKind::PrecedesReading
                | EdgeKind::PrecedesStorytime
                | EdgeKind::Precedes
                | EdgeKind::SubeventOf
        )
    }

    pub fn is_symmetric(self) -> bool {
        self == EdgeKind::CoOccurs
    }

    pub fn layer(self) -> Layer {
        match self {
            EdgeKind::PrecedesReading | EdgeKind::PrecedesStorytime => Layer::TemporalLayer,
            EdgeKind::SubeventOf | EdgeKind::Precedes | EdgeKind::CoOccurs => Layer::EventLayer,
            _ => Layer::PanelLayer,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::CoOccursWith => "co_occurs_with",
            EdgeKind::HasAgent => "has_agent",
            EdgeKind::ActsOn => "acts_on",
            EdgeKind::GroundedIn => "grounded_in",
            EdgeKind::RefersTo => "refers_to",
            EdgeKind::PrecedesReading => "precedes_reading",
            EdgeKind::PrecedesStorytime => "precedes_storytime",
            EdgeKind::Instantiates => "instantiates",
            EdgeKind::SubeventOf => "subevent_of",
            EdgeKind::Precedes => "precedes",
            EdgeKind::CoOccurs => "co_occurs",
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    PanelLayer,
    TemporalLayer,
    EventLayer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub layer: Layer,
    #[serde(default)]
    pub attrs: BTreeMap<String, String>,
}

impl Node {
    pub fn new(id: impl Into<String>, kind: NodeKind) -> Self {
        Node {
            id: id.into(),
            kind,
            layer: kind.layer(),
            attrs: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attrs.insert(key.into(), value.into());
        self
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).map(String::as_str)
    }

    pub fn label(&self) -> Option<&str> {
        self.attr("label")
    }

    /// Label before normalization; the current label on a raw graph.
    pub fn surface_label(&self) -> Option<&str> {
        self.attr("surface_label").or_else(|| self.label())
    }

    /// Integer-valued attribute, stored as a decimal string.
    pub fn order_attr(&self, key: &str) -> Option<u64> {
        self.attr(key).and_then(|v| v.parse().ok())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn new(src: impl Into<String>, dst: impl Into<String>, kind: EdgeKind) -> Self {
        Edge {
            src: src.into(),
            dst: dst.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("node `{0}` already exists")]
    DuplicateNode(String),
    #[error("edge {0} -[{1}]-> {2} already exists")]
    DuplicateEdge(String, EdgeKind, String),
    #[error("edge endpoint `{0}` is not a node")]
    UnknownEndpoint(String),
    #[error("edge {src} -[{kind}]-> {dst} would close a cycle")]
    CycleIntroduced { kind: EdgeKind, src: String, dst: String },
    #[error("`{0}` already has a subevent_of parent")]
    MultipleParents(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Error)]
pub enum SerdeError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
}

#[derive(Debug, Clone, Default)]
pub struct NarrativeGraph {
    story_id: String,
    normalized: bool,
    nodes: BTreeMap<String, Node>,
    edges: BTreeSet<Edge>,
    outgoing: BTreeMap<String, BTreeSet<(EdgeKind, String)>>,
    incoming: BTreeMap<String, BTreeSet<(EdgeKind, String)>>,
}

impl PartialEq for NarrativeGraph {
    fn eq(&self, other: &Self) -> bool {
        // Adjacency maps are derived from `edges`.
        self.story_id == other.story_id
            && self.normalized == other.normalized
            && self.nodes == other.nodes
            && self.edges == other.edges
    }
}

impl Eq for NarrativeGraph {}

impl NarrativeGraph {
    pub fn new(story_id: impl Into<String>) -> Self {
        NarrativeGraph {
            story_id: story_id.into(),
            ..Default::default()
        }
    }

    pub fn story_id(&self) -> &str {
        &self.story_id
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn set_normalized(&mut self, normalized: bool) {
        self.normalized = normalized;
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub(crate) fn node_mut(&mut self, id: &str) -> Option<&mut Node> {
        self.nodes.get_mut(id)
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(move |n| n.kind == kind)
    }

    /// Edges in `(src, dst, kind)` order.
    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_edge(&self, edge: &Edge) -> bool {
        self.edges.contains(edge)
    }

    pub fn add_node(&mut self, node: Node) -> Result<(), GraphError> {
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    pub fn add_edge(&mut self, edge: Edge) -> Result<(), GraphError> {
        for end in [&edge.src, &edge.dst] {
            if !self.nodes.contains_key(end) {
                return Err(GraphError::UnknownEndpoint(end.clone()));
            }
        }
        if self.edges.contains(&edge) {
            return Err(GraphError::DuplicateEdge(edge.src, edge.kind, edge.dst));
        }
        if edge.kind == EdgeKind::SubeventOf && !self.out_ids(&edge.src, EdgeKind::SubeventOf).is_empty() {
            return Err(GraphError::MultipleParents(edge.src));
        }
        if edge.kind.is_acyclic() && (edge.src == edge.dst || self.reaches(&edge.dst, &edge.src, edge.kind)) {
            return Err(GraphError::CycleIntroduced {
                kind: edge.kind,
                src: edge.src,
                dst: edge.dst,
            });
        }
        self.outgoing
            .entry(edge.src.clone())
            .or_default()
            .insert((edge.kind, edge.dst.clone()));
        self.incoming
            .entry(edge.dst.clone())
            .or_default()
            .insert((edge.kind, edge.src.clone()));
        self.edges.insert(edge);
        Ok(())
    }

    fn out_ids(&self, id: &str, kind: EdgeKind) -> Vec<&str> {
        self.outgoing
            .get(id)
            .into_iter()
            .flatten()
            .filter(|(k, _)| *k == kind)
            .map(|(_, d)| d.as_str())
            .collect()
    }

    /// Whether `to` is reachable from `from` along edges of one kind.
    fn reaches(&self, from: &str, to: &str, kind: EdgeKind) -> bool {
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(cur) = stack.pop() {
            if cur == to {
                return true;
            }
            if seen.insert(cur) {
                stack.extend(self.out_ids(cur, kind));
            }
        }
        false
    }

    /// Adjacent node ids in ascending order. Symmetric kinds ignore direction.
    pub fn neighbors(
        &self,
        id: &str,
        kind: Option<EdgeKind>,
        direction: Direction,
    ) -> Result<Vec<&str>, GraphError> {
        if !self.nodes.contains_key(id) {
            return Err(GraphError::UnknownNode(id.to_owned()));
        }
        let pick = |dir: Direction| {
            let adj = match dir {
                Direction::Out => &self.outgoing,
                Direction::In => &self.incoming,
            };
            adj.get(id).into_iter().flatten()
        };
        let mut out: BTreeSet<&str> = pick(direction)
            .filter(|(k, _)| kind.is_none_or(|want| *k == want))
            .map(|(_, n)| n.as_str())
            .collect();
        let flipped = match direction {
            Direction::Out => Direction::In,
            Direction::In => Direction::Out,
        };
        out.extend(
            pick(flipped)
                .filter(|(k, _)| k.is_symmetric() && kind.is_none_or(|want| *k == want))
                .map(|(_, n)| n.as_str()),
        );
        Ok(out.into_iter().collect())
    }

    /// Merge another fragment into this graph. Nodes present in both must be
    /// identical; shared edges are kept once.
    pub fn merge(&mut self, other: NarrativeGraph) -> Result<(), GraphError> {
        for (id, node) in other.nodes {
            match self.nodes.get(&id) {
                Some(existing) if *existing == node => {}
                Some(_) => return Err(GraphError::DuplicateNode(id)),
                None => {
                    self.nodes.insert(id, node);
                }
            }
        }
        for edge in other.edges {
            if !self.edges.contains(&edge) {
                self.add_edge(edge)?;
            }
        }
        Ok(())
    }

    /// Whole-graph invariants that single insertions cannot enforce.
    pub fn check_invariants(&self) -> Result<(), GraphError> {
        for node in self.nodes.values() {
            if node.layer != node.kind.layer() {
                return Err(GraphError::Invariant(format!(
                    "node `{}` is in the wrong layer",
                    node.id
                )));
            }
            if node.kind.requires_label() && node.label().is_none() {
                return Err(GraphError::Invariant(format!(
                    "node `{}` has no label",
                    node.id
                )));
            }
            match node.kind {
                NodeKind::CharacterInstance => {
                    let refs = self.out_ids(&node.id, EdgeKind::RefersTo).len();
                    if refs != 1 {
                        return Err(GraphError::Invariant(format!(
                            "character instance `{}` has {refs} refers_to edges",
                            node.id
                        )));
                    }
                }
                NodeKind::Event => {
                    let parents = self.out_ids(&node.id, EdgeKind::SubeventOf).len();
                    if parents != 1 {
                        return Err(GraphError::Invariant(format!(
                            "event `{}` has {parents} subevent_of parents",
                            node.id
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Canonical JSON bytes: sorted nodes, sorted edges, fixed key order.
    pub fn to_json(&self) -> Vec<u8> {
        let wire = WireGraphRef {
            story_id: &self.story_id,
            normalized: self.normalized,
            nodes: self.nodes.values().collect(),
            edges: self.edges.iter().collect(),
        };
        let mut out = serde_json::to_vec_pretty(&wire).expect("graph always serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, SerdeError> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| SerdeError::MalformedJson(e.to_string()))?;
        let wire: WireGraph = serde_path_to_error::deserialize(value)
            .map_err(|e| SerdeError::SchemaViolation(format!("{}: {}", e.path(), e.inner())))?;
        let mut g = NarrativeGraph::new(wire.story_id);
        g.normalized = wire.normalized;
        let invalid = |e: GraphError| SerdeError::SchemaViolation(e.to_string());
        for node in wire.nodes {
            g.add_node(node).map_err(invalid)?;
        }
        for edge in wire.edges {
            g.add_edge(edge).map_err(invalid)?;
        }
        g.check_invariants().map_err(invalid)?;
        Ok(g)
    }
}

#[derive(Serialize)]
struct WireGraphRef<'a> {
    story_id: &'a str,
    normalized: bool,
    nodes: Vec<&'a Node>,
    edges: Vec<&'a Edge>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireGraph {
    story_id: String,
    normalized: bool,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

pub fn serialize(graph: &NarrativeGraph) -> Vec<u8> {
    graph.to_json()
}

pub fn deserialize(bytes: &[u8]) -> Result<NarrativeGraph, SerdeError> {
    NarrativeGraph::from_json(bytes)
}
