//! Structured queries over a built graph: action retrieval, dialogue
//! tracing, character trajectories, timelines and event summaries.
//!
//! Every query is read-only.

use std::collections::{BTreeSet, HashSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Direction, EdgeKind, GraphError, NarrativeGraph, Node, NodeKind};
use crate::normalize::{fold_label, EmbeddingProvider, NormalizationMap, NormalizeError, Pool, SynonymLexicon};

#[derive(Debug, Error)]
pub enum ReasonError {
    #[error("empty query label")]
    EmptyQuery,
    #[error("normalized retrieval requested on a raw graph")]
    NotNormalized,
    #[error("unknown event `{0}`")]
    UnknownEvent(String),
    #[error("unknown character entity `{0}`")]
    UnknownEntity(String),
    #[error("unknown timeline scope `{0}`")]
    UnknownScope(String),
    #[error("broken {kind} chain in scope `{scope}`: {detail}")]
    BrokenChain {
        scope: String,
        kind: EdgeKind,
        detail: String,
    },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("`{0}` is not an event or macro-event")]
    NotAnEventNode(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    Raw,
    Normalized,
}

impl FromStr for RetrievalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(RetrievalMode::Raw),
            "normalized" | "norm" => Ok(RetrievalMode::Normalized),
            _ => Err(format!("unknown mode `{s}` (expected raw or normalized)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionHit {
    pub panel_id: String,
    /// Graph node id of the action.
    pub action_instance_id: String,
    pub surface_label: String,
    pub canonical_label: String,
}

/// Resolves queries that are not surface forms of the graph through the
/// normalization map and the link relation it was built with.
pub struct QueryResolver<'a> {
    pub map: &'a NormalizationMap,
    pub provider: &'a dyn EmbeddingProvider,
    pub lexicon: &'a SynonymLexicon,
}

fn reading_order(graph: &NarrativeGraph, panel: &str) -> u64 {
    graph
        .node(panel)
        .and_then(|n| n.order_attr("reading_order"))
        .unwrap_or(u64::MAX)
}

fn index_attr(node: &Node) -> u64 {
    node.order_attr("index").unwrap_or(u64::MAX)
}

fn panel_of(node: &Node) -> &str {
    node.attr("panel").unwrap_or_default()
}

/// Action hits for `query`; see [`retrieve_actions_with`].
pub fn retrieve_actions(
    graph: &NarrativeGraph,
    query: &str,
    mode: RetrievalMode,
) -> Result<Vec<ActionHit>, ReasonError> {
    retrieve_actions_with(graph, query, mode, None)
}

/// Raw mode matches surface labels after case and separator folding.
/// Normalized mode matches canonical labels against the canonical of the
/// query: a surface form of the graph resolves to its node's canonical, a
/// canonical resolves to itself, and anything else goes through `resolver`
/// when given or matches exactly otherwise. Hits are in panel reading order.
pub fn retrieve_actions_with(
    graph: &NarrativeGraph,
    query: &str,
    mode: RetrievalMode,
    resolver: Option<&QueryResolver<'_>>,
) -> Result<Vec<ActionHit>, ReasonError> {
    let folded = fold_label(query);
    if folded.is_empty() {
        return Err(ReasonError::EmptyQuery);
    }
    let actions: Vec<&Node> = graph.nodes_of(NodeKind::Action).collect();
    let surface = |n: &Node| n.surface_label().unwrap_or_default().to_owned();
    let canonical = |n: &Node| n.label().unwrap_or_default().to_owned();

    let matches: Box<dyn Fn(&Node) -> bool> = match mode {
        RetrievalMode::Raw => Box::new(|n: &Node| fold_label(&surface(n)) == folded),
        RetrievalMode::Normalized => {
            if !graph.is_normalized() {
                return Err(ReasonError::NotNormalized);
            }
            let target = if let Some(n) = actions.iter().find(|n| fold_label(&surface(n)) == folded) {
                Some(fold_label(&canonical(n)))
            } else if actions.iter().any(|n| fold_label(&canonical(n)) == folded) {
                Some(folded.clone())
            } else if let Some(r) = resolver {
                r.map
                    .resolve(Pool::Action, query, r.provider, r.lexicon)?
                    .map(|c| fold_label(&c))
            } else {
                Some(folded.clone())
            };
            match target {
                Some(t) => Box::new(move |n: &Node| fold_label(&canonical(n)) == t),
                None => return Ok(Vec::new()),
            }
        }
    };

    let mut hits: Vec<(u64, u64, ActionHit)> = actions
        .into_iter()
        .filter(|n| matches(n))
        .map(|n| {
            let panel = panel_of(n).to_owned();
            (
                reading_order(graph, &panel),
                index_attr(n),
                ActionHit {
                    panel_id: panel,
                    action_instance_id: n.id.clone(),
                    surface_label: surface(n),
                    canonical_label: canonical(n),
                },
            )
        })
        .collect();
    hits.sort_by(|a, b| (a.0, a.1, &a.2.action_instance_id).cmp(&(b.0, b.1, &b.2.action_instance_id)));
    Ok(hits.into_iter().map(|(_, _, h)| h).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueEntry {
    pub panel_id: String,
    pub dialogue_id: String,
    pub speaker: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTrace {
    pub event_id: String,
    pub entries: Vec<DialogueEntry>,
}

/// Panels instantiating an event, or every event of a macro-event, in
/// reading order.
fn event_panels(graph: &NarrativeGraph, node: &Node) -> Result<Vec<String>, ReasonError> {
    let events: Vec<String> = match node.kind {
        NodeKind::Event => vec![node.id.clone()],
        NodeKind::MacroEvent => graph
            .neighbors(&node.id, Some(EdgeKind::SubeventOf), Direction::In)?
            .into_iter()
            .map(str::to_owned)
            .collect(),
        _ => return Err(ReasonError::NotAnEventNode(node.id.clone())),
    };
    let mut panels = Vec::new();
    for e in &events {
        for p in graph.neighbors(e, Some(EdgeKind::Instantiates), Direction::In)? {
            panels.push(p.to_owned());
        }
    }
    panels.sort_by_key(|p| (reading_order(graph, p), p.clone()));
    Ok(panels)
}

fn entity_of_instance(graph: &NarrativeGraph, instance: &str) -> Result<Option<String>, ReasonError> {
    if graph.node(instance).is_none() {
        return Ok(None);
    }
    Ok(graph
        .neighbors(instance, Some(EdgeKind::RefersTo), Direction::Out)?
        .first()
        .map(|s| s.to_string()))
}

/// Dialogue grounded in the panels of an event or macro-event.
pub fn trace_dialogue(graph: &NarrativeGraph, event_id: &str) -> Result<DialogueTrace, ReasonError> {
    let node = graph
        .node(event_id)
        .filter(|n| matches!(n.kind, NodeKind::Event | NodeKind::MacroEvent))
        .ok_or_else(|| ReasonError::UnknownEvent(event_id.to_owned()))?;
    let mut entries = Vec::new();
    for panel in event_panels(graph, node)? {
        let mut lines: Vec<&Node> = graph
            .neighbors(&panel, Some(EdgeKind::GroundedIn), Direction::In)?
            .into_iter()
            .filter_map(|id| graph.node(id))
            .collect();
        lines.sort_by_key(|n| (index_attr(n), n.id.clone()));
        for d in lines {
            let speaker = match d.attr("speaker") {
                Some(inst) => entity_of_instance(graph, inst)?,
                None => None,
            };
            entries.push(DialogueEntry {
                panel_id: panel.clone(),
                dialogue_id: d.id.clone(),
                speaker,
                text: d.attr("text").unwrap_or_default().to_owned(),
            });
        }
    }
    Ok(DialogueTrace {
        event_id: event_id.to_owned(),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub entity_id: String,
    pub panel_ids: Vec<String>,
    pub event_ids: Vec<String>,
    pub macro_event_ids: Vec<String>,
}

fn push_unique(list: &mut Vec<String>, seen: &mut HashSet<String>, item: &str) {
    if seen.insert(item.to_owned()) {
        list.push(item.to_owned());
    }
}

/// Panels where an entity appears, with the events and macro-events they
/// realize, each listed in order of first appearance.
pub fn character_trajectory(graph: &NarrativeGraph, entity_id: &str) -> Result<Trajectory, ReasonError> {
    graph
        .node(entity_id)
        .filter(|n| n.kind == NodeKind::Character)
        .ok_or_else(|| ReasonError::UnknownEntity(entity_id.to_owned()))?;
    let panels: BTreeSet<String> = graph
        .neighbors(entity_id, Some(EdgeKind::RefersTo), Direction::In)?
        .into_iter()
        .filter_map(|inst| graph.node(inst))
        .map(|n| panel_of(n).to_owned())
        .collect();
    let mut panel_ids: Vec<String> = panels.into_iter().collect();
    panel_ids.sort_by_key(|p| (reading_order(graph, p), p.clone()));

    let (mut event_ids, mut macro_event_ids) = (Vec::new(), Vec::new());
    let (mut seen_events, mut seen_macros) = (HashSet::new(), HashSet::new());
    for p in &panel_ids {
        for e in graph.neighbors(p, Some(EdgeKind::Instantiates), Direction::Out)? {
            push_unique(&mut event_ids, &mut seen_events, e);
            for m in graph.neighbors(e, Some(EdgeKind::SubeventOf), Direction::Out)? {
                push_unique(&mut macro_event_ids, &mut seen_macros, m);
            }
        }
    }
    Ok(Trajectory {
        entity_id: entity_id.to_owned(),
        panel_ids,
        event_ids,
        macro_event_ids,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderKind {
    Reading,
    Storytime,
}

impl OrderKind {
    pub fn edge_kind(self) -> EdgeKind {
        match self {
            OrderKind::Reading => EdgeKind::PrecedesReading,
            OrderKind::Storytime => EdgeKind::PrecedesStorytime,
        }
    }

    pub fn attr(self) -> &'static str {
        match self {
            OrderKind::Reading => "reading_order",
            OrderKind::Storytime => "storytime_order",
        }
    }
}

impl FromStr for OrderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reading" => Ok(OrderKind::Reading),
            "storytime" => Ok(OrderKind::Storytime),
            _ => Err(format!("unknown order `{s}` (expected reading or storytime)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub scope_id: String,
    pub order_kind: OrderKind,
    pub panel_ids: Vec<String>,
}

/// Panels of a macro-event, an event, or the whole story (`story` or the
/// story id), in the order given by following the chosen precedence chain.
pub fn reconstruct_timeline(
    graph: &NarrativeGraph,
    scope_id: &str,
    order_kind: OrderKind,
) -> Result<Timeline, ReasonError> {
    let all: Vec<String> = graph.nodes_of(NodeKind::Panel).map(|n| n.id.clone()).collect();
    let scope: BTreeSet<String> = if scope_id == "story" || scope_id == graph.story_id() {
        all.iter().cloned().collect()
    } else {
        match graph.node(scope_id) {
            Some(n) if matches!(n.kind, NodeKind::Event | NodeKind::MacroEvent) => {
                event_panels(graph, n)?.into_iter().collect()
            }
            _ => return Err(ReasonError::UnknownScope(scope_id.to_owned())),
        }
    };
    let kind = order_kind.edge_kind();
    let broken = |detail: String| ReasonError::BrokenChain {
        scope: scope_id.to_owned(),
        kind,
        detail,
    };
    if scope.is_empty() {
        return Ok(Timeline {
            scope_id: scope_id.to_owned(),
            order_kind,
            panel_ids: Vec::new(),
        });
    }

    let mut heads = Vec::new();
    for p in &all {
        if graph.neighbors(p, Some(kind), Direction::In)?.is_empty() {
            heads.push(p.as_str());
        }
    }
    let [head] = heads[..] else {
        return Err(broken(format!("expected one chain head, found {}", heads.len())));
    };

    let mut chain = Vec::with_capacity(all.len());
    let mut current = Some(head.to_owned());
    while let Some(p) = current {
        let next = graph.neighbors(&p, Some(kind), Direction::Out)?;
        if next.len() > 1 {
            return Err(broken(format!("`{p}` has {} successors", next.len())));
        }
        current = next.first().map(|s| s.to_string());
        chain.push(p);
    }
    let panel_ids: Vec<String> = chain.into_iter().filter(|p| scope.contains(p)).collect();
    if panel_ids.len() != scope.len() {
        let reached: BTreeSet<&String> = panel_ids.iter().collect();
        let missing = scope.iter().find(|p| !reached.contains(p)).expect("some panel missing");
        return Err(broken(format!("`{missing}` is not reachable from the chain head")));
    }
    Ok(Timeline {
        scope_id: scope_id.to_owned(),
        order_kind,
        panel_ids,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryChild {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSummary {
    pub node_id: String,
    pub children: Vec<SummaryChild>,
}

/// Sort sibling events along their `precedes` chain; falls back to the
/// annotation index when the siblings do not form a single chain.
fn order_siblings(graph: &NarrativeGraph, ids: Vec<String>) -> Result<Vec<String>, ReasonError> {
    let members: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let mut heads = Vec::new();
    for id in &ids {
        let preds = graph.neighbors(id, Some(EdgeKind::Precedes), Direction::In)?;
        if !preds.iter().any(|p| members.contains(p)) {
            heads.push(id.clone());
        }
    }
    if let [head] = &heads[..] {
        let mut out = vec![head.clone()];
        loop {
            let last = out.last().expect("nonempty");
            let next: Vec<&str> = graph
                .neighbors(last, Some(EdgeKind::Precedes), Direction::Out)?
                .into_iter()
                .filter(|s| members.contains(s))
                .collect();
            match next[..] {
                [n] if !out.iter().any(|o| o == n) => out.push(n.to_owned()),
                _ => break,
            }
        }
        if out.len() == ids.len() {
            return Ok(out);
        }
    }
    let mut ids = ids;
    ids.sort_by_key(|id| (graph.node(id).map(index_attr).unwrap_or(u64::MAX), id.clone()));
    Ok(ids)
}

/// Ordered children of an event node: the events of a macro-event in
/// `precedes` order, or the panels of an event in reading order (labelled
/// by panel id).
pub fn summarize_event(graph: &NarrativeGraph, node_id: &str) -> Result<EventSummary, ReasonError> {
    let node = graph
        .node(node_id)
        .ok_or_else(|| ReasonError::UnknownNode(node_id.to_owned()))?;
    let children = match node.kind {
        NodeKind::MacroEvent => {
            let ids: Vec<String> = graph
                .neighbors(node_id, Some(EdgeKind::SubeventOf), Direction::In)?
                .into_iter()
                .map(str::to_owned)
                .collect();
            order_siblings(graph, ids)?
                .into_iter()
                .map(|id| {
                    let label = graph.node(&id).and_then(Node::label).unwrap_or_default().to_owned();
                    SummaryChild { id, label }
                })
                .collect()
        }
        NodeKind::Event => event_panels(graph, node)?
            .into_iter()
            .map(|id| SummaryChild { label: id.clone(), id })
            .collect(),
        _ => return Err(ReasonError::NotAnEventNode(node_id.to_owned())),
    };
    Ok(EventSummary {
        node_id: node_id.to_owned(),
        children,
    })
}
