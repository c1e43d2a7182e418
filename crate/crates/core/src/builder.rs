//! Annotation document to layered graph.
//!
//! Node ids: panels keep their `m_e_p` id, events and macro-events keep their
//! annotation id, character entities use their `entity_id`, and every
//! panel-scoped instance becomes `<panel_id>/<instance_id>`.

use crate::annotation::{AnnotationDoc, PanelAnn};
use crate::graph::{Edge, EdgeKind, GraphError, NarrativeGraph, Node, NodeKind};

pub fn instance_node_id(panel_id: &str, instance_id: &str) -> String {
    format!("{panel_id}/{instance_id}")
}

fn panel_node(p: &PanelAnn) -> Node {
    let mut node = Node::new(&p.id, NodeKind::Panel)
        .with_attr("reading_order", p.reading_order.to_string())
        .with_attr("storytime_order", p.storytime_order.to_string());
    for (i, caption) in p.captions.iter().enumerate() {
        node.attrs.insert(format!("caption_{i}"), caption.clone());
    }
    node
}

/// Panels, their content, character entities and the panel-level relations.
pub fn build_panel_layer(doc: &AnnotationDoc) -> Result<NarrativeGraph, GraphError> {
    let mut g = NarrativeGraph::new(&doc.story_id);
    for (_, _, p) in doc.panels() {
        g.add_node(panel_node(p))?;
        let inst = |id: &str| instance_node_id(&p.id, id);

        for (i, ch) in p.characters.iter().enumerate() {
            if g.node(&ch.entity_id).is_none() {
                g.add_node(Node::new(&ch.entity_id, NodeKind::Character).with_attr("name", &ch.name))?;
            }
            let id = inst(&ch.instance_id);
            g.add_node(
                Node::new(&id, NodeKind::CharacterInstance)
                    .with_attr("name", &ch.name)
                    .with_attr("panel", &p.id)
                    .with_attr("index", i.to_string()),
            )?;
            g.add_edge(Edge::new(id, &ch.entity_id, EdgeKind::RefersTo))?;
        }
        for (i, a) in p.characters.iter().enumerate() {
            for b in &p.characters[i + 1..] {
                let (x, y) = (inst(&a.instance_id), inst(&b.instance_id));
                let (src, dst) = if x < y { (x, y) } else { (y, x) };
                g.add_edge(Edge::new(src, dst, EdgeKind::CoOccursWith))?;
            }
        }
        for (i, o) in p.objects.iter().enumerate() {
            g.add_node(
                Node::new(inst(&o.instance_id), NodeKind::Object)
                    .with_attr("label", &o.label)
                    .with_attr("panel", &p.id)
                    .with_attr("index", i.to_string()),
            )?;
        }
        for (i, a) in p.actions.iter().enumerate() {
            let id = inst(&a.instance_id);
            g.add_node(
                Node::new(&id, NodeKind::Action)
                    .with_attr("label", &a.label)
                    .with_attr("panel", &p.id)
                    .with_attr("index", i.to_string()),
            )?;
            if let Some(agent) = &a.agent {
                g.add_edge(Edge::new(&id, inst(agent), EdgeKind::HasAgent))?;
            }
            if let Some(target) = &a.target {
                g.add_edge(Edge::new(&id, inst(target), EdgeKind::ActsOn))?;
            }
        }
        for (i, d) in p.dialogues.iter().enumerate() {
            let id = inst(&d.instance_id);
            let mut node = Node::new(&id, NodeKind::Dialogue)
                .with_attr("text", &d.text)
                .with_attr("panel", &p.id)
                .with_attr("index", i.to_string());
            if let Some(speaker) = &d.speaker {
                node.attrs.insert("speaker".into(), inst(speaker));
            }
            g.add_node(node)?;
            g.add_edge(Edge::new(id, &p.id, EdgeKind::GroundedIn))?;
        }
    }
    Ok(g)
}

/// Covering chains over panels in reading and in storytime order.
pub fn build_temporal_layer(doc: &AnnotationDoc) -> Result<NarrativeGraph, GraphError> {
    let mut g = NarrativeGraph::new(&doc.story_id);
    let panels: Vec<&PanelAnn> = doc.panels().map(|(_, _, p)| p).collect();
    for p in &panels {
        g.add_node(panel_node(p))?;
    }
    for (kind, key) in [
        (EdgeKind::PrecedesReading, (|p: &PanelAnn| p.reading_order) as fn(&PanelAnn) -> u32),
        (EdgeKind::PrecedesStorytime, |p: &PanelAnn| p.storytime_order),
    ] {
        let mut sorted = panels.clone();
        sorted.sort_by_key(|p| key(p));
        for pair in sorted.windows(2) {
            g.add_edge(Edge::new(&pair[0].id, &pair[1].id, kind))?;
        }
    }
    Ok(g)
}

/// Event and macro-event nodes with hierarchy and sibling order.
pub fn build_event_layer(doc: &AnnotationDoc) -> Result<NarrativeGraph, GraphError> {
    let mut g = NarrativeGraph::new(&doc.story_id);
    for (mi, m) in doc.macro_events.iter().enumerate() {
        g.add_node(
            Node::new(&m.id, NodeKind::MacroEvent)
                .with_attr("label", &m.label)
                .with_attr("index", mi.to_string()),
        )?;
        for (ei, e) in m.events.iter().enumerate() {
            g.add_node(
                Node::new(&e.id, NodeKind::Event)
                    .with_attr("label", &e.label)
                    .with_attr("index", ei.to_string()),
            )?;
            g.add_edge(Edge::new(&e.id, &m.id, EdgeKind::SubeventOf))?;
        }
        for pair in m.events.windows(2) {
            g.add_edge(Edge::new(&pair[0].id, &pair[1].id, EdgeKind::Precedes))?;
        }
    }
    for pair in doc.macro_events.windows(2) {
        g.add_edge(Edge::new(&pair[0].id, &pair[1].id, EdgeKind::Precedes))?;
    }
    Ok(g)
}

/// Merge layer fragments and add the panel-to-event `instantiates` links.
pub fn link_layers(
    doc: &AnnotationDoc,
    fragments: impl IntoIterator<Item = NarrativeGraph>,
) -> Result<NarrativeGraph, GraphError> {
    let mut g = NarrativeGraph::new(&doc.story_id);
    for fragment in fragments {
        g.merge(fragment)?;
    }
    for (_, e, p) in doc.panels() {
        g.add_edge(Edge::new(&p.id, &e.id, EdgeKind::Instantiates))?;
    }
    g.set_normalized(false);
    g.check_invariants()?;
    Ok(g)
}

/// Full raw graph for a validated document.
pub fn build_all(doc: &AnnotationDoc) -> Result<NarrativeGraph, GraphError> {
    link_layers(
        doc,
        [
            build_panel_layer(doc)?,
            build_temporal_layer(doc)?,
            build_event_layer(doc)?,
        ],
    )
}
