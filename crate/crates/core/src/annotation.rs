//! Three-tier story annotations: macro-events contain events, events contain
//! panels, panels carry characters, objects, actions, dialogue and captions.
//!
//! Documents are exchanged as JSON. [`parse_annotations`] returns only
//! documents that satisfy every structural invariant; [`validate_annotations`]
//! reports all violations of an in-memory document as data.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationDoc {
    pub schema_version: u32,
    pub story_id: String,
    pub macro_events: Vec<MacroEventAnn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroEventAnn {
    pub id: String,
    pub label: String,
    pub events: Vec<EventAnn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventAnn {
    pub id: String,
    pub label: String,
    pub panels: Vec<PanelAnn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelAnn {
    /// Position-derived id `m_e_p`.
    pub id: String,
    #[serde(default)]
    pub characters: Vec<CharacterAnn>,
    #[serde(default)]
    pub objects: Vec<ObjectAnn>,
    #[serde(default)]
    pub actions: Vec<ActionAnn>,
    #[serde(default)]
    pub dialogues: Vec<DialogueAnn>,
    #[serde(default)]
    pub captions: Vec<String>,
    pub reading_order: u32,
    pub storytime_order: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterAnn {
    pub instance_id: String,
    /// Story-level identity shared by every appearance of the character.
    pub entity_id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectAnn {
    pub instance_id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionAnn {
    pub instance_id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueAnn {
    pub instance_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
    pub text: String,
}

impl AnnotationDoc {
    /// All panels in document order, with their macro-event and event.
    pub fn panels(&self) -> impl Iterator<Item = (&MacroEventAnn, &EventAnn, &PanelAnn)> {
        self.macro_events.iter().flat_map(|m| {
            m.events
                .iter()
                .flat_map(move |e| e.panels.iter().map(move |p| (m, e, p)))
        })
    }

    pub fn macro_event(&self, id: &str) -> Option<&MacroEventAnn> {
        self.macro_events.iter().find(|m| m.id == id)
    }
}

impl MacroEventAnn {
    pub fn panels(&self) -> impl Iterator<Item = &PanelAnn> {
        self.events.iter().flat_map(|e| e.panels.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    SchemaVersion,
    EmptyField,
    EmptyContainer,
    DuplicateId,
    DanglingReference,
    IdPattern,
    IdCollision,
    DuplicateReadingOrder,
    DuplicateStorytimeOrder,
}

/// One broken invariant, located by a JSON-pointer-like path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub path: String,
    pub message: String,
    /// The offending id, when the violation is about one.
    pub id: Option<String>,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("reference to undeclared id `{0}`")]
    DanglingReference(String),
}

impl From<Violation> for AnnotationError {
    fn from(v: Violation) -> Self {
        match (v.kind, v.id) {
            (ViolationKind::DuplicateId, Some(id)) => AnnotationError::DuplicateId(id),
            (ViolationKind::DanglingReference, Some(id)) => AnnotationError::DanglingReference(id),
            (_, _) => AnnotationError::SchemaViolation {
                path: v.path,
                reason: v.message,
            },
        }
    }
}

/// Parse and validate a UTF-8 JSON annotation document.
pub fn parse_annotations(raw: &[u8]) -> Result<AnnotationDoc, AnnotationError> {
    let value: serde_json::Value =
        serde_json::from_slice(raw).map_err(|e| AnnotationError::MalformedJson(e.to_string()))?;
    let doc: AnnotationDoc = serde_path_to_error::deserialize(value).map_err(|e| {
        AnnotationError::SchemaViolation {
            path: e.path().to_string(),
            reason: e.inner().to_string(),
        }
    })?;
    let violations = validate_annotations(&doc);
    // Report the most specific error class first.
    let pick = violations
        .iter()
        .position(|v| v.kind == ViolationKind::DuplicateId)
        .or_else(|| {
            violations
                .iter()
                .position(|v| v.kind == ViolationKind::DanglingReference)
        })
        .unwrap_or(0);
    match violations.into_iter().nth(pick) {
        Some(v) => Err(v.into()),
        None => Ok(doc),
    }
}

/// Pretty-printed JSON, the inverse of [`parse_annotations`].
pub fn serialize_annotations(doc: &AnnotationDoc) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("annotation docs always serialize");
    s.push('\n');
    s
}

struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn push(&mut self, kind: ViolationKind, path: String, message: String, id: Option<&str>) {
        self.out.push(Violation {
            kind,
            path,
            message,
            id: id.map(str::to_owned),
        });
    }

    fn nonempty(&mut self, value: &str, path: String, what: &str) {
        if value.trim().is_empty() {
            self.push(
                ViolationKind::EmptyField,
                path,
                format!("{what} must be nonempty"),
                None,
            );
        }
    }
}

/// Every invariant violation in `doc`; empty iff the document is valid.
pub fn validate_annotations(doc: &AnnotationDoc) -> Vec<Violation> {
    let mut c = Checker { out: Vec::new() };

    if doc.schema_version != SCHEMA_VERSION {
        c.push(
            ViolationKind::SchemaVersion,
            "/schema_version".into(),
            format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                doc.schema_version
            ),
            None,
        );
    }
    c.nonempty(&doc.story_id, "/story_id".into(), "story_id");
    if doc.macro_events.is_empty() {
        c.push(
            ViolationKind::EmptyContainer,
            "/macro_events".into(),
            "a story needs at least one macro-event".into(),
            None,
        );
    }

    // Macro-event and event ids share one namespace with panels and entities
    // once they become graph nodes.
    let mut tier_ids: HashMap<&str, String> = HashMap::new();
    let mut reading: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
    let mut storytime: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
    let mut panel_ids: HashSet<String> = HashSet::new();
    let mut entity_ids: BTreeSet<&str> = BTreeSet::new();

    for (mi, m) in doc.macro_events.iter().enumerate() {
        let mpath = format!("/macro_events/{mi}");
        c.nonempty(&m.id, format!("{mpath}/id"), "macro-event id");
        c.nonempty(&m.label, format!("{mpath}/label"), "macro-event label");
        check_tier_id(&mut c, &mut tier_ids, &m.id, format!("{mpath}/id"));
        if m.events.is_empty() {
            c.push(
                ViolationKind::EmptyContainer,
                format!("{mpath}/events"),
                format!("macro-event `{}` has no events", m.id),
                None,
            );
        }
        for (ei, e) in m.events.iter().enumerate() {
            let epath = format!("{mpath}/events/{ei}");
            c.nonempty(&e.id, format!("{epath}/id"), "event id");
            c.nonempty(&e.label, format!("{epath}/label"), "event label");
            check_tier_id(&mut c, &mut tier_ids, &e.id, format!("{epath}/id"));
            if e.panels.is_empty() {
                c.push(
                    ViolationKind::EmptyContainer,
                    format!("{epath}/panels"),
                    format!("event `{}` has no panels", e.id),
                    None,
                );
            }
            for (pi, p) in e.panels.iter().enumerate() {
                let ppath = format!("{epath}/panels/{pi}");
                let expected = panel_id(mi, ei, pi);
                if p.id != expected {
                    c.push(
                        ViolationKind::IdPattern,
                        format!("{ppath}/id"),
                        format!("panel id `{}` does not match its position `{expected}`", p.id),
                        Some(&p.id),
                    );
                }
                panel_ids.insert(p.id.clone());
                reading.entry(p.reading_order).or_default().push(&p.id);
                storytime.entry(p.storytime_order).or_default().push(&p.id);
                check_panel(&mut c, p, &ppath, &mut entity_ids);
            }
        }
    }

    for (order, ids) in &reading {
        if ids.len() > 1 {
            c.push(
                ViolationKind::DuplicateReadingOrder,
                "/macro_events".into(),
                format!("panels {} share reading_order {order}", ids.join(", ")),
                None,
            );
        }
    }
    for (order, ids) in &storytime {
        if ids.len() > 1 {
            c.push(
                ViolationKind::DuplicateStorytimeOrder,
                "/macro_events".into(),
                format!("panels {} share storytime_order {order}", ids.join(", ")),
                None,
            );
        }
    }

    for id in tier_ids.keys() {
        if panel_ids.contains(*id) {
            c.push(
                ViolationKind::IdCollision,
                tier_ids[id].clone(),
                format!("id `{id}` collides with a panel id"),
                Some(id),
            );
        }
        if entity_ids.contains(id) {
            c.push(
                ViolationKind::IdCollision,
                tier_ids[id].clone(),
                format!("id `{id}` collides with a character entity id"),
                Some(id),
            );
        }
    }
    for id in &entity_ids {
        if panel_ids.contains(*id) {
            c.push(
                ViolationKind::IdCollision,
                "/macro_events".into(),
                format!("entity id `{id}` collides with a panel id"),
                Some(id),
            );
        }
    }

    c.out
}

fn check_tier_id<'a>(
    c: &mut Checker,
    seen: &mut HashMap<&'a str, String>,
    id: &'a str,
    path: String,
) {
    if id.contains('/') {
        c.push(
            ViolationKind::IdPattern,
            path.clone(),
            format!("id `{id}` must not contain `/`"),
            Some(id),
        );
    }
    if let Some(first) = seen.get(id) {
        c.push(
            ViolationKind::DuplicateId,
            path,
            format!("id `{id}` already declared at {first}"),
            Some(id),
        );
    } else {
        seen.insert(id, path);
    }
}

fn check_panel<'a>(c: &mut Checker, p: &'a PanelAnn, ppath: &str, entities: &mut BTreeSet<&'a str>) {
    // Instance ids are scoped to their panel.
    let mut declared: HashSet<&str> = HashSet::new();
    let mut characters: HashSet<&str> = HashSet::new();
    let mut declare = |c: &mut Checker, id: &'a str, path: String| {
        if id.trim().is_empty() {
            c.push(
                ViolationKind::EmptyField,
                path,
                "instance_id must be nonempty".into(),
                None,
            );
        } else if !declared.insert(id) {
            c.push(
                ViolationKind::DuplicateId,
                path,
                format!("instance id `{id}` declared twice in panel {}", p.id),
                Some(id),
            );
        }
    };

    for (i, ch) in p.characters.iter().enumerate() {
        let path = format!("{ppath}/characters/{i}");
        declare(c, &ch.instance_id, format!("{path}/instance_id"));
        characters.insert(&ch.instance_id);
        if ch.entity_id.trim().is_empty() {
            c.push(
                ViolationKind::EmptyField,
                format!("{path}/entity_id"),
                "entity_id must be nonempty".into(),
                None,
            );
        } else {
            if ch.entity_id.contains('/') {
                c.push(
                    ViolationKind::IdPattern,
                    format!("{path}/entity_id"),
                    format!("entity id `{}` must not contain `/`", ch.entity_id),
                    Some(&ch.entity_id),
                );
            }
            entities.insert(&ch.entity_id);
        }
    }
    for (i, o) in p.objects.iter().enumerate() {
        let path = format!("{ppath}/objects/{i}");
        declare(c, &o.instance_id, format!("{path}/instance_id"));
        c.nonempty(&o.label, format!("{path}/label"), "object label");
    }
    for (i, a) in p.actions.iter().enumerate() {
        let path = format!("{ppath}/actions/{i}");
        declare(c, &a.instance_id, format!("{path}/instance_id"));
        c.nonempty(&a.label, format!("{path}/label"), "action label");
    }
    for (i, d) in p.dialogues.iter().enumerate() {
        let path = format!("{ppath}/dialogues/{i}");
        declare(c, &d.instance_id, format!("{path}/instance_id"));
        c.nonempty(&d.text, format!("{path}/text"), "dialogue text");
    }

    let objects: HashSet<&str> = p.objects.iter().map(|o| o.instance_id.as_str()).collect();
    let dangling = |c: &mut Checker, id: &str, path: String, what: &str| {
        c.push(
            ViolationKind::DanglingReference,
            path,
            format!("{what} `{id}` is not declared in panel {}", p.id),
            Some(id),
        );
    };
    for (i, a) in p.actions.iter().enumerate() {
        if let Some(agent) = &a.agent {
            if !characters.contains(agent.as_str()) {
                dangling(c, agent, format!("{ppath}/actions/{i}/agent"), "agent");
            }
        }
        if let Some(target) = &a.target {
            if !characters.contains(target.as_str()) && !objects.contains(target.as_str()) {
                dangling(c, target, format!("{ppath}/actions/{i}/target"), "target");
            }
        }
    }
    for (i, d) in p.dialogues.iter().enumerate() {
        if let Some(speaker) = &d.speaker {
            if !characters.contains(speaker.as_str()) {
                dangling(c, speaker, format!("{ppath}/dialogues/{i}/speaker"), "speaker");
            }
        }
    }
}

/// The id a panel must carry at a given position.
pub fn panel_id(macro_idx: usize, event_idx: usize, panel_idx: usize) -> String {
    format!("{macro_idx}_{event_idx}_{panel_idx}")
}
