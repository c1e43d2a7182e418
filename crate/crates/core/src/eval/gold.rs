//! Gold references derived from annotations and a separate gold label file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::annotation::AnnotationDoc;
use crate::normalize::{fold_label, GoldLabels};

/// Hand-made action clusters, keyed by the label that should name each
/// cluster, plus optional preferred event labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldLabelFile {
    pub action_clusters: BTreeMap<String, BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub event_labels: Vec<String>,
}

impl GoldLabelFile {
    pub fn from_json(bytes: &[u8]) -> Result<Self, EvalError> {
        serde_json::from_slice(bytes).map_err(|e| EvalError::GoldFile(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let bytes = std::fs::read(path).map_err(|e| EvalError::GoldFile(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("gold file serializes");
        s.push('\n');
        s
    }

    /// Labels the canonical chooser should prefer. Only cluster names are
    /// preferred, so a cluster is named by its key rather than a member.
    pub fn gold_labels(&self) -> GoldLabels {
        GoldLabels {
            actions: self.action_clusters.keys().cloned().collect(),
            events: self.event_labels.iter().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueGold {
    pub panel_id: String,
    pub speaker: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldReference {
    /// Canonical to folded member labels; every member is also in its own set.
    pub action_clusters: BTreeMap<String, BTreeSet<String>>,
    /// Event and macro-event id to its dialogue in reading order.
    pub dialogue_gold: BTreeMap<String, Vec<DialogueGold>>,
    pub trajectory_gold: BTreeMap<String, BTreeSet<String>>,
    /// Macro-event, event and story id to panel ids in reading order.
    pub order_gold: BTreeMap<String, Vec<String>>,
    /// Macro-event to event ids, event to panel ids.
    pub summary_gold: BTreeMap<String, BTreeSet<String>>,
}

impl GoldReference {
    /// Folded labels judged equivalent to `label`, including itself.
    pub fn equivalents(&self, label: &str) -> BTreeSet<String> {
        let folded = fold_label(label);
        let mut out: BTreeSet<String> = self
            .action_clusters
            .values()
            .filter(|members| members.contains(&folded))
            .flat_map(|members| members.iter().cloned())
            .collect();
        out.insert(folded);
        out
    }
}

/// Gold structures read straight from the annotation tiers. Instance
/// speakers are resolved to entity ids within their panel.
pub fn build_gold(doc: &AnnotationDoc, labels: &GoldLabelFile) -> GoldReference {
    let mut gold = GoldReference::default();
    for (canonical, members) in &labels.action_clusters {
        let mut set: BTreeSet<String> = members.iter().map(|m| fold_label(m)).collect();
        set.insert(fold_label(canonical));
        gold.action_clusters.insert(canonical.clone(), set);
    }

    let mut panels: Vec<_> = doc.panels().collect();
    panels.sort_by_key(|(_, _, p)| p.reading_order);
    for (m, e, p) in &panels {
        for scope in [&doc.story_id, &m.id, &e.id] {
            gold.order_gold.entry(scope.clone()).or_default().push(p.id.clone());
        }
        for c in &p.characters {
            gold.trajectory_gold
                .entry(c.entity_id.clone())
                .or_default()
                .insert(p.id.clone());
        }
        for d in &p.dialogues {
            let speaker = d.speaker.as_ref().and_then(|s| {
                p.characters
                    .iter()
                    .find(|c| &c.instance_id == s)
                    .map(|c| c.entity_id.clone())
            });
            let line = DialogueGold {
                panel_id: p.id.clone(),
                speaker,
                text: d.text.clone(),
            };
            for scope in [&m.id, &e.id] {
                gold.dialogue_gold.entry(scope.clone()).or_default().push(line.clone());
            }
        }
    }
    for m in &doc.macro_events {
        gold.dialogue_gold.entry(m.id.clone()).or_default();
        gold.summary_gold
            .insert(m.id.clone(), m.events.iter().map(|e| e.id.clone()).collect());
        for e in &m.events {
            gold.dialogue_gold.entry(e.id.clone()).or_default();
            gold.summary_gold
                .insert(e.id.clone(), e.panels.iter().map(|p| p.id.clone()).collect());
        }
    }
    gold
}
