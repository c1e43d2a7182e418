//! Scoring of the five query tasks against annotation-derived gold, per
//! macro-event, on raw and normalized graphs.

mod gold;
mod metrics;
mod report;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{AnnotationDoc, MacroEventAnn};
use crate::builder::instance_node_id;
use crate::exec::Execution;
use crate::graph::NarrativeGraph;
use crate::normalize::{fold_label, NormalizationMap, Pool, DEFAULT_THRESHOLD};
use crate::reason::{
    character_trajectory, reconstruct_timeline, retrieve_actions, summarize_event, trace_dialogue,
    OrderKind, ReasonError, RetrievalMode,
};

pub use gold::{build_gold, DialogueGold, GoldLabelFile, GoldReference};
pub use metrics::{coverage, harmonic_mean, ordering_accuracy, set_f1, span_tokens, token_f1, Prf};
pub use report::{parse_csv_report, render_report, ReportFormat};

pub const ORDERING_METRIC: &str = "pairwise_concordance";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold set is empty")]
    EmptyGold,
    #[error("sequence contains duplicate elements")]
    DuplicateElements,
    #[error("invalid gold label file: {0}")]
    GoldFile(String),
    #[error("invalid report: {0}")]
    Report(String),
    #[error(transparent)]
    Reason(#[from] ReasonError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    T1,
    T2,
    T3,
    T4,
    T5,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Raw,
    Normalized,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Raw => "raw",
            Variant::Normalized => "normalized",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task: Task,
    pub macro_event_id: String,
    pub macro_event_label: String,
    pub variant: Variant,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub story_id: String,
    pub threshold: f64,
    pub provider_id: String,
    pub ordering_metric: String,
    pub action_clusters: usize,
    pub event_clusters: usize,
    pub rows: Vec<TaskScore>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, EvalError> {
        serde_json::from_slice(bytes).map_err(|e| EvalError::Report(e.to_string()))
    }

    pub fn row(&self, macro_event_id: &str, task: Task, variant: Variant) -> Option<&TaskScore> {
        self.rows
            .iter()
            .find(|r| r.macro_event_id == macro_event_id && r.task == task && r.variant == variant)
    }
}

/// Run configuration echoed into the report.
#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub threshold: f64,
    pub provider_id: String,
    pub action_clusters: usize,
    pub event_clusters: usize,
    /// Score T2 to T5 on the normalized graph as well.
    pub also_normalized: bool,
    pub execution: Execution,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            threshold: DEFAULT_THRESHOLD,
            provider_id: String::new(),
            action_clusters: 0,
            event_clusters: 0,
            also_normalized: false,
            execution: Execution::default(),
        }
    }
}

impl EvalSettings {
    pub fn from_map(map: &NormalizationMap) -> Self {
        EvalSettings {
            threshold: map.threshold(),
            provider_id: map.provider_id().to_owned(),
            action_clusters: map.clusters_in(Pool::Action).count(),
            event_clusters: map.clusters_in(Pool::Event).count(),
            ..EvalSettings::default()
        }
    }
}

type TaskScorer = fn(&MacroEventAnn, &NarrativeGraph, &GoldReference) -> Result<Prf, EvalError>;

/// Score every macro-event of `doc`. Rows are ordered by macro-event, then
/// task, then variant.
pub fn run_eval(
    doc: &AnnotationDoc,
    raw: &NarrativeGraph,
    normalized: &NarrativeGraph,
    gold: &GoldReference,
    settings: &EvalSettings,
) -> Result<EvalReport, EvalError> {
    let per_macro = settings
        .execution
        .try_map(&doc.macro_events, |m| score_macro(m, raw, normalized, gold, settings.also_normalized))?;
    Ok(EvalReport {
        story_id: doc.story_id.clone(),
        threshold: settings.threshold,
        provider_id: settings.provider_id.clone(),
        ordering_metric: ORDERING_METRIC.to_owned(),
        action_clusters: settings.action_clusters,
        event_clusters: settings.event_clusters,
        rows: per_macro.into_iter().flatten().collect(),
    })
}

fn score_macro(
    m: &MacroEventAnn,
    raw: &NarrativeGraph,
    normalized: &NarrativeGraph,
    gold: &GoldReference,
    also_normalized: bool,
) -> Result<Vec<TaskScore>, EvalError> {
    let row = |task, variant, s: Prf| TaskScore {
        task,
        macro_event_id: m.id.clone(),
        macro_event_label: m.label.clone(),
        variant,
        precision: s.precision,
        recall: s.recall,
        f1: s.f1,
    };
    let mut graphs = vec![(Variant::Raw, raw)];
    if also_normalized {
        graphs.push((Variant::Normalized, normalized));
    }

    let mut rows = vec![
        row(Task::T1, Variant::Raw, score_actions(m, raw, RetrievalMode::Raw, gold)?),
        row(
            Task::T1,
            Variant::Normalized,
            score_actions(m, normalized, RetrievalMode::Normalized, gold)?,
        ),
    ];
    let tasks: [(Task, TaskScorer); 4] = [
        (Task::T2, score_dialogue),
        (Task::T3, score_trajectories),
        (Task::T4, score_timeline),
        (Task::T5, score_summary),
    ];
    for (task, score) in tasks {
        for &(variant, graph) in &graphs {
            rows.push(row(task, variant, score(m, graph, gold)?));
        }
    }
    Ok(rows)
}

fn scope_panels(m: &MacroEventAnn) -> BTreeSet<String> {
    m.panels().map(|p| p.id.clone()).collect()
}

/// Each distinct surface label in the macro-event is a query. Retrieved and
/// gold action instances are pooled over queries as (query, instance) pairs;
/// an instance is gold for a query when the gold label file places their
/// labels in the same cluster.
fn score_actions(
    m: &MacroEventAnn,
    graph: &NarrativeGraph,
    mode: RetrievalMode,
    gold: &GoldReference,
) -> Result<Prf, EvalError> {
    let scope = scope_panels(m);
    let instances: Vec<(String, String)> = m
        .panels()
        .flat_map(|p| {
            p.actions
                .iter()
                .map(|a| (instance_node_id(&p.id, &a.instance_id), fold_label(&a.label)))
        })
        .collect();
    let queries: BTreeSet<&String> = instances.iter().map(|(_, l)| l).collect();
    let mut predicted = BTreeSet::new();
    let mut expected = BTreeSet::new();
    for q in queries {
        let equivalent = gold.equivalents(q);
        for (id, label) in &instances {
            if equivalent.contains(label) {
                expected.insert((q.clone(), id.clone()));
            }
        }
        for hit in retrieve_actions(graph, q, mode)? {
            if scope.contains(&hit.panel_id) {
                predicted.insert((q.clone(), hit.action_instance_id));
            }
        }
    }
    Ok(set_f1(&predicted, &expected))
}

fn score_dialogue(m: &MacroEventAnn, graph: &NarrativeGraph, gold: &GoldReference) -> Result<Prf, EvalError> {
    let expected: Vec<&str> = gold
        .dialogue_gold
        .get(&m.id)
        .map(|lines| lines.iter().map(|d| d.text.as_str()).collect())
        .unwrap_or_default();
    if expected.is_empty() {
        log::warn!("no gold dialogue for macro-event `{}`, scoring 0", m.id);
        return Ok(Prf::ZERO);
    }
    let trace = trace_dialogue(graph, &m.id)?;
    let predicted: Vec<&str> = trace.entries.iter().map(|e| e.text.as_str()).collect();
    Ok(token_f1(&predicted, &expected))
}

/// Mean per-entity precision and coverage over the entities present in the
/// macro-event, combined by harmonic mean.
fn score_trajectories(m: &MacroEventAnn, graph: &NarrativeGraph, gold: &GoldReference) -> Result<Prf, EvalError> {
    let scope = scope_panels(m);
    let entities: BTreeSet<&String> = m.panels().flat_map(|p| &p.characters).map(|c| &c.entity_id).collect();
    if entities.is_empty() {
        log::warn!("no characters in macro-event `{}`, scoring 0", m.id);
        return Ok(Prf::ZERO);
    }
    let (mut p_sum, mut r_sum) = (0.0, 0.0);
    for entity in &entities {
        let trajectory = character_trajectory(graph, entity)?;
        let predicted: BTreeSet<String> = trajectory.panel_ids.into_iter().filter(|p| scope.contains(p)).collect();
        let expected: BTreeSet<String> = gold
            .trajectory_gold
            .get(*entity)
            .map(|panels| panels.intersection(&scope).cloned().collect())
            .unwrap_or_default();
        let hit = predicted.intersection(&expected).count() as f64;
        p_sum += if predicted.is_empty() { 0.0 } else { hit / predicted.len() as f64 };
        r_sum += coverage(&predicted, &expected)?;
    }
    let n = entities.len() as f64;
    Ok(Prf::from_pr(p_sum / n, r_sum / n))
}

fn score_timeline(m: &MacroEventAnn, graph: &NarrativeGraph, gold: &GoldReference) -> Result<Prf, EvalError> {
    let predicted = reconstruct_timeline(graph, &m.id, OrderKind::Reading)?.panel_ids;
    let expected = gold.order_gold.get(&m.id).cloned().unwrap_or_default();
    Ok(Prf::uniform(ordering_accuracy(&predicted, &expected)?))
}

fn score_summary(m: &MacroEventAnn, graph: &NarrativeGraph, gold: &GoldReference) -> Result<Prf, EvalError> {
    let predicted: BTreeSet<String> = summarize_event(graph, &m.id)?
        .children
        .into_iter()
        .map(|c| c.id)
        .collect();
    let expected = gold.summary_gold.get(&m.id).cloned().unwrap_or_default();
    Ok(set_f1(&predicted, &expected))
}
