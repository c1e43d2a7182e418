//! Threshold-linked label clustering and canonical label selection.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::embed::{EmbeddingProvider, EmbeddingVector};
use super::lexicon::{fold_label, SynonymLexicon};
use super::union_find::UnionFind;
use super::NormalizeError;
use crate::exec::Execution;

/// Which label population a cluster was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    Action,
    Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCluster {
    pub pool: Pool,
    /// Lexicographically sorted surface labels.
    pub members: Vec<String>,
    pub canonical: String,
}

pub(crate) fn check_threshold(threshold: f64) -> Result<(), NormalizeError> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(NormalizeError::InvalidThreshold(threshold))
    }
}

/// Labels with everything the link relation needs precomputed.
pub(crate) struct LinkSpace {
    pub labels: Vec<String>,
    pub keys: Vec<String>,
    pub groups: Vec<Option<usize>>,
    pub vectors: Vec<EmbeddingVector>,
}

impl LinkSpace {
    pub fn new(
        labels: Vec<String>,
        provider: &dyn EmbeddingProvider,
        lexicon: &SynonymLexicon,
        execution: Execution,
    ) -> Result<Self, NormalizeError> {
        let keys = labels
            .iter()
            .map(|l| lexicon.lexical_key(l))
            .collect::<Result<Vec<_>, _>>()?;
        let groups = keys.iter().map(|k| lexicon.group_of_key(k)).collect();
        let vectors = provider.embed_batch(&labels, execution)?;
        if let Some(first) = vectors.first() {
            if let Some(bad) = vectors.iter().find(|v| v.dim() != first.dim()) {
                return Err(NormalizeError::DimensionMismatch {
                    expected: first.dim(),
                    got: bad.dim(),
                });
            }
        }
        Ok(LinkSpace {
            labels,
            keys,
            groups,
            vectors,
        })
    }

    /// Lexical, synonym, or embedding link between two labels.
    pub fn linked(&self, i: usize, j: usize, threshold: f64) -> bool {
        self.keys[i] == self.keys[j]
            || matches!((self.groups[i], self.groups[j]), (Some(a), Some(b)) if a == b)
            || self.vectors[i].cosine(&self.vectors[j]) >= threshold
    }
}

/// Connected components of the link relation over `labels`.
///
/// Two labels are linked when their lexical keys agree, when their keys fall
/// in the same synonym group, or when the cosine similarity of their
/// embeddings reaches `threshold`. Members of each cluster are sorted, and
/// clusters are ordered by their first member.
pub fn cluster_labels(
    labels: &BTreeSet<String>,
    provider: &dyn EmbeddingProvider,
    lexicon: &SynonymLexicon,
    threshold: f64,
) -> Result<Vec<Vec<String>>, NormalizeError> {
    cluster_labels_with(labels, provider, lexicon, threshold, Execution::default())
}

pub fn cluster_labels_with(
    labels: &BTreeSet<String>,
    provider: &dyn EmbeddingProvider,
    lexicon: &SynonymLexicon,
    threshold: f64,
    execution: Execution,
) -> Result<Vec<Vec<String>>, NormalizeError> {
    check_threshold(threshold)?;
    let space = LinkSpace::new(labels.iter().cloned().collect(), provider, lexicon, execution)?;
    let n = space.labels.len();
    let mut uf = UnionFind::new(n);

    let mut by_key: HashMap<&str, usize> = HashMap::new();
    let mut by_group: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        if let Some(&j) = by_key.get(space.keys[i].as_str()) {
            uf.union(i, j);
        } else {
            by_key.insert(&space.keys[i], i);
        }
        if let Some(g) = space.groups[i] {
            if let Some(&j) = by_group.get(&g) {
                uf.union(i, j);
            } else {
                by_group.insert(g, i);
            }
        }
    }

    let vectors = &space.vectors;
    let similar = execution.flat_map_range(n, |i| {
        ((i + 1)..n)
            .filter(|&j| vectors[i].cosine(&vectors[j]) >= threshold)
            .map(|j| (i, j))
            .collect()
    });
    for (i, j) in similar {
        uf.union(i, j);
    }

    Ok(uf
        .groups()
        .into_iter()
        .map(|g| g.into_iter().map(|i| space.labels[i].clone()).collect())
        .collect())
}

/// Pick a cluster's representative.
///
/// Gold labels win: among members that fold to a gold label, the most
/// frequent is chosen, then the shortest, then the lexicographically
/// smallest. Without a gold member the shortest member wins, ties broken
/// lexicographically.
pub fn assign_canonical(
    pool: Pool,
    members: Vec<String>,
    gold_labels: &BTreeSet<String>,
    frequency: &HashMap<String, usize>,
) -> LabelCluster {
    assert!(!members.is_empty(), "clusters are never empty");
    let gold: BTreeSet<String> = gold_labels.iter().map(|g| fold_label(g)).collect();
    let len = |s: &String| s.chars().count();
    let gold_members: Vec<&String> = members
        .iter()
        .filter(|m| gold.contains(&fold_label(m)))
        .collect();
    let canonical = if gold_members.is_empty() {
        members
            .iter()
            .min_by(|a, b| len(a).cmp(&len(b)).then_with(|| a.cmp(b)))
    } else {
        let freq = |s: &String| frequency.get(s).copied().unwrap_or(0);
        gold_members.into_iter().min_by(|a, b| {
            freq(b)
                .cmp(&freq(a))
                .then_with(|| len(a).cmp(&len(b)))
                .then_with(|| a.cmp(b))
        })
    }
    .expect("nonempty")
    .clone();
    let mut members = members;
    members.sort();
    LabelCluster {
        pool,
        members,
        canonical,
    }
}
