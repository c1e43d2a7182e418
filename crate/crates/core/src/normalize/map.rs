use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::cluster::{assign_canonical, check_threshold, cluster_labels_with, LabelCluster, LinkSpace, Pool};
use super::embed::EmbeddingProvider;
use super::lexicon::{fold_label, SynonymLexicon};
use super::NormalizeError;
use crate::exec::Execution;
use crate::graph::{NarrativeGraph, NodeKind};

pub const DEFAULT_THRESHOLD: f64 = 0.75;

/// Labels the canonical-selection heuristic should prefer, per pool.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldLabels {
    pub actions: BTreeSet<String>,
    pub events: BTreeSet<String>,
}

impl GoldLabels {
    fn pool(&self, pool: Pool) -> &BTreeSet<String> {
        match pool {
            Pool::Action => &self.actions,
            Pool::Event => &self.events,
        }
    }
}

/// Surface label to canonical label, plus the clusters behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationMap {
    threshold: f64,
    provider_id: String,
    clusters: Vec<LabelCluster>,
    lookup: BTreeMap<Pool, BTreeMap<String, String>>,
}

#[derive(Serialize, Deserialize)]
struct MapWire {
    threshold: f64,
    provider_id: String,
    clusters: Vec<LabelCluster>,
    lookup: BTreeMap<Pool, BTreeMap<String, String>>,
}

impl NormalizationMap {
    pub fn new(threshold: f64, provider_id: impl Into<String>, mut clusters: Vec<LabelCluster>) -> Result<Self, NormalizeError> {
        check_threshold(threshold)?;
        clusters.sort_by(|a, b| (a.pool, &a.members).cmp(&(b.pool, &b.members)));
        let mut lookup: BTreeMap<Pool, BTreeMap<String, String>> = BTreeMap::new();
        for c in &clusters {
            if c.members.is_empty() {
                return Err(NormalizeError::InvalidMap("empty cluster".into()));
            }
            let table = lookup.entry(c.pool).or_default();
            for m in &c.members {
                if table.insert(m.clone(), c.canonical.clone()).is_some() {
                    return Err(NormalizeError::InvalidMap(format!(
                        "label `{m}` belongs to two clusters"
                    )));
                }
            }
        }
        Ok(NormalizationMap {
            threshold,
            provider_id: provider_id.into(),
            clusters,
            lookup,
        })
    }

    /// A map that relabels nothing.
    pub fn empty(threshold: f64, provider_id: impl Into<String>) -> Self {
        Self::new(threshold, provider_id, Vec::new()).expect("valid threshold")
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn clusters(&self) -> &[LabelCluster] {
        &self.clusters
    }

    pub fn clusters_in(&self, pool: Pool) -> impl Iterator<Item = &LabelCluster> {
        self.clusters.iter().filter(move |c| c.pool == pool)
    }

    pub fn lookup(&self, pool: Pool, surface: &str) -> Option<&str> {
        self.lookup.get(&pool)?.get(surface).map(String::as_str)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let wire = MapWire {
            threshold: self.threshold,
            provider_id: self.provider_id.clone(),
            clusters: self.clusters.clone(),
            lookup: self.lookup.clone(),
        };
        let mut out = serde_json::to_vec_pretty(&wire).expect("map serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, NormalizeError> {
        let wire: MapWire =
            serde_json::from_slice(bytes).map_err(|e| NormalizeError::InvalidMap(e.to_string()))?;
        let map = Self::new(wire.threshold, wire.provider_id, wire.clusters)?;
        if map.lookup != wire.lookup {
            return Err(NormalizeError::InvalidMap(
                "lookup table disagrees with clusters".into(),
            ));
        }
        Ok(map)
    }

    /// Canonical label for a query that may not be a known surface form.
    ///
    /// Known surface labels and canonicals resolve directly (case and
    /// separators folded). Otherwise the query joins the cluster it links to
    /// under the same relation used for clustering, preferring the member with
    /// the highest cosine similarity. `None` means no cluster links.
    pub fn resolve(
        &self,
        pool: Pool,
        query: &str,
        provider: &dyn EmbeddingProvider,
        lexicon: &SynonymLexicon,
    ) -> Result<Option<String>, NormalizeError> {
        if let Some(c) = self.lookup(pool, query) {
            return Ok(Some(c.to_owned()));
        }
        let folded = fold_label(query);
        for c in self.clusters_in(pool) {
            if fold_label(&c.canonical) == folded || c.members.iter().any(|m| fold_label(m) == folded) {
                return Ok(Some(c.canonical.clone()));
            }
        }
        let members: Vec<(&LabelCluster, &String)> = self
            .clusters_in(pool)
            .flat_map(|c| c.members.iter().map(move |m| (c, m)))
            .collect();
        if members.is_empty() {
            return Ok(None);
        }
        let mut labels = vec![query.to_owned()];
        labels.extend(members.iter().map(|(_, m)| (*m).clone()));
        let space = LinkSpace::new(labels, provider, lexicon, Execution::Sequential)?;
        let best = (1..space.labels.len())
            .filter(|&j| space.linked(0, j, self.threshold))
            .map(|j| (j, space.vectors[0].cosine(&space.vectors[j])))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        Ok(best.map(|(j, _)| members[j - 1].0.canonical.clone()))
    }
}

/// Clusters action and event labels of a graph and relabels graphs with
/// the result.
pub struct Normalizer<'a> {
    provider: &'a dyn EmbeddingProvider,
    lexicon: &'a SynonymLexicon,
    threshold: f64,
    gold: GoldLabels,
    execution: Execution,
}

impl<'a> Normalizer<'a> {
    pub fn new(
        provider: &'a dyn EmbeddingProvider,
        lexicon: &'a SynonymLexicon,
        threshold: f64,
    ) -> Result<Self, NormalizeError> {
        check_threshold(threshold)?;
        Ok(Normalizer {
            provider,
            lexicon,
            threshold,
            gold: GoldLabels::default(),
            execution: Execution::default(),
        })
    }

    pub fn with_gold(mut self, gold: GoldLabels) -> Self {
        self.gold = gold;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    /// Cluster one label pool and choose canonicals. Gold labels join the
    /// pool so a gold form can name a cluster of annotated variants.
    pub fn cluster_pool(
        &self,
        pool: Pool,
        frequency: &HashMap<String, usize>,
    ) -> Result<Vec<LabelCluster>, NormalizeError> {
        let gold = self.gold.pool(pool);
        let labels: BTreeSet<String> = frequency.keys().chain(gold.iter()).cloned().collect();
        if labels.is_empty() {
            return Ok(Vec::new());
        }
        let groups = cluster_labels_with(&labels, self.provider, self.lexicon, self.threshold, self.execution)?;
        Ok(groups
            .into_iter()
            .map(|members| assign_canonical(pool, members, gold, frequency))
            .collect())
    }

    pub fn build_map(&self, graph: &NarrativeGraph) -> Result<NormalizationMap, NormalizeError> {
        let mut actions: HashMap<String, usize> = HashMap::new();
        let mut events: HashMap<String, usize> = HashMap::new();
        for node in graph.nodes() {
            let pool = match node.kind {
                NodeKind::Action => &mut actions,
                NodeKind::Event | NodeKind::MacroEvent => &mut events,
                _ => continue,
            };
            if let Some(label) = node.surface_label() {
                *pool.entry(label.to_owned()).or_default() += 1;
            }
        }
        let mut clusters = self.cluster_pool(Pool::Action, &actions)?;
        clusters.extend(self.cluster_pool(Pool::Event, &events)?);
        NormalizationMap::new(self.threshold, self.provider.id(), clusters)
    }
}

/// Functional form of [`Normalizer::build_map`].
pub fn build_normalization_map(
    graph: &NarrativeGraph,
    provider: &dyn EmbeddingProvider,
    lexicon: &SynonymLexicon,
    threshold: f64,
    gold: &GoldLabels,
) -> Result<NormalizationMap, NormalizeError> {
    Normalizer::new(provider, lexicon, threshold)?
        .with_gold(gold.clone())
        .build_map(graph)
}

pub fn pool_of(kind: NodeKind) -> Option<Pool> {
    match kind {
        NodeKind::Action => Some(Pool::Action),
        NodeKind::Event | NodeKind::MacroEvent => Some(Pool::Event),
        _ => None,
    }
}

/// Relabel action, event and macro-event nodes through `map`.
///
/// The original label moves to `surface_label`; labels missing from the map
/// pass through unchanged. Topology is untouched.
pub fn apply_normalization(
    graph: &NarrativeGraph,
    map: &NormalizationMap,
) -> Result<NarrativeGraph, NormalizeError> {
    if graph.is_normalized() {
        return Err(NormalizeError::AlreadyNormalized);
    }
    let mut out = graph.clone();
    relabel(&mut out, map);
    out.set_normalized(true);
    Ok(out)
}

fn relabel(graph: &mut NarrativeGraph, map: &NormalizationMap) {
    let targets: Vec<(String, Pool)> = graph
        .nodes()
        .filter_map(|n| pool_of(n.kind).map(|p| (n.id.clone(), p)))
        .collect();
    for (id, pool) in targets {
        let node = graph.node_mut(&id).expect("id taken from graph");
        let Some(surface) = node.surface_label().map(str::to_owned) else {
            continue;
        };
        let canonical = map.lookup(pool, &surface).unwrap_or(&surface).to_owned();
        node.attrs.insert("surface_label".into(), surface);
        node.attrs.insert("label".into(), canonical);
    }
}
