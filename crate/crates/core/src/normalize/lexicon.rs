//! Rule-based lemmatization, label folding and the file-backed synonym lexicon.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::union_find::UnionFind;
use super::NormalizeError;

const DEFAULT_LEXICON: &str = include_str!("../../data/default_lexicon.json");

/// Lowercased tokens of a label, split on underscores and whitespace.
pub fn label_tokens(label: &str) -> Vec<String> {
    label
        .split(|c: char| c == '_' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Case and separator folding without lemmatization: `"Insert  Into"` and
/// `"insert_into"` both fold to `"insert_into"`.
pub fn fold_label(label: &str) -> String {
    label_tokens(label).join("_")
}

#[derive(Debug, Deserialize, Serialize)]
struct LexiconFile {
    #[serde(default)]
    groups: Vec<Vec<String>>,
    #[serde(default)]
    lemma_exceptions: BTreeMap<String, String>,
}

/// Synonym groups plus an irregular-lemma table.
///
/// Groups are kept pairwise disjoint: groups that share a member (compared by
/// lexical key) are merged at construction time.
#[derive(Debug, Clone, Default)]
pub struct SynonymLexicon {
    groups: Vec<BTreeSet<String>>,
    lemma_exceptions: BTreeMap<String, String>,
    lemma_values: HashSet<String>,
    group_of_key: HashMap<String, usize>,
}

impl SynonymLexicon {
    pub fn new(
        groups: impl IntoIterator<Item = Vec<String>>,
        lemma_exceptions: BTreeMap<String, String>,
    ) -> Self {
        let lemma_exceptions = resolve_chains(lemma_exceptions);
        let lemma_values = lemma_exceptions.values().cloned().collect();
        let mut lex = SynonymLexicon {
            groups: Vec::new(),
            lemma_exceptions,
            lemma_values,
            group_of_key: HashMap::new(),
        };

        let raw: Vec<BTreeSet<String>> = groups
            .into_iter()
            .map(|g| {
                g.iter()
                    .map(|s| fold_label(s))
                    .filter(|s| !s.is_empty())
                    .collect::<BTreeSet<_>>()
            })
            .filter(|g| !g.is_empty())
            .collect();

        let mut uf = UnionFind::new(raw.len());
        let mut owner: HashMap<String, usize> = HashMap::new();
        for (gi, group) in raw.iter().enumerate() {
            for member in group {
                let key = lex.key_of_folded(member);
                if let Some(&other) = owner.get(&key) {
                    if uf.find(other) != uf.find(gi) {
                        log::warn!("lexicon groups overlap on `{member}`; merging them");
                        uf.union(other, gi);
                    }
                } else {
                    owner.insert(key, gi);
                }
            }
        }
        let mut merged: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
        for (gi, group) in raw.into_iter().enumerate() {
            merged.entry(uf.find(gi)).or_default().extend(group);
        }
        lex.groups = merged.into_values().collect();
        lex.groups.sort();
        for (gi, group) in lex.groups.iter().enumerate() {
            for member in group {
                let key = lex.key_of_folded(member);
                lex.group_of_key.insert(key, gi);
            }
        }
        lex
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, NormalizeError> {
        let file: LexiconFile = serde_json::from_slice(bytes)
            .map_err(|e| NormalizeError::Lexicon(e.to_string()))?;
        let exceptions = file
            .lemma_exceptions
            .into_iter()
            .map(|(k, v)| (k.to_lowercase(), v.to_lowercase()))
            .collect();
        Ok(SynonymLexicon::new(file.groups, exceptions))
    }

    pub fn load(path: &Path) -> Result<Self, NormalizeError> {
        let bytes = std::fs::read(path)
            .map_err(|e| NormalizeError::Lexicon(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }

    /// The lexicon shipped with the crate.
    pub fn default_lexicon() -> Self {
        Self::from_json(DEFAULT_LEXICON.as_bytes()).expect("bundled lexicon is valid")
    }

    pub fn to_json(&self) -> String {
        let file = LexiconFile {
            groups: self.groups.iter().map(|g| g.iter().cloned().collect()).collect(),
            lemma_exceptions: self.lemma_exceptions.clone(),
        };
        serde_json::to_string_pretty(&file).expect("lexicon serializes")
    }

    pub fn groups(&self) -> &[BTreeSet<String>] {
        &self.groups
    }

    pub fn lemma_exceptions(&self) -> &BTreeMap<String, String> {
        &self.lemma_exceptions
    }

    /// Index of the synonym group containing a lexical key.
    pub fn group_of_key(&self, key: &str) -> Option<usize> {
        self.group_of_key.get(key).copied()
    }

    pub fn lemmatize(&self, token: &str) -> String {
        lemmatize_token(token, self)
    }

    fn key_of_folded(&self, folded: &str) -> String {
        folded
            .split('_')
            .map(|t| self.lemmatize(t))
            .collect::<Vec<_>>()
            .join("_")
    }

    /// Lowercase, split on separators, lemmatize each token, rejoin with `_`.
    pub fn lexical_key(&self, label: &str) -> Result<String, NormalizeError> {
        let folded = fold_label(label);
        if folded.is_empty() {
            return Err(NormalizeError::EmptyLabel);
        }
        Ok(self.key_of_folded(&folded))
    }
}

/// Follow `a -> b -> c` chains to their end so every value is terminal.
/// Entries that loop back on themselves are dropped.
fn resolve_chains(table: BTreeMap<String, String>) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for (key, first) in &table {
        let mut seen = BTreeSet::from([key.as_str()]);
        let mut cur = first.as_str();
        let mut cyclic = false;
        loop {
            if seen.contains(cur) {
                cyclic = true;
                break;
            }
            match table.get(cur) {
                Some(next) => {
                    seen.insert(cur);
                    cur = next;
                }
                None => break,
            }
        }
        if cyclic {
            log::warn!("lemma exception `{key}` is part of a cycle; ignoring it");
            continue;
        }
        if cur != key {
            out.insert(key.clone(), cur.to_owned());
        }
    }
    out
}

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u' | b'y')
}

fn has_vowel(s: &str) -> bool {
    s.bytes().any(is_vowel)
}

/// `running` -> `run`, but `falling` -> `fall`.
fn undouble(stem: &str) -> &str {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 3 && b[n - 1] == b[n - 2] && !is_vowel(b[n - 1]) && !matches!(b[n - 1], b'l' | b's' | b'z' | b'f') {
        &stem[..n - 1]
    } else {
        stem
    }
}

/// One suffix-stripping step, or `None` when no rule applies.
fn strip_once(t: &str) -> Option<String> {
    if !t.is_ascii() {
        return None;
    }
    if let Some(stem) = t.strip_suffix("ies") {
        if stem.len() >= 2 {
            return Some(format!("{stem}y"));
        }
    }
    if let Some(stem) = t.strip_suffix("sses") {
        return Some(format!("{stem}ss"));
    }
    if let Some(stem) = t.strip_suffix("es") {
        if stem.len() >= 2 && ["s", "x", "z", "ch", "sh"].iter().any(|s| stem.ends_with(s)) && !stem.ends_with("ss") {
            return Some(stem.to_owned());
        }
    }
    if t.len() > 3 && t.ends_with('s') && !t.ends_with("ss") && !t.ends_with("us") && !t.ends_with("is") {
        return Some(t[..t.len() - 1].to_owned());
    }
    if let Some(stem) = t.strip_suffix("ing") {
        if stem.len() >= 2 && has_vowel(stem) {
            return Some(undouble(stem).to_owned());
        }
    }
    if let Some(stem) = t.strip_suffix("ed") {
        if stem.len() >= 3 && has_vowel(stem) && !stem.ends_with('e') {
            return Some(undouble(stem).to_owned());
        }
    }
    None
}

/// Lemma of a lowercase token. Irregular forms come from the lexicon's
/// exception table; everything else runs the suffix rules to a fixed point,
/// which makes the function idempotent.
pub fn lemmatize_token(token: &str, lexicon: &SynonymLexicon) -> String {
    let mut cur = token.to_owned();
    loop {
        if let Some(lemma) = lexicon.lemma_exceptions.get(&cur) {
            return lemma.clone();
        }
        if lexicon.lemma_values.contains(&cur) {
            return cur;
        }
        match strip_once(&cur) {
            Some(next) => cur = next,
            None => return cur,
        }
    }
}
