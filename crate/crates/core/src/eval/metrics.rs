//! Set, token, coverage and ordering metrics.

use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub const ZERO: Prf = Prf {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    pub fn uniform(score: f64) -> Prf {
        Prf {
            precision: score,
            recall: score,
            f1: score,
        }
    }

    pub fn from_counts(true_positive: usize, predicted: usize, gold: usize) -> Prf {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Prf {
            precision: ratio(true_positive, predicted),
            recall: ratio(true_positive, gold),
            f1: ratio(2 * true_positive, predicted + gold),
        }
    }

    pub fn from_pr(precision: f64, recall: f64) -> Prf {
        Prf {
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
        }
    }
}

pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Set precision, recall and F1. Empty gold scores zero with a warning.
pub fn set_f1<T: Ord>(predicted: &BTreeSet<T>, gold: &BTreeSet<T>) -> Prf {
    if gold.is_empty() {
        log::warn!("set_f1: empty gold set, scoring 0");
        return Prf::ZERO;
    }
    let tp = predicted.intersection(gold).count();
    Prf::from_counts(tp, predicted.len(), gold.len())
}

/// Lowercased whitespace tokens with punctuation removed.
pub fn span_tokens(span: &str) -> Vec<String> {
    span.split_whitespace()
        .map(|t| {
            t.chars()
                .filter(|c| !c.is_ascii_punctuation() && !c.is_ascii_whitespace())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn counts<T: Hash + Eq>(items: impl IntoIterator<Item = T>) -> HashMap<T, usize> {
    let mut m = HashMap::new();
    for t in items {
        *m.entry(t).or_insert(0) += 1;
    }
    m
}

/// Multiset token overlap between predicted and gold spans.
pub fn token_f1<S: AsRef<str>>(predicted: &[S], gold: &[S]) -> Prf {
    let pred: Vec<String> = predicted.iter().flat_map(|s| span_tokens(s.as_ref())).collect();
    let gold: Vec<String> = gold.iter().flat_map(|s| span_tokens(s.as_ref())).collect();
    let gold_counts = counts(gold.iter());
    let tp: usize = counts(pred.iter())
        .into_iter()
        .map(|(t, n)| n.min(gold_counts.get(t).copied().unwrap_or(0)))
        .sum();
    Prf::from_counts(tp, pred.len(), gold.len())
}

/// Fraction of gold items that were predicted.
pub fn coverage<T: Ord>(predicted: &BTreeSet<T>, gold: &BTreeSet<T>) -> Result<f64, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    Ok(predicted.intersection(gold).count() as f64 / gold.len() as f64)
}

/// Pairwise concordance of the elements both sequences share.
///
/// Fewer than two shared elements scores 1.0 when exactly one element is
/// shared or both sequences are empty, and 0.0 otherwise.
pub fn ordering_accuracy<T: Ord + Clone>(predicted: &[T], gold: &[T]) -> Result<f64, EvalError> {
    fn unique<T: Ord>(xs: &[T]) -> bool {
        xs.iter().collect::<BTreeSet<_>>().len() == xs.len()
    }
    if !unique(predicted) || !unique(gold) {
        return Err(EvalError::DuplicateElements);
    }
    let gold_rank: std::collections::BTreeMap<&T, usize> =
        gold.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let ranks: Vec<usize> = predicted.iter().filter_map(|t| gold_rank.get(t).copied()).collect();
    let n = ranks.len();
    if n < 2 {
        let both_empty = predicted.is_empty() && gold.is_empty();
        return Ok(if n == 1 || both_empty { 1.0 } else { 0.0 });
    }
    let pairs = n * (n - 1) / 2;
    let discordant = count_inversions(ranks);
    Ok((pairs - discordant) as f64 / pairs as f64)
}

/// Number of inversions, by merge sort.
fn count_inversions(mut xs: Vec<usize>) -> usize {
    let mut buf = xs.clone();
    sort_counting(&mut xs, &mut buf)
}

fn sort_counting(xs: &mut [usize], buf: &mut [usize]) -> usize {
    let n = xs.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = sort_counting(&mut xs[..mid], &mut buf[..mid]) + sort_counting(&mut xs[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if xs[i] <= xs[j] {
            buf[k] = xs[i];
            i += 1;
        } else {
            buf[k] = xs[j];
            inv += mid - i;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&xs[i..mid]);
    k += mid - i;
    buf[k..n].copy_from_slice(&xs[j..n]);
    xs.copy_from_slice(&buf[..n]);
    inv
}
