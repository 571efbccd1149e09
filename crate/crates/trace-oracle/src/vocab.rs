//! Method-name vocabulary for one-hot encoding.
//!
//! The vocabulary is built from caller and callee occurrences across the
//! training split only. Names seen fewer than `k_min` times share a single
//! `<UNK>` slot, which also absorbs any name first seen at inference time, so
//! encoding is total over arbitrary traces.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::Trace;

/// Reserved name for the rare/unseen slot, always the last index.
pub const UNK: &str = "<UNK>";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("cannot build a vocabulary from an empty training set")]
    EmptyTrainingSet,
    #[error("k_min must be at least 1, got {0}")]
    BadKMin(u64),
}

/// Serialized form: retained names (without `<UNK>`), raw occurrence counts,
/// and the threshold that produced them.
#[derive(Serialize, Deserialize)]
struct VocabData {
    names: Vec<String>,
    counts: BTreeMap<String, u64>,
    k_min: u64,
}

/// An immutable name-to-index mapping with a trailing `<UNK>` slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabData", into = "VocabData")]
pub struct Vocabulary {
    /// Slot names in index order; the last entry is always `<UNK>`.
    names: Vec<String>,
    /// Occurrence count of every name seen at build time, rare ones included.
    counts: BTreeMap<String, u64>,
    k_min: u64,
    index: BTreeMap<String, usize>,
}

impl From<VocabData> for Vocabulary {
    fn from(d: VocabData) -> Self {
        let mut names = d.names;
        names.push(UNK.to_string());
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Vocabulary { names, counts: d.counts, k_min: d.k_min, index }
    }
}

impl From<Vocabulary> for VocabData {
    fn from(v: Vocabulary) -> Self {
        let mut names = v.names;
        names.pop();
        VocabData { names, counts: v.counts, k_min: v.k_min }
    }
}

impl Vocabulary {
    /// Number of slots, including `<UNK>`.
    pub fn size(&self) -> usize {
        self.names.len()
    }

    /// Index of a method name; unknown and rare names map to the `<UNK>` slot.
    pub fn index_of(&self, name: &str) -> usize {
        self.index.get(name).copied().unwrap_or(self.names.len() - 1)
    }

    /// Slot names in index order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Build-time occurrence count of a name (0 if never seen).
    pub fn count_of(&self, name: &str) -> u64 {
        self.counts.get(name).copied().unwrap_or(0)
    }

    pub fn k_min(&self) -> u64 {
        self.k_min
    }

    /// One-hot encoding of a method name, length [`Vocabulary::size`].
    pub fn one_hot(&self, name: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.size()];
        v[self.index_of(name)] = 1.0;
        v
    }
}

/// Builds the vocabulary of a training split: every caller/callee name
/// occurring at least `k_min` times, ordered by descending count then
/// lexicographically, with `<UNK>` appended last. Counting is
/// order-independent, so any permutation of the corpus yields the same
/// vocabulary.
pub fn build_vocab(traces: &[Trace], k_min: u64) -> Result<Vocabulary, VocabError> {
    if traces.is_empty() {
        return Err(VocabError::EmptyTrainingSet);
    }
    if k_min < 1 {
        return Err(VocabError::BadKMin(k_min));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for t in traces {
        for l in &t.lines {
            *counts.entry(l.caller.clone()).or_insert(0) += 1;
            *counts.entry(l.callee.clone()).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&String, u64)> = counts.iter().map(|(n, &c)| (n, c)).filter(|&(_, c)| c >= k_min).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let names = kept.into_iter().map(|(n, _)| n.clone()).collect();
    Ok(Vocabulary::from(VocabData { names, counts, k_min }))
}

/// Builds a vocabulary over callee names only, for the clustering baseline's
/// bag-of-callee-counts features. Same retention and ordering rules as
/// [`build_vocab`], but caller names are ignored entirely.
pub fn build_callee_vocab(traces: &[Trace], k_min: u64) -> Result<Vocabulary, VocabError> {
    if traces.is_empty() {
        return Err(VocabError::EmptyTrainingSet);
    }
    if k_min < 1 {
        return Err(VocabError::BadKMin(k_min));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for t in traces {
        for l in &t.lines {
            *counts.entry(l.callee.clone()).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&String, u64)> = counts.iter().map(|(n, &c)| (n, c)).filter(|&(_, c)| c >= k_min).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let names = kept.into_iter().map(|(n, _)| n.clone()).collect();
    Ok(Vocabulary::from(VocabData { names, counts, k_min }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceLine;

    fn trace_with_pairs(pairs: &[(&str, &str)]) -> Trace {
        Trace {
            trace_id: "t".to_string(),
            subject: "s".to_string(),
            label: None,
            lines: pairs
                .iter()
                .map(|(caller, callee)| TraceLine {
                    caller: caller.to_string(),
                    callee: callee.to_string(),
                    args: vec![],
                    ret: vec![],
                })
                .collect(),
            globals: vec![],
        }
    }

    #[test]
    fn orders_by_count_then_name_with_trailing_unk() {
        // Occurrences: step 6 (5 callee + 1 caller), run 3, check 1.
        let t = trace_with_pairs(&[("run", "step"), ("run", "step"), ("run", "step"), ("step", "step"), ("check", "step")]);
        let v = build_vocab(&[t], 2).unwrap();
        assert_eq!(v.names(), &["step".to_string(), "run".to_string(), UNK.to_string()]);
        assert_eq!(v.size(), 3);
        assert_eq!(v.count_of("step"), 6);
        assert_eq!(v.count_of("check"), 1);
        assert_eq!(v.k_min(), 2);
    }

    #[test]
    fn ties_break_lexicographically() {
        let t = trace_with_pairs(&[("beta", "alpha"), ("alpha", "beta")]);
        let v = build_vocab(&[t], 2).unwrap();
        assert_eq!(v.names(), &["alpha".to_string(), "beta".to_string(), UNK.to_string()]);
    }

    #[test]
    fn k_min_one_retains_every_name() {
        let t = trace_with_pairs(&[("run", "once")]);
        let v = build_vocab(&[t], 1).unwrap();
        assert_eq!(v.names(), &["once".to_string(), "run".to_string(), UNK.to_string()]);
    }

    #[test]
    fn rare_and_unseen_names_map_to_unk() {
        let t = trace_with_pairs(&[("run", "step"), ("run", "step"), ("once", "step")]);
        let v = build_vocab(&[t], 2).unwrap();
        assert_eq!(v.index_of("once"), v.size() - 1);
        assert_eq!(v.index_of("never_seen"), v.size() - 1);
        assert_eq!(v.index_of(UNK), v.size() - 1);
        assert_ne!(v.index_of("run"), v.size() - 1);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        assert_eq!(build_vocab(&[], 2), Err(VocabError::EmptyTrainingSet));
        let t = trace_with_pairs(&[("run", "step")]);
        assert_eq!(build_vocab(&[t], 0), Err(VocabError::BadKMin(0)));
    }

    #[test]
    fn zero_line_traces_yield_unk_only() {
        let t = trace_with_pairs(&[]);
        let v = build_vocab(&[t], 2).unwrap();
        assert_eq!(v.names(), &[UNK.to_string()]);
        assert_eq!(v.one_hot("anything"), vec![1.0]);
    }

    #[test]
    fn one_hot_sets_exactly_one_slot() {
        let t = trace_with_pairs(&[("run", "step"), ("run", "step")]);
        let v = build_vocab(&[t], 2).unwrap();
        let h = v.one_hot("run");
        assert_eq!(h.iter().sum::<f64>(), 1.0);
        assert_eq!(h[v.index_of("run")], 1.0);
    }

    #[test]
    fn corpus_order_does_not_matter() {
        let a = trace_with_pairs(&[("run", "step"), ("run", "check")]);
        let b = trace_with_pairs(&[("check", "step"), ("run", "step")]);
        let forward = build_vocab(&[a.clone(), b.clone()], 2).unwrap();
        let reverse = build_vocab(&[b, a], 2).unwrap();
        assert_eq!(forward, reverse);
    }

    #[test]
    fn callee_vocab_ignores_caller_names() {
        let t = trace_with_pairs(&[("run", "step"), ("run", "step"), ("run", "check"), ("run", "check")]);
        let v = build_callee_vocab(&[t], 2).unwrap();
        assert_eq!(v.names(), &["check".to_string(), "step".to_string(), UNK.to_string()]);
        assert_eq!(v.index_of("run"), v.size() - 1, "callers are not part of the callee vocabulary");
    }

    #[test]
    fn round_trips_through_serde() {
        let t = trace_with_pairs(&[("run", "step"), ("run", "step"), ("check", "run")]);
        let v = build_vocab(&[t], 2).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.index_of("run"), v.index_of("run"));
        assert_eq!(back.count_of("check"), 1);
    }
}
