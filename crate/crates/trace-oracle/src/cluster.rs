//! Agglomerative-clustering baseline over bag-of-callee-name counts.
//!
//! Each trace becomes a count vector over the callee-name vocabulary (caller
//! names, arguments, returns, and globals are discarded). Traces are merged
//! bottom-up under single, average, or complete linkage with Euclidean
//! distance until a target cluster count — a fraction of the corpus size —
//! remains. Traces in clusters smaller than the mean cluster size are
//! classified FAIL. A grid search scores every linkage × fraction setting
//! against the labels and reports the best row by F1.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::report::EvalReport;
use crate::trace::{Trace, Verdict};
use crate::vocab::{build_callee_vocab, VocabError, Vocabulary};

/// Linkage criterion for merging clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Linkage {
    Single,
    Average,
    Complete,
}

impl Linkage {
    pub const ALL: [Linkage; 3] = [Linkage::Single, Linkage::Average, Linkage::Complete];
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Linkage::Single => "single",
            Linkage::Average => "average",
            Linkage::Complete => "complete",
        };
        f.write_str(s)
    }
}

impl FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(Linkage::Single),
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            other => Err(format!("unknown linkage {other:?}; expected single, average, or complete")),
        }
    }
}

/// The cluster-count fractions of the evaluation grid.
pub const DEFAULT_FRACTIONS: [f64; 5] = [0.01, 0.05, 0.10, 0.20, 0.25];

/// One clustering configuration: linkage plus the fraction of the corpus
/// size used as the target cluster count.
#[derive(Debug, Clone, Copy)]
pub struct ClusterConfig {
    pub linkage: Linkage,
    pub fraction: f64,
}

/// Bag-of-callee-name counts for one trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceFeature(pub Vec<u32>);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("cannot cluster an empty corpus")]
    Empty,
    #[error("cluster-count fraction must be in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("trace {0} has no label; the grid search needs labels for scoring")]
    Unlabelled(String),
    #[error(transparent)]
    Vocab(#[from] VocabError),
}

/// Count vectors over the callee vocabulary; rare and unseen names fall into
/// the trailing `<UNK>` column. Line order does not matter.
pub fn featurize(traces: &[Trace], vocab: &Vocabulary) -> Vec<TraceFeature> {
    traces
        .iter()
        .map(|t| {
            let mut row = vec![0u32; vocab.size()];
            for l in &t.lines {
                row[vocab.index_of(&l.callee)] += 1;
            }
            TraceFeature(row)
        })
        .collect()
}

fn euclidean(a: &TraceFeature, b: &TraceFeature) -> f64 {
    a.0.iter()
        .zip(&b.0)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Full merge sequence down to one cluster. Cluster labels are the smallest
/// original row index of their members, so every merge pair satisfies i < j
/// and i survives.
struct Dendrogram {
    n: usize,
    merges: Vec<(usize, usize)>,
}

fn combine(linkage: Linkage, d_ix: f64, d_jx: f64, size_i: usize, size_j: usize) -> f64 {
    match linkage {
        Linkage::Single => d_ix.min(d_jx),
        Linkage::Complete => d_ix.max(d_jx),
        Linkage::Average => {
            (size_i as f64 * d_ix + size_j as f64 * d_jx) / ((size_i + size_j) as f64)
        }
    }
}

fn build_dendrogram(features: &[TraceFeature], linkage: Linkage) -> Dendrogram {
    let n = features.len();
    let mut dist: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| euclidean(&features[i], &features[j])).collect())
        .collect();
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];

    // nearest[i] = (d, j) minimizing (d, j) over active j > i; the ascending
    // scan keeps the smallest j among equal distances.
    let rescan = |i: usize, dist: &[Vec<f64>], active: &[bool]| -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for j in i + 1..n {
            if !active[j] {
                continue;
            }
            let d = dist[i][j];
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
        best
    };
    let mut nearest: Vec<Option<(f64, usize)>> =
        (0..n).map(|i| rescan(i, &dist, &active)).collect();

    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        // Global minimum; the ascending row scan with a strict comparison
        // picks the lexicographically smallest (i, j) among equal distances.
        let mut pick: Option<(f64, usize, usize)> = None;
        for (i, entry) in nearest.iter().enumerate() {
            if !active[i] {
                continue;
            }
            if let Some((d, j)) = *entry {
                if pick.map_or(true, |(bd, _, _)| d < bd) {
                    pick = Some((d, i, j));
                }
            }
        }
        let (_, bi, bj) = pick.expect("more than one active cluster implies a candidate pair");
        merges.push((bi, bj));

        active[bj] = false;
        for x in 0..n {
            if !active[x] || x == bi {
                continue;
            }
            let nd = combine(linkage, dist[bi][x], dist[bj][x], size[bi], size[bj]);
            dist[bi][x] = nd;
            dist[x][bi] = nd;
        }
        size[bi] += size[bj];

        nearest[bj] = None;
        for r in 0..n {
            if !active[r] {
                continue;
            }
            if r == bi {
                nearest[bi] = rescan(bi, &dist, &active);
                continue;
            }
            match nearest[r] {
                // The cached best pointed at a merged cluster: its distance
                // changed (bi) or it disappeared (bj), so rescan.
                Some((_, c)) if c == bi || c == bj => nearest[r] = rescan(r, &dist, &active),
                // Otherwise only the distance to bi changed; fold that single
                // candidate in.
                Some((bd, c)) if bi > r => {
                    let d = dist[r][bi];
                    if d < bd || (d == bd && bi < c) {
                        nearest[r] = Some((d, bi));
                    }
                }
                _ => {}
            }
        }
    }
    Dendrogram { n, merges }
}

/// Replays merges until `k` clusters remain; returns each row's cluster
/// label (the smallest original row index in its cluster).
fn assignments_at(d: &Dendrogram, k: usize) -> Vec<usize> {
    let mut label: Vec<usize> = (0..d.n).collect();
    let steps = d.n - k.min(d.n);
    for &(i, j) in d.merges.iter().take(steps) {
        for l in label.iter_mut() {
            if *l == j {
                *l = i;
            }
        }
    }
    label
}

fn target_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).max(1)
}

/// Agglomerates the features and returns each row's cluster label at the
/// configured cluster count, `max(1, round(fraction·n))`.
pub fn cluster(features: &[TraceFeature], config: &ClusterConfig) -> Result<Vec<usize>, ClusterError> {
    if features.is_empty() {
        return Err(ClusterError::Empty);
    }
    if !(config.fraction > 0.0 && config.fraction <= 1.0) {
        return Err(ClusterError::BadFraction(config.fraction));
    }
    let d = build_dendrogram(features, config.linkage);
    Ok(assignments_at(&d, target_count(config.fraction, features.len())))
}

/// Small-cluster-fails rule: traces in clusters strictly smaller than the
/// mean cluster size are FAIL, the rest PASS.
pub fn classify_by_cluster(assignments: &[usize]) -> Vec<Verdict> {
    if assignments.is_empty() {
        return Vec::new();
    }
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in assignments {
        *sizes.entry(l).or_insert(0) += 1;
    }
    let mean = assignments.len() as f64 / sizes.len() as f64;
    assignments
        .iter()
        .map(|l| if (sizes[l] as f64) < mean { Verdict::Fail } else { Verdict::Pass })
        .collect()
}

/// One scored grid configuration.
#[derive(Debug, Clone, Copy)]
pub struct GridRow {
    pub linkage: Linkage,
    pub fraction: f64,
    pub report: EvalReport,
}

/// Full grid plus the first row achieving the maximal F1.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub rows: Vec<GridRow>,
    pub best: GridRow,
}

/// Scores every linkage × fraction combination on the labelled corpus.
/// Labels are used only to score configurations, never to build features or
/// guide the clustering.
pub fn grid_search(corpus: &[Trace], k_min: u64) -> Result<GridOutcome, ClusterError> {
    if corpus.is_empty() {
        return Err(ClusterError::Empty);
    }
    let labels: Vec<Verdict> = corpus
        .iter()
        .map(|t| t.label.ok_or_else(|| ClusterError::Unlabelled(t.trace_id.clone())))
        .collect::<Result<_, _>>()?;
    let vocab = build_callee_vocab(corpus, k_min)?;
    let features = featurize(corpus, &vocab);

    let mut rows = Vec::with_capacity(Linkage::ALL.len() * DEFAULT_FRACTIONS.len());
    for linkage in Linkage::ALL {
        let dendro = build_dendrogram(&features, linkage);
        for &fraction in &DEFAULT_FRACTIONS {
            let assignments = assignments_at(&dendro, target_count(fraction, corpus.len()));
            let verdicts = classify_by_cluster(&assignments);
            let report =
                EvalReport::from_pairs(verdicts.into_iter().zip(labels.iter().copied()));
            rows.push(GridRow { linkage, fraction, report });
        }
    }
    let score = |r: &GridRow| r.report.f1().unwrap_or(-1.0);
    let best = rows
        .iter()
        .copied()
        .reduce(|best, r| if score(&r) > score(&best) { r } else { best })
        .expect("grid is never empty");
    Ok(GridOutcome { rows, best })
}

/// Grid results as CSV; absent metrics render as empty cells.
pub fn grid_to_csv(rows: &[GridRow]) -> String {
    let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from("linkage,fraction,tp,fp,tn,fn,precision,recall,specificity,f1\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.linkage,
            r.fraction,
            r.report.tp,
            r.report.fp,
            r.report.tn,
            r.report.r#fn,
            cell(r.report.precision()),
            cell(r.report.recall()),
            cell(r.report.specificity()),
            cell(r.report.f1()),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;
    use crate::trace::TraceLine;

    fn feats(points: &[&[u32]]) -> Vec<TraceFeature> {
        points.iter().map(|p| TraceFeature(p.to_vec())).collect()
    }

    /// Independent agglomeration oracle: no distance matrix, no
    /// nearest-neighbor cache. Single and complete linkage recompute cluster
    /// distances directly from the member rows at every step (min/max over
    /// raw pair distances is exact, so any disagreement is a logic bug).
    /// Average linkage keeps a naive per-pair distance map updated with the
    /// shared recurrence, exercising the merge loop independently.
    fn brute_merges(features: &[TraceFeature], linkage: Linkage) -> Vec<(usize, usize)> {
        if linkage == Linkage::Average {
            return brute_average_merges(features);
        }
        let mut clusters: Vec<(usize, Vec<usize>)> =
            (0..features.len()).map(|i| (i, vec![i])).collect();
        let mut merges = Vec::new();
        while clusters.len() > 1 {
            let mut best: Option<(f64, usize, usize)> = None;
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let pair_dists = clusters[a].1.iter().flat_map(|&x| {
                        clusters[b].1.iter().map(move |&y| euclidean(&features[x], &features[y]))
                    });
                    let d = match linkage {
                        Linkage::Single => pair_dists.fold(f64::INFINITY, f64::min),
                        Linkage::Complete => pair_dists.fold(0.0, f64::max),
                        Linkage::Average => unreachable!(),
                    };
                    let (lo, hi) =
                        (clusters[a].0.min(clusters[b].0), clusters[a].0.max(clusters[b].0));
                    let better = match best {
                        None => true,
                        Some((bd, blo, bhi)) => d < bd || (d == bd && (lo, hi) < (blo, bhi)),
                    };
                    if better {
                        best = Some((d, lo, hi));
                    }
                }
            }
            let (_, lo, hi) = best.unwrap();
            merges.push((lo, hi));
            let hi_at = clusters.iter().position(|c| c.0 == hi).unwrap();
            let members = clusters.remove(hi_at).1;
            let lo_at = clusters.iter().position(|c| c.0 == lo).unwrap();
            clusters[lo_at].1.extend(members);
        }
        merges
    }

    fn brute_average_merges(features: &[TraceFeature]) -> Vec<(usize, usize)> {
        let n = features.len();
        let mut dist: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for i in 0..n {
            for j in i + 1..n {
                dist.insert((i, j), euclidean(&features[i], &features[j]));
            }
        }
        let mut size: BTreeMap<usize, usize> = (0..n).map(|i| (i, 1)).collect();
        let mut merges = Vec::new();
        while size.len() > 1 {
            let mut best: Option<(f64, usize, usize)> = None;
            for (&(lo, hi), &d) in &dist {
                let better = match best {
                    None => true,
                    Some((bd, blo, bhi)) => d < bd || (d == bd && (lo, hi) < (blo, bhi)),
                };
                if better {
                    best = Some((d, lo, hi));
                }
            }
            let (_, lo, hi) = best.unwrap();
            merges.push((lo, hi));
            let key = |a: usize, b: usize| (a.min(b), a.max(b));
            let others: Vec<usize> = size.keys().copied().filter(|&x| x != lo && x != hi).collect();
            for x in others {
                let d_lo = dist[&key(lo, x)];
                let d_hi = dist[&key(hi, x)];
                let nd = combine(Linkage::Average, d_lo, d_hi, size[&lo], size[&hi]);
                dist.insert(key(lo, x), nd);
                dist.remove(&key(hi, x));
            }
            dist.remove(&(lo, hi));
            *size.get_mut(&lo).unwrap() += size[&hi];
            size.remove(&hi);
        }
        merges
    }

    fn trace_with_callees(id: &str, callees: &[&str], label: Verdict) -> Trace {
        Trace {
            trace_id: id.to_string(),
            subject: "s".to_string(),
            label: Some(label),
            lines: callees
                .iter()
                .map(|c| TraceLine {
                    caller: "run".to_string(),
                    callee: c.to_string(),
                    args: vec![],
                    ret: vec![],
                })
                .collect(),
            globals: vec![],
        }
    }

    #[test]
    fn featurize_counts_callees_against_the_vocabulary() {
        let traces = vec![
            trace_with_callees("a", &["f", "f", "g"], Verdict::Pass),
            trace_with_callees("b", &["f", "g", "f"], Verdict::Pass),
            trace_with_callees("c", &[], Verdict::Pass),
            trace_with_callees("d", &["f", "novel"], Verdict::Pass),
        ];
        let vocab = build_callee_vocab(&traces, 2).unwrap();
        assert_eq!(vocab.names().last().map(String::as_str), Some("<UNK>"));
        let rows = featurize(&traces, &vocab);
        // Vocabulary: f (4), g (2), <UNK>.
        assert_eq!(rows[0].0, vec![2, 1, 0]);
        assert_eq!(rows[1].0, vec![2, 1, 0], "bag encoding ignores line order");
        assert_eq!(rows[2].0, vec![0, 0, 0], "zero-line trace is the zero vector");
        assert_eq!(rows[3].0, vec![1, 0, 1], "rare callee lands in the UNK column");
    }

    #[test]
    fn single_linkage_separates_obvious_geometry() {
        let f = feats(&[&[0], &[1], &[10], &[11]]);
        let cfg = ClusterConfig { linkage: Linkage::Single, fraction: 0.5 };
        let labels = cluster(&f, &cfg).unwrap();
        assert_eq!(labels, vec![0, 0, 2, 2]);
    }

    #[test]
    fn full_fraction_keeps_every_trace_in_its_own_cluster() {
        let f = feats(&[&[0], &[1], &[10], &[11]]);
        let cfg = ClusterConfig { linkage: Linkage::Complete, fraction: 1.0 };
        assert_eq!(cluster(&f, &cfg).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn average_linkage_matches_hand_derived_merge_order() {
        // 1-D rows 0,2,5,6: closest pair (5,6), then (0,2); the cluster
        // means then sit 4.5 apart, all in exact float arithmetic.
        let f = feats(&[&[0], &[2], &[5], &[6]]);
        let d = build_dendrogram(&f, Linkage::Average);
        assert_eq!(d.merges, vec![(2, 3), (0, 1), (0, 2)]);
        assert_eq!(assignments_at(&d, 2), vec![0, 0, 2, 2]);
    }

    #[test]
    fn equal_distances_break_ties_toward_smallest_indices() {
        let f = feats(&[&[7], &[7], &[7], &[7]]);
        for linkage in Linkage::ALL {
            let d = build_dendrogram(&f, linkage);
            assert_eq!(d.merges, vec![(0, 1), (0, 2), (0, 3)], "{linkage}");
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let cfg = ClusterConfig { linkage: Linkage::Single, fraction: 0.5 };
        assert_eq!(cluster(&[], &cfg), Err(ClusterError::Empty));
        let f = feats(&[&[1]]);
        for bad in [0.0, -0.5, 1.5, f64::NAN] {
            let cfg = ClusterConfig { linkage: Linkage::Single, fraction: bad };
            assert!(matches!(cluster(&f, &cfg), Err(ClusterError::BadFraction(_))));
        }
    }

    #[test]
    fn small_cluster_fails_rule_matches_hand_arithmetic() {
        // Sizes 8, 1, 1 → mean 10/3: the big cluster passes, singletons fail.
        let mut assignments = vec![0usize; 8];
        assignments.push(8);
        assignments.push(9);
        let verdicts = classify_by_cluster(&assignments);
        assert_eq!(&verdicts[..8], vec![Verdict::Pass; 8].as_slice());
        assert_eq!(&verdicts[8..], vec![Verdict::Fail; 2].as_slice());

        // Equal sizes → nothing below the mean → all PASS.
        let verdicts = classify_by_cluster(&[0, 0, 2, 2]);
        assert_eq!(verdicts, vec![Verdict::Pass; 4]);

        // One cluster → all PASS.
        let verdicts = classify_by_cluster(&[0, 0, 0]);
        assert_eq!(verdicts, vec![Verdict::Pass; 3]);
        assert!(classify_by_cluster(&[]).is_empty());
    }

    fn canonical_partition(ids: &[String], labels: &[usize]) -> BTreeSet<BTreeSet<String>> {
        let mut groups: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
        for (id, &l) in ids.iter().zip(labels) {
            groups.entry(l).or_default().insert(id.clone());
        }
        groups.into_values().collect()
    }

    #[test]
    fn clustering_is_row_order_invariant_up_to_relabeling() {
        let traces = vec![
            trace_with_callees("p1", &["f", "f", "g"], Verdict::Pass),
            trace_with_callees("p2", &["f", "f", "g", "g"], Verdict::Pass),
            trace_with_callees("p3", &["f", "g"], Verdict::Pass),
            trace_with_callees("q1", &["h", "h", "h", "h", "h"], Verdict::Fail),
            trace_with_callees("q2", &["h", "h", "h", "h", "h", "h"], Verdict::Fail),
            trace_with_callees("r1", &["f", "h"], Verdict::Fail),
        ];
        let permuted: Vec<Trace> =
            [3, 0, 5, 2, 4, 1].iter().map(|&i: &usize| traces[i].clone()).collect();
        let cfg = ClusterConfig { linkage: Linkage::Average, fraction: 0.5 };
        let run = |ts: &[Trace]| {
            let vocab = build_callee_vocab(ts, 1).unwrap();
            let labels = cluster(&featurize(ts, &vocab), &cfg).unwrap();
            let ids: Vec<String> = ts.iter().map(|t| t.trace_id.clone()).collect();
            canonical_partition(&ids, &labels)
        };
        assert_eq!(run(&traces), run(&permuted));
    }

    #[test]
    fn grid_search_scores_the_full_grid() {
        let mut traces = Vec::new();
        for i in 0..12 {
            traces.push(trace_with_callees(&format!("p{i}"), &["f", "f", "g"], Verdict::Pass));
        }
        for i in 0..4 {
            let id = format!("q{i}");
            let callees: Vec<&str> = std::iter::repeat("h").take(8 + i).collect();
            traces.push(trace_with_callees(&id, &callees, Verdict::Fail));
        }
        let out = grid_search(&traces, 1).unwrap();
        assert_eq!(out.rows.len(), 15, "3 linkages x 5 fractions");
        let best_f1 = out.best.report.f1().unwrap_or(-1.0);
        for row in &out.rows {
            assert!(row.report.f1().unwrap_or(-1.0) <= best_f1);
            assert_eq!(row.report.total(), 16);
        }
        let csv = grid_to_csv(&out.rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("linkage,fraction,tp,fp,tn,fn,precision,recall,specificity,f1")
        );
        assert_eq!(csv.lines().count(), 16);
        assert!(csv.lines().nth(1).unwrap().starts_with("single,0.01,"));
    }

    #[test]
    fn grid_search_requires_labels() {
        let mut t = trace_with_callees("x", &["f"], Verdict::Pass);
        t.label = None;
        assert_eq!(grid_search(&[t], 1).unwrap_err(), ClusterError::Unlabelled("x".to_string()));
        assert_eq!(grid_search(&[], 1).unwrap_err(), ClusterError::Empty);
    }

    proptest! {
        #[test]
        fn dendrogram_matches_brute_force_oracle(
            points in prop::collection::vec(prop::collection::vec(0u32..5, 2), 2..8),
            linkage in prop::sample::select(vec![Linkage::Single, Linkage::Average, Linkage::Complete]),
        ) {
            let features: Vec<TraceFeature> = points.into_iter().map(TraceFeature).collect();
            let fast = build_dendrogram(&features, linkage);
            let brute = brute_merges(&features, linkage);
            prop_assert_eq!(fast.merges, brute);
        }
    }
}
