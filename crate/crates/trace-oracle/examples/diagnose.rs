//! Per-mutation diagnostic: trains once, then breaks classification quality
//! down by the mutation listed in the manifest, exposing which bug classes
//! the oracle actually recognizes.
//!
//! Usage: diagnose <out-dir-with-traces.jsonl-and-manifest.csv> <lr> <batch> <epochs> <fraction> <seed> [d_v d_t layers-csv [patience]]

use std::collections::BTreeMap;
use std::time::Instant;

use trace_oracle::io::read_trace_file;
use trace_oracle::oracle::NO_MASK;
use trace_oracle::train::{classify_all, run_pipeline, SplitSpec, TrainConfig};
use trace_oracle::trace::Verdict;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let dir = std::path::Path::new(&args[1]);
    let lr: f64 = args[2].parse().unwrap();
    let batch: usize = args[3].parse().unwrap();
    let epochs: usize = args[4].parse().unwrap();
    let fraction: f64 = args[5].parse().unwrap();
    let seed: u64 = args[6].parse().unwrap();

    let corpus = read_trace_file(dir.join("traces.jsonl")).unwrap();
    let manifest = std::fs::read_to_string(dir.join("manifest.csv")).unwrap();
    let mutation_of: BTreeMap<String, String> = manifest
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[2].to_string())
        })
        .collect();

    let mut cfg = TrainConfig::default();
    cfg.adam.lr = lr;
    cfg.batch_size = batch;
    cfg.max_epochs = epochs;
    cfg.patience = epochs;
    if args.len() > 7 {
        cfg.oracle.d_v = args[7].parse().unwrap();
        cfg.oracle.d_t = args[8].parse().unwrap();
        cfg.oracle.layers = args[9].split(',').map(|s| s.parse().unwrap()).collect();
    }
    if args.len() > 10 {
        cfg.patience = args[10].parse().unwrap();
    }

    let split = SplitSpec { train_fraction: fraction, seed, stratified: true };
    let t0 = Instant::now();
    let run = run_pipeline(&corpus, &cfg, &split, seed).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let r = &run.report;
    let m = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    println!(
        "p={} r={} s={} f1={} loss={:.4} time={secs:.0}s",
        m(r.precision()),
        m(r.recall()),
        m(r.specificity()),
        m(r.f1()),
        run.outcome.loss_history.last().unwrap(),
    );
    let hist = &run.outcome.loss_history;
    let (best_ep, best) = hist
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    println!(
        "epochs_run={} stopped_early={} best_loss={best:.4}@{best_ep} curve={}",
        run.outcome.epochs,
        run.outcome.stopped_early,
        hist.iter()
            .step_by((hist.len() / 12).max(1))
            .map(|v| format!("{v:.3}"))
            .collect::<Vec<_>>()
            .join(","),
    );

    // Classify the whole corpus and roll up by mutation id.
    let classified = classify_all(&run.outcome.params, &corpus, NO_MASK);
    let mut by_mutation: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (c, t) in classified.iter().zip(&corpus) {
        let key = mutation_of.get(&c.trace_id).cloned().unwrap_or_default();
        let e = by_mutation.entry(key).or_default();
        e.1 += 1;
        if Some(c.verdict) == t.label {
            e.0 += 1;
        }
    }
    println!("accuracy by mutation (whole corpus, train+test):");
    for (mutation, (ok, n)) in &by_mutation {
        println!("  {mutation:<32} {ok:>4}/{n:<4} = {:.3}", *ok as f64 / *n as f64);
    }
    let _ = Verdict::Pass;
}
