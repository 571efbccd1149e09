//! Hyperparameter calibration harness: trains once with explicit settings
//! and prints the loss curve plus held-out metrics.
//!
//! Usage: calibrate <traces.jsonl> <lr> <batch> <epochs> <fraction> <seed> [d_v d_t layers-csv]

use std::time::Instant;

use trace_oracle::io::read_trace_file;
use trace_oracle::train::{run_pipeline, SplitSpec, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let traces = &args[1];
    let lr: f64 = args[2].parse().unwrap();
    let batch: usize = args[3].parse().unwrap();
    let epochs: usize = args[4].parse().unwrap();
    let fraction: f64 = args[5].parse().unwrap();
    let seed: u64 = args[6].parse().unwrap();

    let corpus = read_trace_file(traces).unwrap();
    let mut cfg = TrainConfig::default();
    cfg.adam.lr = lr;
    cfg.batch_size = batch;
    cfg.max_epochs = epochs;
    // Calibration wants the full curve; never stop early.
    cfg.patience = epochs;
    if args.len() > 7 {
        cfg.oracle.d_v = args[7].parse().unwrap();
        cfg.oracle.d_t = args[8].parse().unwrap();
        cfg.oracle.layers = args[9].split(',').map(|s| s.parse().unwrap()).collect();
    }

    let split = SplitSpec { train_fraction: fraction, seed, stratified: true };
    let t0 = Instant::now();
    let run = run_pipeline(&corpus, &cfg, &split, seed).unwrap();
    let secs = t0.elapsed().as_secs_f64();

    for (i, l) in run.outcome.loss_history.iter().enumerate() {
        if i % 5 == 0 || i + 1 == run.outcome.loss_history.len() {
            println!("epoch {:>3}: loss {l:.6}", i + 1);
        }
    }
    let r = &run.report;
    let m = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    println!(
        "lr={lr} batch={batch} dims={}/{}/{:?} epochs={} early={} train={} test={} time={secs:.1}s",
        cfg.oracle.d_v,
        cfg.oracle.d_t,
        cfg.oracle.layers,
        run.outcome.epochs,
        run.outcome.stopped_early,
        run.train_size,
        run.test_size
    );
    println!(
        "precision={} recall={} specificity={} f1={}",
        m(r.precision()),
        m(r.recall()),
        m(r.specificity()),
        m(r.f1())
    );
}
