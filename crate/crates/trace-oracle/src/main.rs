//! Command-line entry point: generation, training, evaluation, sweeps,
//! ablations, cross-subject runs, and the clustering baseline.
//!
//! Every run resolves its settings from (highest precedence first) explicit
//! flags, an optional `key=value` config file, and built-in defaults, then
//! writes the resolved values to `config.txt` in the output directory. All
//! randomness flows from the single `--seed` through named sub-streams, so
//! a run is reproducible from its echo file alone.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use trace_oracle::cluster::{grid_search, grid_to_csv};
use trace_oracle::io::{read_trace_file, write_trace_file};
use trace_oracle::oracle::{
    read_checkpoint_file, write_checkpoint_file, Checkpoint, OracleConfig, NO_MASK,
    CHECKPOINT_VERSION,
};
use trace_oracle::report::EvalReport;
use trace_oracle::subjects::{
    generate_corpus, generate_inputs, manifest_to_csv, subject_by_name, GenConfig,
    MutationOperator,
};
use trace_oracle::trace::{Trace, Verdict};
use trace_oracle::train::{
    ablate, classify_all, cross_eval, run_pipeline, sweep_fraction, AblationFlag, AblationSpec,
    SplitSpec, TrainConfig, DEFAULT_SWEEP_FRACTIONS,
};

#[derive(Parser)]
#[command(name = "trace-oracle", version, about = "Learned test oracles over execution traces")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a labelled trace corpus from a built-in subject program.
    Gen(GenArgs),
    /// Train a pass/fail classifier on a labelled corpus.
    Train(TrainArgs),
    /// Classify traces with a saved checkpoint.
    Eval(EvalArgs),
    /// Re-run the pipeline across several training fractions.
    Sweep(SweepArgs),
    /// Compare the full encoding against one dropped trace channel.
    Ablate(AblateArgs),
    /// Train on one corpus and evaluate on another.
    Cross(CrossArgs),
    /// Cluster traces by callee counts and score the grid against labels.
    Baseline(BaselineArgs),
}

/// Flags shared by every subcommand.
#[derive(Args)]
struct CommonArgs {
    /// Output directory for artifacts (created if missing) [default: out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; every random choice derives from it via named streams
    /// [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Optional key=value defaults file; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Training hyperparameter flags shared by train, sweep, ablate, and cross.
#[derive(Args)]
struct TrainKnobs {
    /// Classification threshold: FAIL iff p_fail >= threshold [default: 0.5].
    #[arg(long)]
    threshold: Option<f64>,
    /// Names seen fewer than this many times in training become UNK
    /// [default: 2].
    #[arg(long)]
    kmin: Option<u64>,
    /// Encoder cap on trace lines; longer traces keep their first lines
    /// [default: 1000].
    #[arg(long)]
    max_lines: Option<usize>,
    /// Traces per Adam step [default: 32].
    #[arg(long)]
    batch: Option<usize>,
    /// Epoch cap [default: 100].
    #[arg(long)]
    epochs: Option<usize>,
    /// Stale epochs tolerated before early stopping [default: 10].
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Args)]
struct GenArgs {
    /// Built-in subject program to run.
    #[arg(long)]
    subject: Option<String>,
    /// Number of generated test inputs (also the PASS trace count)
    /// [default: 100].
    #[arg(long)]
    inputs: Option<usize>,
    /// Cap on mutant executions while hunting failures [default: 20x inputs].
    #[arg(long)]
    budget: Option<usize>,
    /// Comma-separated mutation operator classes to sample from
    /// (e.g. RELATIONAL_OP,ARG_SWAP) [default: all].
    #[arg(long)]
    ops: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Labelled trace corpus to train on.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Fraction of the corpus used for training, in (0, 1) [default: 0.1].
    #[arg(long)]
    fraction: Option<f64>,
    #[command(flatten)]
    knobs: TrainKnobs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint written by a train run.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Traces to classify; labels, when present, feed the aggregate report.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Override the checkpoint's classification threshold.
    #[arg(long)]
    threshold: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Labelled trace corpus.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Comma-separated training fractions; values >= 1 are percentages
    /// (5,10,15 means 5%, 10%, 15%) [default: 5,10,15,20,25,30].
    #[arg(long)]
    fractions: Option<String>,
    #[command(flatten)]
    knobs: TrainKnobs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct AblateArgs {
    /// Labelled trace corpus.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Fraction of the corpus used for training, in (0, 1) [default: 0.1].
    #[arg(long)]
    fraction: Option<f64>,
    /// Trace channel to remove: FUNCTION_NAMES, RETURN_VALUES, ARGUMENTS,
    /// HALF_LINES, or GLOBAL_STATE.
    #[arg(long)]
    drop: Option<String>,
    #[command(flatten)]
    knobs: TrainKnobs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CrossArgs {
    /// Corpus whose training split fits the model.
    #[arg(long)]
    train_traces: Option<PathBuf>,
    /// Corpus the fitted model is evaluated on.
    #[arg(long)]
    eval_traces: Option<PathBuf>,
    /// Fraction of the training corpus used for training, in (0, 1)
    /// [default: 0.1].
    #[arg(long)]
    fraction: Option<f64>,
    #[command(flatten)]
    knobs: TrainKnobs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct BaselineArgs {
    /// Labelled trace corpus.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Callee names seen fewer than this many times become UNK [default: 2].
    #[arg(long)]
    kmin: Option<u64>,
    #[command(flatten)]
    common: CommonArgs,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Ablate(a) => cmd_ablate(a),
        Cmd::Cross(a) => cmd_cross(a),
        Cmd::Baseline(a) => cmd_baseline(a),
    }
}

// ---------------------------------------------------------------------------
// Settings resolution: flags > config file > defaults.

/// Entries of an optional `key=value` config file. Each lookup consumes its
/// entry so leftovers can be reported as unknown keys.
struct FileConfig {
    entries: std::collections::BTreeMap<String, String>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut entries = std::collections::BTreeMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    anyhow!("config file {}: line {}: expected key=value, got {raw:?}", path.display(), i + 1)
                })?;
                entries.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(FileConfig { entries })
    }

    /// Removes and parses `key`, if the file defined it.
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow!("config entry {key}={v}: {e}")),
        }
    }

    /// Errors on entries no flag of the subcommand consumed.
    fn finish(self) -> Result<()> {
        if let Some((k, _)) = self.entries.iter().next() {
            bail!("unknown config entry {k:?} for this subcommand");
        }
        Ok(())
    }
}

/// Resolved `--out` and `--seed`.
fn resolve_common(c: &CommonArgs, f: &mut FileConfig) -> Result<(PathBuf, u64)> {
    let out = match c.out.clone().or(f.take::<PathBuf>("out")?) {
        Some(p) => p,
        None => PathBuf::from("out"),
    };
    let seed = c.seed.or(f.take("seed")?).unwrap_or(0);
    Ok((out, seed))
}

/// Fully resolved training hyperparameters.
struct Knobs {
    threshold: f64,
    kmin: u64,
    max_lines: usize,
    batch: usize,
    epochs: usize,
    patience: usize,
}

impl Knobs {
    fn resolve(k: &TrainKnobs, f: &mut FileConfig) -> Result<Knobs> {
        let d = TrainConfig::default();
        Ok(Knobs {
            threshold: k.threshold.or(f.take("threshold")?).unwrap_or(d.oracle.threshold),
            kmin: k.kmin.or(f.take("kmin")?).unwrap_or(d.k_min),
            max_lines: k.max_lines.or(f.take("max_lines")?).unwrap_or(d.oracle.max_lines),
            batch: k.batch.or(f.take("batch")?).unwrap_or(d.batch_size),
            epochs: k.epochs.or(f.take("epochs")?).unwrap_or(d.max_epochs),
            patience: k.patience.or(f.take("patience")?).unwrap_or(d.patience),
        })
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            oracle: OracleConfig {
                threshold: self.threshold,
                max_lines: self.max_lines,
                ..OracleConfig::default()
            },
            k_min: self.kmin,
            batch_size: self.batch,
            max_epochs: self.epochs,
            patience: self.patience,
            ..TrainConfig::default()
        }
    }

    fn echo(&self, into: &mut Vec<(&'static str, String)>) {
        into.push(("threshold", self.threshold.to_string()));
        into.push(("kmin", self.kmin.to_string()));
        into.push(("max_lines", self.max_lines.to_string()));
        into.push(("batch", self.batch.to_string()));
        into.push(("epochs", self.epochs.to_string()));
        into.push(("patience", self.patience.to_string()));
    }
}

fn require<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| anyhow!("missing required --{flag} (pass the flag or a config file entry)"))
}

fn resolve_fraction(cli: Option<f64>, f: &mut FileConfig) -> Result<f64> {
    Ok(cli.or(f.take("fraction")?).unwrap_or(SplitSpec::default().train_fraction))
}

// ---------------------------------------------------------------------------
// Artifact plumbing.

/// Writes the resolved-settings echo, `command` first, then other keys in
/// the given order.
fn write_echo(out: &Path, command: &str, entries: &[(&'static str, String)]) -> Result<()> {
    let mut text = format!("command={command}\n");
    for (k, v) in entries {
        writeln!(text, "{k}={v}").expect("string write");
    }
    let path = out.join("config.txt");
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_file(out: &Path, name: &str, content: &str) -> Result<PathBuf> {
    let path = out.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn load_corpus(path: &Path) -> Result<Vec<Trace>> {
    read_trace_file(path).with_context(|| format!("reading trace file {}", path.display()))
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

fn metric(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.4}"),
        None => "n/a".to_string(),
    }
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
    }
}

// ---------------------------------------------------------------------------
// Subcommands.

fn cmd_gen(a: GenArgs) -> Result<()> {
    let mut f = FileConfig::load(a.common.config.as_deref())?;
    let (out, seed) = resolve_common(&a.common, &mut f)?;
    let subject_name = require(a.subject.or(f.take("subject")?), "subject")?;
    let n_inputs: usize = a.inputs.or(f.take("inputs")?).unwrap_or(100);
    let budget: usize = a.budget.or(f.take("budget")?).unwrap_or(n_inputs.saturating_mul(20));
    let ops_raw: Option<String> = match a.ops {
        Some(s) => Some(s),
        None => f.take("ops")?,
    };
    f.finish()?;

    let allowed_ops = match &ops_raw {
        None => None,
        Some(s) => {
            let mut set = BTreeSet::new();
            for tok in s.split(',').filter(|t| !t.trim().is_empty()) {
                set.insert(MutationOperator::from_str(tok.trim()).map_err(|e| anyhow!(e))?);
            }
            if set.is_empty() {
                bail!("--ops was given but names no operator class");
            }
            Some(set)
        }
    };
    let ops_echo = match &allowed_ops {
        None => "all".to_string(),
        Some(set) => set.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(","),
    };

    let subject = subject_by_name(&subject_name)?;
    let inputs = generate_inputs(&subject, n_inputs, seed);
    let cfg = GenConfig { budget, allowed_ops };
    let corpus = generate_corpus(&subject, &inputs, &cfg, seed)?;

    prepare_out(&out)?;
    let mut echo = vec![
        ("subject", subject_name.clone()),
        ("inputs", n_inputs.to_string()),
        ("budget", budget.to_string()),
        ("ops", ops_echo),
        ("seed", seed.to_string()),
        ("out", out.display().to_string()),
    ];
    echo.sort_by_key(|(k, _)| *k);
    write_echo(&out, "gen", &echo)?;

    let traces_path = out.join("traces.jsonl");
    write_trace_file(&traces_path, &corpus.traces)
        .with_context(|| format!("writing {}", traces_path.display()))?;
    write_file(&out, "manifest.csv", &manifest_to_csv(&corpus.manifest))?;

    let fails = corpus.manifest.iter().filter(|r| r.label == Verdict::Fail).count();
    let passes = corpus.manifest.len() - fails;
    println!(
        "wrote {} traces ({passes} pass, {fails} fail) for subject {subject_name} to {}",
        corpus.traces.len(),
        traces_path.display()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut f = FileConfig::load(a.common.config.as_deref())?;
    let (out, seed) = resolve_common(&a.common, &mut f)?;
    let traces_path = require(a.traces.or(f.take("traces")?), "traces")?;
    let fraction = resolve_fraction(a.fraction, &mut f)?;
    let knobs = Knobs::resolve(&a.knobs, &mut f)?;
    f.finish()?;

    let corpus = load_corpus(&traces_path)?;
    let cfg = knobs.train_config();
    let split = SplitSpec { train_fraction: fraction, seed, stratified: true };
    let run = run_pipeline(&corpus, &cfg, &split, seed)?;

    prepare_out(&out)?;
    let mut echo = vec![
        ("traces", traces_path.display().to_string()),
        ("fraction", fraction.to_string()),
        ("seed", seed.to_string()),
        ("out", out.display().to_string()),
    ];
    knobs.echo(&mut echo);
    echo.sort_by_key(|(k, _)| *k);
    write_echo(&out, "train", &echo)?;

    let cp = Checkpoint { version: CHECKPOINT_VERSION, seed, params: run.outcome.params.clone() };
    let cp_path = out.join("checkpoint.json");
    write_checkpoint_file(&cp_path, &cp)
        .with_context(|| format!("writing {}", cp_path.display()))?;

    let mut loss = String::from("epoch,loss\n");
    for (i, l) in run.outcome.loss_history.iter().enumerate() {
        writeln!(loss, "{},{}", i + 1, l).expect("string write");
    }
    write_file(&out, "loss.csv", &loss)?;

    let report = format!(
        "{}\n{}\n",
        EvalReport::csv_header(),
        run.report.csv_row(run.outcome.epochs, seed)
    );
    write_file(&out, "report.csv", &report)?;

    println!(
        "trained on {} traces, evaluated on {} ({} epochs{}): precision={} recall={} specificity={} f1={}",
        run.train_size,
        run.test_size,
        run.outcome.epochs,
        if run.outcome.stopped_early { ", stopped early" } else { "" },
        metric(run.report.precision()),
        metric(run.report.recall()),
        metric(run.report.specificity()),
        metric(run.report.f1()),
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let mut f = FileConfig::load(a.common.config.as_deref())?;
    let (out, seed) = resolve_common(&a.common, &mut f)?;
    let cp_path = require(a.checkpoint.or(f.take("checkpoint")?), "checkpoint")?;
    let traces_path = require(a.traces.or(f.take("traces")?), "traces")?;
    let threshold: Option<f64> = match a.threshold {
        Some(t) => Some(t),
        None => f.take("threshold")?,
    };
    f.finish()?;

    let mut cp = read_checkpoint_file(&cp_path)
        .with_context(|| format!("reading checkpoint {}", cp_path.display()))?;
    if let Some(t) = threshold {
        cp.params.config.threshold = t;
        cp.params.validate().context("threshold override")?;
    }
    let traces = load_corpus(&traces_path)?;
    let classified = classify_all(&cp.params, &traces, NO_MASK);

    prepare_out(&out)?;
    let mut echo = vec![
        ("checkpoint", cp_path.display().to_string()),
        ("traces", traces_path.display().to_string()),
        ("threshold", cp.params.config.threshold.to_string()),
        ("seed", seed.to_string()),
        ("out", out.display().to_string()),
    ];
    echo.sort_by_key(|(k, _)| *k);
    write_echo(&out, "eval", &echo)?;

    let mut verdicts = String::from("trace_id,p_fail,verdict,label\n");
    for (c, t) in classified.iter().zip(&traces) {
        let label = t.label.map(verdict_str).unwrap_or("");
        writeln!(verdicts, "{},{},{},{label}", c.trace_id, c.p_fail, verdict_str(c.verdict))
            .expect("string write");
    }
    write_file(&out, "verdicts.csv", &verdicts)?;

    let flagged = classified.iter().filter(|c| c.verdict == Verdict::Fail).count();
    let unlabelled = traces.iter().filter(|t| t.label.is_none()).count();
    if unlabelled == 0 {
        let report = EvalReport::from_pairs(
            classified.iter().zip(&traces).map(|(c, t)| (c.verdict, t.label.expect("checked"))),
        );
        write_file(
            &out,
            "report.csv",
            &format!("{}\n{}\n", EvalReport::csv_header(), report.csv_row(0, cp.seed)),
        )?;
        println!(
            "classified {} traces ({flagged} flagged FAIL): precision={} recall={} specificity={} f1={}",
            traces.len(),
            metric(report.precision()),
            metric(report.recall()),
            metric(report.specificity()),
            metric(report.f1()),
        );
    } else {
        println!(
            "classified {} traces ({flagged} flagged FAIL); {unlabelled} unlabelled, aggregate metrics omitted",
            traces.len()
        );
    }
    Ok(())
}

/// Parses `--fractions`; values at or above 1 read as percentages.
fn parse_fractions(s: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for tok in s.split(',').filter(|t| !t.trim().is_empty()) {
        let raw: f64 = tok
            .trim()
            .parse()
            .map_err(|e| anyhow!("fraction {tok:?}: {e}"))?;
        let v = if raw >= 1.0 { raw / 100.0 } else { raw };
        if !(v > 0.0 && v < 1.0) {
            bail!("fraction {tok:?} must land strictly between 0 and 1 after percentage scaling");
        }
        out.push(v);
    }
    if out.is_empty() {
        bail!("--fractions names no values");
    }
    Ok(out)
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let mut f = FileConfig::load(a.common.config.as_deref())?;
    let (out, seed) = resolve_common(&a.common, &mut f)?;
    let traces_path = require(a.traces.or(f.take("traces")?), "traces")?;
    let fractions_raw: Option<String> = match a.fractions {
        Some(s) => Some(s),
        None => f.take("fractions")?,
    };
    let knobs = Knobs::resolve(&a.knobs, &mut f)?;
    f.finish()?;

    let fractions = match &fractions_raw {
        Some(s) => parse_fractions(s)?,
        None => DEFAULT_SWEEP_FRACTIONS.to_vec(),
    };

    let corpus = load_corpus(&traces_path)?;
    let cfg = knobs.train_config();
    let rows = sweep_fraction(&corpus, &fractions, &cfg, seed)?;

    prepare_out(&out)?;
    let mut echo = vec![
        ("traces", traces_path.display().to_string()),
        (
            "fractions",
            fractions.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        ),
        ("seed", seed.to_string()),
        ("out", out.display().to_string()),
    ];
    knobs.echo(&mut echo);
    echo.sort_by_key(|(k, _)| *k);
    write_echo(&out, "sweep", &echo)?;

    let mut csv = format!("fraction,{}\n", EvalReport::csv_header());
    for row in &rows {
        writeln!(csv, "{},{}", row.fraction, row.report.csv_row(row.epochs, seed))
            .expect("string write");
    }
    write_file(&out, "sweep.csv", &csv)?;

    let best = rows
        .iter()
        .max_by(|a, b| {
            let fa = a.report.f1().unwrap_or(-1.0);
            let fb = b.report.f1().unwrap_or(-1.0);
            fa.partial_cmp(&fb).expect("finite f1")
        })
        .expect("fractions checked non-empty");
    let mut summary = format!("swept {} training fractions\n", rows.len());
    for row in &rows {
        writeln!(
            summary,
            "fraction={} precision={} recall={} specificity={} f1={} epochs={}",
            row.fraction,
            metric(row.report.precision()),
            metric(row.report.recall()),
            metric(row.report.specificity()),
            metric(row.report.f1()),
            row.epochs
        )
        .expect("string write");
    }
    writeln!(summary, "best: fraction={} f1={}", best.fraction, metric(best.report.f1()))
        .expect("string write");
    write_file(&out, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let mut f = FileConfig::load(a.common.config.as_deref())?;
    let (out, seed) = resolve_common(&a.common, &mut f)?;
    let traces_path = require(a.traces.or(f.take("traces")?), "traces")?;
    let fraction = resolve_fraction(a.fraction, &mut f)?;
    let drop_raw = require(a.drop.or(f.take("drop")?), "drop")?;
    let knobs = Knobs::resolve(&a.knobs, &mut f)?;
    f.finish()?;

    let flag = AblationFlag::from_str(&drop_raw).map_err(|e| anyhow!(e))?;
    let corpus = load_corpus(&traces_path)?;
    let cfg = knobs.train_config();
    let split = SplitSpec { train_fraction: fraction, seed, stratified: true };

    let full = run_pipeline(&corpus, &cfg, &split, seed)?;
    let dropped = ablate(&corpus, &AblationSpec::single(flag), &cfg, &split, seed)?;

    prepare_out(&out)?;
    let mut echo = vec![
        ("traces", traces_path.display().to_string()),
        ("fraction", fraction.to_string()),
        ("drop", flag.to_string()),
        ("seed", seed.to_string()),
        ("out", out.display().to_string()),
    ];
    knobs.echo(&mut echo);
    echo.sort_by_key(|(k, _)| *k);
    write_echo(&out, "ablate", &echo)?;

    let csv = format!(
        "configuration,{}\nFULL,{}\n{},{}\n",
        EvalReport::csv_header(),
        full.report.csv_row(full.outcome.epochs, seed),
        flag,
        dropped.report.csv_row(dropped.outcome.epochs, seed),
    );
    write_file(&out, "ablate.csv", &csv)?;

    let summary = format!(
        "FULL: precision={} recall={} specificity={} f1={}\n{}: precision={} recall={} specificity={} f1={}\n",
        metric(full.report.precision()),
        metric(full.report.recall()),
        metric(full.report.specificity()),
        metric(full.report.f1()),
        flag,
        metric(dropped.report.precision()),
        metric(dropped.report.recall()),
        metric(dropped.report.specificity()),
        metric(dropped.report.f1()),
    );
    write_file(&out, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_cross(a: CrossArgs) -> Result<()> {
    let mut f = FileConfig::load(a.common.config.as_deref())?;
    let (out, seed) = resolve_common(&a.common, &mut f)?;
    let train_path = require(a.train_traces.or(f.take("train_traces")?), "train-traces")?;
    let eval_path = require(a.eval_traces.or(f.take("eval_traces")?), "eval-traces")?;
    let fraction = resolve_fraction(a.fraction, &mut f)?;
    let knobs = Knobs::resolve(&a.knobs, &mut f)?;
    f.finish()?;

    let corpus_a = load_corpus(&train_path)?;
    let corpus_b = load_corpus(&eval_path)?;
    let cfg = knobs.train_config();
    let split = SplitSpec { train_fraction: fraction, seed, stratified: true };
    let outcome = cross_eval(&corpus_a, &corpus_b, &cfg, &split, seed)?;

    prepare_out(&out)?;
    let mut echo = vec![
        ("train_traces", train_path.display().to_string()),
        ("eval_traces", eval_path.display().to_string()),
        ("fraction", fraction.to_string()),
        ("seed", seed.to_string()),
        ("out", out.display().to_string()),
    ];
    knobs.echo(&mut echo);
    echo.sort_by_key(|(k, _)| *k);
    write_echo(&out, "cross", &echo)?;

    let epochs = outcome.outcome.epochs;
    let mut csv = format!("subject,{}\n", EvalReport::csv_header());
    for (subject, report) in &outcome.per_subject {
        writeln!(csv, "{subject},{}", report.csv_row(epochs, seed)).expect("string write");
    }
    writeln!(csv, "OVERALL,{}", outcome.overall.csv_row(epochs, seed)).expect("string write");
    write_file(&out, "cross.csv", &csv)?;

    let mut summary = String::new();
    for (subject, report) in &outcome.per_subject {
        writeln!(
            summary,
            "{subject}: precision={} recall={} specificity={} f1={}",
            metric(report.precision()),
            metric(report.recall()),
            metric(report.specificity()),
            metric(report.f1()),
        )
        .expect("string write");
    }
    writeln!(
        summary,
        "overall: precision={} recall={} specificity={} f1={}",
        metric(outcome.overall.precision()),
        metric(outcome.overall.recall()),
        metric(outcome.overall.specificity()),
        metric(outcome.overall.f1()),
    )
    .expect("string write");
    write_file(&out, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_baseline(a: BaselineArgs) -> Result<()> {
    let mut f = FileConfig::load(a.common.config.as_deref())?;
    let (out, seed) = resolve_common(&a.common, &mut f)?;
    let traces_path = require(a.traces.or(f.take("traces")?), "traces")?;
    let kmin: u64 = a.kmin.or(f.take("kmin")?).unwrap_or(2);
    f.finish()?;

    let corpus = load_corpus(&traces_path)?;
    let grid = grid_search(&corpus, kmin)?;

    prepare_out(&out)?;
    let mut echo = vec![
        ("traces", traces_path.display().to_string()),
        ("kmin", kmin.to_string()),
        ("seed", seed.to_string()),
        ("out", out.display().to_string()),
    ];
    echo.sort_by_key(|(k, _)| *k);
    write_echo(&out, "baseline", &echo)?;

    write_file(&out, "baseline.csv", &grid_to_csv(&grid.rows))?;

    let summary = format!(
        "scored {} linkage/fraction configurations\nbest: linkage={} fraction={} precision={} recall={} specificity={} f1={}\n",
        grid.rows.len(),
        grid.best.linkage,
        grid.best.fraction,
        metric(grid.best.report.precision()),
        metric(grid.best.report.recall()),
        metric(grid.best.report.specificity()),
        metric(grid.best.report.f1()),
    );
    write_file(&out, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}
