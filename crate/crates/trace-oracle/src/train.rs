//! Splitting, training, evaluation, sweeps, ablations, and cross-subject
//! transfer.
//!
//! The training loop is plain supervised learning: shuffled epochs, one Adam
//! update per batch on the mean gradient, binary cross-entropy against the
//! FAIL-positive label. Early stopping watches the mean epoch training loss
//! only — there is no validation set, and the test split is never touched
//! until evaluation, which the label-corruption test below enforces.
//!
//! Everything is deterministic given the seed: the split draws from the
//! "split" stream, epoch shuffles from the "shuffle" stream, and per-batch
//! gradients are reduced in batch order no matter how many threads computed
//! them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::nn::{AdamConfig, AdamState, Tensor};
use crate::oracle::{
    trace_loss_grads, ConfigError, EncodeMask, ModelParams, OracleConfig, NO_MASK,
};
use crate::report::EvalReport;
use crate::rng::stream;
use crate::trace::{Trace, Verdict};
use crate::vocab::{build_vocab, VocabError};

/// How to divide a labelled corpus into train and test portions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Fraction of the corpus that becomes training data, in (0, 1).
    pub train_fraction: f64,
    pub seed: u64,
    /// Preserve the pass/fail ratio across both sides.
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.10, seed: 0, stratified: true }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("cannot split an empty corpus")]
    Empty,
    #[error("trace {0} has no label; splitting needs a fully labelled corpus")]
    Unlabelled(String),
    #[error("corpus contains only one label class")]
    SingleClass,
    #[error("train fraction {0} yields an empty train split")]
    EmptyTrain(f64),
    #[error("train fraction {0} yields an empty test split")]
    EmptyTest(f64),
}

/// Deterministic, optionally stratified split. `|train| =
/// round(fraction * n)`, allocated across label classes by largest
/// remainder when stratifying. Outputs preserve corpus order.
pub fn split(corpus: &[Trace], spec: &SplitSpec) -> Result<(Vec<Trace>, Vec<Trace>), SplitError> {
    if corpus.is_empty() {
        return Err(SplitError::Empty);
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(SplitError::BadFraction(spec.train_fraction));
    }
    let mut labels = Vec::with_capacity(corpus.len());
    for t in corpus {
        labels.push(t.label.ok_or_else(|| SplitError::Unlabelled(t.trace_id.clone()))?);
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(SplitError::SingleClass);
    }
    let n = corpus.len();
    let n_train = (spec.train_fraction * n as f64).round() as usize;
    if n_train == 0 {
        return Err(SplitError::EmptyTrain(spec.train_fraction));
    }
    if n_train >= n {
        return Err(SplitError::EmptyTest(spec.train_fraction));
    }

    let mut rng = stream(spec.seed, "split");
    let mut train_idx: BTreeSet<usize> = BTreeSet::new();
    if spec.stratified {
        // Fixed class order (FAIL first) keeps quota tie-breaks deterministic.
        let classes = [Verdict::Fail, Verdict::Pass];
        let members: Vec<Vec<usize>> = classes
            .iter()
            .map(|&c| (0..n).filter(|&i| labels[i] == c).collect())
            .collect();
        // Largest-remainder allocation of n_train across classes, in exact
        // integer arithmetic.
        let mut quotas: Vec<usize> = Vec::new();
        let mut remainders: Vec<(usize, usize)> = Vec::new(); // (numerator residue, class)
        for (ci, m) in members.iter().enumerate() {
            let num = n_train * m.len();
            quotas.push(num / n);
            remainders.push((num % n, ci));
        }
        let mut leftover = n_train - quotas.iter().sum::<usize>();
        remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, ci) in &remainders {
            if leftover == 0 {
                break;
            }
            quotas[ci] += 1;
            leftover -= 1;
        }
        for (ci, m) in members.iter().enumerate() {
            let mut pool = m.clone();
            pool.shuffle(&mut rng);
            train_idx.extend(pool.into_iter().take(quotas[ci]));
        }
    } else {
        let mut pool: Vec<usize> = (0..n).collect();
        pool.shuffle(&mut rng);
        train_idx.extend(pool.into_iter().take(n_train));
    }

    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (i, t) in corpus.iter().enumerate() {
        if train_idx.contains(&i) {
            train.push(t.clone());
        } else {
            test.push(t.clone());
        }
    }
    Ok((train, test))
}

/// Everything a training run needs besides the data and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub oracle: OracleConfig,
    pub adam: AdamConfig,
    /// Ablation mask applied identically during training and evaluation.
    pub mask: EncodeMask,
    /// Vocabulary frequency threshold (names seen fewer times become UNK).
    pub k_min: u64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive epochs without `min_improvement` before stopping.
    pub patience: usize,
    pub min_improvement: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            oracle: OracleConfig::default(),
            adam: AdamConfig::default(),
            mask: NO_MASK,
            k_min: 2,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            min_improvement: 1e-4,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("cannot train on an empty set")]
    Empty,
    #[error("trace {0} has no label; training needs a fully labelled set")]
    Unlabelled(String),
    #[error("training set contains only one label class; both PASS and FAIL are required")]
    SingleClass,
    #[error("batch size and max epochs must be at least 1")]
    BadSchedule,
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean training loss per epoch, in epoch order.
    pub loss_history: Vec<f64>,
    /// Number of epochs actually run.
    pub epochs: usize,
    /// True when the patience rule ended training before `max_epochs`.
    pub stopped_early: bool,
}

/// Trains a fresh model on a labelled set. The vocabulary comes from this
/// set alone, parameters start from the seeded init, and each batch applies
/// one Adam step on the mean of per-trace gradients.
pub fn train(train_set: &[Trace], cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome, TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::Empty);
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(TrainError::BadSchedule);
    }
    cfg.oracle.validate()?;
    let mut labels = Vec::with_capacity(train_set.len());
    for t in train_set {
        labels.push(t.label.ok_or_else(|| TrainError::Unlabelled(t.trace_id.clone()))?);
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(TrainError::SingleClass);
    }

    let vocab = build_vocab(train_set, cfg.k_min)?;
    let mut params = ModelParams::init(cfg.oracle.clone(), vocab, seed);
    let mut adam = AdamState::new(cfg.adam, &params.tensors());
    let mut shuffle_rng = stream(seed, "shuffle");

    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history: Vec<f64> = Vec::new();
    let mut best = f64::INFINITY;
    let mut streak = 0usize;
    let mut stopped_early = false;

    for _ in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            // Per-trace passes may run on any thread; results come back in
            // batch order, and the reduction below is sequential, so the
            // update is identical no matter the thread count.
            let results: Vec<(f64, Vec<Tensor>)> = batch
                .par_iter()
                .map(|&i| {
                    let (loss, _, grads) = trace_loss_grads(&params, &train_set[i], labels[i], cfg.mask);
                    (loss, grads)
                })
                .collect();
            let mut mean: Vec<Tensor> =
                params.tensors().iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect();
            for (loss, grads) in &results {
                epoch_loss += loss;
                for (acc, g) in mean.iter_mut().zip(grads) {
                    for (a, v) in acc.data.iter_mut().zip(&g.data) {
                        *a += v;
                    }
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for t in mean.iter_mut() {
                t.data.iter_mut().for_each(|v| *v *= inv);
            }
            adam.apply(params.tensors_mut(), &mean);
        }
        let epoch_loss = epoch_loss / n as f64;
        history.push(epoch_loss);
        if best - epoch_loss >= cfg.min_improvement {
            best = epoch_loss;
            streak = 0;
        } else {
            streak += 1;
            if streak >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let epochs = history.len();
    Ok(TrainOutcome { params, loss_history: history, epochs, stopped_early })
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trace {0} has no label; evaluation needs a labelled set")]
    Unlabelled(String),
}

/// One classified trace, for verdict listings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedTrace {
    pub trace_id: String,
    pub p_fail: f64,
    pub verdict: Verdict,
}

fn verdict_of(m: &ModelParams, t: &Trace, mask: EncodeMask) -> (f64, Verdict) {
    let p = crate::oracle::p_fail_masked(m, t, mask);
    let v = if p >= m.config.threshold { Verdict::Fail } else { Verdict::Pass };
    (p, v)
}

fn evaluate_refs(m: &ModelParams, test: &[&Trace], mask: EncodeMask) -> Result<EvalReport, EvalError> {
    let pairs: Vec<(Verdict, Verdict)> = test
        .par_iter()
        .map(|t| {
            let label = t.label.ok_or_else(|| EvalError::Unlabelled(t.trace_id.clone()))?;
            Ok((verdict_of(m, t, mask).1, label))
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(EvalReport::from_pairs(pairs))
}

/// Confusion counts of the model's verdicts against the labels.
pub fn evaluate(m: &ModelParams, test: &[Trace]) -> Result<EvalReport, EvalError> {
    evaluate_masked(m, test, NO_MASK)
}

/// [`evaluate`] under an ablation mask.
pub fn evaluate_masked(m: &ModelParams, test: &[Trace], mask: EncodeMask) -> Result<EvalReport, EvalError> {
    evaluate_refs(m, &test.iter().collect::<Vec<_>>(), mask)
}

/// Verdicts for every trace (labels not required).
pub fn classify_all(m: &ModelParams, traces: &[Trace], mask: EncodeMask) -> Vec<ClassifiedTrace> {
    traces
        .par_iter()
        .map(|t| {
            let (p_fail, verdict) = verdict_of(m, t, mask);
            ClassifiedTrace { trace_id: t.trace_id.clone(), p_fail, verdict }
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Trains on one set and evaluates on another, under the config's mask.
/// This is the only path from training to a report, so the no-leakage
/// guarantee (test data never influences parameters) holds everywhere.
pub fn train_and_evaluate(
    train_set: &[Trace],
    test_set: &[Trace],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(TrainOutcome, EvalReport), PipelineError> {
    let outcome = train(train_set, cfg, seed)?;
    let report = evaluate_masked(&outcome.params, test_set, cfg.mask)?;
    Ok((outcome, report))
}

/// A full split → train → evaluate run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub outcome: TrainOutcome,
    pub report: EvalReport,
    pub train_size: usize,
    pub test_size: usize,
}

/// Splits the corpus, trains on the train side, evaluates on the test side.
pub fn run_pipeline(
    corpus: &[Trace],
    cfg: &TrainConfig,
    split_spec: &SplitSpec,
    seed: u64,
) -> Result<RunOutcome, PipelineError> {
    let (train_set, test_set) = split(corpus, split_spec)?;
    let (outcome, report) = train_and_evaluate(&train_set, &test_set, cfg, seed)?;
    Ok(RunOutcome { outcome, report, train_size: train_set.len(), test_size: test_set.len() })
}

/// One sweep result.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub fraction: f64,
    pub report: EvalReport,
    pub epochs: usize,
}

/// Independent split/train/evaluate per training fraction, all under the
/// same seed.
pub fn sweep_fraction(
    corpus: &[Trace],
    fractions: &[f64],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<SweepRow>, PipelineError> {
    let mut rows = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let spec = SplitSpec { train_fraction: fraction, seed, stratified: true };
        let run = run_pipeline(corpus, cfg, &spec, seed)?;
        rows.push(SweepRow { fraction, report: run.report, epochs: run.outcome.epochs });
    }
    Ok(rows)
}

/// The sweep fractions used when none are given: 5% through 30%.
pub const DEFAULT_SWEEP_FRACTIONS: [f64; 6] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30];

/// One trace information channel that an ablation can remove.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AblationFlag {
    FunctionNames,
    ReturnValues,
    Arguments,
    HalfLines,
    GlobalState,
}

impl AblationFlag {
    pub const ALL: [AblationFlag; 5] = [
        AblationFlag::FunctionNames,
        AblationFlag::ReturnValues,
        AblationFlag::Arguments,
        AblationFlag::HalfLines,
        AblationFlag::GlobalState,
    ];

    /// The encoder mask that removes this channel.
    pub fn mask(self) -> EncodeMask {
        match self {
            AblationFlag::FunctionNames => EncodeMask { zero_names: true, ..NO_MASK },
            AblationFlag::ReturnValues => EncodeMask { zero_ret: true, ..NO_MASK },
            AblationFlag::Arguments => EncodeMask { zero_args: true, ..NO_MASK },
            AblationFlag::HalfLines => EncodeMask { half_lines: true, ..NO_MASK },
            AblationFlag::GlobalState => EncodeMask { zero_globals: true, ..NO_MASK },
        }
    }
}

impl fmt::Display for AblationFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AblationFlag::FunctionNames => "FUNCTION_NAMES",
            AblationFlag::ReturnValues => "RETURN_VALUES",
            AblationFlag::Arguments => "ARGUMENTS",
            AblationFlag::HalfLines => "HALF_LINES",
            AblationFlag::GlobalState => "GLOBAL_STATE",
        };
        f.write_str(s)
    }
}

impl FromStr for AblationFlag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "FUNCTION_NAMES" => Ok(AblationFlag::FunctionNames),
            "RETURN_VALUES" => Ok(AblationFlag::ReturnValues),
            "ARGUMENTS" => Ok(AblationFlag::Arguments),
            "HALF_LINES" => Ok(AblationFlag::HalfLines),
            "GLOBAL_STATE" => Ok(AblationFlag::GlobalState),
            other => Err(format!(
                "unknown ablation flag {other:?}; expected one of FUNCTION_NAMES, \
                 RETURN_VALUES, ARGUMENTS, HALF_LINES, GLOBAL_STATE"
            )),
        }
    }
}

/// The set of channels an ablation run removes. Runs remove exactly one
/// channel at a time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AblationSpec(pub BTreeSet<AblationFlag>);

impl AblationSpec {
    pub fn single(flag: AblationFlag) -> Self {
        AblationSpec(BTreeSet::from([flag]))
    }
}

#[derive(Debug, Error)]
pub enum AblateError {
    #[error("ablation needs exactly one flag; none were given")]
    EmptyFlags,
    #[error("ablation removes one channel at a time; got {0} flags")]
    MultipleFlags(usize),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// A full run with one information channel removed from both the train and
/// test encodings.
pub fn ablate(
    corpus: &[Trace],
    spec: &AblationSpec,
    cfg: &TrainConfig,
    split_spec: &SplitSpec,
    seed: u64,
) -> Result<RunOutcome, AblateError> {
    let flag = match spec.0.len() {
        0 => return Err(AblateError::EmptyFlags),
        1 => *spec.0.iter().next().expect("len checked"),
        n => return Err(AblateError::MultipleFlags(n)),
    };
    let mut cfg = cfg.clone();
    cfg.mask = flag.mask();
    Ok(run_pipeline(corpus, &cfg, split_spec, seed)?)
}

#[derive(Debug, Error)]
pub enum CrossError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("nothing to evaluate: every target trace was used for training")]
    EmptyEval,
}

/// Result of training on subject A and evaluating on subject B.
#[derive(Debug, Clone)]
pub struct CrossOutcome {
    pub outcome: TrainOutcome,
    /// One report per subject present in the evaluation set, sorted by name.
    pub per_subject: Vec<(String, EvalReport)>,
    pub overall: EvalReport,
}

/// Trains on a split of `corpus_a` and evaluates on `corpus_b`, minus any
/// trace identity that was trained on (so evaluating a corpus against
/// itself degenerates to the usual held-out evaluation). The vocabulary
/// comes from A's training split alone; B's unseen names hit UNK.
pub fn cross_eval(
    corpus_a: &[Trace],
    corpus_b: &[Trace],
    cfg: &TrainConfig,
    split_spec: &SplitSpec,
    seed: u64,
) -> Result<CrossOutcome, CrossError> {
    let (train_set, _) = split(corpus_a, split_spec).map_err(PipelineError::from)?;
    let outcome = train(&train_set, cfg, seed).map_err(PipelineError::from)?;

    let trained: BTreeSet<(&str, &str)> =
        train_set.iter().map(|t| (t.subject.as_str(), t.trace_id.as_str())).collect();
    let eval_set: Vec<&Trace> =
        corpus_b.iter().filter(|t| !trained.contains(&(t.subject.as_str(), t.trace_id.as_str()))).collect();
    if eval_set.is_empty() {
        return Err(CrossError::EmptyEval);
    }

    let mut by_subject: BTreeMap<String, Vec<&Trace>> = BTreeMap::new();
    for t in &eval_set {
        by_subject.entry(t.subject.clone()).or_default().push(t);
    }
    let mut per_subject = Vec::with_capacity(by_subject.len());
    for (subject, traces) in by_subject {
        let report = evaluate_refs(&outcome.params, &traces, cfg.mask).map_err(PipelineError::from)?;
        per_subject.push((subject, report));
    }
    let overall = evaluate_refs(&outcome.params, &eval_set, cfg.mask).map_err(PipelineError::from)?;
    Ok(CrossOutcome { outcome, per_subject, overall })
}
