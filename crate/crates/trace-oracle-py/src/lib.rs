//! Python bindings for the trace-oracle toolkit: corpus generation,
//! training, classification, evaluation, checkpoints, and the clustering
//! baseline, mirroring the command-line subcommands in-process.

use std::collections::BTreeSet;
use std::fmt::Display;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use trace_oracle::cluster::grid_search;
use trace_oracle::io::{read_trace_file, write_trace_file};
use trace_oracle::oracle::{
    read_checkpoint_file, write_checkpoint_file, Checkpoint, OracleConfig, NO_MASK,
    CHECKPOINT_VERSION,
};
use trace_oracle::report::EvalReport;
use trace_oracle::subjects::{
    builtin_subjects, generate_corpus, generate_inputs, subject_by_name, GenConfig,
};
use trace_oracle::trace::{Trace, Verdict};
use trace_oracle::train::{classify_all, run_pipeline, SplitSpec, TrainConfig};

fn err<E: Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
    }
}

/// A list of execution traces, loadable from and savable to the JSONL
/// trace format.
#[pyclass]
struct Corpus {
    traces: Vec<Trace>,
}

#[pymethods]
impl Corpus {
    /// Reads a corpus from a JSONL trace file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Corpus> {
        Ok(Corpus { traces: read_trace_file(path).map_err(err)? })
    }

    /// Writes the corpus to a JSONL trace file.
    fn save(&self, path: &str) -> PyResult<()> {
        write_trace_file(path, &self.traces).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.traces.len()
    }

    fn trace_ids(&self) -> Vec<String> {
        self.traces.iter().map(|t| t.trace_id.clone()).collect()
    }

    /// Labels in corpus order; None where a trace is unlabelled.
    fn labels(&self) -> Vec<Option<&'static str>> {
        self.traces.iter().map(|t| t.label.map(verdict_str)).collect()
    }

    /// Distinct subject names present, sorted.
    fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.traces.iter().map(|t| t.subject.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    fn __repr__(&self) -> String {
        let fails = self.traces.iter().filter(|t| t.label == Some(Verdict::Fail)).count();
        let passes = self.traces.iter().filter(|t| t.label == Some(Verdict::Pass)).count();
        format!("Corpus({} traces, {passes} pass, {fails} fail)", self.traces.len())
    }
}

/// A trained pass/fail classifier with its configuration and vocabulary.
#[pyclass]
struct Model {
    cp: Checkpoint,
}

fn report_dict<'py>(py: Python<'py>, r: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("tp", r.tp)?;
    d.set_item("fp", r.fp)?;
    d.set_item("tn", r.tn)?;
    d.set_item("fn", r.r#fn)?;
    d.set_item("precision", r.precision())?;
    d.set_item("recall", r.recall())?;
    d.set_item("specificity", r.specificity())?;
    d.set_item("f1", r.f1())?;
    Ok(d)
}

#[pymethods]
impl Model {
    /// Reads a checkpoint written by `save` or the command-line trainer.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Model> {
        Ok(Model { cp: read_checkpoint_file(path).map_err(err)? })
    }

    /// Writes the model as a JSON checkpoint.
    fn save(&self, path: &str) -> PyResult<()> {
        write_checkpoint_file(path, &self.cp).map_err(err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.cp.seed
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.cp.params.config.threshold
    }

    /// Classifies every trace: a list of (trace_id, p_fail, verdict) rows.
    fn classify(&self, corpus: &Corpus) -> Vec<(String, f64, &'static str)> {
        classify_all(&self.cp.params, &corpus.traces, NO_MASK)
            .into_iter()
            .map(|c| (c.trace_id, c.p_fail, verdict_str(c.verdict)))
            .collect()
    }

    /// Scores the model against a fully labelled corpus; returns the
    /// confusion counts and derived metrics as a dict.
    fn evaluate<'py>(&self, py: Python<'py>, corpus: &Corpus) -> PyResult<Bound<'py, PyDict>> {
        let classified = classify_all(&self.cp.params, &corpus.traces, NO_MASK);
        let mut pairs = Vec::with_capacity(corpus.traces.len());
        for (c, t) in classified.iter().zip(&corpus.traces) {
            let label = t
                .label
                .ok_or_else(|| err(format!("trace {} has no label", t.trace_id)))?;
            pairs.push((c.verdict, label));
        }
        report_dict(py, &EvalReport::from_pairs(pairs))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(seed={}, vocab={}, threshold={})",
            self.cp.seed,
            self.cp.params.vocab.size(),
            self.cp.params.config.threshold
        )
    }
}

/// Names of the built-in subject programs.
#[pyfunction]
fn subjects() -> Vec<String> {
    builtin_subjects().iter().map(|s| s.name.to_string()).collect()
}

/// Generates a labelled corpus from a built-in subject: one passing trace
/// per input plus an equal number of mutant-failure traces when the budget
/// allows.
#[pyfunction]
#[pyo3(signature = (subject, inputs=100, seed=0, budget=None))]
fn generate(subject: &str, inputs: usize, seed: u64, budget: Option<usize>) -> PyResult<Corpus> {
    let s = subject_by_name(subject).map_err(err)?;
    let ins = generate_inputs(&s, inputs, seed);
    let cfg = GenConfig {
        budget: budget.unwrap_or_else(|| inputs.saturating_mul(20)),
        allowed_ops: None,
    };
    let corpus = generate_corpus(&s, &ins, &cfg, seed).map_err(err)?;
    Ok(Corpus { traces: corpus.traces })
}

/// Splits the corpus, trains a classifier on the training side, and
/// evaluates it on the held-out side. Returns (model, report) where the
/// report dict also carries sizes, epochs, and the loss history.
#[pyfunction]
#[pyo3(signature = (
    corpus, fraction=0.1, seed=0, batch=32, epochs=100, patience=10,
    kmin=2, threshold=0.5, max_lines=1000
))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    corpus: &Corpus,
    fraction: f64,
    seed: u64,
    batch: usize,
    epochs: usize,
    patience: usize,
    kmin: u64,
    threshold: f64,
    max_lines: usize,
) -> PyResult<(Model, Bound<'py, PyDict>)> {
    let cfg = TrainConfig {
        oracle: OracleConfig { threshold, max_lines, ..OracleConfig::default() },
        k_min: kmin,
        batch_size: batch,
        max_epochs: epochs,
        patience,
        ..TrainConfig::default()
    };
    let split = SplitSpec { train_fraction: fraction, seed, stratified: true };
    let run = run_pipeline(&corpus.traces, &cfg, &split, seed).map_err(err)?;

    let report = report_dict(py, &run.report)?;
    report.set_item("train_size", run.train_size)?;
    report.set_item("test_size", run.test_size)?;
    report.set_item("epochs", run.outcome.epochs)?;
    report.set_item("stopped_early", run.outcome.stopped_early)?;
    report.set_item("loss", run.outcome.loss_history.clone())?;

    let cp = Checkpoint { version: CHECKPOINT_VERSION, seed, params: run.outcome.params };
    Ok((Model { cp }, report))
}

/// Runs the clustering baseline grid (3 linkages x 5 fractions) on a
/// labelled corpus. Returns (rows, best_index); each row is a dict with
/// the linkage, fraction, and metrics.
#[pyfunction]
#[pyo3(signature = (corpus, kmin=2))]
fn baseline<'py>(
    py: Python<'py>,
    corpus: &Corpus,
    kmin: u64,
) -> PyResult<(Vec<Bound<'py, PyDict>>, usize)> {
    let grid = grid_search(&corpus.traces, kmin).map_err(err)?;
    let mut rows = Vec::with_capacity(grid.rows.len());
    let mut best_index = 0;
    for (i, row) in grid.rows.iter().enumerate() {
        let d = report_dict(py, &row.report)?;
        d.set_item("linkage", row.linkage.to_string())?;
        d.set_item("fraction", row.fraction)?;
        rows.push(d);
        if row.linkage == grid.best.linkage && row.fraction == grid.best.fraction {
            best_index = i;
        }
    }
    Ok((rows, best_index))
}

/// Learned test oracles over execution traces.
#[pymodule]
fn traceoracle(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(subjects, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    Ok(())
}
