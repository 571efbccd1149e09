//! Learned test oracles for execution traces.
//!
//! This crate turns labelled execution traces — sequences of
//! caller/callee/arguments/return records plus final global state — into a
//! pass/fail classifier, and provides everything around that pipeline:
//!
//! - [`trace`]: the trace data model and validation;
//! - [`io`]: the JSON-lines trace file format;
//! - [`prep`]: loop pooling and external-call pruning;
//! - [`vocab`]: frequency-ranked function-name vocabularies with `<UNK>`;
//! - [`nn`]: tensors, LSTM cell, feed-forward nets, reverse-mode autodiff,
//!   and Adam — the self-contained numeric core;
//! - [`oracle`]: the encoder/classifier network and checkpoint format;
//! - [`report`]: confusion-matrix evaluation reports;
//! - [`train`]: splits, the training loop, evaluation, sweeps, ablations,
//!   and cross-subject transfer;
//! - [`subjects`]: built-in traced programs with seeded mutants, for corpus
//!   generation;
//! - [`cluster`]: the agglomerative-clustering baseline classifier;
//! - [`rng`]: deterministic named RNG streams.
//!
//! Every operation is deterministic given its seed: same inputs, same seed,
//! same bytes out.

pub mod cluster;
pub mod io;
pub mod nn;
pub mod oracle;
pub mod prep;
pub mod report;
pub mod rng;
pub mod subjects;
pub mod trace;
pub mod train;
pub mod vocab;
