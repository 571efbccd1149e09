//! The trace-classification network.
//!
//! Architecture, bottom up:
//!
//! - every primitive becomes its 64-bit pattern, most-significant bit first;
//! - `ValEnc`, one shared LSTM of width `D_V`, folds a value's bit vectors
//!   into a fixed-size encoding (used for arguments, returns, and globals);
//! - each trace line becomes `[ValEnc(args), ValEnc(ret), 1Hot(caller),
//!   1Hot(callee)]`, width `2*D_V + 2k`;
//! - `TrEnc`, an LSTM of width `D_T`, folds the line vectors;
//! - global bindings are each value-encoded and element-wise max-pooled
//!   into `r_G`;
//! - a sigmoid feed-forward head maps `[TrEnc(t), r_G]` to `P(fail)`.
//!
//! The pure functions here are the inference path; [`TapeModel`] rebuilds the
//! identical computation on a [`Tape`] for training, and the two agree bit
//! for bit.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{
    cell_step, ffn_forward, CellParams, FfnParams, Grads, NodeId, Tape, TapeCell, TapeFfn, Tensor,
};
use crate::rng::stream;
use crate::trace::{GlobalBinding, Primitive, Trace, TraceLine, Value, Verdict};
use crate::vocab::Vocabulary;

/// Width of the bit vector for one primitive.
pub const BITS: usize = 64;

/// Scale of uniform parameter initialization.
pub const INIT_SCALE: f64 = 0.08;

/// Architecture and inference hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Value-embedding width.
    pub d_v: usize,
    /// Trace-embedding width.
    pub d_t: usize,
    /// Classifier hidden-layer sizes (input and 1-unit output are implied).
    pub layers: Vec<usize>,
    /// Classification threshold: FAIL iff p_fail >= threshold.
    pub threshold: f64,
    /// Encoder cap on trace lines; longer traces keep their first lines.
    pub max_lines: usize,
    /// Encoder cap on primitives per value; longer values keep their first.
    pub max_prims: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { d_v: 64, d_t: 128, layers: vec![128, 64, 32], threshold: 0.5, max_lines: 1000, max_prims: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("embedding widths must be positive (d_v={d_v}, d_t={d_t})")]
    BadWidths { d_v: usize, d_t: usize },
    #[error("threshold must lie strictly between 0 and 1, got {0}")]
    BadThreshold(String),
    #[error("length caps must be at least 1 (max_lines={max_lines}, max_prims={max_prims})")]
    BadCaps { max_lines: usize, max_prims: usize },
    #[error("classifier layer sizes must be positive")]
    BadLayers,
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.d_v == 0 || self.d_t == 0 {
            return Err(ConfigError::BadWidths { d_v: self.d_v, d_t: self.d_t });
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ConfigError::BadThreshold(format!("{}", self.threshold)));
        }
        if self.max_lines < 1 || self.max_prims < 1 {
            return Err(ConfigError::BadCaps { max_lines: self.max_lines, max_prims: self.max_prims });
        }
        if self.layers.iter().any(|&l| l == 0) {
            return Err(ConfigError::BadLayers);
        }
        Ok(())
    }
}

/// Which encoder inputs an ablation removes. Removal zeroes the affected
/// vector segments (or drops alternate lines), keeping all dimensions intact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeMask {
    /// Zero both one-hot name segments of every line.
    pub zero_names: bool,
    /// Zero the argument-encoding segment of every line.
    pub zero_args: bool,
    /// Zero the return-encoding segment of every line.
    pub zero_ret: bool,
    /// Zero the pooled global-state vector r_G.
    pub zero_globals: bool,
    /// Keep every other line, starting from the first.
    pub half_lines: bool,
}

/// No ablation: the full encoding.
pub const NO_MASK: EncodeMask =
    EncodeMask { zero_names: false, zero_args: false, zero_ret: false, zero_globals: false, half_lines: false };

/// All trainable parameters plus the vocabulary and config they were built
/// for. One `val_cell` is shared by arguments, returns, and globals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: OracleConfig,
    pub vocab: Vocabulary,
    pub val_cell: CellParams,
    pub tr_cell: CellParams,
    pub classifier: FfnParams,
}

impl ModelParams {
    /// Seeded initialization: all tensors uniform in
    /// `[-INIT_SCALE, INIT_SCALE)` from the "init" stream of `seed`.
    pub fn init(config: OracleConfig, vocab: Vocabulary, seed: u64) -> Self {
        let mut rng = stream(seed, "init");
        let k = vocab.size();
        let line_width = 2 * config.d_v + 2 * k;
        let val_cell = CellParams::init(BITS, config.d_v, INIT_SCALE, &mut rng);
        let tr_cell = CellParams::init(line_width, config.d_t, INIT_SCALE, &mut rng);
        let mut dims = vec![config.d_t + config.d_v];
        dims.extend_from_slice(&config.layers);
        dims.push(1);
        let classifier = FfnParams::init(&dims, INIT_SCALE, &mut rng);
        ModelParams { config, vocab, val_cell, tr_cell, classifier }
    }

    /// Width of one encoded line: `2*D_V + 2k`, where `k` counts `<UNK>`.
    pub fn line_width(&self) -> usize {
        2 * self.config.d_v + 2 * self.vocab.size()
    }

    /// All trainable tensors in canonical order: val_cell, tr_cell,
    /// classifier. Gradient stores and optimizer state use the same order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut ts = self.val_cell.tensors();
        ts.extend(self.tr_cell.tensors());
        ts.extend(self.classifier.tensors());
        ts
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut ts = self.val_cell.tensors_mut();
        ts.extend(self.tr_cell.tensors_mut());
        ts.extend(self.classifier.tensors_mut());
        ts
    }

    /// Checks internal dimension consistency (e.g. after loading a file).
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.config.validate()?;
        let widths_ok = self.val_cell.input == BITS
            && self.val_cell.hidden == self.config.d_v
            && self.tr_cell.input == self.line_width()
            && self.tr_cell.hidden == self.config.d_t;
        if !widths_ok {
            return Err(ConfigError::BadWidths { d_v: self.config.d_v, d_t: self.config.d_t });
        }
        let mut dims = vec![self.config.d_t + self.config.d_v];
        dims.extend_from_slice(&self.config.layers);
        dims.push(1);
        if self.classifier.dims() != dims {
            return Err(ConfigError::BadLayers);
        }
        Ok(())
    }
}

/// The 64-bit pattern of a primitive, most-significant bit first, as
/// 0.0/1.0 entries.
pub fn bits_of(p: &Primitive) -> Vec<f64> {
    (0..BITS).map(|i| ((p.raw >> (BITS - 1 - i)) & 1) as f64).collect()
}

/// Lines the encoder actually sees: alternate-line ablation first, then the
/// length cap.
fn effective_lines<'t>(m: &ModelParams, t: &'t Trace, mask: EncodeMask) -> Vec<&'t TraceLine> {
    let step = if mask.half_lines { 2 } else { 1 };
    t.lines.iter().step_by(step).take(m.config.max_lines).collect()
}

/// Value encoding: the shared LSTM folded over the first `max_prims`
/// bit vectors. An empty value is the zero initial state.
pub fn val_enc(m: &ModelParams, v: &Value) -> Vec<f64> {
    let (mut h, mut c) = m.val_cell.zero_state();
    for p in v.iter().take(m.config.max_prims) {
        let (h2, c2) = cell_step(&m.val_cell, &bits_of(p), &h, &c).expect("val_cell shapes are fixed");
        h = h2;
        c = c2;
    }
    h
}

fn encode_line_masked(m: &ModelParams, line: &TraceLine, mask: EncodeMask) -> Vec<f64> {
    let d_v = m.config.d_v;
    let k = m.vocab.size();
    let mut out = Vec::with_capacity(2 * d_v + 2 * k);
    if mask.zero_args {
        out.extend(std::iter::repeat(0.0).take(d_v));
    } else {
        out.extend(val_enc(m, &line.args));
    }
    if mask.zero_ret {
        out.extend(std::iter::repeat(0.0).take(d_v));
    } else {
        out.extend(val_enc(m, &line.ret));
    }
    if mask.zero_names {
        out.extend(std::iter::repeat(0.0).take(2 * k));
    } else {
        out.extend(m.vocab.one_hot(&line.caller));
        out.extend(m.vocab.one_hot(&line.callee));
    }
    out
}

/// One line's vector: `[ValEnc(args), ValEnc(ret), 1Hot(caller),
/// 1Hot(callee)]` in exactly that order.
pub fn encode_line(m: &ModelParams, line: &TraceLine) -> Vec<f64> {
    encode_line_masked(m, line, NO_MASK)
}

/// Trace encoding: tr_cell folded over pre-encoded line vectors; no lines
/// yields the zero initial state.
pub fn tr_enc(m: &ModelParams, encoded_lines: &[Vec<f64>]) -> Vec<f64> {
    let (mut h, mut c) = m.tr_cell.zero_state();
    for x in encoded_lines {
        let (h2, c2) = cell_step(&m.tr_cell, x, &h, &c).expect("tr_cell shapes are fixed");
        h = h2;
        c = c2;
    }
    h
}

/// Element-wise max over the value encodings of the globals, with negative
/// zeros normalized so the result is bitwise permutation-invariant. Empty
/// globals yield the zero vector.
pub fn encode_globals(m: &ModelParams, globals: &[GlobalBinding]) -> Vec<f64> {
    let mut pooled = vec![0.0; m.config.d_v];
    let mut first = true;
    for g in globals {
        let enc = val_enc(m, &g.value);
        if first {
            pooled = enc;
            first = false;
        } else {
            for (p, e) in pooled.iter_mut().zip(&enc) {
                if *e > *p {
                    *p = *e;
                }
            }
        }
    }
    for p in pooled.iter_mut() {
        *p += 0.0;
    }
    pooled
}

fn encode_globals_masked(m: &ModelParams, globals: &[GlobalBinding], mask: EncodeMask) -> Vec<f64> {
    if mask.zero_globals {
        vec![0.0; m.config.d_v]
    } else {
        encode_globals(m, globals)
    }
}

/// Failure probability of a trace under an ablation mask (inference path).
pub fn p_fail_masked(m: &ModelParams, t: &Trace, mask: EncodeMask) -> f64 {
    let encoded: Vec<Vec<f64>> =
        effective_lines(m, t, mask).into_iter().map(|l| encode_line_masked(m, l, mask)).collect();
    let mut x = tr_enc(m, &encoded);
    x.extend(encode_globals_masked(m, &t.globals, mask));
    ffn_forward(&m.classifier, &x).expect("classifier input width is fixed")[0]
}

/// Classifies one preprocessed trace: `P(fail)` plus the thresholded verdict
/// (ties classify FAIL).
pub fn classify(m: &ModelParams, t: &Trace) -> (f64, Verdict) {
    let p = p_fail_masked(m, t, NO_MASK);
    let verdict = if p >= m.config.threshold { Verdict::Fail } else { Verdict::Pass };
    (p, verdict)
}

/// The whole model registered on one tape, for training.
pub struct TapeModel {
    d_v: usize,
    max_prims: usize,
    val: TapeCell,
    tr: TapeCell,
    ffn: TapeFfn,
}

impl TapeModel {
    /// Registers every parameter tensor as a tape leaf, in the canonical
    /// tensor order of [`ModelParams::tensors`].
    pub fn build(tape: &mut Tape, m: &ModelParams) -> Self {
        TapeModel {
            d_v: m.config.d_v,
            max_prims: m.config.max_prims,
            val: TapeCell::register(tape, &m.val_cell),
            tr: TapeCell::register(tape, &m.tr_cell),
            ffn: TapeFfn::register(tape, &m.classifier),
        }
    }

    /// Parameter leaf ids in canonical tensor order.
    pub fn param_ids(&self) -> Vec<NodeId> {
        let mut ids = self.val.param_ids();
        ids.extend(self.tr.param_ids());
        ids.extend(self.ffn.param_ids());
        ids
    }

    fn val_enc_node(&self, tape: &mut Tape, v: &Value) -> NodeId {
        let (mut h, mut c) = self.val.zero_state(tape);
        for p in v.iter().take(self.max_prims) {
            let x = tape.leaf(bits_of(p));
            let (h2, c2) = self.val.step(tape, x, h, c);
            h = h2;
            c = c2;
        }
        h
    }

    /// Forward pass to the `P(fail)` node; mirrors [`p_fail_masked`].
    pub fn p_fail(&self, tape: &mut Tape, m: &ModelParams, t: &Trace, mask: EncodeMask) -> NodeId {
        let k = m.vocab.size();
        let (mut h, mut c) = self.tr.zero_state(tape);
        for line in effective_lines(m, t, mask) {
            let args = if mask.zero_args {
                tape.leaf(vec![0.0; self.d_v])
            } else {
                self.val_enc_node(tape, &line.args)
            };
            let ret = if mask.zero_ret {
                tape.leaf(vec![0.0; self.d_v])
            } else {
                self.val_enc_node(tape, &line.ret)
            };
            let names = if mask.zero_names {
                tape.leaf(vec![0.0; 2 * k])
            } else {
                let mut oh = m.vocab.one_hot(&line.caller);
                oh.extend(m.vocab.one_hot(&line.callee));
                tape.leaf(oh)
            };
            let x = tape.concat(&[args, ret, names]);
            let (h2, c2) = self.tr.step(tape, x, h, c);
            h = h2;
            c = c2;
        }
        let r_g = if mask.zero_globals || t.globals.is_empty() {
            tape.leaf(vec![0.0; self.d_v])
        } else {
            let encs: Vec<NodeId> = t.globals.iter().map(|g| self.val_enc_node(tape, &g.value)).collect();
            tape.max_pool(&encs)
        };
        let x = tape.concat(&[h, r_g]);
        self.ffn.forward(tape, x)
    }
}

/// Loss, probability, and canonical-order parameter gradients for one
/// labelled trace (FAIL is the positive class).
pub fn trace_loss_grads(
    m: &ModelParams,
    t: &Trace,
    label: Verdict,
    mask: EncodeMask,
) -> (f64, f64, Vec<Tensor>) {
    let mut tape = Tape::new();
    let model = TapeModel::build(&mut tape, m);
    let p_node = model.p_fail(&mut tape, m, t, mask);
    let target = if label == Verdict::Fail { 1.0 } else { 0.0 };
    let loss_node = tape.bce_loss(p_node, target);
    let loss = tape.value(loss_node)[0];
    let p = tape.value(p_node)[0];
    let grads = tape.backward(loss_node);
    let shaped = collect_param_grads(&grads, &model.param_ids(), m);
    (loss, p, shaped)
}

/// Copies raw leaf gradients into tensors shaped like the parameters.
fn collect_param_grads(grads: &Grads, ids: &[NodeId], m: &ModelParams) -> Vec<Tensor> {
    ids.iter()
        .zip(m.tensors())
        .map(|(&id, t)| Tensor { rows: t.rows, cols: t.cols, data: grads.get(id).to_vec() })
        .collect()
}

/// A saved model: format version, the seed that produced it, and all
/// parameters. JSON with shortest-round-trip floats, so reload is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub params: ModelParams,
}

/// Current checkpoint format version.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint is internally inconsistent: {0}")]
    Inconsistent(#[from] ConfigError),
    #[error("checkpoint contains non-finite parameters")]
    NonFinite,
}

pub fn save_checkpoint(w: impl Write, cp: &Checkpoint) -> Result<(), CheckpointError> {
    if cp.params.tensors().iter().any(|t| t.data.iter().any(|v| !v.is_finite())) {
        return Err(CheckpointError::NonFinite);
    }
    serde_json::to_writer(w, cp)?;
    Ok(())
}

pub fn checkpoint_to_string(cp: &Checkpoint) -> Result<String, CheckpointError> {
    let mut buf = Vec::new();
    save_checkpoint(&mut buf, cp)?;
    Ok(String::from_utf8(buf).expect("checkpoint JSON is UTF-8"))
}

pub fn load_checkpoint(r: impl Read) -> Result<Checkpoint, CheckpointError> {
    let cp: Checkpoint = serde_json::from_reader(r)?;
    if cp.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(cp.version));
    }
    cp.params.validate()?;
    Ok(cp)
}

pub fn write_checkpoint_file(path: impl AsRef<Path>, cp: &Checkpoint) -> Result<(), CheckpointError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    save_checkpoint(&mut w, cp)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint_file(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let file = std::fs::File::open(path)?;
    load_checkpoint(std::io::BufReader::new(file))
}
