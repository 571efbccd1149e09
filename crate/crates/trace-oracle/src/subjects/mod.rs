//! Built-in traced subject programs and mutation-based corpus generation.
//!
//! Each subject is a small deterministic interpreter instrumented to emit
//! one trace line per completed internal call, plus its final globals. A
//! subject declares named mutation points — single-site behavior changes
//! drawn from five operator classes — which the corpus generator samples to
//! produce failing runs. A mutant run is kept (and labelled FAIL) only when
//! its observable output differs from the reference run on the same input;
//! equivalent mutants are discarded by that exact comparison.
//!
//! Traces carry no oracle material: no expected outputs, no assertion text,
//! and no single value ever holds the full observable output tuple.

mod argflow;
mod bigint;
mod fsm;
mod refcount;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::prep::DefinedSet;
use crate::rng::stream;
use crate::trace::{GlobalBinding, Trace, TraceLine, Value, Verdict};

/// The five mutation operator classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MutationOperator {
    LogicalConnector,
    RelationalOp,
    ArgSwap,
    ScalarVar,
    LoopBoundary,
}

impl fmt::Display for MutationOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MutationOperator::LogicalConnector => "LOGICAL_CONNECTOR",
            MutationOperator::RelationalOp => "RELATIONAL_OP",
            MutationOperator::ArgSwap => "ARG_SWAP",
            MutationOperator::ScalarVar => "SCALAR_VAR",
            MutationOperator::LoopBoundary => "LOOP_BOUNDARY",
        };
        f.write_str(s)
    }
}

impl FromStr for MutationOperator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "LOGICAL_CONNECTOR" => Ok(MutationOperator::LogicalConnector),
            "RELATIONAL_OP" => Ok(MutationOperator::RelationalOp),
            "ARG_SWAP" => Ok(MutationOperator::ArgSwap),
            "SCALAR_VAR" => Ok(MutationOperator::ScalarVar),
            "LOOP_BOUNDARY" => Ok(MutationOperator::LoopBoundary),
            other => Err(format!(
                "unknown mutation operator {other:?}; expected one of LOGICAL_CONNECTOR, \
                 RELATIONAL_OP, ARG_SWAP, SCALAR_VAR, LOOP_BOUNDARY"
            )),
        }
    }
}

/// One registered mutation site inside a subject interpreter. Activating a
/// point changes behavior at exactly that site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationPoint {
    /// Stable identifier, also the knob the interpreter checks.
    pub id: &'static str,
    /// Method containing the site.
    pub method: &'static str,
    /// Site index within the method.
    pub site: u32,
    pub operator: MutationOperator,
    /// Which replacement within the operator class.
    pub variant: &'static str,
}

/// One operation of the container subject's input scripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptOp {
    New(usize),
    Copy(usize, usize),
    Reset(usize),
    Swap(usize, usize),
}

/// Subject-specific test input payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    /// Byte string (FSM subjects).
    Bytes(Vec<u8>),
    /// Numeric tuple (calculator and dataflow subjects).
    Tuple(Vec<i64>),
    /// Operation script (container subject).
    Script(Vec<ScriptOp>),
}

/// A named test input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestInput {
    pub id: String,
    pub payload: Payload,
}

/// Observable result of a subject run; the only thing the equivalent-mutant
/// filter compares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectOutput(pub Vec<i64>);

#[derive(Debug)]
pub(crate) enum SubjectKind {
    Fsm(fsm::FsmConfig),
    Bigint,
    Refcount,
    Argflow,
}

/// A built-in traced program: its interpreter, method and global
/// declarations, and registered mutation points.
#[derive(Debug)]
pub struct Subject {
    pub name: &'static str,
    pub methods: Vec<&'static str>,
    pub globals: Vec<&'static str>,
    pub mutation_points: Vec<MutationPoint>,
    pub(crate) kind: SubjectKind,
}

impl Subject {
    /// The subject's method names as a pruning set.
    pub fn defined_set(&self) -> DefinedSet {
        DefinedSet::new(self.methods.iter().copied())
    }

    fn point(&self, id: &str) -> Option<&MutationPoint> {
        self.mutation_points.iter().find(|p| p.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubjectError {
    #[error("unknown subject {name:?}; available: {available}")]
    UnknownSubject { name: String, available: String },
    #[error("subject {subject} has no mutation point {id:?}")]
    UnknownMutation { subject: String, id: String },
    #[error("invalid payload for subject {subject}: {msg}")]
    InvalidPayload { subject: String, msg: String },
    #[error("corpus generation needs at least one input")]
    NoInputs,
    #[error("no mutation points of the requested operator classes exist in subject {subject}")]
    NoEligibleMutations { subject: String },
    #[error("mutation budget exhausted without a single failing trace for subject {subject}")]
    NoFailures { subject: String },
}

/// Active mutation set, queried by interpreters at their registered sites.
#[derive(Clone, Copy)]
pub(crate) struct Muts<'a> {
    active: &'a BTreeSet<String>,
}

impl<'a> Muts<'a> {
    pub(crate) fn on(&self, id: &str) -> bool {
        self.active.contains(id)
    }
}

/// Collects trace lines in call-completion order.
pub(crate) struct TraceBuilder {
    lines: Vec<TraceLine>,
}

impl TraceBuilder {
    pub(crate) fn new() -> Self {
        TraceBuilder { lines: Vec::new() }
    }

    pub(crate) fn call(&mut self, caller: &str, callee: &str, args: Value, ret: Value) {
        self.lines.push(TraceLine {
            caller: caller.to_string(),
            callee: callee.to_string(),
            args,
            ret,
        });
    }

    pub(crate) fn into_lines(self) -> Vec<TraceLine> {
        self.lines
    }
}

pub(crate) fn global(name: &str, value: Value) -> GlobalBinding {
    GlobalBinding { name: name.to_string(), value }
}

/// Runs a subject on one input under a set of active mutations, producing
/// the observable output and the unlabelled execution trace.
pub fn run_subject(
    s: &Subject,
    input: &TestInput,
    mutations: &BTreeSet<String>,
) -> Result<(SubjectOutput, Trace), SubjectError> {
    for id in mutations {
        if s.point(id).is_none() {
            return Err(SubjectError::UnknownMutation {
                subject: s.name.to_string(),
                id: id.clone(),
            });
        }
    }
    let muts = Muts { active: mutations };
    let (output, lines, globals) = match &s.kind {
        SubjectKind::Fsm(cfg) => fsm::run(cfg, s, input, muts)?,
        SubjectKind::Bigint => bigint::run(s, input, muts)?,
        SubjectKind::Refcount => refcount::run(s, input, muts)?,
        SubjectKind::Argflow => argflow::run(s, input, muts)?,
    };
    let suffix = if mutations.is_empty() {
        "ref".to_string()
    } else {
        mutations.iter().cloned().collect::<Vec<_>>().join("+")
    };
    let trace = Trace {
        trace_id: format!("{}:{}", input.id, suffix),
        subject: s.name.to_string(),
        label: None,
        lines,
        globals,
    };
    Ok((output, trace))
}

pub(crate) fn invalid_payload(subject: &str, msg: impl Into<String>) -> SubjectError {
    SubjectError::InvalidPayload { subject: subject.to_string(), msg: msg.into() }
}

/// Seeded test inputs drawn from the subject's input grammar.
pub fn generate_inputs(s: &Subject, count: usize, seed: u64) -> Vec<TestInput> {
    let mut rng = stream(seed, "inputs");
    (0..count)
        .map(|i| {
            let payload = match &s.kind {
                SubjectKind::Fsm(cfg) => fsm::gen_payload(cfg, &mut rng),
                SubjectKind::Bigint => bigint::gen_payload(&mut rng),
                SubjectKind::Refcount => refcount::gen_payload(&mut rng),
                SubjectKind::Argflow => argflow::gen_payload(&mut rng),
            };
            TestInput { id: format!("i{i:05}"), payload }
        })
        .collect()
}

/// Corpus generation settings.
#[derive(Debug, Clone, Default)]
pub struct GenConfig {
    /// Maximum number of mutant runs to attempt.
    pub budget: usize,
    /// When set, only mutation points of these operator classes are
    /// sampled (bug-class holdout experiments).
    pub allowed_ops: Option<BTreeSet<MutationOperator>>,
}

/// One audit row per generated trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub trace_id: String,
    pub input_id: String,
    /// Absent for reference (PASS) runs.
    pub mutation_id: Option<String>,
    pub label: Verdict,
}

/// A generated labelled corpus plus its audit manifest.
#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub traces: Vec<Trace>,
    pub manifest: Vec<ManifestRow>,
}

/// Renders the manifest as CSV (`mutation_id` is `none` for reference runs).
pub fn manifest_to_csv(rows: &[ManifestRow]) -> String {
    let mut out = String::from("trace_id,input_id,mutation_id,label\n");
    for r in rows {
        let label = match r.label {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        };
        let mutation = r.mutation_id.as_deref().unwrap_or("none");
        out.push_str(&format!("{},{},{},{}\n", r.trace_id, r.input_id, mutation, label));
    }
    out
}

/// Generates a labelled corpus: one PASS trace per input from the reference
/// run, then FAIL traces from sampled single-mutation runs whose output
/// differs from the reference (the equivalent-mutant filter), until the
/// classes balance or the budget runs out.
pub fn generate_corpus(
    s: &Subject,
    inputs: &[TestInput],
    cfg: &GenConfig,
    seed: u64,
) -> Result<GeneratedCorpus, SubjectError> {
    if inputs.is_empty() {
        return Err(SubjectError::NoInputs);
    }
    let eligible: Vec<usize> = s
        .mutation_points
        .iter()
        .enumerate()
        .filter(|(_, p)| cfg.allowed_ops.as_ref().map_or(true, |ops| ops.contains(&p.operator)))
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Err(SubjectError::NoEligibleMutations { subject: s.name.to_string() });
    }

    let empty = BTreeSet::new();
    let mut traces = Vec::new();
    let mut manifest = Vec::new();
    let mut ref_outputs = Vec::with_capacity(inputs.len());
    for input in inputs {
        let (out, mut tr) = run_subject(s, input, &empty)?;
        tr.label = Some(Verdict::Pass);
        manifest.push(ManifestRow {
            trace_id: tr.trace_id.clone(),
            input_id: input.id.clone(),
            mutation_id: None,
            label: Verdict::Pass,
        });
        traces.push(tr);
        ref_outputs.push(out);
    }

    // Every (input, point) pair once, in seeded order: sampling without
    // replacement keeps trace ids unique and generation deterministic.
    let mut pool: Vec<(usize, usize)> = Vec::with_capacity(inputs.len() * eligible.len());
    for ii in 0..inputs.len() {
        for &pi in &eligible {
            pool.push((ii, pi));
        }
    }
    pool.shuffle(&mut stream(seed, "mutants"));

    let target = inputs.len();
    let mut fails = 0usize;
    let mut attempts = 0usize;
    for (ii, pi) in pool {
        if fails >= target || attempts >= cfg.budget {
            break;
        }
        attempts += 1;
        let point = &s.mutation_points[pi];
        let active = BTreeSet::from([point.id.to_string()]);
        let (out, mut tr) = run_subject(s, &inputs[ii], &active)?;
        if out != ref_outputs[ii] {
            tr.label = Some(Verdict::Fail);
            manifest.push(ManifestRow {
                trace_id: tr.trace_id.clone(),
                input_id: inputs[ii].id.clone(),
                mutation_id: Some(point.id.to_string()),
                label: Verdict::Fail,
            });
            traces.push(tr);
            fails += 1;
        }
    }
    if fails == 0 {
        return Err(SubjectError::NoFailures { subject: s.name.to_string() });
    }
    Ok(GeneratedCorpus { traces, manifest })
}

/// All built-in subjects.
pub fn builtin_subjects() -> Vec<Subject> {
    vec![
        fsm::subject_proto(),
        fsm::subject_proto_alt(),
        bigint::subject(),
        refcount::subject(),
        argflow::subject(),
    ]
}

/// Looks a built-in subject up by name.
pub fn subject_by_name(name: &str) -> Result<Subject, SubjectError> {
    let all = builtin_subjects();
    let available = all.iter().map(|s| s.name).collect::<Vec<_>>().join(", ");
    all.into_iter().find(|s| s.name == name).ok_or(SubjectError::UnknownSubject {
        name: name.to_string(),
        available,
    })
}
