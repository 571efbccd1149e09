//! Execution-trace data model.
//!
//! A trace is the observable record of one test execution: an ordered list of
//! completed calls plus the final values of the program's global state. Every
//! recorded scalar is a [`Primitive`] carrying its 64-bit pattern, so traces
//! survive serialization without rounding and encode deterministically.

use serde::{Deserialize, Serialize};

/// Scalar type tag for a recorded primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PrimTag {
    I64,
    F64,
    U8,
    Bool,
}

/// One recorded scalar: a type tag plus the value's 64-bit pattern.
///
/// `raw` holds the two's-complement bits for `I64`, the IEEE-754 bits for
/// `F64`, and the zero-extended value for `U8`/`Bool`. Keeping bits rather
/// than lossy numerics makes round-trips and downstream binary encodings
/// exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Primitive {
    pub tag: PrimTag,
    pub raw: u64,
}

impl Primitive {
    pub fn i64(v: i64) -> Self {
        Primitive { tag: PrimTag::I64, raw: v as u64 }
    }

    pub fn f64(v: f64) -> Self {
        Primitive { tag: PrimTag::F64, raw: v.to_bits() }
    }

    pub fn u8(v: u8) -> Self {
        Primitive { tag: PrimTag::U8, raw: u64::from(v) }
    }

    pub fn bool(v: bool) -> Self {
        Primitive { tag: PrimTag::Bool, raw: u64::from(v) }
    }

    pub fn as_i64(&self) -> i64 {
        self.raw as i64
    }

    pub fn as_f64(&self) -> f64 {
        f64::from_bits(self.raw)
    }
}

/// A recorded composite value: structured data flattened, in order, to a
/// sequence of primitives. An empty sequence records a void value.
pub type Value = Vec<Primitive>;

/// One completed call: who called whom, with what arguments, returning what.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLine {
    /// Method name of the caller.
    pub caller: String,
    /// Method name of the callee.
    pub callee: String,
    /// Flattened return value (empty for void).
    pub ret: Value,
    /// Flattened argument tuple (empty for nullary calls).
    pub args: Value,
}

/// Final value of one named global, observed after the execution finished.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalBinding {
    pub name: String,
    pub value: Value,
}

/// Test outcome. `Fail` is the positive class throughout evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
}

/// One test execution: identity, ordered call lines, and final global state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Unique id of the execution within its corpus.
    pub trace_id: String,
    /// Name of the program under test.
    pub subject: String,
    /// Ground-truth outcome, when known.
    pub label: Option<Verdict>,
    pub lines: Vec<TraceLine>,
    pub globals: Vec<GlobalBinding>,
}

fn check_value(ctx: &str, v: &Value, out: &mut Vec<String>) {
    for p in v {
        match p.tag {
            PrimTag::U8 if p.raw > 0xFF => out.push(format!("{ctx}: u8 raw exceeds 8 bits")),
            PrimTag::Bool if p.raw > 1 => out.push(format!("{ctx}: bool raw not 0 or 1")),
            _ => {}
        }
    }
}

/// Checks the structural invariants of a trace and returns every violation
/// found, as human-readable strings. An empty result means the trace is valid.
///
/// Line positions in messages are zero-based indices into `lines`.
pub fn validate_trace(t: &Trace) -> Vec<String> {
    let mut out = Vec::new();
    if t.trace_id.is_empty() {
        out.push("empty trace_id".to_string());
    }
    if t.subject.is_empty() {
        out.push("empty subject".to_string());
    }
    for (i, line) in t.lines.iter().enumerate() {
        if line.caller.is_empty() {
            out.push(format!("line {i}: empty caller"));
        }
        if line.callee.is_empty() {
            out.push(format!("line {i}: empty callee"));
        }
        check_value(&format!("line {i}: args"), &line.args, &mut out);
        check_value(&format!("line {i}: ret"), &line.ret, &mut out);
    }
    let mut seen = std::collections::BTreeSet::new();
    for (j, g) in t.globals.iter().enumerate() {
        if g.name.is_empty() {
            out.push(format!("globals[{j}]: empty name"));
        }
        if !seen.insert(g.name.clone()) {
            out.push(format!("globals: duplicate name {}", g.name));
        }
        check_value(&format!("globals[{j}]"), &g.value, &mut out);
    }
    out
}
