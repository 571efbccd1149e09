//! Trace preprocessing: pruning external calls and pooling loop iterations.
//!
//! Pruning drops lines whose callee is not defined by the subject program, so
//! library noise never reaches the encoder. Pooling collapses maximal runs of
//! consecutive lines with the same (caller, callee) pair — the footprint of a
//! loop body — into a single averaged line, which keeps encoder input lengths
//! roughly proportional to control-flow structure instead of iteration counts.
//! Pruning runs before pooling, since removing an interleaved external call
//! can reunite the two halves of a loop footprint.

use std::collections::BTreeSet;

use crate::trace::{PrimTag, Primitive, Trace, TraceLine, Value};

/// The set of method names defined by a subject program.
#[derive(Debug, Clone, Default)]
pub struct DefinedSet(BTreeSet<String>);

impl DefinedSet {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        DefinedSet(names.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }
}

/// Removes every line whose callee is not in the defined set. Callers are not
/// checked: a defined method calling out to a library is dropped, a library
/// callback into a defined method is kept.
pub fn prune_external(t: &Trace, defined: &DefinedSet) -> Trace {
    let mut out = t.clone();
    out.lines.retain(|l| defined.contains(&l.callee));
    out
}

/// True when every line in the run has the same args/ret arity and the same
/// primitive tag at every position, so positionwise averaging is meaningful.
fn poolable(run: &[TraceLine]) -> bool {
    let first = &run[0];
    run.iter().all(|l| {
        l.args.len() == first.args.len()
            && l.ret.len() == first.ret.len()
            && l.args.iter().zip(&first.args).all(|(a, b)| a.tag == b.tag)
            && l.ret.iter().zip(&first.ret).all(|(a, b)| a.tag == b.tag)
    })
}

/// Positionwise average of one value slot across the run. Floats take the
/// arithmetic mean, integers the mean truncated toward zero, and bools the
/// majority vote with ties resolved to 1.
fn pool_values(values: &[&Value]) -> Value {
    let count = values.len();
    (0..values[0].len())
        .map(|i| {
            let tag = values[0][i].tag;
            let raw = match tag {
                PrimTag::F64 => {
                    let sum: f64 = values.iter().map(|v| v[i].as_f64()).sum();
                    (sum / count as f64).to_bits()
                }
                PrimTag::I64 => {
                    let sum: i128 = values.iter().map(|v| i128::from(v[i].as_i64())).sum();
                    (sum / count as i128) as i64 as u64
                }
                PrimTag::U8 => {
                    let sum: u64 = values.iter().map(|v| v[i].raw).sum();
                    sum / count as u64
                }
                PrimTag::Bool => {
                    let ones = values.iter().filter(|v| v[i].raw == 1).count();
                    u64::from(2 * ones >= count)
                }
            };
            Primitive { tag, raw }
        })
        .collect()
}

/// Collapses each maximal run of consecutive lines sharing one
/// (caller, callee) pair into a single line of averaged values. Runs whose
/// lines disagree on arity or tags are kept verbatim. Idempotent.
pub fn pool_loop_lines(t: &Trace) -> Trace {
    let mut lines = Vec::with_capacity(t.lines.len());
    let mut i = 0;
    while i < t.lines.len() {
        let mut j = i + 1;
        while j < t.lines.len()
            && t.lines[j].caller == t.lines[i].caller
            && t.lines[j].callee == t.lines[i].callee
        {
            j += 1;
        }
        let run = &t.lines[i..j];
        if run.len() == 1 || !poolable(run) {
            lines.extend_from_slice(run);
        } else {
            lines.push(TraceLine {
                caller: run[0].caller.clone(),
                callee: run[0].callee.clone(),
                args: pool_values(&run.iter().map(|l| &l.args).collect::<Vec<_>>()),
                ret: pool_values(&run.iter().map(|l| &l.ret).collect::<Vec<_>>()),
            });
        }
        i = j;
    }
    Trace { lines, ..t.clone() }
}

/// Full preprocessing for one trace: prune (when the subject's defined set is
/// known), then pool.
pub fn preprocess_trace(t: &Trace, defined: Option<&DefinedSet>) -> Trace {
    match defined {
        Some(d) => pool_loop_lines(&prune_external(t, d)),
        None => pool_loop_lines(t),
    }
}
