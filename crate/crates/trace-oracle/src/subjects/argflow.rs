//! Argument-dataflow subject.
//!
//! Every call in the pipeline returns void and the call sequence is fixed by
//! the input length alone, so method names, return values, and the (single,
//! constant) global carry almost no class signal: what separates a failing
//! run from a passing one lives in the argument values flowing between
//! calls. Inputs are tuples of 16-aligned values; several mutants break that
//! alignment or shift the flowing magnitudes.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::trace::{GlobalBinding, Primitive, TraceLine, Value};

use super::{
    global, invalid_payload, Muts, MutationOperator, MutationPoint, Payload, Subject,
    SubjectError, SubjectKind, SubjectOutput, TraceBuilder,
};

const METHODS: [&str; 8] =
    ["process", "absorb", "scale", "twist", "fold", "clamp", "emit", "finish"];

const GLOBALS: [&str; 1] = ["g_n"];

const MODULUS: i64 = 65_536;
const LIMIT: i64 = 4_096;

fn points() -> Vec<MutationPoint> {
    use MutationOperator::*;
    vec![
        MutationPoint { id: "argflow.process.skip_last", method: "process", site: 0, operator: LoopBoundary, variant: "skip_last" },
        MutationPoint { id: "argflow.absorb.bias_one", method: "absorb", site: 0, operator: ScalarVar, variant: "bias_zero_to_one" },
        MutationPoint { id: "argflow.absorb.bias_idx", method: "absorb", site: 1, operator: ScalarVar, variant: "bias_zero_to_index" },
        MutationPoint { id: "argflow.scale.four_three", method: "scale", site: 0, operator: ScalarVar, variant: "factor_four_to_three" },
        MutationPoint { id: "argflow.twist.sel_and_or", method: "twist", site: 0, operator: LogicalConnector, variant: "and_to_or" },
        MutationPoint { id: "argflow.twist.eq_ne", method: "twist", site: 1, operator: RelationalOp, variant: "eq_to_ne" },
        MutationPoint { id: "argflow.twist.swap_args", method: "twist", site: 2, operator: ArgSwap, variant: "swap_value_salt" },
        MutationPoint { id: "argflow.fold.swap_args", method: "fold", site: 0, operator: ArgSwap, variant: "swap_acc_value" },
        MutationPoint { id: "argflow.fold.mod_off_one", method: "fold", site: 1, operator: ScalarVar, variant: "modulus_off_one" },
        MutationPoint { id: "argflow.clamp.gt_lt", method: "clamp", site: 0, operator: RelationalOp, variant: "gt_to_lt" },
    ]
}

pub(crate) fn subject() -> Subject {
    Subject {
        name: "argflow",
        methods: METHODS.to_vec(),
        globals: GLOBALS.to_vec(),
        mutation_points: points(),
        kind: SubjectKind::Argflow,
    }
}

pub(crate) fn run(
    s: &Subject,
    input: &super::TestInput,
    m: Muts<'_>,
) -> Result<(SubjectOutput, Vec<TraceLine>, Vec<GlobalBinding>), SubjectError> {
    let fields = match &input.payload {
        Payload::Tuple(t) => t,
        _ => return Err(invalid_payload(s.name, "expected a numeric tuple payload")),
    };
    if !(2..=6).contains(&fields.len()) {
        return Err(invalid_payload(s.name, format!("expected 2-6 fields, got {}", fields.len())));
    }
    for &v in fields {
        if !(16..=1024).contains(&v) || v % 16 != 0 {
            return Err(invalid_payload(s.name, format!("field {v} is not a 16-aligned value in range")));
        }
    }

    let mut tb = TraceBuilder::new();
    let k = fields.len() as i64;
    let mut emitted: Vec<i64> = Vec::new();
    let mut acc: i64 = 0;
    let mut i: i64 = 0;
    loop {
        let more = if m.on("argflow.process.skip_last") { i + 1 < k } else { i < k };
        if !more {
            break;
        }
        let x = fields[i as usize];

        let mut bias: i64 = 0;
        if m.on("argflow.absorb.bias_one") {
            bias += 1;
        }
        if m.on("argflow.absorb.bias_idx") {
            bias += i;
        }
        let a = x + bias;
        tb.call("process", "absorb", vec![Primitive::i64(x)], Value::new());

        let factor = if m.on("argflow.scale.four_three") { 3 } else { 4 };
        let sc = a * factor;
        tb.call("process", "scale", vec![Primitive::i64(a)], Value::new());

        let even = i % 2 == 0;
        let big = if m.on("argflow.twist.eq_ne") { sc % 64 != 0 } else { sc % 64 == 0 };
        let sel = if m.on("argflow.twist.sel_and_or") { even || big } else { even && big };
        let salt: i64 = if sel { 96 } else { 32 };
        let (tv, tw) = if m.on("argflow.twist.swap_args") { (salt, sc) } else { (sc, salt) };
        let t = 2 * tv + tw;
        tb.call(
            "process",
            "twist",
            vec![Primitive::i64(tv), Primitive::i64(tw)],
            Value::new(),
        );

        let modulus = if m.on("argflow.fold.mod_off_one") { MODULUS - 1 } else { MODULUS };
        let (fp, fq) = if m.on("argflow.fold.swap_args") { (t, acc) } else { (acc, t) };
        acc = (2 * fp + fq).rem_euclid(modulus);
        tb.call(
            "process",
            "fold",
            vec![Primitive::i64(fp), Primitive::i64(fq)],
            Value::new(),
        );

        emitted.push(acc);
        tb.call("process", "emit", vec![Primitive::i64(acc)], Value::new());
        i += 1;
    }

    let over = if m.on("argflow.clamp.gt_lt") { acc < LIMIT } else { acc > LIMIT };
    let c = if over { LIMIT } else { acc };
    tb.call("process", "clamp", vec![Primitive::i64(acc)], Value::new());
    emitted.push(c);
    tb.call("process", "emit", vec![Primitive::i64(c)], Value::new());

    tb.call("process", "finish", Value::new(), Value::new());
    let globals = vec![global("g_n", vec![Primitive::i64(k)])];
    Ok((SubjectOutput(emitted), tb.into_lines(), globals))
}

/// Tuples of 2-6 values, each a multiple of 16 in 16..=1024.
pub(crate) fn gen_payload(rng: &mut ChaCha20Rng) -> Payload {
    let k = rng.gen_range(2..=6usize);
    Payload::Tuple((0..k).map(|_| 16 * rng.gen_range(1..=64i64)).collect())
}
