//! Era-branched integer difficulty calculator subject.
//!
//! The pipeline loads a `(parent, delta, block)` tuple, picks an era from the
//! block number, adjusts the parent value, applies a floor, computes an
//! exponential "bomb" through a doubling loop (a poolable run of identical
//! calls), scales, and combines. All arithmetic runs in `i128`, and the
//! observable output is the era plus the 64-bit halves of the total.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::trace::{GlobalBinding, Primitive, TraceLine, Value};

use super::{
    global, invalid_payload, Muts, MutationOperator, MutationPoint, Payload, Subject,
    SubjectError, SubjectKind, SubjectOutput, TraceBuilder,
};

const METHODS: [&str; 11] = [
    "calc",
    "load",
    "era_of",
    "adjust",
    "clamp_floor",
    "bomb_exp",
    "pow2_loop",
    "mul_step",
    "scale",
    "combine",
    "finish",
];

const GLOBALS: [&str; 2] = ["g_era", "g_steps"];

const FLOOR: i128 = 131_072;
const PARENT_MAX: i64 = 1 << 40;

fn points() -> Vec<MutationPoint> {
    use MutationOperator::*;
    vec![
        MutationPoint { id: "bigint.load.and_or", method: "load", site: 0, operator: LogicalConnector, variant: "and_to_or" },
        MutationPoint { id: "bigint.era_of.lt_le_a", method: "era_of", site: 0, operator: RelationalOp, variant: "lt_to_le" },
        MutationPoint { id: "bigint.era_of.lt_le_b", method: "era_of", site: 1, operator: RelationalOp, variant: "lt_to_le" },
        MutationPoint { id: "bigint.adjust.half_divisor", method: "adjust", site: 0, operator: ScalarVar, variant: "divisor_2048_to_1024" },
        MutationPoint { id: "bigint.adjust.one_to_era", method: "adjust", site: 1, operator: ScalarVar, variant: "constant_one_to_era" },
        MutationPoint { id: "bigint.adjust.ge_gt", method: "adjust", site: 2, operator: RelationalOp, variant: "ge_to_gt" },
        MutationPoint { id: "bigint.clamp_floor.lt_gt", method: "clamp_floor", site: 0, operator: RelationalOp, variant: "lt_to_gt" },
        MutationPoint { id: "bigint.clamp_floor.zero_floor", method: "clamp_floor", site: 1, operator: ScalarVar, variant: "floor_to_zero" },
        MutationPoint { id: "bigint.bomb_exp.period", method: "bomb_exp", site: 0, operator: ScalarVar, variant: "period_300_to_200" },
        MutationPoint { id: "bigint.pow2_loop.extra_iter", method: "pow2_loop", site: 0, operator: LoopBoundary, variant: "lt_to_le" },
        MutationPoint { id: "bigint.mul_step.two_three", method: "mul_step", site: 0, operator: ScalarVar, variant: "factor_two_to_three" },
        MutationPoint { id: "bigint.scale.swap_args", method: "scale", site: 0, operator: ArgSwap, variant: "swap_dividend_divisor" },
    ]
}

pub(crate) fn subject() -> Subject {
    Subject {
        name: "bigint-calc",
        methods: METHODS.to_vec(),
        globals: GLOBALS.to_vec(),
        mutation_points: points(),
        kind: SubjectKind::Bigint,
    }
}

fn i64_of(v: i128) -> i64 {
    v as i64
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
    if fields.len() != 3 {
        return Err(invalid_payload(s.name, format!("expected 3 fields, got {}", fields.len())));
    }
    let (parent, delta, block) = (fields[0], fields[1], fields[2]);
    if !(1..=PARENT_MAX).contains(&parent) {
        return Err(invalid_payload(s.name, format!("parent {parent} out of range")));
    }
    if !(-100_000..=100_000).contains(&delta) {
        return Err(invalid_payload(s.name, format!("delta {delta} out of range")));
    }
    if !(0..=1_000_000).contains(&block) {
        return Err(invalid_payload(s.name, format!("block {block} out of range")));
    }

    let mut tb = TraceBuilder::new();
    let mut steps: i64 = 0;

    // load: sanity-check the tuple, falling back to neutral values.
    let ok = if m.on("bigint.load.and_or") {
        parent > 0 || delta < 250
    } else {
        parent > 0 && delta < 250
    };
    let (parent, delta) = if ok { (parent as i128, delta as i128) } else { (1, 0) };
    steps += 1;
    tb.call(
        "calc",
        "load",
        vec![Primitive::i64(fields[0]), Primitive::i64(fields[1]), Primitive::i64(fields[2])],
        vec![Primitive::bool(ok)],
    );

    // era_of: threshold the block number.
    let first = if m.on("bigint.era_of.lt_le_a") { block <= 1000 } else { block < 1000 };
    let second = if m.on("bigint.era_of.lt_le_b") { block <= 2000 } else { block < 2000 };
    let era: i128 = if first {
        0
    } else if second {
        1
    } else {
        2
    };
    steps += 1;
    tb.call("calc", "era_of", vec![Primitive::i64(block)], vec![Primitive::i64(era as i64)]);

    // adjust: nudge the parent by a delta-derived factor.
    let divisor: i128 = if m.on("bigint.adjust.half_divisor") { 1024 } else { 2048 };
    let q = delta / 10;
    let positive = if m.on("bigint.adjust.ge_gt") { delta > 0 } else { delta >= 0 };
    let factor = if positive {
        let base = if m.on("bigint.adjust.one_to_era") { era } else { 1 };
        (base - q).max(-99)
    } else {
        2
    };
    let adjusted = parent + parent / divisor * factor;
    steps += 1;
    tb.call(
        "calc",
        "adjust",
        vec![Primitive::i64(parent as i64), Primitive::i64(delta as i64)],
        vec![Primitive::i64(i64_of(adjusted))],
    );

    // clamp_floor: never drop below the minimum difficulty.
    let floor = if m.on("bigint.clamp_floor.zero_floor") { 0 } else { FLOOR };
    let low = if m.on("bigint.clamp_floor.lt_gt") { adjusted > floor } else { adjusted < floor };
    let floored = if low { floor } else { adjusted };
    steps += 1;
    tb.call(
        "calc",
        "clamp_floor",
        vec![Primitive::i64(i64_of(adjusted))],
        vec![Primitive::i64(i64_of(floored))],
    );

    // bomb_exp: how many doublings the era bomb applies.
    let period: i128 = if m.on("bigint.bomb_exp.period") { 200 } else { 300 };
    let exp = if era == 0 { 0 } else { (block as i128 / period - era * 3).clamp(0, 24) };
    steps += 1;
    tb.call(
        "calc",
        "bomb_exp",
        vec![Primitive::i64(block), Primitive::i64(era as i64)],
        vec![Primitive::i64(exp as i64)],
    );

    // pow2_loop: a run of identical doubling calls.
    let mut acc: i128 = 1;
    let mut i: i128 = 0;
    loop {
        let more = if m.on("bigint.pow2_loop.extra_iter") { i <= exp } else { i < exp };
        if !more {
            break;
        }
        let mul: i128 = if m.on("bigint.mul_step.two_three") { 3 } else { 2 };
        acc *= mul;
        steps += 1;
        tb.call(
            "pow2_loop",
            "mul_step",
            vec![Primitive::i64(i as i64)],
            vec![Primitive::i64(i64_of(acc))],
        );
        i += 1;
    }
    steps += 1;
    tb.call("calc", "pow2_loop", vec![Primitive::i64(exp as i64)], vec![Primitive::i64(i64_of(acc))]);

    // scale: divide by the era weight.
    let den = era + 1;
    let (num, div) = if m.on("bigint.scale.swap_args") { (den, floored) } else { (floored, den) };
    let scaled = num / div;
    steps += 1;
    tb.call(
        "calc",
        "scale",
        vec![Primitive::i64(i64_of(num)), Primitive::i64(i64_of(div))],
        vec![Primitive::i64(i64_of(scaled))],
    );

    // combine: fold in the bomb.
    let total = scaled + acc * 997;
    steps += 1;
    tb.call(
        "calc",
        "combine",
        vec![Primitive::i64(i64_of(scaled)), Primitive::i64(i64_of(acc))],
        vec![Primitive::i64(i64_of(total))],
    );

    let lo = (total as u128 & 0xFFFF_FFFF_FFFF_FFFF) as u64 as i64;
    let hi = ((total as u128) >> 64) as u64 as i64;
    tb.call("calc", "finish", Value::new(), vec![Primitive::i64(lo)]);

    let globals = vec![
        global("g_era", vec![Primitive::i64(era as i64)]),
        global("g_steps", vec![Primitive::i64(steps)]),
    ];
    Ok((SubjectOutput(vec![era as i64, hi, lo]), tb.into_lines(), globals))
}

/// Tuples `(parent, delta, block)` with boundary-biased block numbers.
pub(crate) fn gen_payload(rng: &mut ChaCha20Rng) -> Payload {
    let parent = if rng.gen_bool(0.3) {
        rng.gen_range(1..100_000i64)
    } else {
        rng.gen_range(100_000..PARENT_MAX)
    };
    let delta = if rng.gen_bool(0.1) { 0 } else { rng.gen_range(-300..300i64) };
    let block = if rng.gen_bool(0.2) {
        *[999i64, 1000, 1001, 1999, 2000, 2001].get(rng.gen_range(0..6usize)).unwrap()
    } else {
        rng.gen_range(0..3000i64)
    };
    Payload::Tuple(vec![parent, delta, block])
}
