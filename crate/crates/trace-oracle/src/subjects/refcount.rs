//! Reference-counted slot container subject.
//!
//! An operation script drives six object slots: `New` allocates into a slot,
//! `Copy` duplicates a reference, `Reset` drops one, and `Swap` exchanges two
//! slots. Objects are reference-counted and released when their count hits
//! zero. The observable output is the live-object count, the allocation
//! counter, and a slot checksum. Swapping the operands of `Swap` is a
//! registered mutation that can never change behavior — the corpus
//! generator's output filter must discard every run of it.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::trace::{GlobalBinding, Primitive, TraceLine, Value};

use super::{
    global, invalid_payload, Muts, MutationOperator, MutationPoint, Payload, ScriptOp, Subject,
    SubjectError, SubjectKind, SubjectOutput, TraceBuilder,
};

const METHODS: [&str; 10] = [
    "exec",
    "op_new",
    "op_copy",
    "op_reset",
    "op_swap",
    "incref",
    "decref",
    "release",
    "checksum",
    "finish",
];

const GLOBALS: [&str; 2] = ["g_live", "g_allocs"];

const SLOTS: usize = 6;

fn points() -> Vec<MutationPoint> {
    use MutationOperator::*;
    vec![
        MutationPoint { id: "refcount.exec.skip_last", method: "exec", site: 0, operator: LoopBoundary, variant: "skip_last" },
        MutationPoint { id: "refcount.op_new.id_off_one", method: "op_new", site: 0, operator: ScalarVar, variant: "id_plus_one" },
        MutationPoint { id: "refcount.op_copy.swap_args", method: "op_copy", site: 0, operator: ArgSwap, variant: "swap_src_dst" },
        MutationPoint { id: "refcount.op_copy.guard_and_or", method: "op_copy", site: 1, operator: LogicalConnector, variant: "and_to_or" },
        MutationPoint { id: "refcount.op_swap.swap_args", method: "op_swap", site: 0, operator: ArgSwap, variant: "swap_operands" },
        MutationPoint { id: "refcount.incref.plus_two", method: "incref", site: 0, operator: ScalarVar, variant: "step_two" },
        MutationPoint { id: "refcount.decref.minus_two", method: "decref", site: 0, operator: ScalarVar, variant: "step_two" },
        MutationPoint { id: "refcount.decref.eq_ne", method: "decref", site: 1, operator: RelationalOp, variant: "eq_to_ne" },
        MutationPoint { id: "refcount.decref.release_at_one", method: "decref", site: 2, operator: ScalarVar, variant: "zero_to_one" },
        MutationPoint { id: "refcount.checksum.mult", method: "checksum", site: 0, operator: ScalarVar, variant: "mult_31_to_32" },
    ]
}

pub(crate) fn subject() -> Subject {
    Subject {
        name: "refcount-box",
        methods: METHODS.to_vec(),
        globals: GLOBALS.to_vec(),
        mutation_points: points(),
        kind: SubjectKind::Refcount,
    }
}

struct Store<'b> {
    m: Muts<'b>,
    slots: [Option<i64>; SLOTS],
    counts: BTreeMap<i64, i64>,
    live: i64,
    allocs: i64,
}

impl Store<'_> {
    fn incref(&mut self, tb: &mut TraceBuilder, caller: &str, id: i64) {
        let step = if self.m.on("refcount.incref.plus_two") { 2 } else { 1 };
        let c = self.counts.entry(id).or_insert(0);
        *c += step;
        let after = *c;
        tb.call(caller, "incref", vec![Primitive::i64(id)], vec![Primitive::i64(after)]);
    }

    fn decref(&mut self, tb: &mut TraceBuilder, caller: &str, id: i64) {
        let step = if self.m.on("refcount.decref.minus_two") { 2 } else { 1 };
        let c = self.counts.entry(id).or_insert(0);
        *c -= step;
        let after = *c;
        tb.call(caller, "decref", vec![Primitive::i64(id)], vec![Primitive::i64(after)]);
        let bound = if self.m.on("refcount.decref.release_at_one") { 1 } else { 0 };
        let free = if self.m.on("refcount.decref.eq_ne") { after != bound } else { after == bound };
        if free {
            self.live -= 1;
            self.counts.remove(&id);
            tb.call("decref", "release", vec![Primitive::i64(id)], vec![Primitive::i64(self.live)]);
        }
    }

    fn op_new(&mut self, tb: &mut TraceBuilder, s: usize) {
        let id = if self.m.on("refcount.op_new.id_off_one") { self.allocs + 1 } else { self.allocs };
        self.allocs += 1;
        self.live += 1;
        self.incref(tb, "op_new", id);
        if let Some(old) = self.slots[s] {
            self.decref(tb, "op_new", old);
        }
        self.slots[s] = Some(id);
        tb.call("exec", "op_new", vec![Primitive::i64(s as i64)], vec![Primitive::i64(id)]);
    }

    fn op_copy(&mut self, tb: &mut TraceBuilder, a: usize, b: usize) {
        let (a, b) = if self.m.on("refcount.op_copy.swap_args") { (b, a) } else { (a, b) };
        let occupied = self.slots[a].is_some();
        let proceed = if self.m.on("refcount.op_copy.guard_and_or") {
            occupied || a != b
        } else {
            occupied && a != b
        };
        if proceed {
            if let Some(src) = self.slots[a] {
                self.incref(tb, "op_copy", src);
            }
            if let Some(old) = self.slots[b] {
                self.decref(tb, "op_copy", old);
            }
            self.slots[b] = self.slots[a];
        }
        tb.call(
            "exec",
            "op_copy",
            vec![Primitive::i64(a as i64), Primitive::i64(b as i64)],
            Value::new(),
        );
    }

    fn op_reset(&mut self, tb: &mut TraceBuilder, s: usize) {
        if let Some(id) = self.slots[s] {
            self.decref(tb, "op_reset", id);
            self.slots[s] = None;
        }
        tb.call("exec", "op_reset", vec![Primitive::i64(s as i64)], Value::new());
    }

    fn op_swap(&mut self, tb: &mut TraceBuilder, a: usize, b: usize) {
        let (a, b) = if self.m.on("refcount.op_swap.swap_args") { (b, a) } else { (a, b) };
        self.slots.swap(a, b);
        tb.call(
            "exec",
            "op_swap",
            vec![Primitive::i64(a as i64), Primitive::i64(b as i64)],
            Value::new(),
        );
    }

    fn checksum(&self, tb: &mut TraceBuilder) -> i64 {
        let k = if self.m.on("refcount.checksum.mult") { 32 } else { 31 };
        let mut sum: i64 = 0;
        for s in 0..SLOTS {
            sum = sum * k + self.slots[s].map_or(0, |id| id + 1);
        }
        tb.call("finish", "checksum", Value::new(), vec![Primitive::i64(sum)]);
        sum
    }
}

pub(crate) fn run(
    s: &Subject,
    input: &super::TestInput,
    m: Muts<'_>,
) -> Result<(SubjectOutput, Vec<TraceLine>, Vec<GlobalBinding>), SubjectError> {
    let ops = match &input.payload {
        Payload::Script(ops) => ops,
        _ => return Err(invalid_payload(s.name, "expected an operation-script payload")),
    };
    if ops.is_empty() || ops.len() > 64 {
        return Err(invalid_payload(s.name, format!("script length {} out of range", ops.len())));
    }
    for op in ops {
        let slots = match *op {
            ScriptOp::New(a) | ScriptOp::Reset(a) => [a, a],
            ScriptOp::Copy(a, b) | ScriptOp::Swap(a, b) => [a, b],
        };
        if slots.iter().any(|&x| x >= SLOTS) {
            return Err(invalid_payload(s.name, format!("slot index out of range in {op:?}")));
        }
    }

    let mut tb = TraceBuilder::new();
    let mut store =
        Store { m, slots: [None; SLOTS], counts: BTreeMap::new(), live: 0, allocs: 0 };
    let len = ops.len() as i64;
    let mut i: i64 = 0;
    loop {
        let more = if m.on("refcount.exec.skip_last") { i + 1 < len } else { i < len };
        if !more {
            break;
        }
        match ops[i as usize] {
            ScriptOp::New(a) => store.op_new(&mut tb, a),
            ScriptOp::Copy(a, b) => store.op_copy(&mut tb, a, b),
            ScriptOp::Reset(a) => store.op_reset(&mut tb, a),
            ScriptOp::Swap(a, b) => store.op_swap(&mut tb, a, b),
        }
        i += 1;
    }
    let sum = store.checksum(&mut tb);
    tb.call("exec", "finish", Value::new(), vec![Primitive::i64(store.allocs)]);

    let globals = vec![
        global("g_live", vec![Primitive::i64(store.live)]),
        global("g_allocs", vec![Primitive::i64(store.allocs)]),
    ];
    Ok((SubjectOutput(vec![store.live, store.allocs, sum]), tb.into_lines(), globals))
}

/// Scripts of 3-30 operations over the six slots.
pub(crate) fn gen_payload(rng: &mut ChaCha20Rng) -> Payload {
    let len = rng.gen_range(3..=30usize);
    let ops = (0..len)
        .map(|_| {
            let a = rng.gen_range(0..SLOTS);
            let b = rng.gen_range(0..SLOTS);
            match rng.gen_range(0..100u32) {
                0..=34 => ScriptOp::New(a),
                35..=59 => ScriptOp::Copy(a, b),
                60..=79 => ScriptOp::Reset(a),
                _ => ScriptOp::Swap(a, b),
            }
        })
        .collect();
    Payload::Script(ops)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::super::{generate_inputs, run_subject, TestInput};
    use super::*;

    fn input(ops: Vec<ScriptOp>) -> TestInput {
        TestInput { id: "t".to_string(), payload: Payload::Script(ops) }
    }

    #[test]
    fn reference_store_matches_hand_simulation() {
        let s = subject();
        let script = vec![
            ScriptOp::New(0),
            ScriptOp::New(1),
            ScriptOp::Copy(0, 2),
            ScriptOp::Reset(1),
            ScriptOp::Swap(0, 2),
        ];
        // Slots end as [0, -, 0, -, -, -]; object 1 is released.
        // checksum = ((((1*31+0)*31+1)*31)*31)*31 = 28_658_942
        let (out, tr) = run_subject(&s, &input(script), &BTreeSet::new()).unwrap();
        assert_eq!(out.0, vec![1, 2, 28_658_942]);
        assert!(tr.lines.iter().any(|l| l.callee == "release"));
        let g_live = tr.globals.iter().find(|g| g.name == "g_live").unwrap();
        assert_eq!(g_live.value[0].raw, 1);
    }

    #[test]
    fn swap_operand_mutation_is_behaviorally_equivalent() {
        let s = subject();
        let active = BTreeSet::from(["refcount.op_swap.swap_args".to_string()]);
        let none = BTreeSet::new();
        for i in generate_inputs(&s, 60, 47) {
            let (ref_out, _) = run_subject(&s, &i, &none).unwrap();
            let (mut_out, _) = run_subject(&s, &i, &active).unwrap();
            assert_eq!(ref_out, mut_out, "swapping swap operands must not change behavior");
        }
    }

    #[test]
    fn every_other_mutation_point_fires_on_some_generated_input() {
        let s = subject();
        let inputs = generate_inputs(&s, 120, 53);
        let none = BTreeSet::new();
        for p in s.mutation_points.iter().filter(|p| p.id != "refcount.op_swap.swap_args") {
            let active = BTreeSet::from([p.id.to_string()]);
            let fired = inputs.iter().any(|i| {
                let (ref_out, _) = run_subject(&s, i, &none).unwrap();
                let (mut_out, _) = run_subject(&s, i, &active).unwrap();
                mut_out != ref_out
            });
            assert!(fired, "point {} never changes the output", p.id);
        }
    }

    #[test]
    fn leaking_incref_keeps_objects_alive() {
        let s = subject();
        let script = vec![ScriptOp::New(0), ScriptOp::Reset(0)];
        let none = BTreeSet::new();
        let (ref_out, _) = run_subject(&s, &input(script.clone()), &none).unwrap();
        assert_eq!(ref_out.0[0], 0, "reference releases the object");
        let active = BTreeSet::from(["refcount.incref.plus_two".to_string()]);
        let (mut_out, _) = run_subject(&s, &input(script), &active).unwrap();
        assert_eq!(mut_out.0[0], 1, "double incref leaks the object");
    }

    #[test]
    fn malformed_scripts_are_rejected()
    {
        let s = subject();
        let none = BTreeSet::new();
        assert!(run_subject(&s, &input(vec![]), &none).is_err());
        assert!(run_subject(&s, &input(vec![ScriptOp::New(6)]), &none).is_err());
        assert!(run_subject(&s, &input(vec![ScriptOp::Copy(0, 9)]), &none).is_err());
        let too_long = input(vec![ScriptOp::New(0); 65]);
        assert!(run_subject(&s, &too_long, &none).is_err());
    }
}
