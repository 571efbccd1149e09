//! Frame-protocol state machine subjects.
//!
//! The matcher scans a byte string for one well-formed frame:
//! `MAGIC  HEADER(letters)  SEP  LEN(digit 1-9)  PAYLOAD(LEN digits)  TERMINAL`.
//! Two variants share the transition structure but differ in magic byte,
//! header alphabet and length bounds, and terminal byte.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::trace::{GlobalBinding, Primitive, TraceLine, Value};

use super::{
    global, invalid_payload, Muts, MutationOperator, MutationPoint, Payload, Subject,
    SubjectError, SubjectKind, SubjectOutput, TraceBuilder,
};

#[derive(Debug, Clone, Copy)]
pub(crate) struct FsmConfig {
    pub magic: u8,
    pub hdr_lo: u8,
    pub hdr_hi: u8,
    pub hdr_min: i64,
    pub hdr_max: i64,
    pub sep: u8,
    pub terminal: u8,
}

const PROTO: FsmConfig = FsmConfig {
    magic: b'~',
    hdr_lo: b'A',
    hdr_hi: b'Z',
    hdr_min: 2,
    hdr_max: 4,
    sep: b':',
    terminal: b'\n',
};

const PROTO_ALT: FsmConfig = FsmConfig {
    magic: b'!',
    hdr_lo: b'a',
    hdr_hi: b'z',
    hdr_min: 1,
    hdr_max: 5,
    sep: b':',
    terminal: b'\r',
};

const METHODS: [&str; 13] = [
    "run",
    "reset",
    "step_idle",
    "step_header",
    "step_len",
    "step_payload",
    "step_check",
    "in_range",
    "is_digit",
    "is_terminal",
    "enough_header",
    "nonzero",
    "finish",
];

const GLOBALS: [&str; 2] = ["g_state", "g_matched"];

fn points() -> Vec<MutationPoint> {
    use MutationOperator::*;
    vec![
        MutationPoint { id: "fsm.run.loop", method: "run", site: 0, operator: LoopBoundary, variant: "skip_last" },
        MutationPoint { id: "fsm.step_header.ge_le", method: "step_header", site: 0, operator: RelationalOp, variant: "ge_to_le" },
        MutationPoint { id: "fsm.step_len.ne_eq", method: "step_len", site: 0, operator: RelationalOp, variant: "ne_to_eq" },
        MutationPoint { id: "fsm.in_range.and_or", method: "in_range", site: 0, operator: LogicalConnector, variant: "and_to_or" },
        MutationPoint { id: "fsm.step_len.need_from_hdr", method: "step_len", site: 1, operator: ScalarVar, variant: "len_from_header_count" },
        MutationPoint { id: "fsm.is_digit.range_swap", method: "is_digit", site: 0, operator: ArgSwap, variant: "swap_bounds" },
        MutationPoint { id: "fsm.step_payload.dec_two", method: "step_payload", site: 0, operator: ScalarVar, variant: "step_two" },
        MutationPoint { id: "fsm.step_payload.eq_ge", method: "step_payload", site: 1, operator: RelationalOp, variant: "eq_to_ge" },
        MutationPoint { id: "fsm.step_check.eq_ge", method: "step_check", site: 0, operator: RelationalOp, variant: "eq_to_ge" },
        MutationPoint { id: "fsm.reset.zero_one", method: "reset", site: 0, operator: ScalarVar, variant: "zero_to_one" },
    ]
}

pub(crate) fn subject_proto() -> Subject {
    Subject {
        name: "fsm-proto",
        methods: METHODS.to_vec(),
        globals: GLOBALS.to_vec(),
        mutation_points: points(),
        kind: SubjectKind::Fsm(PROTO),
    }
}

pub(crate) fn subject_proto_alt() -> Subject {
    Subject {
        name: "fsm-proto-alt",
        methods: METHODS.to_vec(),
        globals: GLOBALS.to_vec(),
        mutation_points: points(),
        kind: SubjectKind::Fsm(PROTO_ALT),
    }
}

struct Machine<'a, 'b> {
    cfg: &'a FsmConfig,
    m: Muts<'b>,
    state: i64,
    hdr_count: i64,
    need: i64,
    matched: i64,
}

impl Machine<'_, '_> {
    /// Record one membership check: arguments are the byte and its bounds,
    /// the return value is the verdict plus the signed distance to each
    /// bound, so the trace shows *how* a byte sat relative to the range.
    fn record_check(
        tb: &mut TraceBuilder,
        caller: &str,
        class: &str,
        b: i64,
        lo: i64,
        hi: i64,
        r: bool,
    ) {
        tb.call(
            caller,
            class,
            vec![Primitive::i64(b), Primitive::i64(lo), Primitive::i64(hi)],
            vec![Primitive::bool(r), Primitive::i64(b - lo), Primitive::i64(hi.saturating_sub(b))],
        );
    }

    fn in_range(&self, tb: &mut TraceBuilder, caller: &str, b: i64, lo: i64, hi: i64) -> bool {
        // The connector mutant rewrites the conjunction into a disjunction,
        // which accepts every byte into every class.
        let r = if self.m.on("fsm.in_range.and_or") {
            b >= lo || b <= hi
        } else {
            b >= lo && b <= hi
        };
        Self::record_check(tb, caller, "in_range", b, lo, hi, r);
        r
    }

    /// One row of the byte-class table: each named class records the byte
    /// and its bounds and returns the membership verdict.
    fn class_check(
        &self,
        tb: &mut TraceBuilder,
        caller: &str,
        class: &str,
        b: i64,
        lo: i64,
        hi: i64,
    ) -> bool {
        let r = b >= lo && b <= hi;
        Self::record_check(tb, caller, class, b, lo, hi, r);
        r
    }

    fn is_digit(&self, tb: &mut TraceBuilder, caller: &str, b: i64) -> bool {
        let (lo, hi) = if self.m.on("fsm.is_digit.range_swap") {
            (i64::from(b'9'), i64::from(b'0'))
        } else {
            (i64::from(b'0'), i64::from(b'9'))
        };
        let r = self.in_range(tb, "is_digit", b, lo, hi);
        tb.call(caller, "is_digit", vec![Primitive::i64(b)], vec![Primitive::bool(r)]);
        r
    }

    fn reset(&mut self, tb: &mut TraceBuilder, caller: &str) {
        self.state = if self.m.on("fsm.reset.zero_one") { 1 } else { 0 };
        self.hdr_count = 0;
        self.need = 0;
        tb.call(caller, "reset", Value::new(), vec![Primitive::i64(self.state)]);
    }

    /// Machine registers as recorded after every step: the instrumented
    /// interpreter logs its full internal state, not just the transition.
    /// The state register is logged last, as the most recent value.
    fn regs(&self) -> Value {
        vec![
            Primitive::i64(self.need),
            Primitive::i64(self.hdr_count),
            Primitive::i64(self.state),
        ]
    }

    fn step_idle(&mut self, tb: &mut TraceBuilder, b: i64) {
        let magic = i64::from(self.cfg.magic);
        let hit = b == magic;
        if hit {
            self.state = 1;
            self.hdr_count = 0;
        }
        tb.call("run", "step_idle", vec![Primitive::i64(b)], self.regs());
    }

    fn step_header(&mut self, tb: &mut TraceBuilder, b: i64) {
        let letter = self.in_range(
            tb,
            "step_header",
            b,
            i64::from(self.cfg.hdr_lo),
            i64::from(self.cfg.hdr_hi),
        );
        let cont = letter && self.hdr_count < self.cfg.hdr_max;
        if cont {
            self.hdr_count += 1;
        } else {
            // Header is over: the byte must be the separator and the header
            // must be long enough, otherwise the machine starts over.
            let sep = i64::from(self.cfg.sep);
            let at_sep = self.in_range(tb, "step_header", b, sep, sep);
            let enough = if self.m.on("fsm.step_header.ge_le") {
                self.hdr_count <= self.cfg.hdr_min
            } else {
                self.hdr_count >= self.cfg.hdr_min
            };
            Self::record_check(
                tb,
                "step_header",
                "enough_header",
                self.hdr_count,
                self.cfg.hdr_min,
                self.cfg.hdr_max,
                enough,
            );
            if at_sep && enough {
                self.state = 2;
            } else {
                self.reset(tb, "step_header");
            }
        }
        tb.call("run", "step_header", vec![Primitive::i64(b)], self.regs());
    }

    fn step_len(&mut self, tb: &mut TraceBuilder, b: i64) {
        let digit = self.is_digit(tb, "step_len", b);
        let zero = i64::from(b'0');
        let nonzero = if self.m.on("fsm.step_len.ne_eq") { b == zero } else { b != zero };
        if digit {
            // Only digits are candidate length bytes, so the nonzero verdict
            // is recorded against the '1'..'9' range.
            Self::record_check(tb, "step_len", "nonzero", b, zero + 1, zero + 9, nonzero);
        }
        if digit && nonzero {
            self.need = if self.m.on("fsm.step_len.need_from_hdr") { self.hdr_count } else { b - zero };
            self.state = 3;
        } else {
            self.reset(tb, "step_len");
        }
        tb.call("run", "step_len", vec![Primitive::i64(b)], self.regs());
    }

    fn step_payload(&mut self, tb: &mut TraceBuilder, b: i64) {
        let digit = self.is_digit(tb, "step_payload", b);
        if digit {
            self.need -= if self.m.on("fsm.step_payload.dec_two") { 2 } else { 1 };
            let done = if self.m.on("fsm.step_payload.eq_ge") { self.need >= 0 } else { self.need == 0 };
            if done {
                self.state = 4;
            }
        } else {
            self.reset(tb, "step_payload");
        }
        tb.call("run", "step_payload", vec![Primitive::i64(b)], self.regs());
    }

    fn step_check(&mut self, tb: &mut TraceBuilder, b: i64) {
        let terminal = i64::from(self.cfg.terminal);
        // eq_ge widens the single-byte range to everything at or above the
        // terminal; the corrupted upper bound lands in the trace arguments.
        let hi = if self.m.on("fsm.step_check.eq_ge") { i64::MAX } else { terminal };
        let hit = self.class_check(tb, "step_check", "is_terminal", b, terminal, hi);
        if hit {
            self.matched += 1;
            self.state = 5;
        } else {
            self.reset(tb, "step_check");
        }
        tb.call(
            "run",
            "step_check",
            vec![Primitive::i64(b)],
            vec![Primitive::i64(self.matched), Primitive::i64(self.state)],
        );
    }
}

pub(crate) fn run(
    cfg: &FsmConfig,
    s: &Subject,
    input: &super::TestInput,
    m: Muts<'_>,
) -> Result<(SubjectOutput, Vec<TraceLine>, Vec<GlobalBinding>), SubjectError> {
    let bytes = match &input.payload {
        Payload::Bytes(b) => b,
        _ => return Err(invalid_payload(s.name, "expected a byte-string payload")),
    };
    let mut tb = TraceBuilder::new();
    let mut fsm = Machine { cfg, m, state: 0, hdr_count: 0, need: 0, matched: 0 };
    fsm.reset(&mut tb, "run");
    let len = bytes.len() as i64;
    let mut pos: i64 = 0;
    loop {
        let more = if m.on("fsm.run.loop") { pos + 1 < len } else { pos < len };
        if !more || fsm.state == 5 {
            break;
        }
        let b = i64::from(bytes[pos as usize]);
        match fsm.state {
            0 => fsm.step_idle(&mut tb, b),
            1 => fsm.step_header(&mut tb, b),
            2 => fsm.step_len(&mut tb, b),
            3 => fsm.step_payload(&mut tb, b),
            _ => fsm.step_check(&mut tb, b),
        }
        pos += 1;
    }
    // Scan outcome code: 1 = matched, 0 = scanned to the end without a
    // match, -1 = stopped mid-input (the scan loop gave up early).
    let outcome = if fsm.state == 5 {
        1
    } else if pos == len {
        0
    } else {
        -1
    };
    tb.call(
        "run",
        "finish",
        Value::new(),
        vec![
            Primitive::i64(fsm.state),
            Primitive::i64(len - pos),
            Primitive::i64(outcome),
        ],
    );
    let globals = vec![
        global("g_state", vec![Primitive::i64(fsm.state)]),
        global("g_matched", vec![Primitive::i64(fsm.matched)]),
    ];
    let output = SubjectOutput(vec![fsm.matched, fsm.state, pos]);
    Ok((output, tb.into_lines(), globals))
}

/// One well-formed frame for the given config.
fn well_formed(cfg: &FsmConfig, rng: &mut ChaCha20Rng) -> Vec<u8> {
    let mut out = vec![cfg.magic];
    let hdr_len = rng.gen_range(cfg.hdr_min..=cfg.hdr_max);
    for _ in 0..hdr_len {
        out.push(rng.gen_range(cfg.hdr_lo..=cfg.hdr_hi));
    }
    out.push(cfg.sep);
    let len = rng.gen_range(1..=9u8);
    out.push(b'0' + len);
    for _ in 0..len {
        out.push(b'0' + rng.gen_range(0..=9u8));
    }
    out.push(cfg.terminal);
    out
}

/// Byte strings of length 1-64: well-formed frames (with optional trailing
/// noise), single-corruption near-misses, and raw noise.
pub(crate) fn gen_payload(cfg: &FsmConfig, rng: &mut ChaCha20Rng) -> Payload {
    let noise_pool: Vec<u8> = {
        let mut p = vec![cfg.magic, cfg.sep, cfg.terminal, b'0', b'5', b'9'];
        p.extend(cfg.hdr_lo..=cfg.hdr_lo.saturating_add(3));
        p.extend([b' ', b'.', b'x', 0x00, 0x7F]);
        p
    };
    let style = rng.gen_range(0..100u32);
    let mut bytes = if style < 50 {
        let mut b = well_formed(cfg, rng);
        for _ in 0..rng.gen_range(0..=2) {
            b.push(*noise_pool.choose(rng).unwrap());
        }
        b
    } else if style < 90 {
        let mut b = well_formed(cfg, rng);
        match rng.gen_range(1..8u32) {
            1 => {
                // One header byte outside the alphabet.
                b[1] = cfg.hdr_lo.wrapping_sub(2);
            }
            2 => {
                // Header one longer than the bound allows.
                let extra: Vec<u8> =
                    (0..=cfg.hdr_max as usize).map(|_| rng.gen_range(cfg.hdr_lo..=cfg.hdr_hi)).collect();
                let rest = b.split_off(1);
                let skip = rest.iter().position(|&x| x == cfg.sep).unwrap();
                b.extend(extra);
                b.extend(&rest[skip..]);
            }
            3 => {
                // Header one shorter than the minimum.
                let rest = b.split_off(1);
                let skip = rest.iter().position(|&x| x == cfg.sep).unwrap();
                b.extend((1..cfg.hdr_min).map(|_| rng.gen_range(cfg.hdr_lo..=cfg.hdr_hi)));
                b.extend(&rest[skip..]);
            }
            4 => {
                let sep_at = b.iter().position(|&x| x == cfg.sep).unwrap();
                b[sep_at + 1] = b'0';
            }
            5 => {
                let sep_at = b.iter().position(|&x| x == cfg.sep).unwrap();
                b[sep_at + 2] = b'x';
            }
            6 => {
                let last = b.len() - 1;
                b[last] = cfg.terminal.wrapping_add(7);
            }
            _ => {
                let keep = rng.gen_range(1..b.len());
                b.truncate(keep);
            }
        }
        b
    } else {
        let len = rng.gen_range(1..=16usize);
        (0..len).map(|_| *noise_pool.choose(rng).unwrap()).collect()
    };
    bytes.truncate(64);
    if bytes.is_empty() {
        bytes.push(cfg.magic);
    }
    Payload::Bytes(bytes)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::super::{generate_inputs, run_subject, TestInput};
    use super::*;

    fn input(bytes: &[u8]) -> TestInput {
        TestInput { id: "t".to_string(), payload: Payload::Bytes(bytes.to_vec()) }
    }

    #[test]
    fn reference_machine_matches_a_well_formed_frame() {
        let s = subject_proto();
        // "~AB:247\n": magic, 2-letter header, separator, len 2, payload 47, LF.
        let (out, tr) = run_subject(&s, &input(b"~AB:247\n"), &BTreeSet::new()).unwrap();
        assert_eq!(out.0[0], 1, "frame should match");
        assert_eq!(out.0[1], 5, "machine should end matched");
        assert!(tr.lines.iter().any(|l| l.callee == "step_check"));
        let g_matched = tr.globals.iter().find(|g| g.name == "g_matched").unwrap();
        assert_eq!(g_matched.value[0].raw, 1);
    }

    #[test]
    fn reference_machine_rejects_malformed_frames() {
        let s = subject_proto();
        for bad in [&b"~A:247\n"[..], b"~AB:047\n", b"~ABCDE:247\n", b"~AB:24x\n", b"xAB:247\n"] {
            let (out, _) = run_subject(&s, &input(bad), &BTreeSet::new()).unwrap();
            assert_eq!(out.0[0], 0, "{:?} should not match", String::from_utf8_lossy(bad));
        }
    }

    #[test]
    fn empty_input_still_emits_a_trace() {
        let s = subject_proto();
        let (out, tr) = run_subject(&s, &input(b""), &BTreeSet::new()).unwrap();
        assert_eq!(out.0[0], 0);
        assert!(tr.lines.len() >= 2, "reset and finish should always be traced");
        assert_eq!(tr.lines.first().unwrap().callee, "reset");
        assert_eq!(tr.lines.last().unwrap().callee, "finish");
    }

    #[test]
    fn variants_disagree_on_each_other_s_frames() {
        let proto = subject_proto();
        let alt = subject_proto_alt();
        let proto_frame = input(b"~AB:11\n");
        let alt_frame = input(b"!ab:11\r");
        let none = BTreeSet::new();
        assert_eq!(run_subject(&proto, &proto_frame, &none).unwrap().0 .0[0], 1);
        assert_eq!(run_subject(&alt, &proto_frame, &none).unwrap().0 .0[0], 0);
        assert_eq!(run_subject(&proto, &alt_frame, &none).unwrap().0 .0[0], 0);
        assert_eq!(run_subject(&alt, &alt_frame, &none).unwrap().0 .0[0], 1);
    }

    #[test]
    fn every_mutation_point_fires_on_some_generated_input() {
        for s in [subject_proto(), subject_proto_alt()] {
            let inputs = generate_inputs(&s, 80, 37);
            let none = BTreeSet::new();
            for p in &s.mutation_points {
                let active = BTreeSet::from([p.id.to_string()]);
                let fired = inputs.iter().any(|i| {
                    let (ref_out, _) = run_subject(&s, i, &none).unwrap();
                    let (mut_out, _) = run_subject(&s, i, &active).unwrap();
                    mut_out != ref_out
                });
                assert!(fired, "{}: point {} never changes the output", s.name, p.id);
            }
        }
    }

    #[test]
    fn generated_payloads_stay_in_grammar() {
        let s = subject_proto();
        for i in generate_inputs(&s, 200, 41) {
            match i.payload {
                Payload::Bytes(b) => {
                    assert!(!b.is_empty() && b.len() <= 64, "length {} out of range", b.len())
                }
                other => panic!("unexpected payload {other:?}"),
            }
        }
    }

    #[test]
    fn swapped_range_arguments_appear_in_the_trace() {
        let s = subject_proto();
        let active = BTreeSet::from(["fsm.is_digit.range_swap".to_string()]);
        let (_, tr) = run_subject(&s, &input(b"~AB:247\n"), &active).unwrap();
        let line = tr
            .lines
            .iter()
            .find(|l| l.caller == "is_digit" && l.callee == "in_range")
            .unwrap();
        assert_eq!(line.args[1].raw, u64::from(b'9'), "swapped lower bound");
        assert_eq!(line.args[2].raw, u64::from(b'0'), "swapped upper bound");
    }
}
