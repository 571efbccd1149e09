//! Trace corpus file format: line-delimited JSON, one record per line.
//!
//! A trace block is a `meta` record, followed by its `call` records in
//! execution order, followed by its `global` records. The next `meta` starts
//! the next trace. Primitives carry an optional `hex` field holding the exact
//! 64-bit pattern as 16 hex digits; when present it is authoritative over the
//! decimal `v`. Serialization always emits `hex` for `f64` (with `v: null`
//! when the value is not finite), so corpora round-trip bit-exactly.
//!
//! Blank lines are ignored. Parse errors report 1-based file line numbers.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{validate_trace, GlobalBinding, PrimTag, Primitive, Trace, TraceLine, Value, Verdict};

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trace {trace_id} is invalid: {}", violations.join("; "))]
    InvalidTrace { trace_id: String, violations: Vec<String> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, TraceIoError>;

#[derive(Serialize, Deserialize)]
struct PrimJson {
    t: String,
    #[serde(default)]
    v: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hex: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Record {
    Meta {
        trace_id: String,
        subject: String,
        #[serde(default)]
        label: Option<String>,
    },
    Call {
        caller: String,
        callee: String,
        args: Vec<PrimJson>,
        ret: Vec<PrimJson>,
    },
    Global {
        name: String,
        value: Vec<PrimJson>,
    },
}

fn parse_hex(line: usize, hex: &str) -> Result<u64> {
    if hex.len() != 16 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(TraceIoError::Parse { line, msg: format!("hex must be 16 hex digits, got {hex:?}") });
    }
    u64::from_str_radix(hex, 16)
        .map_err(|e| TraceIoError::Parse { line, msg: format!("bad hex {hex:?}: {e}") })
}

fn prim_from_json(line: usize, p: &PrimJson) -> Result<Primitive> {
    let err = |msg: String| TraceIoError::Parse { line, msg };
    let tag = match p.t.as_str() {
        "i64" => PrimTag::I64,
        "f64" => PrimTag::F64,
        "u8" => PrimTag::U8,
        "bool" => PrimTag::Bool,
        other => return Err(err(format!("unknown primitive tag {other:?}"))),
    };
    // An explicit hex pattern is authoritative; `v` is only read without it.
    let raw = if let Some(hex) = &p.hex {
        parse_hex(line, hex)?
    } else {
        match tag {
            PrimTag::I64 => p
                .v
                .as_i64()
                .ok_or_else(|| err(format!("i64 value must be a JSON integer, got {}", p.v)))?
                as u64,
            PrimTag::F64 => match p.v.as_f64() {
                Some(f) => f.to_bits(),
                None => return Err(err("f64 requires hex when v is not a finite number".to_string())),
            },
            PrimTag::U8 => {
                let n = p
                    .v
                    .as_u64()
                    .ok_or_else(|| err(format!("u8 value must be a JSON integer, got {}", p.v)))?;
                if n > 0xFF {
                    return Err(err(format!("u8 value {n} out of range")));
                }
                n
            }
            PrimTag::Bool => u64::from(
                p.v.as_bool()
                    .ok_or_else(|| err(format!("bool value must be a JSON bool, got {}", p.v)))?,
            ),
        }
    };
    match tag {
        PrimTag::U8 if raw > 0xFF => Err(err("u8 raw exceeds 8 bits".to_string())),
        PrimTag::Bool if raw > 1 => Err(err("bool raw not 0 or 1".to_string())),
        _ => Ok(Primitive { tag, raw }),
    }
}

fn prim_to_json(p: &Primitive) -> PrimJson {
    match p.tag {
        PrimTag::I64 => PrimJson { t: "i64".to_string(), v: serde_json::json!(p.as_i64()), hex: None },
        PrimTag::F64 => {
            let f = p.as_f64();
            let v = if f.is_finite() { serde_json::json!(f) } else { serde_json::Value::Null };
            PrimJson { t: "f64".to_string(), v, hex: Some(format!("{:016x}", p.raw)) }
        }
        PrimTag::U8 => PrimJson { t: "u8".to_string(), v: serde_json::json!(p.raw), hex: None },
        PrimTag::Bool => PrimJson { t: "bool".to_string(), v: serde_json::json!(p.raw == 1), hex: None },
    }
}

fn value_from_json(line: usize, ps: &[PrimJson]) -> Result<Value> {
    ps.iter().map(|p| prim_from_json(line, p)).collect()
}

fn label_from_json(line: usize, label: Option<&str>) -> Result<Option<Verdict>> {
    match label {
        None => Ok(None),
        Some("pass") => Ok(Some(Verdict::Pass)),
        Some("fail") => Ok(Some(Verdict::Fail)),
        Some(other) => {
            Err(TraceIoError::Parse { line, msg: format!("unknown label {other:?}, expected pass, fail, or null") })
        }
    }
}

fn label_to_json(label: Option<Verdict>) -> Option<String> {
    label.map(|v| match v {
        Verdict::Pass => "pass".to_string(),
        Verdict::Fail => "fail".to_string(),
    })
}

/// Parses a whole corpus from line-delimited JSON.
pub fn parse_traces(reader: impl BufRead) -> Result<Vec<Trace>> {
    let mut out = Vec::new();
    let mut cur: Option<Trace> = None;
    let mut in_globals = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(text)
            .map_err(|e| TraceIoError::Parse { line: line_no, msg: e.to_string() })?;
        match record {
            Record::Meta { trace_id, subject, label } => {
                if let Some(done) = cur.take() {
                    out.push(done);
                }
                in_globals = false;
                cur = Some(Trace {
                    trace_id,
                    subject,
                    label: label_from_json(line_no, label.as_deref())?,
                    lines: Vec::new(),
                    globals: Vec::new(),
                });
            }
            Record::Call { caller, callee, args, ret } => {
                let t = cur.as_mut().ok_or_else(|| TraceIoError::Parse {
                    line: line_no,
                    msg: "call record before any meta record".to_string(),
                })?;
                if in_globals {
                    return Err(TraceIoError::Parse {
                        line: line_no,
                        msg: "call record after global records of the same trace".to_string(),
                    });
                }
                t.lines.push(TraceLine {
                    caller,
                    callee,
                    args: value_from_json(line_no, &args)?,
                    ret: value_from_json(line_no, &ret)?,
                });
            }
            Record::Global { name, value } => {
                let t = cur.as_mut().ok_or_else(|| TraceIoError::Parse {
                    line: line_no,
                    msg: "global record before any meta record".to_string(),
                })?;
                in_globals = true;
                t.globals.push(GlobalBinding { name, value: value_from_json(line_no, &value)? });
            }
        }
    }
    if let Some(done) = cur.take() {
        out.push(done);
    }
    Ok(out)
}

/// Parses a corpus held in a string.
pub fn parse_traces_str(s: &str) -> Result<Vec<Trace>> {
    parse_traces(s.as_bytes())
}

/// Serializes a corpus to line-delimited JSON. Invalid traces are rejected
/// with their full violation list; output is byte-deterministic.
pub fn serialize_traces(traces: &[Trace], mut writer: impl Write) -> Result<()> {
    for t in traces {
        let violations = validate_trace(t);
        if !violations.is_empty() {
            return Err(TraceIoError::InvalidTrace { trace_id: t.trace_id.clone(), violations });
        }
        let meta = Record::Meta {
            trace_id: t.trace_id.clone(),
            subject: t.subject.clone(),
            label: label_to_json(t.label),
        };
        writeln!(writer, "{}", serde_json::to_string(&meta).expect("meta record serializes"))?;
        for l in &t.lines {
            let rec = Record::Call {
                caller: l.caller.clone(),
                callee: l.callee.clone(),
                args: l.args.iter().map(prim_to_json).collect(),
                ret: l.ret.iter().map(prim_to_json).collect(),
            };
            writeln!(writer, "{}", serde_json::to_string(&rec).expect("call record serializes"))?;
        }
        for g in &t.globals {
            let rec = Record::Global { name: g.name.clone(), value: g.value.iter().map(prim_to_json).collect() };
            writeln!(writer, "{}", serde_json::to_string(&rec).expect("global record serializes"))?;
        }
    }
    Ok(())
}

/// Serializes a corpus to an owned string.
pub fn serialize_traces_string(traces: &[Trace]) -> Result<String> {
    let mut buf = Vec::new();
    serialize_traces(traces, &mut buf)?;
    Ok(String::from_utf8(buf).expect("serialized traces are UTF-8"))
}

/// Reads a corpus file from disk.
pub fn read_trace_file(path: impl AsRef<Path>) -> Result<Vec<Trace>> {
    let file = std::fs::File::open(path)?;
    parse_traces(std::io::BufReader::new(file))
}

/// Writes a corpus file to disk.
pub fn write_trace_file(path: impl AsRef<Path>, traces: &[Trace]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    serialize_traces(traces, &mut w)?;
    w.flush()?;
    Ok(())
}
