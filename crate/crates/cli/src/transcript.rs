//! Line-delimited transcript of a run.
//!
//! Line 1 is the baseline record and also carries the gate configuration and
//! master seed. Each following line is one registry event. The last line is a
//! `final` record with the incumbent and the full budget ledger. Every line is
//! canonical JSON with a `schema_version` and `seq` field.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use editgate::canonical::{to_canonical_string, CanonicalError};
use editgate::gate::{GateConfig, GateOutcome, GateState, Registry, RegistryEntry};
use editgate::{Configuration, LedgerEntry};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalRecord {
    pub schema_version: u64,
    pub seq: u64,
    pub kind: String,
    pub incumbent: Configuration,
    pub incumbent_id: String,
    pub accepts: usize,
    pub confirmations: usize,
    pub total_spend: f64,
    pub global_delta: f64,
    pub log_wealth: f64,
    pub ledger: Vec<LedgerEntry>,
}

impl FinalRecord {
    pub fn from_outcome(out: &GateOutcome, seq: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seq,
            kind: "final".into(),
            incumbent_id: out.incumbent.id().to_string(),
            incumbent: out.incumbent.clone(),
            accepts: out.accepts,
            confirmations: out.registry.confirmations().count(),
            total_spend: *out.budget.spent(),
            global_delta: *out.budget.global_delta(),
            log_wealth: clamp_log(out.wealth.log_wealth()),
            ledger: out.budget.ledger().to_vec(),
        }
    }
}

/// Ruined wealth has log-wealth −∞, which JSON cannot carry.
fn clamp_log(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        f64::MIN
    } else {
        x
    }
}

#[derive(Debug)]
pub enum TranscriptError {
    Io(std::io::Error),
    Render(CanonicalError),
    /// Line `line` (1-based) could not be parsed.
    Malformed { line: usize, reason: String },
    /// Line `line` differs from the recomputed record.
    Divergence { line: usize, expected: String, found: String },
    Empty,
    Truncated { lines: usize },
}

impl fmt::Display for TranscriptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TranscriptError::Io(e) => write!(f, "i/o error: {e}"),
            TranscriptError::Render(e) => write!(f, "cannot render record: {e}"),
            TranscriptError::Malformed { line, reason } => write!(f, "line {line}: malformed record: {reason}"),
            TranscriptError::Divergence { line, expected, found } => {
                write!(f, "line {line}: divergence\n  recomputed: {expected}\n  recorded:   {found}")
            }
            TranscriptError::Empty => write!(f, "no baseline entry"),
            TranscriptError::Truncated { lines } => {
                write!(f, "line {}: transcript truncated (missing final record)", lines + 1)
            }
        }
    }
}

impl std::error::Error for TranscriptError {}

impl From<std::io::Error> for TranscriptError {
    fn from(e: std::io::Error) -> Self {
        TranscriptError::Io(e)
    }
}

impl From<CanonicalError> for TranscriptError {
    fn from(e: CanonicalError) -> Self {
        TranscriptError::Render(e)
    }
}

fn with_header(value: Value, seq: u64) -> Value {
    let mut map = match value {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("value".into(), other);
            m
        }
    };
    map.insert("schema_version".into(), SCHEMA_VERSION.into());
    map.insert("seq".into(), seq.into());
    Value::Object(map)
}

/// Canonical line for a registry entry. The baseline line also embeds the
/// gate configuration and master seed.
pub fn render_entry(
    entry: &RegistryEntry,
    seq: u64,
    gate: &GateConfig,
    master_seed: u64,
) -> Result<String, TranscriptError> {
    let mut value = with_header(serde_json::to_value(entry).map_err(CanonicalError::from)?, seq);
    if matches!(entry, RegistryEntry::Baseline { .. }) {
        let map = value.as_object_mut().expect("object");
        map.insert("gate".into(), serde_json::to_value(gate).map_err(CanonicalError::from)?);
        map.insert("master_seed".into(), master_seed.into());
    }
    Ok(to_canonical_string(&value)?)
}

pub fn render_transcript(
    out: &GateOutcome,
    gate: &GateConfig,
    master_seed: u64,
) -> Result<Vec<String>, TranscriptError> {
    let mut lines = Vec::with_capacity(out.registry.len() + 1);
    for (i, entry) in out.registry.entries().iter().enumerate() {
        lines.push(render_entry(entry, i as u64, gate, master_seed)?);
    }
    let fin = FinalRecord::from_outcome(out, out.registry.len() as u64);
    lines.push(to_canonical_string(&fin)?);
    Ok(lines)
}

pub fn write_transcript(path: &Path, lines: &[String]) -> Result<(), TranscriptError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in lines {
        f.write_all(line.as_bytes())?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_lines(path: &Path) -> Result<Vec<String>, TranscriptError> {
    let f = std::fs::File::open(path)?;
    std::io::BufReader::new(f)
        .lines()
        .collect::<Result<Vec<_>, _>>()
        .map_err(TranscriptError::from)
}

/// Header of a transcript: gate configuration, master seed and baseline.
#[derive(Debug, Clone)]
pub struct Header {
    pub gate: GateConfig,
    pub master_seed: u64,
    pub baseline: Configuration,
}

fn malformed(line: usize, reason: impl fmt::Display) -> TranscriptError {
    TranscriptError::Malformed {
        line,
        reason: reason.to_string(),
    }
}

fn strip_header(line_no: usize, text: &str, expect_seq: u64) -> Result<Map<String, Value>, TranscriptError> {
    let value: Value = serde_json::from_str(text).map_err(|e| malformed(line_no, e))?;
    let Value::Object(mut map) = value else {
        return Err(malformed(line_no, "not a JSON object"));
    };
    match map.remove("schema_version").and_then(|v| v.as_u64()) {
        Some(SCHEMA_VERSION) => {}
        Some(v) => return Err(malformed(line_no, format!("unsupported schema_version {v}"))),
        None => return Err(malformed(line_no, "missing schema_version")),
    }
    match map.remove("seq").and_then(|v| v.as_u64()) {
        Some(s) if s == expect_seq => Ok(map),
        Some(s) => Err(malformed(line_no, format!("seq {s}, expected {expect_seq}"))),
        None => Err(malformed(line_no, "missing seq")),
    }
}

pub fn parse_header(first: &str) -> Result<Header, TranscriptError> {
    let mut map = strip_header(1, first, 0)?;
    let gate = map.remove("gate").ok_or(TranscriptError::Empty)?;
    let gate: GateConfig = serde_json::from_value(gate).map_err(|e| malformed(1, e))?;
    let master_seed = map
        .remove("master_seed")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| malformed(1, "missing master_seed"))?;
    match serde_json::from_value::<RegistryEntry>(Value::Object(map)) {
        Ok(RegistryEntry::Baseline { incumbent }) => Ok(Header {
            gate,
            master_seed,
            baseline: incumbent,
        }),
        _ => Err(TranscriptError::Empty),
    }
}

/// Successful replay: the recomputed outcome.
#[derive(Debug)]
pub struct Replay {
    pub header: Header,
    pub outcome: GateOutcome,
    pub lines: usize,
}

/// Re-executes every decision from the recorded deltas and checks each line
/// byte-for-byte against its recomputation. No harness is consulted.
pub fn replay_lines(lines: &[String]) -> Result<Replay, TranscriptError> {
    let first = lines.first().ok_or(TranscriptError::Empty)?;
    if first.trim().is_empty() {
        return Err(TranscriptError::Empty);
    }
    let header = parse_header(first)?;
    let mut state = GateState::new(header.gate.clone(), header.baseline.clone())
        .map_err(|e| malformed(1, e))?;
    let baseline = RegistryEntry::Baseline {
        incumbent: header.baseline.clone(),
    };
    compare(1, render_entry(&baseline, 0, &header.gate, header.master_seed)?, first)?;

    for (i, text) in lines.iter().enumerate().skip(1) {
        let line_no = i + 1;
        let seq = i as u64;
        let map = strip_header(line_no, text, seq)?;
        if map.get("kind").and_then(Value::as_str) == Some("final") {
            if line_no != lines.len() {
                return Err(malformed(line_no, "final record is not the last line"));
            }
            let outcome = state.finish().map_err(|e| malformed(line_no, e))?;
            let fin = FinalRecord::from_outcome(&outcome, seq);
            compare(line_no, to_canonical_string(&fin)?, text)?;
            return Ok(Replay {
                header,
                outcome,
                lines: lines.len(),
            });
        }
        let recorded: RegistryEntry =
            serde_json::from_value(Value::Object(map)).map_err(|e| malformed(line_no, e))?;
        let produced = state.reproduce(&recorded).map_err(|e| TranscriptError::Divergence {
            line: line_no,
            expected: format!("<{e}>"),
            found: text.clone(),
        })?;
        compare(line_no, render_entry(&produced, seq, &header.gate, header.master_seed)?, text)?;
    }
    Err(TranscriptError::Truncated { lines: lines.len() })
}

fn compare(line: usize, expected: String, found: &str) -> Result<(), TranscriptError> {
    if expected == found {
        Ok(())
    } else {
        Err(TranscriptError::Divergence {
            line,
            expected,
            found: found.to_string(),
        })
    }
}

/// Rebuilds the registry from a transcript without recomputation.
pub fn parse_registry(lines: &[String]) -> Result<(Header, Registry, Option<FinalRecord>), TranscriptError> {
    let first = lines.first().ok_or(TranscriptError::Empty)?;
    let header = parse_header(first)?;
    let mut registry = Registry::default();
    registry.push(RegistryEntry::Baseline {
        incumbent: header.baseline.clone(),
    });
    let mut fin = None;
    for (i, text) in lines.iter().enumerate().skip(1) {
        let line_no = i + 1;
        let value: Value = serde_json::from_str(text).map_err(|e| malformed(line_no, e))?;
        if value.get("kind").and_then(Value::as_str) == Some("final") {
            fin = Some(serde_json::from_value(value).map_err(|e| malformed(line_no, e))?);
            break;
        }
        let map = strip_header(line_no, text, i as u64)?;
        registry.push(serde_json::from_value(Value::Object(map)).map_err(|e| malformed(line_no, e))?);
    }
    Ok((header, registry, fin))
}
