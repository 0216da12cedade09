//! Report records: one JSON object per line, closed by a summary.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    /// Reported for information; does not affect the exit code.
    Info,
}

impl Verdict {
    pub fn of(holds: bool) -> Self {
        if holds {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// A measured quantity against its bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub lemma: String,
    pub params: Map<String, Value>,
    pub measured: f64,
    pub bound: f64,
    pub margin: f64,
    pub verdict: Verdict,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Record {
    Check(CheckRecord),
    /// One step of an exact simulation.
    State { t: usize, trace: f64, success: f64 },
    /// One stage of the truncation pipeline.
    Truncation {
        t: usize,
        distance: f64,
        d_star: f64,
        d_circ: f64,
        d_inf: f64,
        d_even_mean: f64,
        removed: usize,
        exact: bool,
    },
    /// A bad-event verdict for `(t, w, a)`.
    Badness { t: usize, w: usize, a: usize, verdict: String, witness_norm: f64, exact_value: f64, proof_margin: f64 },
    Summary { pass: usize, fail: usize, info: usize },
}

/// Non-finite values have no JSON form; they are clamped so every record
/// parses back.
pub fn finite(x: f64) -> f64 {
    let x = x + 0.0;
    if x.is_nan() {
        0.0
    } else {
        x.clamp(f64::MIN, f64::MAX)
    }
}

pub fn check(lemma: &str, params: Value, measured: f64, bound: f64, holds: bool, seed: u64) -> Record {
    let params = match params {
        Value::Object(m) => m,
        Value::Null => Map::new(),
        other => Map::from_iter([("value".to_string(), other)]),
    };
    Record::Check(CheckRecord {
        lemma: lemma.into(),
        params,
        measured: finite(measured),
        bound: finite(bound),
        margin: finite(bound - measured),
        verdict: Verdict::of(holds),
        seed,
    })
}

pub fn info(lemma: &str, params: Value, measured: f64, bound: f64, seed: u64) -> Record {
    let mut r = check(lemma, params, measured, bound, true, seed);
    if let Record::Check(c) = &mut r {
        c.verdict = Verdict::Info;
    }
    r
}

pub fn summarize(records: &[Record]) -> Record {
    let (mut pass, mut fail, mut info) = (0, 0, 0);
    for r in records {
        if let Record::Check(c) = r {
            match c.verdict {
                Verdict::Pass => pass += 1,
                Verdict::Fail => fail += 1,
                Verdict::Info => info += 1,
            }
        }
    }
    Record::Summary { pass, fail, info }
}

pub fn failures(records: &[Record]) -> usize {
    records.iter().filter(|r| matches!(r, Record::Check(c) if c.verdict == Verdict::Fail)).count()
}

/// The report text: every record, then the summary.
pub fn render(records: &[Record]) -> String {
    let mut out = String::new();
    for r in records.iter().chain(std::iter::once(&summarize(records))) {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Writes the report atomically: a temporary file in the target directory,
/// renamed into place.
pub fn emit_report(records: &[Record], path: &Path) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(render(records).as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn parse_report(text: &str) -> serde_json::Result<Vec<Record>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}
