//! Program description files.
//!
//! A program file is TOML with a fixed set of keys; anything unknown is an
//! error. Example:
//!
//! ```toml
//! q = 1
//! m = 0
//! steps = 3              # optional, defaults to the instance's T
//! output = [0, 1]        # guess for each (v, w), indexed (v << m) | w
//!
//! [channel.store-one]
//! kind = "prepare"       # identity | classical-table | unitary | prepare | kraus-explicit
//! v = 1
//! w = 0
//!
//! [channel.flip]
//! kind = "unitary"
//! matrix = [["0", "1"], ["1", "0"]]
//!
//! [[rule]]               # later rules override earlier ones
//! channel = "store-one"
//! rows = [1]             # optional: rows a it applies to (default: all)
//! b = -1                 # optional: sample value (default: both)
//! steps = [0, 1]         # optional: steps (default: all)
//! ```
//!
//! Entries not covered by any rule use the identity channel. Complex
//! literals are strings such as `"0.5"`, `"-1e-3"`, `"0.6-0.8i"` or `"1i"`.
//! `kraus-explicit` takes `ops`: for each input label `w` a list of
//! `2^{q+m} × 2^q` matrices whose rows are ordered `(w', v)`;
//! `classical-table` takes `table`, the new label for each `w`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::Deserialize;

use super::{BranchingProgram, ChannelTable, KrausChannel, Schedule};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

type MatrixLiteral = Vec<Vec<String>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProgramFile {
    q: usize,
    m: usize,
    steps: Option<usize>,
    output: Vec<usize>,
    #[serde(default)]
    channel: BTreeMap<String, ChannelSpec>,
    #[serde(default)]
    rule: Vec<Rule>,
}

/// Flat on purpose: serde ignores `deny_unknown_fields` on internally
/// tagged enums, so the per-kind field check is done by hand.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelSpec {
    kind: String,
    table: Option<Vec<usize>>,
    matrix: Option<MatrixLiteral>,
    v: Option<usize>,
    w: Option<usize>,
    ops: Option<Vec<Vec<MatrixLiteral>>>,
}

impl ChannelSpec {
    fn present(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.table.is_some() {
            out.push("table");
        }
        if self.matrix.is_some() {
            out.push("matrix");
        }
        if self.v.is_some() {
            out.push("v");
        }
        if self.w.is_some() {
            out.push("w");
        }
        if self.ops.is_some() {
            out.push("ops");
        }
        out
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Rule {
    channel: String,
    rows: Option<Vec<usize>>,
    b: Option<i8>,
    steps: Option<Vec<usize>>,
}

fn parse_matrix(lit: &MatrixLiteral, what: &str) -> Result<CMatrix> {
    let rows = lit.len();
    let cols = lit.first().map_or(0, Vec::len);
    if rows == 0 || lit.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse { line: 0, msg: format!("{what}: matrix rows must be nonempty and equally long") });
    }
    let mut out = CMatrix::zeros(rows, cols);
    for (i, row) in lit.iter().enumerate() {
        for (j, entry) in row.iter().enumerate() {
            out[(i, j)] = entry
                .trim()
                .parse::<C64>()
                .map_err(|_| Error::Parse { line: 0, msg: format!("{what}: '{entry}' is not a complex number") })?;
        }
    }
    Ok(out)
}

fn build_channel(name: &str, spec: &ChannelSpec, q: usize, m: usize) -> Result<KrausChannel> {
    let ctx = |e: Error| Error::Parse { line: 0, msg: format!("channel '{name}': {e}") };
    let expected: &[&str] = match spec.kind.as_str() {
        "identity" => &[],
        "classical-table" => &["table"],
        "unitary" => &["matrix"],
        "prepare" => &["v", "w"],
        "kraus-explicit" => &["ops"],
        other => return Err(ctx(Error::Unsupported(format!("unknown channel kind '{other}'")))),
    };
    if spec.present() != expected {
        return Err(ctx(Error::InvalidParameter(format!(
            "kind '{}' takes exactly the fields {expected:?}, got {:?}",
            spec.kind,
            spec.present()
        ))));
    }
    match spec.kind.as_str() {
        "identity" => Ok(KrausChannel::identity(q, m)),
        "classical-table" => KrausChannel::classical_map(q, m, spec.table.as_ref().expect("checked")).map_err(ctx),
        "unitary" => KrausChannel::unitary(q, m, &parse_matrix(spec.matrix.as_ref().expect("checked"), name)?).map_err(ctx),
        "prepare" => {
            let (v, w) = (spec.v.expect("checked"), spec.w.expect("checked"));
            if v >= 1 << q || w >= 1 << m {
                return Err(ctx(Error::InvalidParameter(format!("cannot prepare |{v}⟩ at label {w}"))));
            }
            KrausChannel::prepare(q, m, v, w).map_err(ctx)
        }
        _ => {
            let ops = spec
                .ops
                .as_ref()
                .expect("checked")
                .iter()
                .map(|family| family.iter().map(|lit| parse_matrix(lit, name)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            KrausChannel::new(q, m, ops).map_err(ctx)
        }
    }
}

fn line_of(text: &str, err: &toml::de::Error) -> usize {
    err.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1)
}

/// Parses a program for a matrix with `rows` rows; `default_steps` is used
/// when the file does not fix the length.
pub fn parse_program(text: &str, rows: usize, default_steps: usize) -> Result<BranchingProgram> {
    let file: ProgramFile =
        toml::from_str(text).map_err(|e| Error::Parse { line: line_of(text, &e), msg: e.message().to_string() })?;
    let (q, m) = (file.q, file.m);
    if q + m > 8 {
        return Err(Error::SizeCap(format!("q + m = {} exceeds the supported memory size", q + m)));
    }
    let steps = file.steps.unwrap_or(default_steps);
    let mut channels: BTreeMap<&str, Arc<KrausChannel>> = BTreeMap::new();
    for (name, spec) in &file.channel {
        channels.insert(name, Arc::new(build_channel(name, spec, q, m)?));
    }
    let id = Arc::new(KrausChannel::identity(q, m));
    let bad = |msg: String| Error::Parse { line: 0, msg };
    for (i, rule) in file.rule.iter().enumerate() {
        if !channels.contains_key(rule.channel.as_str()) {
            return Err(bad(format!("rule {i} names unknown channel '{}'", rule.channel)));
        }
        if let Some(b) = rule.b {
            if b != 1 && b != -1 {
                return Err(bad(format!("rule {i}: b must be 1 or -1, got {b}")));
            }
        }
        if let Some(a) = rule.rows.iter().flatten().find(|&&a| a >= rows) {
            return Err(bad(format!("rule {i}: row {a} out of range (matrix has {rows} rows)")));
        }
        if let Some(t) = rule.steps.iter().flatten().find(|&&t| t >= steps.max(1)) {
            return Err(bad(format!("rule {i}: step {t} out of range")));
        }
    }
    let table_at = |t: Option<usize>| {
        ChannelTable::from_fn(rows, |a, b| {
            let mut chosen = id.clone();
            for rule in &file.rule {
                let hit = rule.rows.as_ref().map_or(true, |r| r.contains(&a))
                    && rule.b.map_or(true, |rb| rb == b)
                    && match (t, &rule.steps) {
                        (_, None) => true,
                        (Some(t), Some(s)) => s.contains(&t),
                        (None, Some(_)) => unreachable!(),
                    };
                if hit {
                    chosen = channels[rule.channel.as_str()].clone();
                }
            }
            chosen
        })
    };
    let schedule = if file.rule.iter().any(|r| r.steps.is_some()) {
        Schedule::PerStep((0..steps.max(1)).map(|t| table_at(Some(t))).collect())
    } else {
        Schedule::Stationary(table_at(None))
    };
    BranchingProgram::new(q, m, steps.max(1), schedule, file.output)
}
