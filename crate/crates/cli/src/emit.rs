//! Result bundles and their serialization.
//!
//! A bundle is a list of named tables; JSON renders the whole bundle as one
//! document, csv renders one file per table. Serialization must be
//! deterministic: table order is the construction order, struct fields keep
//! their declaration order, and floats print in shortest round-trip form,
//! so identical inputs produce identical bytes. Wall-clock timings are the
//! one legitimate source of variation and live in a separate field that
//! `--no-timings` removes entirely.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::CliError;

#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn num(x: f64) -> Cell {
        // JSON has no representation for non-finite numbers; every quantity
        // the drivers emit is finite by construction, so a violation here is
        // an internal bug worth stopping on.
        assert!(x.is_finite(), "non-finite value in a result table");
        Cell::Num(x)
    }

    pub fn flag(b: bool) -> Cell {
        Cell::Num(if b { 1.0 } else { 0.0 })
    }

    pub fn text(t: impl Into<String>) -> Cell {
        Cell::Text(t.into())
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Cell::Num(x) => s.serialize_f64(*x),
            Cell::Text(t) => s.serialize_str(t),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub units: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str], units: &[&str]) -> Table {
        Table::named(
            name,
            columns.iter().map(|c| c.to_string()).collect(),
            units.iter().map(|u| u.to_string()).collect(),
        )
    }

    /// Like [`Table::new`] for column sets built at runtime (axis names).
    pub fn named(name: impl Into<String>, columns: Vec<String>, units: Vec<String>) -> Table {
        assert_eq!(columns.len(), units.len());
        Table {
            name: name.into(),
            columns,
            units,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch in table {}", self.name);
        self.rows.push(row);
    }
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub command: &'static str,
    pub spec_name: String,
    pub spec_hash: u64,
    pub tables: Vec<Table>,
}

impl Bundle {
    pub fn new(command: &'static str, spec_name: &str, raw_spec: &[u8]) -> Bundle {
        Bundle {
            command,
            spec_name: spec_name.to_string(),
            spec_hash: fnv1a64(raw_spec),
            tables: Vec::new(),
        }
    }
}

/// FNV-1a over the raw spec bytes; enough to tie a result file back to the
/// exact spec that produced it.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub total_ms: f64,
}

#[derive(Serialize)]
struct TableDoc<'a> {
    name: &'a str,
    columns: &'a [String],
    units: &'a [String],
    rows: Rows<'a>,
}

// serde_json would otherwise pretty-print every cell on its own line;
// pre-rendering each row compactly and injecting it raw keeps one grid node
// per line and the byte stream just as deterministic.
struct Rows<'a>(&'a [Vec<Cell>]);

impl Serialize for Rows<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for row in self.0 {
            let compact = serde_json::to_string(row).map_err(S::Error::custom)?;
            let raw = serde_json::value::RawValue::from_string(compact).map_err(S::Error::custom)?;
            seq.serialize_element(&*raw)?;
        }
        seq.end()
    }
}

#[derive(Serialize)]
struct Document<'a> {
    schema_version: u32,
    engine_version: &'static str,
    command: &'a str,
    spec_name: &'a str,
    spec_hash: String,
    tables: Vec<TableDoc<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<Timings>,
}

pub fn render_json(bundle: &Bundle, timings: Option<Timings>) -> Result<String, CliError> {
    let doc = Document {
        schema_version: 1,
        engine_version: env!("CARGO_PKG_VERSION"),
        command: bundle.command,
        spec_name: &bundle.spec_name,
        spec_hash: format!("fnv1a64:{:016x}", bundle.spec_hash),
        tables: bundle
            .tables
            .iter()
            .map(|t| TableDoc {
                name: &t.name,
                columns: &t.columns,
                units: &t.units,
                rows: Rows(&t.rows),
            })
            .collect(),
        timings,
    };
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| CliError::Numerical(format!("emit: serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

fn csv_field(cell: &Cell) -> String {
    match cell {
        Cell::Num(x) => format!("{x}"),
        Cell::Text(t) => {
            if t.contains(',') || t.contains('"') || t.contains('\n') {
                format!("\"{}\"", t.replace('"', "\"\""))
            } else {
                t.clone()
            }
        }
    }
}

fn render_csv(table: &Table) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "{}", table.columns.join(","));
    for row in &table.rows {
        let fields: Vec<String> = row.iter().map(csv_field).collect();
        let _ = writeln!(text, "{}", fields.join(","));
    }
    text
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Write the bundle. JSON goes to stdout unless `out` names a directory
/// (then to <out>/result.json); csv always needs `out` since it writes one
/// file per table. `to_stdout` is off for check, whose stdout is the
/// per-property report.
pub fn emit(
    bundle: &Bundle,
    format: Format,
    out: Option<&Path>,
    timings: Option<Timings>,
    to_stdout: bool,
) -> Result<(), CliError> {
    if bundle.tables.is_empty() {
        return Err(CliError::Usage(
            "the result bundle is empty: the spec requests no tasks".into(),
        ));
    }
    let io = |path: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    match format {
        Format::Json => {
            let text = render_json(bundle, timings)?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
                    let path = dir.join("result.json");
                    fs::write(&path, text).map_err(|e| io(&path, e))?;
                }
                None => {
                    if to_stdout {
                        print!("{text}");
                    }
                }
            }
        }
        Format::Csv => {
            let dir = out.ok_or_else(|| {
                CliError::Usage("--format csv writes one file per table and needs --out <dir>".into())
            })?;
            fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
            for table in &bundle.tables {
                let path = dir.join(format!("{}.csv", table.name));
                fs::write(&path, render_csv(table)).map_err(|e| io(&path, e))?;
            }
        }
    }
    Ok(())
}
