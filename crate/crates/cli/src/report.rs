//! Check records, `summary.jsonl` and the per-check CSV files.
//!
//! Floats are written with 17 significant digits and there are no
//! timestamps, so identical runs produce identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Num(f64),
    Int(u64),
    Bool(bool),
    Str(String),
    List(Vec<Value>),
    Object(Vec<(String, Value)>),
}

impl Value {
    fn write_json(&self, out: &mut String) {
        match self {
            Value::Num(v) if v.is_finite() => out.push_str(&format_float(*v)),
            Value::Num(_) => out.push_str("null"),
            Value::Int(v) => out.push_str(&v.to_string()),
            Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Value::Str(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
            Value::List(items) => {
                out.push('[');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    v.write_json(out);
                }
                out.push(']');
            }
            Value::Object(fields) => write_object(fields, out),
        }
    }
}

fn write_object(fields: &[(String, Value)], out: &mut String) {
    out.push('{');
    for (i, (k, v)) in fields.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&serde_json::to_string(k).expect("strings serialize"));
        out.push(':');
        v.write_json(out);
    }
    out.push('}');
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV table owned by a record; written as `<check>.csv` unless named.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| format_float(*v)).collect());
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        fs::write(path, s).map_err(CliError::io(path))
    }
}

#[derive(Clone, Debug)]
pub struct Record {
    pub check: String,
    pub pass: bool,
    pub fields: Vec<(String, Value)>,
    pub table: Option<Table>,
    /// Extra binary artifacts: (file name, bytes).
    pub blobs: Vec<(String, Vec<u8>)>,
}

impl Record {
    pub fn new(check: &str) -> Self {
        Record {
            check: check.to_string(),
            pass: false,
            fields: Vec::new(),
            table: None,
            blobs: Vec::new(),
        }
    }

    pub fn num(&mut self, k: &str, v: f64) -> &mut Self {
        self.fields.push((k.to_string(), Value::Num(v)));
        self
    }

    pub fn int(&mut self, k: &str, v: usize) -> &mut Self {
        self.fields.push((k.to_string(), Value::Int(v as u64)));
        self
    }

    pub fn flag(&mut self, k: &str, v: bool) -> &mut Self {
        self.fields.push((k.to_string(), Value::Bool(v)));
        self
    }

    pub fn text(&mut self, k: &str, v: impl Into<String>) -> &mut Self {
        self.fields.push((k.to_string(), Value::Str(v.into())));
        self
    }

    pub fn value(&mut self, k: &str, v: Value) -> &mut Self {
        self.fields.push((k.to_string(), v));
        self
    }

    /// One JSON object: `check`, the fields in insertion order, then `pass`.
    pub fn to_json(&self) -> String {
        let mut fields = vec![("check".to_string(), Value::Str(self.check.clone()))];
        fields.extend(self.fields.iter().cloned());
        fields.push(("pass".to_string(), Value::Bool(self.pass)));
        let mut out = String::new();
        write_object(&fields, &mut out);
        out
    }
}

/// Writes `summary.jsonl` and every table and blob into `dir`. Returns the
/// written paths in order.
pub fn emit_report(records: &[Record], dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let mut written = Vec::new();
    let summary = dir.join("summary.jsonl");
    let mut file = fs::File::create(&summary).map_err(CliError::io(&summary))?;
    for r in records {
        writeln!(file, "{}", r.to_json()).map_err(CliError::io(&summary))?;
    }
    written.push(summary);
    for r in records {
        if let Some(t) = &r.table {
            let path = dir.join(format!("{}.csv", r.check));
            t.write(&path)?;
            written.push(path);
        }
        for (name, bytes) in &r.blobs {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(CliError::io(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}
