//! Deterministic serialisation: JSON Lines with 17 significant digits, or CSV.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::Value;

struct SigFormatter;

impl Formatter for SigFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(fmt_f64(v).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{:.16e}", v)
}

/// One JSON object on a single line, floats printed with 17 significant digits.
pub fn json_line<T: Serialize>(v: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFormatter);
    v.serialize(&mut ser).expect("serialisable record");
    String::from_utf8(buf).expect("utf-8 json")
}

/// A table cell rendered from a JSON value.
pub fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => match n.as_i64() {
            Some(i) if !n.is_f64() => i.to_string(),
            _ => fmt_f64(n.as_f64().unwrap_or(f64::NAN)),
        },
        Value::String(s) => s.clone(),
        other => json_line(other),
    }
}

fn flatten(r: &Value) -> Vec<(String, String)> {
    let Value::Object(m) = r else { return Vec::new() };
    let mut out = Vec::new();
    for (k, v) in m {
        match v {
            Value::Object(_) => {}
            Value::Array(a) if a.len() == 2 && a.iter().all(Value::is_number) => {
                out.push((format!("{k}_re"), cell(&a[0])));
                out.push((format!("{k}_im"), cell(&a[1])));
            }
            _ => out.push((k.clone(), cell(v))),
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    /// One row per record. Nested objects are dropped and `[re, im]` pairs split into two columns.
    pub fn from_records(records: &[Value]) -> Self {
        let mut t = Table::default();
        for r in records {
            let cols = flatten(r);
            if t.header.is_empty() {
                t.header = cols.iter().map(|(k, _)| k.clone()).collect();
            }
            t.rows.push(
                t.header
                    .iter()
                    .map(|k| cols.iter().find(|(c, _)| c == k).map(|(_, v)| v.clone()).unwrap_or_default())
                    .collect(),
            );
        }
        t
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn append(&mut self, other: Table) {
        if self.header.is_empty() {
            self.header = other.header;
        }
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("csv header");
        for r in &self.rows {
            w.write_record(r).expect("csv row");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("utf-8 csv")
    }
}

/// Result of one command: JSON records and the equivalent table.
#[derive(Debug, Clone, Default)]
pub struct CommandOutput {
    pub records: Vec<Value>,
    pub table: Table,
}

impl CommandOutput {
    pub fn append(&mut self, other: CommandOutput) {
        self.records.extend(other.records);
        self.table.append(other.table);
    }

    pub fn to_json_lines(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&json_line(r));
            s.push('\n');
        }
        s
    }
}
