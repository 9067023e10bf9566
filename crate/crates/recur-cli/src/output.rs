//! CSV and JSON writers.  Every file starts with the embedded config (CSV:
//! `# key = value` comments; JSON: a "config" object) so any output can be
//! replayed; the JSON rows mirror the CSV columns field for field.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use recur::conditions::ConditionsReport;
use serde_json::{json, Map, Value};

use crate::config::{Format, RunConfig};

#[derive(Debug, Clone)]
pub enum Cell {
    Count(u64),
    Real(f64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Count(v) => v.to_string(),
            Cell::Real(v) => v.to_string(),
            Cell::Text(s) => {
                if s.contains(',') || s.contains('"') {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Count(v) => json!(v),
            // NaN has no JSON encoding; null marks an undefined entry
            Cell::Real(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Text(s) => json!(s),
        }
    }
}

#[derive(Debug)]
pub struct Table {
    /// File stem: an, pair, zn, dichotomy, cylinders, conditions.
    pub name: &'static str,
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

fn config_json(cfg: &RunConfig) -> Value {
    let mut obj = Map::new();
    obj.insert("command".into(), json!(cfg.command));
    for (k, v) in cfg.header_pairs() {
        obj.insert(k.into(), json!(v));
    }
    Value::Object(obj)
}

/// Writes the table under the configured output directory and returns the
/// path.  The bytes are a pure function of the resolved config.
pub fn write_table(cfg: &RunConfig, table: &Table) -> std::io::Result<PathBuf> {
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join(format!("{}.{}", table.name, cfg.format.extension()));
    let mut buf = Vec::new();
    match cfg.format {
        Format::Csv => {
            buf.extend_from_slice(cfg.header_block().as_bytes());
            writeln!(buf, "{}", table.columns.join(","))?;
            for row in &table.rows {
                let line: Vec<String> = row.iter().map(Cell::csv).collect();
                writeln!(buf, "{}", line.join(","))?;
            }
        }
        Format::Json => {
            let rows: Vec<Value> = table
                .rows
                .iter()
                .map(|row| {
                    let mut obj = Map::new();
                    for (col, cell) in table.columns.iter().zip(row) {
                        obj.insert((*col).into(), cell.json());
                    }
                    Value::Object(obj)
                })
                .collect();
            let doc = json!({ "config": config_json(cfg), "rows": rows });
            serde_json::to_writer_pretty(&mut buf, &doc)?;
            buf.push(b'\n');
        }
    }
    fs::write(&path, buf)?;
    Ok(path)
}

/// The conditions report keeps its full structure in JSON; the CSV carries
/// one row per section.
pub fn write_conditions(cfg: &RunConfig, report: &ConditionsReport) -> std::io::Result<PathBuf> {
    match cfg.format {
        Format::Csv => {
            let mut table = Table {
                name: "conditions",
                columns: &["section", "pass", "observed", "bound", "detail"],
                rows: Vec::new(),
            };
            for s in &report.sections {
                table.push(vec![
                    Cell::Text(s.name.to_string()),
                    Cell::Text(if s.pass { "PASS" } else { "FAIL" }.to_string()),
                    Cell::Real(s.observed.unwrap_or(f64::NAN)),
                    Cell::Real(s.bound),
                    Cell::Text(s.detail.clone()),
                ]);
            }
            write_table(cfg, &table)
        }
        Format::Json => {
            fs::create_dir_all(&cfg.out)?;
            let path = cfg.out.join("conditions.json");
            let doc = json!({ "config": config_json(cfg), "report": report });
            let mut buf = serde_json::to_vec_pretty(&doc)?;
            buf.push(b'\n');
            fs::write(&path, buf)?;
            Ok(path)
        }
    }
}
