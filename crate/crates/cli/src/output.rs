//! Tables, CSV emission and the JSON result envelope.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::CliError;

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    pub fn opt(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }

    /// 17 significant digits, lowercase exponent.
    pub fn csv_text(&self) -> String {
        match self {
            Cell::Num(v) if v.is_nan() => "nan".into(),
            Cell::Num(v) if v.is_infinite() => if *v > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Empty => Value::Null,
        }
    }
}

/// Row status; `Failed` rows keep their grid coordinates and blank values.
#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub cells: Vec<Cell>,
    pub status: Status,
}

impl Row {
    pub fn ok(cells: Vec<Cell>) -> Self {
        Self {
            cells,
            status: Status::Ok,
        }
    }

    pub fn failed(mut cells: Vec<Cell>, width: usize, reason: String) -> Self {
        cells.resize(width, Cell::Empty);
        Self {
            cells,
            status: Status::Failed(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Row>,
    pub summary: Map<String, Value>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
            summary: Map::new(),
        }
    }

    pub fn failures(&self) -> Vec<(usize, &str)> {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| match &r.status {
                Status::Failed(m) => Some((i, m.as_str())),
                Status::Ok => None,
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = self.columns.clone();
        header.push("status");
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.cells.iter().map(Cell::csv_text).collect();
            rec.push(match row.status {
                Status::Ok => "ok".into(),
                Status::Failed(_) => "failed".into(),
            });
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.into_error()))
    }

    fn rows_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    let mut obj = Map::new();
                    for (c, v) in self.columns.iter().zip(&r.cells) {
                        obj.insert((*c).to_string(), v.json());
                    }
                    obj.insert(
                        "status".into(),
                        json!(match r.status {
                            Status::Ok => "ok",
                            Status::Failed(_) => "failed",
                        }),
                    );
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Serialize)]
struct Provenance<'a> {
    version: &'static str,
    library_version: &'static str,
    timestamp_unix: u64,
    jobs: usize,
    tolerances: &'a crate::config::Tolerances,
}

pub fn envelope(command: &str, config: &RunConfig, table: &Table, jobs: usize) -> Value {
    let c = config.constants();
    let timestamp_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let failures: Vec<Value> = table
        .failures()
        .into_iter()
        .map(|(row, message)| json!({ "row": row, "message": message }))
        .collect();
    json!({
        "command": command,
        "status": if failures.is_empty() { "ok" } else { "numerical_failure" },
        "config": config,
        "constants": {
            "alpha_s": c.alpha_s(),
            "eps_g": c.eps_g(),
            "mass_ratio": c.mass_ratio(),
            "eps_pe": c.eps_pe(),
            "eps_pp": c.eps_pp(),
        },
        "columns": table.columns,
        "rows": table.rows_json(),
        "summary": table.summary,
        "failures": failures,
        "provenance": Provenance {
            version: env!("CARGO_PKG_VERSION"),
            library_version: rwn_dirac::VERSION,
            timestamp_unix,
            jobs,
            tolerances: &config.tolerances,
        },
    })
}

/// Write `<out>/<command>.csv` (csv format only) and the envelope.
pub fn write_outputs(
    out: &Path,
    command: &str,
    format: Format,
    table: &Table,
    envelope: &Value,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    if format == Format::Csv {
        let path = out.join(format!("{command}.csv"));
        fs::write(&path, table.to_csv()?)?;
        written.push(path);
    }
    let path = out.join(format!("{command}.envelope.json"));
    let mut text = serde_json::to_string_pretty(envelope)?;
    text.push('\n');
    fs::write(&path, text)?;
    written.push(path);
    Ok(written)
}
