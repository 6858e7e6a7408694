//! Result tables and their CSV and JSON renderings.

use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::CliError;

/// Version tag of every CSV header below; bump on any header change.
pub const SCHEMA_VERSION: u32 = 1;

pub const SPECTRUM_HEADER: &[&str] = &["level", "eigenvalue", "multiplicity", "params"];
pub const SIMULATE_HEADER: &[&str] = &[
    "level",
    "sites",
    "trials",
    "seed",
    "lambda_quad",
    "lambda_quad_err",
    "lambda_mc",
    "lambda_mc_se",
    "tv",
    "tv_lower",
    "tv_se",
    "tv_bias_bound",
    "params",
];
pub const BOUNDS_HEADER: &[&str] = &[
    "level",
    "k",
    "branch",
    "lambda_ell",
    "b1",
    "b2_bound",
    "b3_bound",
    "assembled",
    "constant_c",
    "target",
    "bound",
    "bound_capped",
    "trivial",
    "applicable",
    "params",
];
pub const DOS_HEADER: &[&str] = &[
    "t",
    "eta",
    "eta_err",
    "method",
    "flagged",
    "eta_mc",
    "eta_mc_se",
    "trials",
    "seed",
    "params",
];
pub const VERIFY_HEADER: &[&str] = &[
    "f",
    "x",
    "z",
    "trials",
    "seed",
    "joint",
    "joint_se",
    "conditional",
    "conditional_se",
    "combined_se",
    "agree_4se",
];
pub const COMPARE_HEADER: &[&str] = &["level", "tv", "tv_se", "bound", "applicable", "pass"];

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) if v.is_finite() => json!(v),
            Cell::Float(v) => json!(v.to_string()),
            Cell::Bool(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub kind: &'static str,
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(kind: &'static str, header: &'static [&'static str]) -> Self {
        Self {
            kind,
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let map: Map<String, Value> = self
                    .header
                    .iter()
                    .zip(row)
                    .map(|(h, c)| (h.to_string(), c.json()))
                    .collect();
                Value::Object(map)
            })
            .collect();
        json!({ "kind": self.kind, "schema": SCHEMA_VERSION, "rows": rows })
    }

    /// Writes `<kind>.csv` and `<kind>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.csv", self.kind)), self.to_csv()?)?;
        let mut json =
            serde_json::to_vec_pretty(&self.to_json()).map_err(|e| CliError::Io(e.to_string()))?;
        json.push(b'\n');
        std::fs::write(dir.join(format!("{}.json", self.kind)), json)?;
        Ok(())
    }
}
