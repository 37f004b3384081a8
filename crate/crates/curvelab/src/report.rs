//! Tabular experiment records shared by the experiment drivers and the CLI.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Float formatting with 17 significant digits, which round-trips `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x)
    } else {
        format!("{}", x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Bool(bool),
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Cell::Bool(b) => Some(*b),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Bool(b) => b.to_string(),
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) => fmt_f64(*x),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}
impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}
impl From<i32> for Cell {
    fn from(x: i32) -> Self {
        Cell::Int(x as i64)
    }
}
impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}
impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}
impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}
impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// Rows of measurements plus fitted exponents and pass/fail flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub fits: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
    pub pass: bool,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub runtime_s: f64,
}

impl ExperimentReport {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            pass: true,
            ..Default::default()
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<Cell>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i].clone()).collect())
    }

    pub fn column_f64(&self, name: &str) -> Option<Vec<f64>> {
        self.column(name)?.iter().map(|c| c.as_f64()).collect()
    }

    pub fn fit(&mut self, key: &str, v: f64) {
        self.fits.insert(key.to_string(), v);
    }

    /// Records a flag; a false flag also clears the overall pass bit when
    /// `gating` is set.
    pub fn flag(&mut self, key: &str, v: bool, gating: bool) {
        self.flags.insert(key.to_string(), v);
        if gating && !v {
            self.pass = false;
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let e = |e: csv::Error| invalid(format!("csv: {e}"));
        wr.write_record(&self.columns).map_err(e)?;
        for r in &self.rows {
            wr.write_record(r.iter().map(|c| c.render())).map_err(e)?;
        }
        wr.flush().map_err(|e| invalid(format!("csv: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for &x in &[0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_matches_json_rows() {
        let mut r = ExperimentReport::new("t", &["delta", "ratio", "pass"]);
        r.push_row(vec![0.125.into(), (1.0 / 3.0).into(), true.into()]);
        r.push_row(vec![0.0625.into(), 0.7.into(), false.into()]);
        let back: ExperimentReport = serde_json::from_str(&r.to_json_pretty()).unwrap();
        assert_eq!(back.rows, r.rows);
        let csv = r.to_csv_string();
        let mut rd = csv::Reader::from_reader(csv.as_bytes());
        for (rec, row) in rd.records().zip(&r.rows) {
            let rec = rec.unwrap();
            assert_eq!(rec[1].parse::<f64>().unwrap(), row[1].as_f64().unwrap());
        }
    }
}
