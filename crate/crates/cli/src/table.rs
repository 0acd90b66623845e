//! Tabular output as CSV (17 significant digits) or JSON.

use std::io::Write;

use serde_json::{Map, Value};

#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format!("{x:.16e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Int(i) => Value::from(*i),
            Cell::Bool(b) => Value::from(*b),
            Cell::Text(s) => Value::from(s.clone()),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as u64)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// `(key, value)` pairs describing how the data was produced.
    pub provenance: Vec<(&'static str, Value)>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn with(mut self, key: &'static str, value: impl Into<Value>) -> Self {
        self.provenance.push((key, value.into()));
        self
    }

    /// Provenance goes on a leading `#` line, then a header row.
    pub fn write_csv(&self, w: &mut dyn Write) -> std::io::Result<()> {
        if !self.provenance.is_empty() {
            let p: Vec<String> = self.provenance.iter().map(|(k, v)| format!("{k}={v}")).collect();
            writeln!(w, "# {}", p.join(" "))?;
        }
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut m = Map::new();
                for (c, v) in self.columns.iter().zip(row) {
                    m.insert((*c).to_string(), v.json());
                }
                Value::Object(m)
            })
            .collect();
        let mut prov = Map::new();
        for (k, v) in &self.provenance {
            prov.insert((*k).to_string(), v.clone());
        }
        let mut out = Map::new();
        out.insert("provenance".into(), Value::Object(prov));
        out.insert("rows".into(), Value::Array(rows));
        Value::Object(out)
    }
}
