//! Trial records, recomputable pass/fail flags and the versioned CSV format.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const SCHEMA_LINE: &str = "# schema=1";

/// Leading columns shared by every experiment.
pub const KEY_COLUMNS: [&str; 5] = ["experiment", "trial", "seed", "n", "dim"];

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            // `{}` prints the shortest string that parses back to the same f64
            Value::Float(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Text(v) => f.write_str(v),
        }
    }
}

/// Ordered measured quantities of one trial.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Row {
    cells: Vec<(String, Value)>,
}

impl Row {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn float(mut self, name: &str, v: f64) -> Self {
        self.cells.push((name.to_string(), Value::Float(v)));
        self
    }

    pub fn int(mut self, name: &str, v: usize) -> Self {
        self.cells.push((name.to_string(), Value::Int(v as i64)));
        self
    }

    pub fn boolean(mut self, name: &str, v: bool) -> Self {
        self.cells.push((name.to_string(), Value::Bool(v)));
        self
    }

    pub fn text(mut self, name: &str, v: impl Into<String>) -> Self {
        self.cells.push((name.to_string(), Value::Text(v.into())));
        self
    }

    pub fn cells(&self) -> &[(String, Value)] {
        &self.cells
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.cells.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    pub fn float_value(&self, name: &str) -> Option<f64> {
        match self.get(name)? {
            Value::Float(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cmp {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
}

impl Cmp {
    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Cmp::Le => a <= b,
            Cmp::Lt => a < b,
            Cmp::Ge => a >= b,
            Cmp::Gt => a > b,
            Cmp::Eq => a == b,
        }
    }
}

/// Right-hand side of a comparison: another column or a literal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Operand {
    Literal(f64),
    Column(String),
}

/// A pass/fail flag defined purely in terms of stored columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlagSpec {
    /// `lhs cmp rhs`; with `when`, the flag is vacuously true whenever the
    /// named earlier flag is false.
    Compare {
        name: String,
        lhs: String,
        cmp: Cmp,
        rhs: Operand,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        when: Option<String>,
    },
    /// Conjunction of earlier flags.
    All { name: String, of: Vec<String> },
}

impl FlagSpec {
    pub fn compare(name: &str, lhs: &str, cmp: Cmp, rhs: &str) -> Self {
        FlagSpec::Compare { name: name.into(), lhs: lhs.into(), cmp, rhs: Operand::Column(rhs.into()), when: None }
    }

    pub fn compare_literal(name: &str, lhs: &str, cmp: Cmp, rhs: f64) -> Self {
        FlagSpec::Compare { name: name.into(), lhs: lhs.into(), cmp, rhs: Operand::Literal(rhs), when: None }
    }

    pub fn given(self, flag: &str) -> Self {
        match self {
            FlagSpec::Compare { name, lhs, cmp, rhs, .. } => {
                FlagSpec::Compare { name, lhs, cmp, rhs, when: Some(flag.into()) }
            }
            other => other,
        }
    }

    pub fn all(name: &str, of: &[&str]) -> Self {
        FlagSpec::All { name: name.into(), of: of.iter().map(|s| s.to_string()).collect() }
    }

    pub fn name(&self) -> &str {
        match self {
            FlagSpec::Compare { name, .. } | FlagSpec::All { name, .. } => name,
        }
    }
}

/// Evaluates `specs` in order. `lookup` returns the textual cell for a
/// column; earlier flags are visible to later ones.
pub fn evaluate_flags(specs: &[FlagSpec], lookup: &dyn Fn(&str) -> Option<String>) -> Result<Vec<(String, bool)>> {
    let mut out: Vec<(String, bool)> = Vec::with_capacity(specs.len());
    let flag = |out: &[(String, bool)], name: &str| -> Result<bool> {
        out.iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| HarnessError::Invalid(format!("flag `{name}` referenced before it is defined")))
    };
    let number = |name: &str| -> Result<f64> {
        let cell = lookup(name).ok_or_else(|| HarnessError::Invalid(format!("missing column `{name}`")))?;
        cell.parse::<f64>().map_err(|_| HarnessError::Invalid(format!("column `{name}` is not numeric: {cell}")))
    };
    for spec in specs {
        let value = match spec {
            FlagSpec::Compare { lhs, cmp, rhs, when, .. } => {
                let active = match when {
                    Some(w) => flag(&out, w)?,
                    None => true,
                };
                let rhs = match rhs {
                    Operand::Literal(v) => *v,
                    Operand::Column(c) => number(c)?,
                };
                !active || cmp.holds(number(lhs)?, rhs)
            }
            FlagSpec::All { of, .. } => {
                let mut all = true;
                for name in of {
                    all &= flag(&out, name)?;
                }
                all
            }
        };
        out.push((spec.name().to_string(), value));
    }
    Ok(out)
}

/// One line of the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub dim: usize,
    pub fields: Row,
    pub flags: Vec<(String, bool)>,
}

impl TrialRecord {
    pub fn new(trial: usize, seed: u64, n: usize, dim: usize, fields: Row, specs: &[FlagSpec]) -> Result<Self> {
        let flags = evaluate_flags(specs, &|name| fields.get(name).map(|v| v.to_string()))?;
        Ok(Self { trial, seed, n, dim, fields, flags })
    }

    pub fn flag(&self, name: &str) -> Option<bool> {
        self.flags.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

pub fn write_csv(path: &Path, experiment: &str, records: &[TrialRecord]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "{SCHEMA_LINE}").expect("writing to a Vec");
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        if let Some(first) = records.first() {
            let mut header: Vec<&str> = KEY_COLUMNS.to_vec();
            header.extend(first.fields.cells().iter().map(|(k, _)| k.as_str()));
            header.extend(first.flags.iter().map(|(k, _)| k.as_str()));
            w.write_record(&header)?;
            for r in records {
                let same_shape = r.fields.cells().len() == first.fields.cells().len()
                    && r.fields.cells().iter().zip(first.fields.cells()).all(|(a, b)| a.0 == b.0)
                    && r.flags.len() == first.flags.len();
                if !same_shape {
                    return Err(HarnessError::Invalid(format!("trial {} has different columns from trial {}", r.trial, first.trial)));
                }
                let mut line = vec![experiment.to_string(), r.trial.to_string(), r.seed.to_string(), r.n.to_string(), r.dim.to_string()];
                line.extend(r.fields.cells().iter().map(|(_, v)| v.to_string()));
                line.extend(r.flags.iter().map(|(_, v)| v.to_string()));
                w.write_record(&line)?;
            }
        }
        w.flush().map_err(|e| HarnessError::io(path, e))?;
    }
    std::fs::write(path, buf).map_err(|e| HarnessError::io(path, e))
}

/// Parsed CSV: header plus rows of raw cells.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let first = text.lines().next().unwrap_or_default();
        if first != SCHEMA_LINE {
            return Err(HarnessError::Invalid(format!("{}: expected `{SCHEMA_LINE}` on the first line", path.display())));
        }
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header = reader.headers()?.iter().map(str::to_string).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { header, rows })
    }

    pub fn column_index(&self) -> HashMap<&str, usize> {
        self.header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_evaluate_in_order() {
        let row = Row::new().float("err", 0.2).float("bound", 0.3).int("k", 3).float("event_lhs", 2.0);
        let specs = vec![
            FlagSpec::compare("ok", "err", Cmp::Le, "bound"),
            FlagSpec::compare_literal("k3", "k", Cmp::Eq, 3.0),
            FlagSpec::compare_literal("event", "event_lhs", Cmp::Le, 1.0),
            FlagSpec::compare("conditional", "bound", Cmp::Le, "err").given("event"),
            FlagSpec::all("both", &["ok", "k3"]),
        ];
        let rec = TrialRecord::new(0, 1, 10, 2, row, &specs).unwrap();
        assert_eq!(rec.flag("ok"), Some(true));
        assert_eq!(rec.flag("k3"), Some(true));
        assert_eq!(rec.flag("event"), Some(false));
        assert_eq!(rec.flag("conditional"), Some(true));
        assert_eq!(rec.flag("both"), Some(true));
    }

    #[test]
    fn flag_errors() {
        let row = Row::new().text("label", "x");
        assert!(TrialRecord::new(0, 0, 1, 1, row.clone(), &[FlagSpec::compare_literal("f", "label", Cmp::Le, 1.0)]).is_err());
        assert!(TrialRecord::new(0, 0, 1, 1, row.clone(), &[FlagSpec::compare_literal("f", "nope", Cmp::Le, 1.0)]).is_err());
        assert!(TrialRecord::new(0, 0, 1, 1, row, &[FlagSpec::all("f", &["missing"])]).is_err());
    }

    #[test]
    fn flag_specs_roundtrip_json() {
        let specs = vec![
            FlagSpec::compare("a", "x", Cmp::Lt, "y").given("b"),
            FlagSpec::compare_literal("c", "x", Cmp::Ge, 0.5),
            FlagSpec::all("d", &["a", "c"]),
        ];
        let json = serde_json::to_string(&specs).unwrap();
        let back: Vec<FlagSpec> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, specs);
    }

    #[test]
    fn csv_roundtrip_preserves_floats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let x = 0.1 + 0.2;
        let specs = [FlagSpec::compare_literal("small", "x", Cmp::Le, 0.3)];
        let rec = TrialRecord::new(4, 11, 100, 5, Row::new().float("x", x).text("list", "1;2"), &specs).unwrap();
        write_csv(&path, "demo", &[rec]).unwrap();
        let table = CsvTable::read(&path).unwrap();
        assert_eq!(table.header, ["experiment", "trial", "seed", "n", "dim", "x", "list", "small"]);
        assert_eq!(table.rows[0][5].parse::<f64>().unwrap(), x);
        assert_eq!(table.rows[0][7], "false");
    }
}
