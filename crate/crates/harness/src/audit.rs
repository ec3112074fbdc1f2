//! Self-consistency audit: every stored flag must equal its inequality
//! re-evaluated from the stored columns, and every summary frequency must
//! equal the mean of its flag column.

use std::path::Path;

use crate::error::{HarnessError, Result};
use crate::runner::Summary;
use crate::stats::frequency;
use crate::table::{evaluate_flags, CsvTable};

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub rows: usize,
    pub flags_checked: usize,
    pub frequencies_checked: usize,
    pub mismatches: Vec<String>,
}

impl AuditReport {
    pub fn consistent(&self) -> bool {
        self.mismatches.is_empty()
    }
}

pub fn audit(csv_path: &Path, summary_path: &Path) -> Result<AuditReport> {
    let table = CsvTable::read(csv_path)?;
    let summary = Summary::load(summary_path)?;
    let index = table.column_index();
    let col = |name: &str| index.get(name).copied().ok_or_else(|| HarnessError::Invalid(format!("CSV lacks column `{name}`")));
    let (n_col, dim_col, trial_col) = (col("n")?, col("dim")?, col("trial")?);

    let mut mismatches = Vec::new();
    let mut flags_checked = 0;
    let mut per_row = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let lookup = |name: &str| index.get(name).map(|&i| row[i].clone());
        let flags = evaluate_flags(&summary.flags, &lookup)?;
        for (name, value) in &flags {
            let stored = &row[col(name)?];
            flags_checked += 1;
            if stored != &value.to_string() {
                mismatches.push(format!("trial {} (n={}, dim={}): {name} stored {stored}, recomputed {value}", row[trial_col], row[n_col], row[dim_col]));
            }
        }
        per_row.push(flags);
    }

    let mut frequencies_checked = 0;
    for group in &summary.groups {
        let members: Vec<usize> = (0..table.rows.len())
            .filter(|&i| table.rows[i][n_col] == group.n.to_string() && table.rows[i][dim_col] == group.dim.to_string())
            .collect();
        if members.len() != group.trials {
            mismatches.push(format!("group n={}, dim={}: summary has {} trials, CSV has {}", group.n, group.dim, group.trials, members.len()));
        }
        for (flag, &freq) in &group.frequencies {
            let stored = col(flag)?;
            let recomputed = frequency(members.iter().map(|&i| table.rows[i][stored] == "true"));
            frequencies_checked += 1;
            if recomputed != freq {
                mismatches.push(format!("group n={}, dim={}: {flag} frequency {freq} in summary, {recomputed} from CSV", group.n, group.dim));
            }
        }
    }
    Ok(AuditReport { rows: table.rows.len(), flags_checked, frequencies_checked, mismatches })
}
