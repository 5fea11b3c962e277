use std::collections::BTreeSet;
use std::fmt::Write;

use super::report::population_std;
use crate::error::{Error, Result};

/// One method's per-subject accuracies (percent), in row order.
#[derive(Clone, Debug, PartialEq)]
pub struct TableColumn {
    pub name: String,
    pub rows: Vec<(String, f64)>,
}

impl TableColumn {
    pub fn new(name: impl Into<String>, rows: Vec<(String, f64)>) -> Self {
        Self { name: name.into(), rows }
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.1).collect()
    }

    pub fn mean(&self) -> f64 {
        self.values().iter().sum::<f64>() / self.rows.len() as f64
    }

    pub fn std(&self) -> f64 {
        population_std(&self.values())
    }

    /// `mean ± std` at two decimals.
    pub fn summary(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean(), self.std())
    }
}

/// Renders a fixed-width table and its CSV mirror.
///
/// Rows follow the first column's subject order; the best score per subject is
/// marked `*`. The last row is `Mean ± Std` with population std. The CSV keeps
/// full precision and ends with `Mean` and `Std` rows.
pub fn emit_table(columns: &[TableColumn]) -> Result<(String, String)> {
    let first = columns.first().ok_or(Error::EmptyInput)?;
    if first.rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let subjects: Vec<&str> = first.rows.iter().map(|r| r.0.as_str()).collect();
    let want: BTreeSet<&str> = subjects.iter().copied().collect();
    if want.len() != subjects.len() {
        return Err(Error::format(0, None, format!("column `{}` repeats a subject", first.name)));
    }
    let mut grid = Vec::with_capacity(columns.len());
    for col in columns {
        let have: BTreeSet<&str> = col.rows.iter().map(|r| r.0.as_str()).collect();
        if have != want || col.rows.len() != subjects.len() {
            return Err(Error::format(
                0,
                None,
                format!("column `{}` covers different subjects than `{}`", col.name, first.name),
            ));
        }
        let vals: Vec<f64> = subjects
            .iter()
            .map(|s| col.rows.iter().find(|r| r.0 == *s).map(|r| r.1).unwrap_or(f64::NAN))
            .collect();
        grid.push(vals);
    }

    let summaries: Vec<String> = columns.iter().map(|c| c.summary()).collect();
    let width = columns
        .iter()
        .map(|c| c.name.chars().count())
        .chain(summaries.iter().map(|s| s.chars().count()))
        .max()
        .unwrap_or(0)
        .max(7);
    let label_w = subjects.iter().map(|s| s.len()).max().unwrap_or(0).max("Mean ± Std".chars().count());

    let mut text = String::new();
    let mut csv = String::from("subject");
    let _ = write!(text, "{:<label_w$}", "Subject");
    for c in columns {
        let _ = write!(text, "  {:>width$}", c.name);
        let _ = write!(csv, ",{}", c.name);
    }
    text.push('\n');
    csv.push('\n');
    for (i, s) in subjects.iter().enumerate() {
        let best = grid.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
        let _ = write!(text, "{s:<label_w$}");
        csv.push_str(s);
        for vals in &grid {
            let mark = if vals[i] == best { "*" } else { " " };
            let cell = format!("{:.2}{mark}", vals[i]);
            let _ = write!(text, "  {cell:>width$}");
            let _ = write!(csv, ",{}", vals[i]);
        }
        text.push('\n');
        csv.push('\n');
    }
    let _ = write!(text, "{:<label_w$}", "Mean ± Std");
    for s in &summaries {
        let _ = write!(text, "  {s:>width$}");
    }
    text.push('\n');
    csv.push_str("Mean");
    for c in columns {
        let _ = write!(csv, ",{}", c.mean());
    }
    csv.push_str("\nStd");
    for c in columns {
        let _ = write!(csv, ",{}", c.std());
    }
    csv.push('\n');
    Ok((text, csv))
}

/// Reads a CSV written by [`emit_table`] (or any `subject,col…` grid); the
/// `Mean` and `Std` rows are skipped.
pub fn parse_table_csv(text: &str) -> Result<Vec<TableColumn>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or(Error::EmptyInput)?;
    let names: Vec<&str> = header.split(',').skip(1).map(str::trim).collect();
    if names.is_empty() {
        return Err(Error::format(0, None, "table has no method columns"));
    }
    let mut cols: Vec<TableColumn> = names.iter().map(|n| TableColumn::new(*n, Vec::new())).collect();
    for (k, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != names.len() + 1 {
            return Err(Error::format(0, Some(k), format!("expected {} cells, found {}", names.len() + 1, cells.len())));
        }
        if matches!(cells[0], "Mean" | "Std") {
            continue;
        }
        for (col, cell) in cols.iter_mut().zip(&cells[1..]) {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::format(0, Some(k), format!("`{cell}` is not a number")))?;
            col.rows.push((cells[0].to_string(), v));
        }
    }
    Ok(cols)
}
