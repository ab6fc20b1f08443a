//! Row-conditioned relative frequency tables over two attributes.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::{Conjunction, CountCube, DateWindow, QueryError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PivotError {
    #[error("row and column attribute are both `{0}`")]
    SameAttribute(String),
    #[error("filter constrains pivot attribute `{0}`")]
    FilterOnPivot(String),
    #[error(transparent)]
    Query(#[from] QueryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PivotTable {
    pub row_attribute: String,
    pub col_attribute: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// `cells[r][c]` = share of row `r`'s events carrying column label `c`.
    pub cells: Vec<Vec<f64>>,
    pub row_counts: Vec<u64>,
    /// Rows without events; their cells are all zero.
    pub empty_rows: Vec<bool>,
}

/// Conditional distribution of `col_attr` given each label of `row_attr`,
/// among events matching `filter` inside `window`. Rows follow the domain
/// order; columns are sorted by descending frequency over the whole cube.
pub fn pivot(
    cube: &CountCube,
    row_attr: &str,
    col_attr: &str,
    filter: &Conjunction,
    window: &DateWindow,
) -> Result<PivotTable, PivotError> {
    if row_attr == col_attr {
        return Err(PivotError::SameAttribute(row_attr.to_string()));
    }
    for attr in [row_attr, col_attr] {
        if filter.get(attr).is_some() {
            return Err(PivotError::FilterOnPivot(attr.to_string()));
        }
    }
    let row_dim = cube
        .dim_index(row_attr)
        .ok_or_else(|| QueryError::UnknownAttribute(row_attr.to_string()))?;
    let col_dim = cube
        .dim_index(col_attr)
        .ok_or_else(|| QueryError::UnknownAttribute(col_attr.to_string()))?;
    let base = cube.resolve(filter)?;
    let (lo, hi) = cube.window_span(window)?;

    let everything = cube.resolve(&Conjunction::new())?;
    let (all_lo, all_hi) = (0, cube.n_days());
    let mut col_codes: Vec<u16> = (0..cube.dim_labels(col_dim).len() as u16).collect();
    let global: Vec<u64> = col_codes
        .iter()
        .map(|&c| cube.count_span(&everything.with_label(col_dim, c), all_lo, all_hi))
        .collect();
    // Stable sort keeps domain order among ties.
    col_codes.sort_by(|&x, &y| global[y as usize].cmp(&global[x as usize]));

    let row_labels = cube.dim_labels(row_dim).to_vec();
    let col_labels: Vec<String> = col_codes
        .iter()
        .map(|&c| cube.dim_labels(col_dim)[c as usize].clone())
        .collect();
    let mut cells = Vec::with_capacity(row_labels.len());
    let mut row_counts = Vec::with_capacity(row_labels.len());
    for r in 0..row_labels.len() as u16 {
        let row_q = base.with_label(row_dim, r);
        let total = cube.count_span(&row_q, lo, hi);
        let row: Vec<f64> = col_codes
            .iter()
            .map(|&c| {
                if total == 0 {
                    0.0
                } else {
                    cube.count_span(&row_q.with_label(col_dim, c), lo, hi) as f64 / total as f64
                }
            })
            .collect();
        cells.push(row);
        row_counts.push(total);
    }
    Ok(PivotTable {
        row_attribute: row_attr.to_string(),
        col_attribute: col_attr.to_string(),
        empty_rows: row_counts.iter().map(|&n| n == 0).collect(),
        row_labels,
        col_labels,
        cells,
        row_counts,
    })
}

/// Modal column of every non-empty row; ties go to the earlier column.
pub fn row_argmax(table: &PivotTable) -> BTreeMap<String, String> {
    table
        .row_labels
        .iter()
        .zip(&table.cells)
        .zip(&table.row_counts)
        .filter(|(_, &n)| n > 0)
        .map(|((label, row), _)| {
            let best = row
                .iter()
                .enumerate()
                .fold(0, |best, (i, &v)| if v > row[best] { i } else { best });
            (label.clone(), table.col_labels[best].clone())
        })
        .collect()
}

impl PivotTable {
    /// Joint count of row `r` and column `c`, reconstructed from the shares.
    pub fn joint_count(&self, r: usize, c: usize) -> u64 {
        (self.cells[r][c] * self.row_counts[r] as f64).round() as u64
    }

    /// Matrix CSV: a header of column labels, then one line per row label.
    pub fn write_csv<W: Write>(&self, sink: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let corner = format!("{}\\{}", self.row_attribute, self.col_attribute);
        let mut header = vec![corner.as_str()];
        header.extend(self.col_labels.iter().map(String::as_str));
        header.push("row_count");
        w.write_record(&header)?;
        for (r, label) in self.row_labels.iter().enumerate() {
            let mut line = vec![label.clone()];
            line.extend(self.cells[r].iter().map(|v| v.to_string()));
            line.push(self.row_counts[r].to_string());
            w.write_record(&line)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Terminal rendering with one shade character per cell.
    pub fn render_text(&self) -> String {
        const SHADES: [char; 5] = [' ', '░', '▒', '▓', '█'];
        let width = self.row_labels.iter().map(|l| l.chars().count()).max().unwrap_or(0);
        let mut out = String::new();
        out.push_str(&format!("{:width$} | columns (most frequent first):\n", ""));
        for (i, label) in self.col_labels.iter().enumerate() {
            out.push_str(&format!("{:width$}   {:>2} {label}\n", "", i));
        }
        for (r, label) in self.row_labels.iter().enumerate() {
            out.push_str(&format!("{label:width$} |"));
            for &v in &self.cells[r] {
                let shade = ((v * 4.0).ceil() as usize).min(4);
                out.push(SHADES[shade]);
                out.push(SHADES[shade]);
            }
            if self.empty_rows[r] {
                out.push_str(" (no events)");
            } else {
                out.push_str(&format!(" n={}", self.row_counts[r]));
            }
            out.push('\n');
        }
        out
    }
}
