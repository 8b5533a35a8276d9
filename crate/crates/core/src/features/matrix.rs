//! Point-based training table: one row per (storm, point).

use std::fmt::Write as _;
use std::path::Path;

use crate::ingest::{read_file, write_file, IngestError, SurgeLevel};

use super::FeatureError;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub storm_id: String,
    pub point_id: u64,
    pub values: Vec<f64>,
    /// Peak surge when known.
    pub label: Option<SurgeLevel>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    columns: Vec<String>,
    rows: Vec<FeatureRow>,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<String>) -> Result<Self, FeatureError> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.as_str()) {
                return Err(FeatureError::InvalidMatrix(format!("duplicate column '{c}'")));
            }
            if c.is_empty() || c.contains(',') {
                return Err(FeatureError::InvalidMatrix(format!("bad column name '{c}'")));
            }
        }
        Ok(Self {
            columns,
            rows: Vec::new(),
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[FeatureRow] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn push(&mut self, row: FeatureRow) -> Result<(), FeatureError> {
        if row.values.len() != self.columns.len() {
            return Err(FeatureError::InvalidMatrix(format!(
                "row ({}, {}) has {} values for {} columns",
                row.storm_id,
                row.point_id,
                row.values.len(),
                self.columns.len()
            )));
        }
        if let Some(k) = row.values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::InvalidMatrix(format!(
                "row ({}, {}) has non-finite {}",
                row.storm_id, row.point_id, self.columns[k]
            )));
        }
        if row.storm_id.is_empty() || row.storm_id.contains(',') {
            return Err(FeatureError::InvalidMatrix(format!("bad storm id '{}'", row.storm_id)));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Appends all rows of `other`, which must share the column list.
    pub fn extend(&mut self, other: FeatureMatrix) -> Result<(), FeatureError> {
        if other.columns != self.columns {
            return Err(FeatureError::InvalidMatrix("column lists differ".into()));
        }
        self.rows.extend(other.rows);
        Ok(())
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.values[k]).collect()
    }

    /// Keeps only rows for which `keep` holds.
    pub fn filter_rows(&self, mut keep: impl FnMut(&FeatureRow) -> bool) -> FeatureMatrix {
        FeatureMatrix {
            columns: self.columns.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    /// Projects onto `names`, in the given order.
    pub fn select(&self, names: &[String]) -> Result<FeatureMatrix, FeatureError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| FeatureError::UnknownColumn(n.clone())))
            .collect::<Result<_, _>>()?;
        let mut out = FeatureMatrix::new(names.to_vec())?;
        out.rows = self
            .rows
            .iter()
            .map(|r| FeatureRow {
                storm_id: r.storm_id.clone(),
                point_id: r.point_id,
                values: idx.iter().map(|&k| r.values[k]).collect(),
                label: r.label,
            })
            .collect();
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("storm_id,point_id");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push_str(",label\n");
        for r in &self.rows {
            let _ = write!(out, "{},{}", r.storm_id, r.point_id);
            for v in &r.values {
                let _ = write!(out, ",{v}");
            }
            match r.label {
                Some(l) => {
                    let _ = writeln!(out, ",{l}");
                }
                None => out.push_str(",\n"),
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), FeatureError> {
        Ok(write_file(path, &self.to_csv())?)
    }

    pub fn parse(path: &Path, text: &str) -> Result<FeatureMatrix, FeatureError> {
        let perr = |line: usize, msg: String| {
            FeatureError::Ingest(IngestError::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            })
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
        let head: Vec<&str> = header.split(',').map(str::trim).collect();
        if head.len() < 3 || head[0] != "storm_id" || head[1] != "point_id" || head[head.len() - 1] != "label" {
            return Err(perr(1, "header must be storm_id,point_id,<features...>,label".into()));
        }
        let columns: Vec<String> = head[2..head.len() - 1].iter().map(|s| s.to_string()).collect();
        let mut m = FeatureMatrix::new(columns)?;
        for (k, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != head.len() {
                return Err(perr(k + 1, format!("expected {} fields, got {}", head.len(), fields.len())));
            }
            let point_id: u64 = fields[1]
                .parse()
                .map_err(|_| perr(k + 1, format!("bad point id '{}'", fields[1])))?;
            let values = fields[2..fields.len() - 1]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| perr(k + 1, format!("bad value '{f}'"))))
                .collect::<Result<Vec<f64>, _>>()?;
            let raw_label = fields[fields.len() - 1];
            let label = if raw_label.is_empty() {
                None
            } else {
                Some(SurgeLevel::parse(raw_label).ok_or_else(|| perr(k + 1, format!("bad label '{raw_label}'")))?)
            };
            m.push(FeatureRow {
                storm_id: fields[0].to_string(),
                point_id,
                values,
                label,
            })
            .map_err(|e| perr(k + 1, e.to_string()))?;
        }
        Ok(m)
    }
}

pub fn load_feature_matrix(path: &Path) -> Result<FeatureMatrix, FeatureError> {
    let text = read_file(path)?;
    FeatureMatrix::parse(path, &text)
}

/// Retained-feature list: one column name per line.
pub fn write_feature_list(path: &Path, names: &[String]) -> Result<(), FeatureError> {
    let mut text = names.join("\n");
    text.push('\n');
    Ok(write_file(path, &text)?)
}

pub fn load_feature_list(path: &Path) -> Result<Vec<String>, FeatureError> {
    Ok(read_file(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}
