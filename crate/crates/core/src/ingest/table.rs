//! Minimal comma-separated table reader with line-accurate errors.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{IngestError, Result};

pub(crate) struct Row<'a> {
    path: PathBuf,
    pub line: usize,
    fields: Vec<&'a str>,
}

impl<'a> Row<'a> {
    pub fn field(&self, k: usize) -> &'a str {
        self.fields[k]
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn error(&self, msg: String) -> IngestError {
        IngestError::Parse {
            path: self.path.clone(),
            line: self.line,
            msg,
        }
    }

    pub fn parse<T: FromStr>(&self, k: usize) -> Result<T> {
        self.fields[k]
            .parse::<T>()
            .map_err(|_| self.error(format!("cannot parse field {} ('{}')", k + 1, self.fields[k])))
    }

    pub fn parse_finite(&self, k: usize) -> Result<f64> {
        let v: f64 = self.parse(k)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.error(format!("non-finite value in field {}", k + 1)))
        }
    }
}

/// Splits `text` into rows after checking the header matches `header`
/// exactly. Blank lines are skipped; every row must have the header's
/// field count.
pub(crate) fn read_table<'a>(path: &Path, text: &'a str, header: &[&str]) -> Result<Vec<Row<'a>>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| IngestError::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let got: Vec<&str> = first.split(',').map(str::trim).collect();
    if got != header {
        return Err(IngestError::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header '{}', got '{}'", header.join(","), first.trim()),
        });
    }
    let mut rows = Vec::new();
    for (k, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let row = Row {
            path: path.to_path_buf(),
            line: k + 1,
            fields,
        };
        if row.len() != header.len() {
            return Err(row.error(format!("expected {} fields, got {}", header.len(), row.len())));
        }
        rows.push(row);
    }
    Ok(rows)
}
