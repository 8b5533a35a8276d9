//! Storm catalog: `storm_id,start,track,forcing,max_surge`, paths relative
//! to the catalog file. `track` and `max_surge` may be empty.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat};

use crate::ingest::{parse_time, read_file, read_table, write_file, IngestError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StormEntry {
    pub storm_id: String,
    /// Epoch seconds of the event start.
    pub start: f64,
    pub track: Option<PathBuf>,
    pub forcing: PathBuf,
    pub max_surge: Option<PathBuf>,
}

const HEADER: [&str; 5] = ["storm_id", "start", "track", "forcing", "max_surge"];

fn format_time(t: f64) -> String {
    if t.fract() == 0.0 {
        if let Some(d) = DateTime::from_timestamp(t as i64, 0) {
            return d.to_rfc3339_opts(SecondsFormat::Secs, true);
        }
    }
    format!("{t}")
}

pub fn catalog_to_csv(entries: &[StormEntry]) -> String {
    let mut out = HEADER.join(",");
    out.push('\n');
    let p = |x: &Option<PathBuf>| x.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    for e in entries {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.storm_id,
            format_time(e.start),
            p(&e.track),
            e.forcing.display(),
            p(&e.max_surge)
        );
    }
    out
}

pub fn write_catalog(path: &Path, entries: &[StormEntry]) -> Result<()> {
    write_file(path, &catalog_to_csv(entries))
}

/// Loads a catalog; the returned paths are resolved against its directory.
pub fn load_storm_catalog(path: &Path) -> Result<Vec<StormEntry>> {
    let text = read_file(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out: Vec<StormEntry> = Vec::new();
    for row in read_table(path, &text, &HEADER)? {
        let id = row.field(0).to_string();
        if id.is_empty() || out.iter().any(|e| e.storm_id == id) {
            return Err(row.error(format!("empty or duplicate storm id '{id}'")));
        }
        let start = parse_time(row.field(1)).ok_or_else(|| row.error(format!("bad start time '{}'", row.field(1))))?;
        let opt = |k: usize| (!row.field(k).is_empty()).then(|| base.join(row.field(k)));
        if row.field(3).is_empty() {
            return Err(row.error("forcing path is required".into()));
        }
        out.push(StormEntry {
            storm_id: id,
            start,
            track: opt(2),
            forcing: base.join(row.field(3)),
            max_surge: opt(4),
        });
    }
    if out.is_empty() {
        return Err(IngestError::Invalid(format!("{}: catalog lists no storms", path.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![
            StormEntry {
                storm_id: "a".into(),
                start: 1_590_969_600.0,
                track: Some("a/track.csv".into()),
                forcing: "a/forcing.txt".into(),
                max_surge: None,
            },
            StormEntry {
                storm_id: "b".into(),
                start: 1_590_969_600.5,
                track: None,
                forcing: "b/forcing.txt".into(),
                max_surge: Some("b/max.csv".into()),
            },
        ];
        let path = dir.path().join("storms.csv");
        write_catalog(&path, &entries).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("2020-06-01T00:00:00Z"));
        let back = load_storm_catalog(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].start, entries[0].start);
        assert_eq!(back[1].start, entries[1].start);
        assert_eq!(back[0].forcing, dir.path().join("a/forcing.txt"));
        assert_eq!(back[1].track, None);
    }

    #[test]
    fn rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("storms.csv");
        std::fs::write(&path, "storm_id,start,track,forcing,max_surge\na,0,,f,\na,1,,f,\n").unwrap();
        assert!(load_storm_catalog(&path).is_err());
    }
}
