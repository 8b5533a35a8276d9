//! On-disk data model: mesh points, forcing grids, storm tracks, gauge
//! series, max-surge fields and coastlines.
//!
//! Every loader validates the invariants of the type it returns, so a value
//! obtained from this module is always well formed. Writers emit the
//! canonical text form; floats use the shortest representation that parses
//! back to the same bits, which is what makes `load(write(x)) == x` hold.

mod forcing;
mod table;

pub use forcing::{load_forcing, ForcingGrid, ForcingVar, GridGeometry};
pub(crate) use table::read_table;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime};
use thiserror::Error;

/// Numeric code some surge models use for nodes that never got wet.
pub const DRY_CODE: f64 = -99999.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("duplicate point id {0}")]
    DuplicateId(u64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown forcing variable '{0}'")]
    UnknownVariable(String),
    #[error("invalid value {value} for {var} at frame {frame}, row {row}, col {col}")]
    NonFinite {
        var: String,
        frame: usize,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("query ({lon}, {lat}, t={t}) is outside the grid")]
    OutOfBounds { lon: f64, lat: f64, t: f64 },
    #[error("invalid data: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, IngestError>;

pub(crate) fn read_file(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(IngestError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| IngestError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    fs::write(path, contents).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses an epoch-seconds number or an ISO-8601 timestamp (UTC when no
/// offset is given).
pub fn parse_time(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            let utc = dt.and_utc();
            return Some(utc.timestamp() as f64);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Point sets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshPoint {
    pub id: u64,
    pub lon: f64,
    pub lat: f64,
    /// Bathymetric depth in meters, positive down (land is negative).
    pub depth: f64,
    pub is_coastal: bool,
}

/// Mesh nodes used as prediction locations. Ids are unique and ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<MeshPoint>,
}

impl PointSet {
    pub fn new(mut points: Vec<MeshPoint>) -> Result<Self> {
        points.sort_by_key(|p| p.id);
        for w in points.windows(2) {
            if w[0].id == w[1].id {
                return Err(IngestError::DuplicateId(w[0].id));
            }
        }
        for p in &points {
            if !(-180.0..=180.0).contains(&p.lon) || !(-90.0..=90.0).contains(&p.lat) {
                return Err(IngestError::Invalid(format!(
                    "point {} has coordinates ({}, {}) outside the lon/lat range",
                    p.id, p.lon, p.lat
                )));
            }
            if !p.depth.is_finite() {
                return Err(IngestError::Invalid(format!("point {} has non-finite depth", p.id)));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[MeshPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&MeshPoint> {
        self.points
            .binary_search_by_key(&id, |p| p.id)
            .ok()
            .map(|i| &self.points[i])
    }

    pub fn contains(&self, id: u64) -> bool {
        self.get(id).is_some()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,lon,lat,depth,is_coastal\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                p.id,
                p.lon,
                p.lat,
                p.depth,
                u8::from(p.is_coastal)
            );
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_csv())
    }
}

pub fn load_point_set(path: &Path) -> Result<PointSet> {
    let text = read_file(path)?;
    let rows = read_table(path, &text, &["id", "lon", "lat", "depth", "is_coastal"])?;
    let mut points = Vec::with_capacity(rows.len());
    for row in &rows {
        let is_coastal = match row.field(4) {
            "0" => false,
            "1" => true,
            other => return Err(row.error(format!("is_coastal must be 0 or 1, got '{other}'"))),
        };
        points.push(MeshPoint {
            id: row.parse(0)?,
            lon: row.parse_finite(1)?,
            lat: row.parse_finite(2)?,
            depth: row.parse_finite(3)?,
            is_coastal,
        });
    }
    PointSet::new(points)
}

// ---------------------------------------------------------------------------
// Storm tracks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSample {
    pub time: f64,
    pub lon: f64,
    pub lat: f64,
}

/// Best-track eye positions, strictly increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct StormTrack {
    samples: Vec<TrackSample>,
}

impl StormTrack {
    pub fn new(samples: Vec<TrackSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(IngestError::Invalid("storm track needs at least 2 samples".into()));
        }
        if samples.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(IngestError::Invalid("storm track times must strictly increase".into()));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[TrackSample] {
        &self.samples
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,lon,lat\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{}", s.time, s.lon, s.lat);
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_csv())
    }
}

pub fn load_storm_track(path: &Path) -> Result<StormTrack> {
    let text = read_file(path)?;
    let rows = read_table(path, &text, &["time", "lon", "lat"])?;
    let mut samples = Vec::with_capacity(rows.len());
    for row in &rows {
        let time = parse_time(row.field(0))
            .ok_or_else(|| row.error(format!("bad time '{}'", row.field(0))))?;
        samples.push(TrackSample {
            time,
            lon: row.parse_finite(1)?,
            lat: row.parse_finite(2)?,
        });
    }
    StormTrack::new(samples)
}

// ---------------------------------------------------------------------------
// Gauge series
// ---------------------------------------------------------------------------

/// Observed water level and tide prediction at one gauge, uniformly sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeSeries {
    pub station_id: String,
    pub lon: f64,
    pub lat: f64,
    /// Sample spacing in seconds.
    pub dt: f64,
    pub times: Vec<f64>,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
}

impl GaugeSeries {
    pub fn validate(&self) -> Result<()> {
        if self.observed.len() != self.times.len() || self.predicted.len() != self.times.len() {
            return Err(IngestError::ShapeMismatch(format!(
                "gauge {}: {} times, {} observed, {} predicted",
                self.station_id,
                self.times.len(),
                self.observed.len(),
                self.predicted.len()
            )));
        }
        if !(self.dt > 0.0) {
            return Err(IngestError::Invalid(format!("gauge {}: dt must be positive", self.station_id)));
        }
        for (k, w) in self.times.windows(2).enumerate() {
            if ((w[1] - w[0]) - self.dt).abs() > 1e-6 * self.dt {
                return Err(IngestError::Invalid(format!(
                    "gauge {}: non-uniform sampling between samples {} and {}",
                    self.station_id,
                    k,
                    k + 1
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,observed,predicted\n");
        for k in 0..self.times.len() {
            let _ = writeln!(out, "{},{},{}", self.times[k], self.observed[k], self.predicted[k]);
        }
        out
    }

    pub fn sidecar(&self) -> String {
        format!(
            "station_id={}\nlon={}\nlat={}\ndt={}\n",
            self.station_id, self.lon, self.lat, self.dt
        )
    }

    /// Writes `path` and its `.meta` sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_csv())?;
        write_file(&gauge_sidecar_path(path), &self.sidecar())
    }
}

pub fn gauge_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

/// Parses `key=value` lines, skipping blanks and `#` comments.
pub(crate) fn parse_key_values(path: &Path, text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| IngestError::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            msg: format!("expected key=value, got '{line}'"),
        })?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

pub fn load_gauge_series(path: &Path) -> Result<GaugeSeries> {
    let meta_path = gauge_sidecar_path(path);
    let meta = parse_key_values(&meta_path, &read_file(&meta_path)?)?;
    let get = |key: &str| {
        meta.get(key).ok_or_else(|| IngestError::Parse {
            path: meta_path.clone(),
            line: 0,
            msg: format!("missing key '{key}'"),
        })
    };
    let num = |key: &str| -> Result<f64> {
        let raw = get(key)?;
        raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| IngestError::Parse {
            path: meta_path.clone(),
            line: 0,
            msg: format!("bad number for '{key}': '{raw}'"),
        })
    };
    let station_id = get("station_id")?.clone();
    let lon = num("lon")?;
    let lat = num("lat")?;
    let dt = num("dt")?;

    let text = read_file(path)?;
    let rows = read_table(path, &text, &["time", "observed", "predicted"])?;
    let mut series = GaugeSeries {
        station_id,
        lon,
        lat,
        dt,
        times: Vec::with_capacity(rows.len()),
        observed: Vec::with_capacity(rows.len()),
        predicted: Vec::with_capacity(rows.len()),
    };
    for row in &rows {
        let t = parse_time(row.field(0))
            .ok_or_else(|| row.error(format!("bad time '{}'", row.field(0))))?;
        series.times.push(t);
        series.observed.push(row.parse_finite(1)?);
        series.predicted.push(row.parse_finite(2)?);
    }
    series.validate()?;
    Ok(series)
}

// ---------------------------------------------------------------------------
// Max-surge fields
// ---------------------------------------------------------------------------

/// Peak water level at one point for one storm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurgeLevel {
    Dry,
    Wet(f64),
}

impl SurgeLevel {
    pub fn is_wet(self) -> bool {
        matches!(self, SurgeLevel::Wet(_))
    }

    /// Dry points count as 0 m of water.
    pub fn meters(self) -> f64 {
        match self {
            SurgeLevel::Dry => 0.0,
            SurgeLevel::Wet(v) => v,
        }
    }

    pub fn parse(token: &str) -> Option<SurgeLevel> {
        let token = token.trim();
        if token == "DRY" {
            return Some(SurgeLevel::Dry);
        }
        let v: f64 = token.parse().ok()?;
        if v == DRY_CODE {
            Some(SurgeLevel::Dry)
        } else if v.is_finite() {
            Some(SurgeLevel::Wet(v))
        } else {
            None
        }
    }
}

impl std::fmt::Display for SurgeLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SurgeLevel::Dry => f.write_str("DRY"),
            SurgeLevel::Wet(v) => write!(f, "{v}"),
        }
    }
}

/// Per-point peak surge for one storm.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MaxSurgeField {
    pub values: BTreeMap<u64, SurgeLevel>,
}

impl MaxSurgeField {
    pub fn get(&self, id: u64) -> Option<SurgeLevel> {
        self.values.get(&id).copied()
    }

    /// Checks that every id belongs to `points`.
    pub fn validate_against(&self, points: &PointSet) -> Result<()> {
        for &id in self.values.keys() {
            if !points.contains(id) {
                return Err(IngestError::Invalid(format!(
                    "max-surge field references unknown point id {id}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,eta\n");
        for (id, v) in &self.values {
            let _ = writeln!(out, "{id},{v}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_csv())
    }
}

pub fn load_max_surge(path: &Path) -> Result<MaxSurgeField> {
    let text = read_file(path)?;
    let rows = read_table(path, &text, &["id", "eta"])?;
    let mut values = BTreeMap::new();
    for row in &rows {
        let id: u64 = row.parse(0)?;
        let level = SurgeLevel::parse(row.field(1))
            .ok_or_else(|| row.error(format!("bad eta '{}'", row.field(1))))?;
        if values.insert(id, level).is_some() {
            return Err(IngestError::DuplicateId(id));
        }
    }
    Ok(MaxSurgeField { values })
}

// ---------------------------------------------------------------------------
// Coastlines
// ---------------------------------------------------------------------------

/// One or more open polylines of (lon, lat) vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct CoastPolyline {
    lines: Vec<Vec<(f64, f64)>>,
}

impl CoastPolyline {
    pub fn new(lines: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        if lines.is_empty() {
            return Err(IngestError::Invalid("coastline has no polylines".into()));
        }
        if let Some(k) = lines.iter().position(|l| l.len() < 2) {
            return Err(IngestError::Invalid(format!("coast polyline {k} has fewer than 2 vertices")));
        }
        Ok(Self { lines })
    }

    pub fn lines(&self) -> &[Vec<(f64, f64)>] {
        &self.lines
    }

    /// All segments as ((lon, lat), (lon, lat)) pairs, in polyline order.
    pub fn segments(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        self.lines
            .iter()
            .flat_map(|l| l.windows(2).map(|w| (w[0], w[1])))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("polyline_id,vertex_index,lon,lat\n");
        for (pid, line) in self.lines.iter().enumerate() {
            for (vid, (lon, lat)) in line.iter().enumerate() {
                let _ = writeln!(out, "{pid},{vid},{lon},{lat}");
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_csv())
    }
}

pub fn load_coast(path: &Path) -> Result<CoastPolyline> {
    let text = read_file(path)?;
    let rows = read_table(path, &text, &["polyline_id", "vertex_index", "lon", "lat"])?;
    let mut grouped: BTreeMap<u64, BTreeMap<u64, (f64, f64)>> = BTreeMap::new();
    for row in &rows {
        let pid: u64 = row.parse(0)?;
        let vid: u64 = row.parse(1)?;
        let vertex = (row.parse_finite(2)?, row.parse_finite(3)?);
        if grouped.entry(pid).or_default().insert(vid, vertex).is_some() {
            return Err(row.error(format!("duplicate vertex {vid} in polyline {pid}")));
        }
    }
    CoastPolyline::new(
        grouped
            .into_values()
            .map(|vs| vs.into_values().collect())
            .collect(),
    )
}
