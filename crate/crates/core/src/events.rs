//! Surge event extraction from tidal residuals and multi-station merging.
//!
//! Detection walks the residual series as alternating runs above and below
//! the trigger threshold `T`. A below-threshold gap between two candidate
//! runs is absorbed into the running event when the residual stays at or
//! above `c * T` throughout the gap, or when the gap lasts less than the
//! lull `L`. Closed events are padded by the shoulder `S` on both sides,
//! clipped to the series, and any events the padding made overlap are
//! joined.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::ingest::{parse_time, read_file, read_table, write_file, GaugeSeries, IngestError};
use crate::tides;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("non-uniform sampling at sample {0}")]
    NonUniformSampling(usize),
    #[error("{residuals} residuals but {times} times")]
    LengthMismatch { residuals: usize, times: usize },
    #[error("invalid event parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Tide(#[from] tides::TideError),
}

/// Detection parameters. Durations are in hours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventParams {
    /// Trigger threshold in meters.
    pub threshold: f64,
    /// Continuity factor in (0, 1].
    pub continuity: f64,
    pub lull_hours: f64,
    pub shoulder_hours: f64,
}

impl Default for EventParams {
    fn default() -> Self {
        Self {
            threshold: 0.3,
            continuity: 0.5,
            lull_hours: 6.0,
            shoulder_hours: 12.0,
        }
    }
}

impl EventParams {
    pub fn validate(&self) -> Result<(), EventError> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(EventError::InvalidParams(format!("threshold {} must be > 0", self.threshold)));
        }
        if !(self.continuity > 0.0 && self.continuity <= 1.0) {
            return Err(EventError::InvalidParams(format!(
                "continuity {} must lie in (0, 1]",
                self.continuity
            )));
        }
        if !(self.lull_hours >= 0.0 && self.shoulder_hours >= 0.0) {
            return Err(EventError::InvalidParams("lull and shoulder must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurgeEvent {
    /// Epoch seconds, inclusive.
    pub start: f64,
    /// Epoch seconds, inclusive.
    pub end: f64,
    pub peak_residual: f64,
    pub stations: BTreeSet<String>,
}

impl SurgeEvent {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Event as an inclusive sample-index range; used internally and by tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleSpan {
    pub first: usize,
    pub last: usize,
}

fn check_series(residuals: &[f64], times: &[f64]) -> Result<f64, EventError> {
    if residuals.len() != times.len() {
        return Err(EventError::LengthMismatch {
            residuals: residuals.len(),
            times: times.len(),
        });
    }
    if times.len() < 2 {
        return Ok(3600.0);
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(EventError::NonUniformSampling(1));
    }
    for (k, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
            return Err(EventError::NonUniformSampling(k + 1));
        }
    }
    Ok(dt)
}

/// Positive surge events as sample spans.
pub fn surge_spans(residuals: &[f64], times: &[f64], p: &EventParams) -> Result<Vec<SampleSpan>, EventError> {
    p.validate()?;
    let dt = check_series(residuals, times)?;
    let n = residuals.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let trigger = p.threshold;
    let continuity = p.continuity * p.threshold;
    let lull = p.lull_hours * 3600.0;

    let mut cores: Vec<SampleSpan> = Vec::new();
    let mut current: Option<SampleSpan> = None;
    let mut gap: Option<SampleSpan> = None;
    let mut i = 0;
    while i < n {
        let above = residuals[i] >= trigger;
        let start = i;
        while i < n && (residuals[i] >= trigger) == above {
            i += 1;
        }
        let run = SampleSpan { first: start, last: i - 1 };
        if !above {
            // a leading gap has no event before it to join, so it is ignored
            gap = current.map(|_| run);
            continue;
        }
        match (current.as_mut(), gap.take()) {
            (None, _) => current = Some(run),
            (Some(cur), Some(g)) => {
                let steady = residuals[g.first..=g.last].iter().all(|&r| r >= continuity);
                let brief = ((g.last - g.first + 1) as f64) * dt < lull;
                if steady || brief {
                    cur.last = run.last;
                } else {
                    cores.push(*cur);
                    current = Some(run);
                }
            }
            (Some(cur), None) => cur.last = run.last,
        }
    }
    if let Some(cur) = current {
        cores.push(cur);
    }

    let pad = (p.shoulder_hours * 3600.0 / dt + 1e-9).floor() as usize;
    let mut out: Vec<SampleSpan> = Vec::with_capacity(cores.len());
    for core in cores {
        let span = SampleSpan {
            first: core.first.saturating_sub(pad),
            last: (core.last + pad).min(n - 1),
        };
        match out.last_mut() {
            Some(prev) if span.first <= prev.last => prev.last = prev.last.max(span.last),
            _ => out.push(span),
        }
    }
    Ok(out)
}

fn spans_to_events(spans: &[SampleSpan], values: &[f64], times: &[f64], sign: f64) -> Vec<SurgeEvent> {
    spans
        .iter()
        .map(|s| {
            let peak = values[s.first..=s.last]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            SurgeEvent {
                start: times[s.first],
                end: times[s.last],
                peak_residual: sign * peak,
                stations: BTreeSet::new(),
            }
        })
        .collect()
}

/// Positive surge events in a residual series, disjoint and time ordered.
pub fn get_surge_events(residuals: &[f64], times: &[f64], p: &EventParams) -> Result<Vec<SurgeEvent>, EventError> {
    let spans = surge_spans(residuals, times, p)?;
    Ok(spans_to_events(&spans, residuals, times, 1.0))
}

/// Set-down events: the same detection run on the negated residual.
/// `peak_residual` holds the most negative residual of each event.
pub fn get_setdown_events(residuals: &[f64], times: &[f64], p: &EventParams) -> Result<Vec<SurgeEvent>, EventError> {
    let flipped: Vec<f64> = residuals.iter().map(|r| -r).collect();
    let spans = surge_spans(&flipped, times, p)?;
    Ok(spans_to_events(&spans, &flipped, times, -1.0))
}

/// Detects positive events at one gauge and tags them with its station id.
pub fn detect_station_events(g: &GaugeSeries, p: &EventParams) -> Result<Vec<SurgeEvent>, EventError> {
    let r = tides::residual(g)?;
    let mut events = get_surge_events(&r, &g.times, p)?;
    for e in &mut events {
        e.stations.insert(g.station_id.clone());
    }
    Ok(events)
}

/// Union of per-station events; overlapping or touching intervals are
/// joined, stations unioned and peaks maxed.
pub fn merge_station_events(per_station: &BTreeMap<String, Vec<SurgeEvent>>) -> Vec<SurgeEvent> {
    let mut all: Vec<SurgeEvent> = per_station
        .iter()
        .flat_map(|(station, events)| {
            events.iter().map(move |e| {
                let mut e = e.clone();
                e.stations.insert(station.clone());
                e
            })
        })
        .collect();
    all.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    let mut merged: Vec<SurgeEvent> = Vec::with_capacity(all.len());
    for e in all {
        match merged.last_mut() {
            Some(cur) if e.start <= cur.end => {
                cur.end = cur.end.max(e.end);
                cur.peak_residual = cur.peak_residual.max(e.peak_residual);
                cur.stations.extend(e.stations);
            }
            _ => merged.push(e),
        }
    }
    merged
}

pub fn catalog_to_csv(events: &[SurgeEvent]) -> String {
    let mut out = String::from("event_id,start,end,peak_residual,stations\n");
    for (k, e) in events.iter().enumerate() {
        let stations: Vec<&str> = e.stations.iter().map(String::as_str).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            k + 1,
            e.start,
            e.end,
            e.peak_residual,
            stations.join(";")
        );
    }
    out
}

pub fn write_catalog(path: &Path, events: &[SurgeEvent]) -> Result<(), EventError> {
    Ok(write_file(path, &catalog_to_csv(events))?)
}

pub fn load_catalog(path: &Path) -> Result<Vec<SurgeEvent>, EventError> {
    let text = read_file(path)?;
    let rows = read_table(path, &text, &["event_id", "start", "end", "peak_residual", "stations"])?;
    let mut out = Vec::with_capacity(rows.len());
    for row in &rows {
        let start = parse_time(row.field(1)).ok_or_else(|| row.error("bad start".into()))?;
        let end = parse_time(row.field(2)).ok_or_else(|| row.error("bad end".into()))?;
        if end < start {
            return Err(row.error("event ends before it starts".into()).into());
        }
        out.push(SurgeEvent {
            start,
            end,
            peak_residual: row.parse_finite(3)?,
            stations: row
                .field(4)
                .split(';')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
        });
    }
    Ok(out)
}
