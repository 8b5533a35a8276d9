//! Error metrics over peak-surge predictions.
//!
//! DRY on either side counts as 0 m, so a misclassified point contributes
//! its full surge magnitude as error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{write_file, IngestError, MeshPoint, SurgeLevel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction and truth lengths differ ({pred} vs {truth})")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("no values to evaluate")]
    Empty,
    #[error("truth has zero variance, R^2 undefined")]
    ZeroVariance,
    #[error("no data for point {0}")]
    NoData(u64),
    #[error("no events for station {0}")]
    NoEvents(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Pairwise summation; the split points depend only on the length.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 8 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn check(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

fn mean_of(x: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = x.collect();
    pairwise_sum(&v) / v.len() as f64
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok(mean_of(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t))).sqrt())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok(mean_of(pred.iter().zip(truth).map(|(p, t)| (p - t).abs())))
}

pub fn r2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let mean = mean_of(truth.iter().copied());
    let tot: Vec<f64> = truth.iter().map(|t| (t - mean) * (t - mean)).collect();
    let ss_tot = pairwise_sum(&tot);
    if ss_tot == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    let res: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).collect();
    Ok(1.0 - pairwise_sum(&res) / ss_tot)
}

pub fn to_meters(levels: &[SurgeLevel]) -> Vec<f64> {
    levels.iter().map(|l| l.meters()).collect()
}

/// Fraction of rows whose wet/dry state agrees.
pub fn wet_dry_accuracy(pred: &[SurgeLevel], truth: &[SurgeLevel]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p.is_wet() == t.is_wet()).count();
    Ok(hits as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub r2: f64,
    pub rmse: f64,
    pub mae: f64,
    pub accuracy: f64,
}

/// All-row metrics, including rows whose wet/dry state was misclassified.
pub fn metrics(pred: &[SurgeLevel], truth: &[SurgeLevel]) -> Result<Metrics> {
    let p = to_meters(pred);
    let t = to_meters(truth);
    Ok(Metrics {
        n: p.len(),
        r2: r2(&p, &t)?,
        rmse: rmse(&p, &t)?,
        mae: mae(&p, &t)?,
        accuracy: wet_dry_accuracy(pred, truth)?,
    })
}

/// One predicted/true pair for a (storm, point) row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointOutcome {
    pub storm_id: String,
    pub point_id: u64,
    pub predicted: SurgeLevel,
    pub truth: SurgeLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    pub mae: f64,
    /// Storms that contributed to the mean.
    pub storms: usize,
}

/// Mean over storms of |pred - truth| at each point in `points`. Points
/// missing from some storms average over the storms that have them.
pub fn spatial_mean_abs_error(outcomes: &[PointOutcome], points: &[u64]) -> Result<BTreeMap<u64, PointError>> {
    let mut errs: BTreeMap<u64, Vec<f64>> = points.iter().map(|&p| (p, Vec::new())).collect();
    for o in outcomes {
        if let Some(v) = errs.get_mut(&o.point_id) {
            v.push((o.predicted.meters() - o.truth.meters()).abs());
        }
    }
    errs.into_iter()
        .map(|(p, v)| {
            if v.is_empty() {
                return Err(EvalError::NoData(p));
            }
            Ok((
                p,
                PointError {
                    mae: pairwise_sum(&v) / v.len() as f64,
                    storms: v.len(),
                },
            ))
        })
        .collect()
}

/// Peak value of one event at one station.
#[derive(Debug, Clone, PartialEq)]
pub struct StationPeak {
    pub station: String,
    pub event: usize,
    pub predicted: f64,
    pub observed: f64,
}

/// RMSE per station over event-wise peaks. Every station in `stations`
/// needs at least one event.
pub fn station_rmse(peaks: &[StationPeak], stations: &[String]) -> Result<BTreeMap<String, f64>> {
    let mut by: BTreeMap<&str, Vec<f64>> = stations.iter().map(|s| (s.as_str(), Vec::new())).collect();
    for p in peaks {
        if let Some(v) = by.get_mut(p.station.as_str()) {
            v.push((p.predicted - p.observed) * (p.predicted - p.observed));
        }
    }
    by.into_iter()
        .map(|(s, v)| {
            if v.is_empty() {
                Err(EvalError::NoEvents(s.to_string()))
            } else {
                Ok((s.to_string(), (pairwise_sum(&v) / v.len() as f64).sqrt()))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub overall: Metrics,
    pub per_storm: BTreeMap<String, Metrics>,
    pub per_point: BTreeMap<u64, PointError>,
    pub per_station_rmse: BTreeMap<String, f64>,
}

impl MetricReport {
    /// Per-storm metrics skip storms whose truth is constant.
    pub fn from_outcomes(outcomes: &[PointOutcome]) -> Result<Self> {
        let pred: Vec<SurgeLevel> = outcomes.iter().map(|o| o.predicted).collect();
        let truth: Vec<SurgeLevel> = outcomes.iter().map(|o| o.truth).collect();
        let overall = metrics(&pred, &truth)?;
        let mut groups: BTreeMap<&str, (Vec<SurgeLevel>, Vec<SurgeLevel>)> = BTreeMap::new();
        for o in outcomes {
            let g = groups.entry(o.storm_id.as_str()).or_default();
            g.0.push(o.predicted);
            g.1.push(o.truth);
        }
        let mut per_storm = BTreeMap::new();
        for (s, (p, t)) in groups {
            match metrics(&p, &t) {
                Ok(m) => {
                    per_storm.insert(s.to_string(), m);
                }
                Err(EvalError::ZeroVariance) => {}
                Err(e) => return Err(e),
            }
        }
        let mut ids: Vec<u64> = outcomes.iter().map(|o| o.point_id).collect();
        ids.sort_unstable();
        ids.dedup();
        let per_point = spatial_mean_abs_error(outcomes, &ids)?;
        Ok(Self {
            overall,
            per_storm,
            per_point,
            per_station_rmse: BTreeMap::new(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Overall, per-storm and per-station blocks separated by blank lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scope,n,r2,rmse,mae,accuracy\n");
        let row = |out: &mut String, scope: &str, m: &Metrics| {
            let _ = writeln!(out, "{scope},{},{},{},{},{}", m.n, m.r2, m.rmse, m.mae, m.accuracy);
        };
        row(&mut out, "all", &self.overall);
        out.push_str("\nstorm_id,n,r2,rmse,mae,accuracy\n");
        for (s, m) in &self.per_storm {
            row(&mut out, s, m);
        }
        if !self.per_station_rmse.is_empty() {
            out.push_str("\nstation_id,rmse\n");
            for (s, r) in &self.per_station_rmse {
                let _ = writeln!(out, "{s},{r}");
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join("metrics.json"), &self.to_json()?)?;
        write_file(&dir.join("metrics.csv"), &self.to_csv())?;
        Ok(())
    }
}

/// Per-point errors as a GeoJSON FeatureCollection of points carrying an
/// `abs_err` property. Points unknown to `mesh` are skipped.
pub fn point_errors_geojson(errors: &BTreeMap<u64, PointError>, mesh: &[MeshPoint]) -> Result<String> {
    let by_id: BTreeMap<u64, &MeshPoint> = mesh.iter().map(|p| (p.id, p)).collect();
    let features: Vec<serde_json::Value> = errors
        .iter()
        .filter_map(|(id, e)| {
            let p = by_id.get(id)?;
            Some(serde_json::json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [p.lon, p.lat] },
                "properties": { "point_id": id, "abs_err": e.mae, "storms": e.storms },
            }))
        })
        .collect();
    let fc = serde_json::json!({ "type": "FeatureCollection", "features": features });
    let mut s = serde_json::to_string_pretty(&fc)?;
    s.push('\n');
    Ok(s)
}
