//! Point-based feature construction.
//!
//! For every (storm, point) pair the forcing is first reduced in time (mean,
//! max and min of each wind component, wind magnitude, pressure and
//! optionally ice fraction), then each reduced field contributes its value
//! interpolated at the point and mean/max/min over every forcing box, plus
//! optionally its whole-domain mean. Bathymetry contributes mean/max/min over the
//! bathymetry boxes. Depth, distance to landfall (track mode), distance to
//! the coast and optional tidal amplitudes complete the row.
//!
//! Column names follow `<temporal>_<var>[_<spatial>_<box>]`, e.g.
//! `min_magnitude_mean_0.1` is the spatial mean over a 0.1 degree box of the
//! temporal minimum of wind magnitude. Bathymetry columns are
//! `bathy_<spatial>_<box>`, amplitudes `amplitude_<constituent>`.

pub mod geo;
mod matrix;
pub mod reduce;
pub mod stats;

pub use geo::{distances, find_landfall, haversine_km, Landfall};
pub use matrix::{load_feature_list, load_feature_matrix, write_feature_list, FeatureMatrix, FeatureRow};
pub use reduce::{correlation_reduce, pearson, Reduction};
pub use stats::{spatial_stats, temporal_stats, Neighborhood, Stat, Summary, TemporalStats, TemporalVar};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ingest::{CoastPolyline, ForcingGrid, IngestError, MaxSurgeField, MeshPoint, PointSet, StormTrack};
use crate::tides::{Constituent, HarmonicSet};

use stats::{mesh_box_stats, PointIndex};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("storm track never crosses the coast")]
    NoLandfall,
    #[error("no forcing frames between {start} and {end}")]
    EmptyWindow { start: f64, end: f64 },
    #[error("no cells in neighborhood of ({lon}, {lat})")]
    EmptyNeighborhood { lon: f64, lat: f64 },
    #[error("point {0} lies outside the forcing grid")]
    PointOutsideDomain(u64),
    #[error("forcing grid lacks variable '{0}'")]
    MissingVariable(String),
    #[error("no tidal harmonics for point {0}")]
    MissingHarmonics(u64),
    #[error("storm {storm} has no max-surge value for point {point}")]
    MissingLabel { storm: String, point: u64 },
    #[error("track mode needs a storm track for storm {0}")]
    MissingTrack(String),
    #[error("unknown point id {0}")]
    UnknownPoint(u64),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("invalid feature matrix: {0}")]
    InvalidMatrix(String),
    #[error("all columns have zero variance")]
    DegenerateColumn,
    #[error("correlation reduction needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("threshold {0} outside (0, 1]")]
    InvalidTau(f64),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Best track available: features are localized around landfall.
    Track,
    /// No track: temporal statistics use the whole forcing series.
    Trackless,
}

impl FeatureMode {
    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::Track => "track",
            FeatureMode::Trackless => "trackless",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "track" => Some(FeatureMode::Track),
            "trackless" => Some(FeatureMode::Trackless),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub mode: FeatureMode,
    pub window_hours_before: f64,
    pub window_hours_after: f64,
    /// Forcing box sizes in degrees.
    pub forcing_boxes: Vec<f64>,
    /// Adds `<temporal>_<var>_mean_domain` for every reduced field.
    pub include_domain_mean: bool,
    pub bathy_boxes: Vec<f64>,
    pub include_ice: bool,
    pub include_tides: bool,
}

impl FeatureConfig {
    /// Landfall-localized configuration without ice or tides.
    pub fn track() -> Self {
        Self {
            mode: FeatureMode::Track,
            window_hours_before: 6.0,
            window_hours_after: 6.0,
            forcing_boxes: vec![0.1, 0.2, 0.4],
            include_domain_mean: false,
            bathy_boxes: vec![0.05, 0.1, 0.4, 1.0],
            include_ice: false,
            include_tides: false,
        }
    }

    /// Whole-series configuration with ice fraction and tidal amplitudes.
    pub fn trackless() -> Self {
        Self {
            mode: FeatureMode::Trackless,
            include_ice: true,
            include_tides: true,
            ..Self::track()
        }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        for (name, boxes) in [("forcing", &self.forcing_boxes), ("bathymetry", &self.bathy_boxes)] {
            if boxes.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
                return Err(FeatureError::InvalidConfig(format!("{name} boxes must be positive")));
            }
            if boxes.windows(2).any(|w| w[1] <= w[0]) {
                return Err(FeatureError::InvalidConfig(format!("{name} boxes must strictly increase")));
            }
        }
        if !(self.window_hours_before >= 0.0 && self.window_hours_after >= 0.0) {
            return Err(FeatureError::InvalidConfig("window hours must be >= 0".into()));
        }
        Ok(())
    }

    pub fn temporal_vars(&self) -> Vec<TemporalVar> {
        TemporalVar::for_config(self.include_ice)
    }

    /// The full ordered column list this configuration produces.
    pub fn column_names(&self) -> Vec<String> {
        let mut cols = Vec::new();
        for var in self.temporal_vars() {
            for tstat in Stat::ALL {
                let base = format!("{}_{}", tstat.name(), var.name());
                cols.push(base.clone());
                for &b in &self.forcing_boxes {
                    for sstat in Stat::ALL {
                        cols.push(format!("{base}_{}_{}", sstat.name(), box_label(b)));
                    }
                }
                if self.include_domain_mean {
                    cols.push(format!("{base}_mean_domain"));
                }
            }
        }
        for &b in &self.bathy_boxes {
            for sstat in Stat::ALL {
                cols.push(format!("bathy_{}_{}", sstat.name(), box_label(b)));
            }
        }
        cols.push("depth".into());
        if self.mode == FeatureMode::Track {
            cols.push("landfall_dist".into());
        }
        cols.push("coastal_dist".into());
        if self.include_tides {
            for c in Constituent::ALL {
                cols.push(format!("amplitude_{}", c.name()));
            }
        }
        cols
    }
}

/// `0.05` -> "0.05", `1.0` -> "1.0".
pub fn box_label(b: f64) -> String {
    if b.fract() == 0.0 {
        format!("{b:.1}")
    } else {
        format!("{b}")
    }
}

/// Storm-independent features of every mesh point, computed once.
#[derive(Debug, Clone)]
pub struct StaticFeatures {
    per_point: BTreeMap<u64, Vec<f64>>,
    coastal: BTreeMap<u64, f64>,
}

impl StaticFeatures {
    /// Bathymetry box statistics, depth, coastal distance and (when
    /// configured) amplitudes for each point in `ids`.
    pub fn compute(
        config: &FeatureConfig,
        points: &PointSet,
        ids: &[u64],
        coast: &CoastPolyline,
        harmonics: Option<&BTreeMap<u64, HarmonicSet>>,
    ) -> Result<Self, FeatureError> {
        let mesh: &[MeshPoint] = points.points();
        let depth: Vec<f64> = mesh.iter().map(|p| p.depth).collect();
        let index = PointIndex::new(mesh);
        let mut per_point = BTreeMap::new();
        let mut coastal = BTreeMap::new();
        for &id in ids {
            let p = points.get(id).ok_or(FeatureError::UnknownPoint(id))?;
            let mut bathy = Vec::with_capacity(config.bathy_boxes.len() * 3);
            for &b in &config.bathy_boxes {
                let s = mesh_box_stats(&depth, mesh, &index, p.lon, p.lat, b)?;
                bathy.extend(Stat::ALL.iter().map(|&st| s.get(st)));
            }
            let mut tides = Vec::new();
            if config.include_tides {
                let set = harmonics
                    .and_then(|h| h.get(&id))
                    .ok_or(FeatureError::MissingHarmonics(id))?;
                tides.extend(Constituent::ALL.iter().map(|&c| set.amplitude(c)));
            }
            bathy.push(p.depth);
            // layout: bathy stats, depth, then amplitudes after the distances
            bathy.extend(tides);
            per_point.insert(id, bathy);
            coastal.insert(id, geo::coastal_distance_km(p.lon, p.lat, coast));
        }
        Ok(Self { per_point, coastal })
    }

    pub fn coastal_distance(&self, id: u64) -> Option<f64> {
        self.coastal.get(&id).copied()
    }
}

/// Everything needed to featurize one storm.
#[derive(Debug, Clone)]
pub struct StormInputs {
    pub storm_id: String,
    pub forcing: ForcingGrid,
    pub track: Option<StormTrack>,
    pub max_surge: Option<MaxSurgeField>,
}

/// Time window of temporal statistics for a storm, plus its landfall in
/// track mode.
pub fn storm_window(
    config: &FeatureConfig,
    storm: &StormInputs,
    coast: &CoastPolyline,
) -> Result<((f64, f64), Option<Landfall>), FeatureError> {
    match config.mode {
        FeatureMode::Trackless => Ok(((storm.forcing.t0, storm.forcing.t_end()), None)),
        FeatureMode::Track => {
            let track = storm
                .track
                .as_ref()
                .ok_or_else(|| FeatureError::MissingTrack(storm.storm_id.clone()))?;
            let lf = find_landfall(track, coast)?;
            let window = (
                lf.time - config.window_hours_before * 3600.0,
                lf.time + config.window_hours_after * 3600.0,
            );
            Ok((window, Some(lf)))
        }
    }
}

/// Builds one storm's rows for the points in `ids`, in the given order.
pub fn assemble(
    config: &FeatureConfig,
    storm: &StormInputs,
    points: &PointSet,
    ids: &[u64],
    statics: &StaticFeatures,
    landfall_and_window: Option<((f64, f64), Option<Landfall>)>,
    coast: &CoastPolyline,
) -> Result<FeatureMatrix, FeatureError> {
    config.validate()?;
    let (window, landfall) = match landfall_and_window {
        Some(w) => w,
        None => storm_window(config, storm, coast)?,
    };
    let ts = temporal_stats(&storm.forcing, window, &config.temporal_vars())?;
    let geom = ts.geometry;
    let domain_means: Vec<f64> = ts
        .fields
        .iter()
        .map(|f| spatial_stats(&f.values, &geom, geom.lon0, geom.lat0, Neighborhood::Domain).map(|s| s.mean))
        .collect::<Result<_, _>>()?;
    let with_domain = config.include_domain_mean;

    let columns = config.column_names();
    let n_tides = if config.include_tides { Constituent::ALL.len() } else { 0 };
    let mut matrix = FeatureMatrix::new(columns.clone())?;
    for &id in ids {
        let p = points.get(id).ok_or(FeatureError::UnknownPoint(id))?;
        if !geom.contains(p.lon, p.lat) {
            return Err(FeatureError::PointOutsideDomain(id));
        }
        let mut values = Vec::with_capacity(columns.len());
        for (field, &domain_mean) in ts.fields.iter().zip(&domain_means) {
            let at = geom
                .interpolate(&field.values, p.lon, p.lat)
                .ok_or(FeatureError::PointOutsideDomain(id))?;
            values.push(at);
            for &b in &config.forcing_boxes {
                let s = spatial_stats(&field.values, &geom, p.lon, p.lat, Neighborhood::Box(b))?;
                values.extend(Stat::ALL.iter().map(|&st| s.get(st)));
            }
            if with_domain {
                values.push(domain_mean);
            }
        }
        let fixed = statics.per_point.get(&id).ok_or(FeatureError::UnknownPoint(id))?;
        let (head, tides) = fixed.split_at(fixed.len() - n_tides);
        values.extend_from_slice(head);
        if config.mode == FeatureMode::Track {
            let lf = landfall.as_ref().ok_or(FeatureError::NoLandfall)?;
            values.push(haversine_km(p.lon, p.lat, lf.lon, lf.lat));
        }
        values.push(statics.coastal_distance(id).ok_or(FeatureError::UnknownPoint(id))?);
        values.extend_from_slice(tides);

        let label = match &storm.max_surge {
            Some(field) => Some(field.get(id).ok_or_else(|| FeatureError::MissingLabel {
                storm: storm.storm_id.clone(),
                point: id,
            })?),
            None => None,
        };
        matrix.push(FeatureRow {
            storm_id: storm.storm_id.clone(),
            point_id: id,
            values,
            label,
        })?;
    }
    Ok(matrix)
}
