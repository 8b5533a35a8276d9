//! End-to-end driver: point selection, storm splits and the staged run
//! (detect-events, assemble, reduce, train, predict, evaluate).

pub mod catalog;
pub mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval::{self, EvalError, MetricReport, PointOutcome, StationPeak};
use crate::events::{self, EventError, SurgeEvent};
use crate::features::{
    self, correlation_reduce, haversine_km, load_feature_list, load_feature_matrix, write_feature_list, FeatureError,
    FeatureMatrix, FeatureMode, StaticFeatures, StormInputs,
};
use crate::ingest::{
    load_coast, load_forcing, load_gauge_series, load_max_surge, load_point_set, load_storm_track, read_file,
    write_file, GaugeSeries, IngestError, MeshPoint, PointSet, SurgeLevel,
};
use crate::models::{
    grid_search, grid_table_csv, train_two_stage, Candidate, Dataset, ModelError, ModelKind, StageSettings,
    TwoStageModel,
};
use crate::synth::SynthError;
use crate::tides::{load_harmonics, TideError};

pub use catalog::{load_storm_catalog, StormEntry};
pub use config::{ConfigMap, PipelineConfig, SamplingSpec, SplitKind, SplitSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("no points survive selection")]
    EmptySelection,
    #[error("need at least 2 storms to split, got {0}")]
    TooFewStorms(usize),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Tide(#[from] TideError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    /// The innermost non-stage error.
    pub fn root(&self) -> &PipelineError {
        match self {
            PipelineError::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn stage(&self) -> Option<&'static str> {
        match self {
            PipelineError::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn in_stage<T>(stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    info!("stage {stage}");
    f().map_err(|e| match e {
        e @ PipelineError::Stage { .. } => e,
        e => PipelineError::Stage {
            stage,
            source: Box::new(e),
        },
    })
}

/// Coastal filter, then the landfall radius (when a landfall is given),
/// then every `decimation`-th survivor in ascending id order.
pub fn select_points(points: &[MeshPoint], landfall: Option<(f64, f64)>, spec: &SamplingSpec) -> Result<Vec<u64>> {
    if !(spec.landfall_radius_km > 0.0) || spec.decimation == 0 {
        return Err(PipelineError::Config("radius must be > 0 and decimation >= 1".into()));
    }
    let mut ids: Vec<u64> = points
        .iter()
        .filter(|p| !spec.coastal_only || p.is_coastal)
        .filter(|p| match landfall {
            Some((lon, lat)) => haversine_km(p.lon, p.lat, lon, lat) <= spec.landfall_radius_km,
            None => true,
        })
        .map(|p| p.id)
        .collect();
    ids.sort_unstable();
    let out: Vec<u64> = ids.into_iter().step_by(spec.decimation).collect();
    if out.is_empty() {
        return Err(PipelineError::EmptySelection);
    }
    Ok(out)
}

/// Splits storms (id, start time) into train and test ids. Both sides are
/// non-empty; the train side gets `round(fraction * n)` storms.
pub fn split(storms: &[(String, f64)], spec: &SplitSpec) -> Result<(Vec<String>, Vec<String>)> {
    let n = storms.len();
    if n < 2 {
        return Err(PipelineError::TooFewStorms(n));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(PipelineError::Config("train_fraction must lie in (0, 1)".into()));
    }
    let mut order: Vec<&(String, f64)> = storms.iter().collect();
    order.sort_by(|a, b| a.0.cmp(&b.0));
    match spec.kind {
        SplitKind::RandomByStorm => order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed)),
        SplitKind::TemporalByStart => order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))),
    }
    let n_train = ((spec.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let ids: Vec<String> = order.into_iter().map(|s| s.0.clone()).collect();
    let (train, test) = ids.split_at(n_train);
    Ok((train.to_vec(), test.to_vec()))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => IngestError::MissingFile(path.to_path_buf()),
        _ => IngestError::Io {
            path: path.to_path_buf(),
            source,
        },
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// `done` or `skipped`.
    pub status: String,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: BTreeMap<String, String>,
    /// sha256 of every input file read, keyed by path.
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    fn record(&mut self, stage: &str, done: bool, outputs: &[&str]) {
        self.stages.push(StageRecord {
            stage: stage.to_string(),
            status: if done { "done" } else { "skipped" }.to_string(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        });
    }

    fn hash(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }
}

/// Artifact names inside the output directory.
pub mod artifacts {
    pub const EVENTS: &str = "events.csv";
    pub const SPLIT: &str = "split.csv";
    pub const TRAIN: &str = "features_train.csv";
    pub const TEST: &str = "features_test.csv";
    pub const FEATURE_LIST: &str = "feature_list.txt";
    pub const MODEL: &str = "model.json";
    pub const PREDICTIONS: &str = "predictions.csv";
    pub const METRICS_JSON: &str = "metrics.json";
    pub const METRICS_CSV: &str = "metrics.csv";
    pub const POINT_ERRORS: &str = "point_errors.geojson";
    pub const GRID: &str = "grid.csv";
    pub const MANIFEST: &str = "manifest.json";
    pub const CONFIG: &str = "config.txt";
}

/// Gauge files (`*.csv`) in a directory, sorted by file name.
pub fn load_gauges(dir: &Path) -> Result<Vec<GaugeSeries>> {
    if !dir.is_dir() {
        return Err(IngestError::MissingFile(dir.to_path_buf()).into());
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|source| IngestError::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Ok(load_gauge_series(p)?)).collect()
}

fn gauge_inputs(cfg: &PipelineConfig, manifest: Option<&mut Manifest>) -> Result<Vec<GaugeSeries>> {
    let Some(dir) = cfg.map.path("input.gauges") else {
        return Ok(Vec::new());
    };
    let gauges = load_gauges(&dir)?;
    if let Some(m) = manifest {
        for g in &gauges {
            let p = dir.join(format!("{}.csv", g.station_id));
            if p.exists() {
                m.hash(&p)?;
            }
        }
    }
    Ok(gauges)
}

/// Detects and merges events over all gauges; writes `events.csv`.
pub fn detect_events(cfg: &PipelineConfig, gauges: &[GaugeSeries]) -> Result<Vec<SurgeEvent>> {
    let mut per_station = BTreeMap::new();
    for g in gauges {
        per_station.insert(g.station_id.clone(), events::detect_station_events(g, &cfg.events)?);
    }
    let merged = events::merge_station_events(&per_station);
    info!("{} events over {} stations", merged.len(), gauges.len());
    events::write_catalog(&cfg.output_dir.join(artifacts::EVENTS), &merged)?;
    Ok(merged)
}

/// Assembled train and test tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub train_storms: Vec<String>,
    pub test_storms: Vec<String>,
}

struct StormRows {
    id: String,
    start: f64,
    span: (f64, f64),
    rows: FeatureMatrix,
}

/// Featurizes every catalog storm, keeps (in trackless mode) those whose
/// forcing overlaps a detected event, splits by storm and writes
/// `features_train.csv`, `features_test.csv` and `split.csv`.
pub fn assemble(cfg: &PipelineConfig, events: Option<&[SurgeEvent]>) -> Result<Assembled> {
    assemble_inner(cfg, events, None)
}

fn assemble_inner(
    cfg: &PipelineConfig,
    events: Option<&[SurgeEvent]>,
    mut manifest: Option<&mut Manifest>,
) -> Result<Assembled> {
    let fc = &cfg.features;
    let points_path = cfg.map.required_path("input.points")?;
    let coast_path = cfg.map.required_path("input.coast")?;
    let catalog_path = cfg.map.required_path("input.storms")?;
    let points = load_point_set(&points_path)?;
    let coast = load_coast(&coast_path)?;
    let catalog = load_storm_catalog(&catalog_path)?;
    let harmonics = match cfg.map.path("input.harmonics") {
        Some(p) => {
            if let Some(m) = manifest.as_deref_mut() {
                m.hash(&p)?;
            }
            Some(load_harmonics(&p)?)
        }
        None if fc.include_tides => {
            return Err(PipelineError::Config("feature.include_tides needs input.harmonics".into()));
        }
        None => None,
    };
    if let Some(m) = manifest.as_deref_mut() {
        for p in [&points_path, &coast_path, &catalog_path] {
            m.hash(p)?;
        }
    }

    let mut sampling = cfg.sampling;
    if fc.mode == FeatureMode::Trackless {
        sampling.decimation = 1;
    }
    let candidates = select_points(points.points(), None, &SamplingSpec { decimation: 1, ..sampling })?;
    let statics = StaticFeatures::compute(fc, &points, &candidates, &coast, harmonics.as_ref())?;

    let mut storms: Vec<StormRows> = Vec::with_capacity(catalog.len());
    for entry in &catalog {
        let forcing = load_forcing(&entry.forcing)?;
        let track = match (&entry.track, fc.mode) {
            (Some(p), _) => Some(load_storm_track(p)?),
            (None, FeatureMode::Track) => return Err(FeatureError::MissingTrack(entry.storm_id.clone()).into()),
            (None, FeatureMode::Trackless) => None,
        };
        let max_surge = entry.max_surge.as_deref().map(load_max_surge).transpose()?;
        if let Some(m) = manifest.as_deref_mut() {
            m.hash(&entry.forcing)?;
            for p in entry.track.iter().chain(entry.max_surge.iter()) {
                m.hash(p)?;
            }
        }
        let span = (forcing.t0, forcing.t_end());
        let inputs = StormInputs {
            storm_id: entry.storm_id.clone(),
            forcing,
            track,
            max_surge,
        };
        let (window, landfall) = features::storm_window(fc, &inputs, &coast)?;
        let center = landfall.as_ref().map(|l| (l.lon, l.lat));
        let ids = match select_points(points.points(), center, &sampling) {
            Ok(ids) => ids,
            Err(PipelineError::EmptySelection) => {
                warn!("storm {}: no points selected, skipped", entry.storm_id);
                continue;
            }
            Err(e) => return Err(e),
        };
        let rows = features::assemble(fc, &inputs, &points, &ids, &statics, Some((window, landfall)), &coast)?;
        storms.push(StormRows {
            id: entry.storm_id.clone(),
            start: entry.start,
            span,
            rows,
        });
    }

    if let (Some(evs), FeatureMode::Trackless, true) = (events, fc.mode, cfg.filter_storms) {
        let before = storms.len();
        storms.retain(|s| evs.iter().any(|e| e.start <= s.span.1 && e.end >= s.span.0));
        info!("{} of {before} storms overlap detected events", storms.len());
    }
    let list: Vec<(String, f64)> = storms.iter().map(|s| (s.id.clone(), s.start)).collect();
    let (train_ids, test_ids) = split(&list, &cfg.split)?;
    let train_set: BTreeSet<&str> = train_ids.iter().map(String::as_str).collect();
    let columns = fc.column_names();
    let mut train = FeatureMatrix::new(columns.clone())?;
    let mut test = FeatureMatrix::new(columns)?;
    let mut by_id: Vec<StormRows> = storms;
    by_id.sort_by(|a, b| a.id.cmp(&b.id));
    for s in by_id {
        if train_set.contains(s.id.as_str()) {
            train.extend(s.rows)?;
        } else {
            test.extend(s.rows)?;
        }
    }
    let out = &cfg.output_dir;
    train.write(&out.join(artifacts::TRAIN))?;
    test.write(&out.join(artifacts::TEST))?;
    let mut split_csv = String::from("storm_id,set\n");
    for (set, ids) in [("train", &train_ids), ("test", &test_ids)] {
        for id in ids {
            let _ = writeln!(split_csv, "{id},{set}");
        }
    }
    write_file(&out.join(artifacts::SPLIT), &split_csv)?;
    info!("{} train rows, {} test rows, {} columns", train.n_rows(), test.n_rows(), train.n_cols());
    Ok(Assembled {
        train,
        test,
        train_storms: train_ids,
        test_storms: test_ids,
    })
}

/// Correlation reduction on the training table; writes `feature_list.txt`.
pub fn reduce(cfg: &PipelineConfig, train: &FeatureMatrix, tau: f64) -> Result<Vec<String>> {
    let r = correlation_reduce(train, tau)?;
    info!("tau {tau}: kept {} of {} columns", r.retained.len(), train.n_cols());
    write_feature_list(&cfg.output_dir.join(artifacts::FEATURE_LIST), &r.retained)?;
    Ok(r.retained)
}

/// Fits the configured two-stage model; writes `model.json`.
pub fn train(cfg: &PipelineConfig, train: &FeatureMatrix, columns: Option<&[String]>) -> Result<TwoStageModel> {
    let m = match columns {
        Some(c) => train.select(c)?,
        None => train.clone(),
    };
    let data = Dataset::from_matrix(&m)?;
    let model = train_two_stage(&data, &cfg.classifier, &cfg.regressor, cfg.threshold)?;
    model.save(&cfg.output_dir.join(artifacts::MODEL))?;
    Ok(model)
}

/// (storm, point, predicted, truth when known).
pub type Prediction = (String, u64, SurgeLevel, Option<SurgeLevel>);

/// One prediction per row, in row order.
pub fn predict(model: &TwoStageModel, matrix: &FeatureMatrix) -> Result<Vec<Prediction>> {
    let m = matrix.select(&model.schema)?;
    let pred = model.predict(&m)?;
    Ok(m.rows()
        .iter()
        .zip(pred)
        .map(|(r, p)| (r.storm_id.clone(), r.point_id, p, r.label))
        .collect())
}

pub fn predictions_csv(preds: &[Prediction]) -> String {
    let mut out = String::from("storm_id,point_id,predicted,truth\n");
    for (s, p, lvl, truth) in preds {
        let t = truth.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{s},{p},{lvl},{t}");
    }
    out
}

/// Distance within which a mesh point stands in for a gauge.
const STATION_MATCH_KM: f64 = 25.0;

/// Event-wise peaks at each gauge: the largest residual inside the event
/// against the prediction at the nearest predicted point of the storm
/// whose forcing span contains the event peak window.
fn station_peaks(
    outcomes: &[PointOutcome],
    points: &PointSet,
    gauges: &[GaugeSeries],
    events: &[SurgeEvent],
    storm_spans: &BTreeMap<String, (f64, f64)>,
) -> Result<Vec<StationPeak>> {
    let mut by_storm: BTreeMap<&str, Vec<&PointOutcome>> = BTreeMap::new();
    for o in outcomes {
        by_storm.entry(o.storm_id.as_str()).or_default().push(o);
    }
    let mut peaks = Vec::new();
    for g in gauges {
        let resid = crate::tides::residual(g)?;
        for (k, e) in events.iter().enumerate() {
            if !e.stations.contains(&g.station_id) {
                continue;
            }
            let Some((storm, _)) = storm_spans.iter().find(|(_, s)| e.start <= s.1 && e.end >= s.0) else {
                continue;
            };
            let Some(rows) = by_storm.get(storm.as_str()) else {
                continue;
            };
            let nearest = rows
                .iter()
                .filter_map(|o| points.get(o.point_id).map(|p| (haversine_km(g.lon, g.lat, p.lon, p.lat), o)))
                .filter(|(d, _)| *d <= STATION_MATCH_KM)
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.point_id.cmp(&b.1.point_id)));
            let Some((_, o)) = nearest else {
                continue;
            };
            let observed = g
                .times
                .iter()
                .zip(&resid)
                .filter(|(t, _)| **t >= e.start && **t <= e.end)
                .map(|(_, r)| *r)
                .fold(f64::NEG_INFINITY, f64::max);
            if observed.is_finite() {
                peaks.push(StationPeak {
                    station: g.station_id.clone(),
                    event: k,
                    predicted: o.predicted.meters(),
                    observed,
                });
            }
        }
    }
    Ok(peaks)
}

/// Metrics over labeled predictions; writes `metrics.json`, `metrics.csv`
/// and `point_errors.geojson`. Gauge peaks are compared when events and
/// gauges are available.
pub fn evaluate(
    cfg: &PipelineConfig,
    preds: &[Prediction],
    points: &PointSet,
    gauges: &[GaugeSeries],
    events: Option<&[SurgeEvent]>,
) -> Result<MetricReport> {
    let outcomes: Vec<PointOutcome> = preds
        .iter()
        .filter_map(|(s, p, lvl, t)| {
            t.map(|t| PointOutcome {
                storm_id: s.clone(),
                point_id: *p,
                predicted: *lvl,
                truth: t,
            })
        })
        .collect();
    let mut report = MetricReport::from_outcomes(&outcomes)?;
    if let (Some(evs), false) = (events, gauges.is_empty()) {
        let catalog = load_storm_catalog(&cfg.map.required_path("input.storms")?)?;
        let scored: BTreeSet<&str> = outcomes.iter().map(|o| o.storm_id.as_str()).collect();
        let mut spans = BTreeMap::new();
        for e in catalog.iter().filter(|e| scored.contains(e.storm_id.as_str())) {
            let f = load_forcing(&e.forcing)?;
            spans.insert(e.storm_id.clone(), (f.t0, f.t_end()));
        }
        let peaks = station_peaks(&outcomes, points, gauges, evs, &spans)?;
        let stations: Vec<String> = peaks.iter().map(|p| p.station.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        report.per_station_rmse = eval::station_rmse(&peaks, &stations)?;
    }
    let out = &cfg.output_dir;
    report.write(out)?;
    let geo = eval::point_errors_geojson(&report.per_point, points.points())?;
    write_file(&out.join(artifacts::POINT_ERRORS), &geo)?;
    Ok(report)
}

/// Scores every classifier × regressor pair of the four learners on the
/// assembled tables; writes `grid.csv`.
pub fn run_grid_search(cfg: &PipelineConfig, train: &FeatureMatrix, test: &FeatureMatrix) -> Result<Vec<crate::models::GridRow>> {
    let settings: Vec<(StageSettings, StageSettings)> = ModelKind::ALL
        .into_iter()
        .map(|k| {
            (
                StageSettings { kind: k, ..cfg.classifier.clone() },
                StageSettings { kind: k, ..cfg.regressor.clone() },
            )
        })
        .collect();
    let clf: Vec<&dyn Candidate> = settings.iter().map(|s| &s.0 as &dyn Candidate).collect();
    let reg: Vec<&dyn Candidate> = settings.iter().map(|s| &s.1 as &dyn Candidate).collect();
    let rows = grid_search(&clf, &reg, &Dataset::from_matrix(train)?, &Dataset::from_matrix(test)?, cfg.threshold)?;
    write_file(&cfg.output_dir.join(artifacts::GRID), &grid_table_csv(&rows))?;
    Ok(rows)
}

/// Loads the tables written by a previous assemble stage.
pub fn load_assembled(cfg: &PipelineConfig) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let out = &cfg.output_dir;
    Ok((
        load_feature_matrix(&out.join(artifacts::TRAIN))?,
        load_feature_matrix(&out.join(artifacts::TEST))?,
    ))
}

/// The reduced column list of a previous run, if one was written.
pub fn load_reduced_columns(cfg: &PipelineConfig) -> Result<Option<Vec<String>>> {
    let p = cfg.output_dir.join(artifacts::FEATURE_LIST);
    if p.exists() {
        Ok(Some(load_feature_list(&p)?))
    } else {
        Ok(None)
    }
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = read_file(path)?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || IngestError::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            msg: format!("bad prediction row '{line}'"),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad().into());
        }
        let point: u64 = f[1].trim().parse().map_err(|_| bad())?;
        let pred = SurgeLevel::parse(f[2].trim()).ok_or_else(bad)?;
        let truth = match f[3].trim() {
            "" => None,
            t => Some(SurgeLevel::parse(t).ok_or_else(bad)?),
        };
        out.push((f[0].to_string(), point, pred, truth));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub report: MetricReport,
    pub model: TwoStageModel,
}

/// All six stages in order; every artifact lands in the output directory
/// along with `manifest.json`.
pub fn run(cfg: &PipelineConfig) -> Result<RunSummary> {
    let out = &cfg.output_dir;
    let mut manifest = Manifest {
        config: cfg.map.entries().clone(),
        inputs: BTreeMap::new(),
        stages: Vec::new(),
    };
    write_file(&out.join(artifacts::CONFIG), &cfg.to_text())?;

    let (gauges, events) = in_stage("detect-events", || {
        let gauges = gauge_inputs(cfg, Some(&mut manifest))?;
        if gauges.is_empty() {
            return Ok((gauges, None));
        }
        let ev = detect_events(cfg, &gauges)?;
        Ok((gauges, Some(ev)))
    })?;
    manifest.record("detect-events", events.is_some(), if events.is_some() { &[artifacts::EVENTS] } else { &[] });

    let asm = in_stage("assemble", || assemble_inner(cfg, events.as_deref(), Some(&mut manifest)))?;
    manifest.record("assemble", true, &[artifacts::TRAIN, artifacts::TEST, artifacts::SPLIT]);

    let columns = in_stage("reduce", || cfg.reduce_tau.map(|tau| reduce(cfg, &asm.train, tau)).transpose())?;
    manifest.record(
        "reduce",
        columns.is_some(),
        if columns.is_some() { &[artifacts::FEATURE_LIST] } else { &[] },
    );

    let model = in_stage("train", || train(cfg, &asm.train, columns.as_deref()))?;
    manifest.record("train", true, &[artifacts::MODEL]);

    let preds = in_stage("predict", || {
        let p = predict(&model, &asm.test)?;
        write_file(&out.join(artifacts::PREDICTIONS), &predictions_csv(&p))?;
        Ok(p)
    })?;
    manifest.record("predict", true, &[artifacts::PREDICTIONS]);

    let report = in_stage("evaluate", || {
        let points = load_point_set(&cfg.map.required_path("input.points")?)?;
        evaluate(cfg, &preds, &points, &gauges, events.as_deref())
    })?;
    manifest.record(
        "evaluate",
        true,
        &[artifacts::METRICS_JSON, artifacts::METRICS_CSV, artifacts::POINT_ERRORS],
    );
    info!(
        "test R2 {:.4}, RMSE {:.4} m, accuracy {:.4}",
        report.overall.r2, report.overall.rmse, report.overall.accuracy
    );

    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_file(&out.join(artifacts::MANIFEST), &text)?;
    Ok(RunSummary { manifest, report, model })
}
