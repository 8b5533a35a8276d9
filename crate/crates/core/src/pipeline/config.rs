//! Flat `key=value` run configuration.
//!
//! Precedence, lowest first: built-in defaults, the config file, `SURGE_*`
//! environment variables (`feature.mode` -> `SURGE_FEATURE_MODE`), explicit
//! overrides from the command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::events::EventParams;
use crate::features::{FeatureConfig, FeatureMode};
use crate::ingest::{parse_key_values, read_file};
use crate::models::{BoostConfig, BoostLoss, ModelKind, StageSettings, TrainConfig};
use crate::synth::{OracleParams, SynthSpec};

use super::{PipelineError, Result};

/// Every recognized key with its default ("" means unset).
pub const KEYS: &[(&str, &str)] = &[
    ("input.points", ""),
    ("input.coast", ""),
    ("input.storms", ""),
    ("input.harmonics", ""),
    ("input.gauges", ""),
    ("output.dir", "out"),
    ("event.threshold", "0.3"),
    ("event.continuity", "0.5"),
    ("event.lull_hours", "6"),
    ("event.shoulder_hours", "12"),
    ("event.filter_storms", "true"),
    ("feature.mode", "track"),
    ("feature.window_before", "6"),
    ("feature.window_after", "6"),
    ("feature.forcing_boxes", "0.1,0.2,0.4"),
    ("feature.bathy_boxes", "0.05,0.1,0.4,1.0"),
    ("feature.include_ice", ""),
    ("feature.include_tides", ""),
    ("feature.include_domain_mean", "false"),
    ("feature.reduce_tau", ""),
    ("sampling.coastal_only", "true"),
    ("sampling.radius_km", "150"),
    ("sampling.decimation", "10"),
    ("split.kind", "random"),
    ("split.train_fraction", "0.9"),
    ("split.seed", "0"),
    ("model.classifier", "gbt"),
    ("model.regressor", "gbt"),
    ("model.threshold", "0.5"),
    ("model.width_divisor", "1"),
    ("model.epochs_classifier", "50"),
    ("model.epochs_regressor", "100"),
    ("model.batch_size", "1024"),
    ("model.lr0", "1e-4"),
    ("model.lr_min", "1e-6"),
    ("model.rounds", "250"),
    ("model.max_depth", "6"),
    ("model.shrinkage", "0.1"),
    ("model.seed", "0"),
    ("synth.storms", "20"),
    ("synth.points", "200"),
    ("synth.seed", "1"),
    ("synth.stations", "3"),
    ("synth.include_ice", "false"),
    ("synth.a", "0.1"),
    ("synth.lambda_km", "40"),
    ("synth.b", "0.1"),
    ("synth.dry_cutoff", "0"),
];

/// Keys holding paths, resolved against the config file's directory.
const PATH_KEYS: &[&str] = &[
    "input.points",
    "input.coast",
    "input.storms",
    "input.harmonics",
    "input.gauges",
    "output.dir",
];

pub fn env_var_name(key: &str) -> String {
    format!("SURGE_{}", key.to_ascii_uppercase().replace('.', "_"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
    base: PathBuf,
}

impl Default for ConfigMap {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            base: PathBuf::from("."),
        }
    }
}

impl ConfigMap {
    /// Defaults overlaid with the file (if any), then the environment, then
    /// `overrides`.
    pub fn load(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = read_file(path)?;
            cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
            for (k, v) in parse_key_values(path, &text)? {
                cfg.set(&k, &v)?;
            }
        }
        let env: BTreeMap<String, String> = env.into_iter().collect();
        for (k, _) in KEYS {
            if let Some(v) = env.get(&env_var_name(k)) {
                cfg.values.insert(k.to_string(), v.clone());
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(PipelineError::Config(format!("unknown key '{key}'")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| PipelineError::Config(format!("'{key}' is required")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.required(key)?;
        raw.parse()
            .map_err(|_| PipelineError::Config(format!("cannot parse {key} = '{raw}'")))
    }

    fn parse_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some("true" | "1" | "yes") => Ok(Some(true)),
            Some("false" | "0" | "no") => Ok(Some(false)),
            Some(v) => Err(PipelineError::Config(format!("{key} must be a boolean, got '{v}'"))),
        }
    }

    fn parse_list(&self, key: &str) -> Result<Vec<f64>> {
        self.required(key)?
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| PipelineError::Config(format!("bad number '{s}' in {key}")))
            })
            .collect()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        debug_assert!(PATH_KEYS.contains(&key));
        self.get(key).map(|p| self.base.join(p))
    }

    pub fn required_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| PipelineError::Config(format!("'{key}' is required")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    RandomByStorm,
    TemporalByStart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub train_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingSpec {
    pub coastal_only: bool,
    pub landfall_radius_km: f64,
    pub decimation: usize,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            coastal_only: true,
            landfall_radius_km: 150.0,
            decimation: 10,
        }
    }
}

/// Typed view of a [`ConfigMap`].
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub map: ConfigMap,
    pub events: EventParams,
    pub filter_storms: bool,
    pub features: FeatureConfig,
    pub reduce_tau: Option<f64>,
    pub sampling: SamplingSpec,
    pub split: SplitSpec,
    pub classifier: StageSettings,
    pub regressor: StageSettings,
    pub threshold: f64,
    pub output_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_map(map: ConfigMap) -> Result<Self> {
        let events = EventParams {
            threshold: map.parse("event.threshold")?,
            continuity: map.parse("event.continuity")?,
            lull_hours: map.parse("event.lull_hours")?,
            shoulder_hours: map.parse("event.shoulder_hours")?,
        };
        events.validate()?;
        let mode = FeatureMode::from_name(map.required("feature.mode")?)
            .ok_or_else(|| PipelineError::Config("feature.mode must be track or trackless".into()))?;
        let trackless = mode == FeatureMode::Trackless;
        let features = FeatureConfig {
            mode,
            window_hours_before: map.parse("feature.window_before")?,
            window_hours_after: map.parse("feature.window_after")?,
            forcing_boxes: map.parse_list("feature.forcing_boxes")?,
            bathy_boxes: map.parse_list("feature.bathy_boxes")?,
            include_ice: map.parse_bool("feature.include_ice")?.unwrap_or(trackless),
            include_tides: map.parse_bool("feature.include_tides")?.unwrap_or(trackless),
            include_domain_mean: map.parse_bool("feature.include_domain_mean")?.unwrap_or(false),
        };
        features.validate()?;
        let reduce_tau = match map.get("feature.reduce_tau") {
            Some(_) => Some(map.parse::<f64>("feature.reduce_tau")?),
            None => None,
        };
        let sampling = SamplingSpec {
            coastal_only: map.parse_bool("sampling.coastal_only")?.unwrap_or(true),
            landfall_radius_km: map.parse("sampling.radius_km")?,
            decimation: map.parse("sampling.decimation")?,
        };
        if !(sampling.landfall_radius_km > 0.0) || sampling.decimation == 0 {
            return Err(PipelineError::Config("radius must be > 0 and decimation >= 1".into()));
        }
        let kind = match map.required("split.kind")? {
            "random" | "random_by_storm" => SplitKind::RandomByStorm,
            "temporal" | "temporal_by_event_start" => SplitKind::TemporalByStart,
            other => return Err(PipelineError::Config(format!("unknown split.kind '{other}'"))),
        };
        let split = SplitSpec {
            kind,
            train_fraction: map.parse("split.train_fraction")?,
            seed: map.parse("split.seed")?,
        };
        if !(split.train_fraction > 0.0 && split.train_fraction < 1.0) {
            return Err(PipelineError::Config("split.train_fraction must lie in (0, 1)".into()));
        }
        let stage = |kind_key: &str, epochs_key: &str, base: TrainConfig| -> Result<StageSettings> {
            let mut s = StageSettings::new(ModelKind::from_name(map.required(kind_key)?)?);
            s.width_divisor = map.parse("model.width_divisor")?;
            s.seed = map.parse("model.seed")?;
            s.train = Some(TrainConfig {
                epochs: map.parse(epochs_key)?,
                batch_size: map.parse("model.batch_size")?,
                lr0: map.parse("model.lr0")?,
                lr_min: map.parse("model.lr_min")?,
                ..base
            });
            s.boost = BoostConfig {
                rounds: map.parse("model.rounds")?,
                max_depth: map.parse("model.max_depth")?,
                shrinkage: map.parse("model.shrinkage")?,
                ..BoostConfig::new(BoostLoss::SquaredError)
            };
            Ok(s)
        };
        let classifier = stage("model.classifier", "model.epochs_classifier", TrainConfig::classification())?;
        let regressor = stage("model.regressor", "model.epochs_regressor", TrainConfig::regression())?;
        let threshold: f64 = map.parse("model.threshold")?;
        let output_dir = map.required_path("output.dir")?;
        Ok(Self {
            events,
            filter_storms: map.parse_bool("event.filter_storms")?.unwrap_or(true),
            features,
            reduce_tau,
            sampling,
            split,
            classifier,
            regressor,
            threshold,
            output_dir,
            map,
        })
    }

    pub fn synth_spec(&self) -> Result<SynthSpec> {
        let m = &self.map;
        Ok(SynthSpec {
            n_storms: m.parse("synth.storms")?,
            n_points: m.parse("synth.points")?,
            seed: m.parse("synth.seed")?,
            n_stations: m.parse("synth.stations")?,
            include_ice: m.parse_bool("synth.include_ice")?.unwrap_or(false),
            window_hours: self.features.window_hours_before.max(self.features.window_hours_after),
            oracle: OracleParams {
                a: m.parse("synth.a")?,
                lambda_km: m.parse("synth.lambda_km")?,
                b: m.parse("synth.b")?,
                dry_cutoff: m.parse("synth.dry_cutoff")?,
            },
            ..SynthSpec::default()
        })
    }

    /// The effective configuration as `key=value` lines, sorted by key.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.map.entries() {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_file_env_cli() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nsplit.seed=1\nmodel.rounds=10\noutput.dir=o\n").unwrap();
        let env = vec![
            ("SURGE_SPLIT_SEED".to_string(), "2".to_string()),
            ("SURGE_MODEL_MAX_DEPTH".to_string(), "3".to_string()),
        ];
        let cli = vec![("model.max_depth".to_string(), "4".to_string())];
        let map = ConfigMap::load(Some(&path), env, &cli).unwrap();
        let cfg = PipelineConfig::from_map(map).unwrap();
        assert_eq!(cfg.split.seed, 2);
        assert_eq!(cfg.classifier.boost.rounds, 10);
        assert_eq!(cfg.classifier.boost.max_depth, 4);
        assert_eq!(cfg.output_dir, dir.path().join("o"));
    }

    #[test]
    fn mode_drives_ice_and_tide_defaults() {
        let mut map = ConfigMap::default();
        map.set("feature.mode", "trackless").unwrap();
        let cfg = PipelineConfig::from_map(map).unwrap();
        assert!(cfg.features.include_ice && cfg.features.include_tides);
        assert_eq!(cfg.features.column_names().len(), 172);
        let cfg = PipelineConfig::from_map(ConfigMap::default()).unwrap();
        assert_eq!(cfg.features.column_names().len(), 135);
    }

    #[test]
    fn rejects_bad_values() {
        let mut map = ConfigMap::default();
        assert!(map.set("nope.key", "1").is_err());
        map.set("split.train_fraction", "1.0").unwrap();
        assert!(PipelineConfig::from_map(map).is_err());
        let mut map = ConfigMap::default();
        map.set("model.classifier", "svm").unwrap();
        assert!(PipelineConfig::from_map(map).is_err());
    }

    #[test]
    fn env_names() {
        assert_eq!(env_var_name("sampling.radius_km"), "SURGE_SAMPLING_RADIUS_KM");
    }
}
