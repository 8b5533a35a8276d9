use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use surge_core::features::load_feature_matrix;
use surge_core::ingest::load_point_set;
use surge_core::models::TwoStageModel;
use surge_core::pipeline::{self, artifacts, ConfigMap, PipelineConfig, PipelineError};
use surge_core::synth;

#[derive(Parser)]
#[command(name = "surge", version, about = "Peak storm surge surrogate models")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key=value config file
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable), e.g. --set split.seed=3
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory (output.dir)
    #[arg(short, long, global = true)]
    output: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Detect surge events from the configured gauges
    DetectEvents,
    /// Assemble and split the feature tables
    BuildFeatures,
    /// Correlation reduction of the training table
    ReduceFeatures {
        #[arg(long)]
        tau: f64,
    },
    /// Fit the two-stage model on the training table
    Train {
        #[arg(long)]
        classifier: Option<String>,
        #[arg(long)]
        regressor: Option<String>,
    },
    /// Score all 16 classifier/regressor pairs
    GridSearch,
    /// Predict a feature table with a saved model
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Metrics for the predictions in the output directory
    Evaluate,
    /// All stages end to end
    Run,
    /// Write a synthetic corpus and a ready-to-run config into DIR
    Synth { dir: PathBuf },
}

fn parse_overrides(common: &Common, command: &Command) -> Result<Vec<(String, String)>, PipelineError> {
    let mut out = Vec::new();
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| PipelineError::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(o) = &common.output {
        out.push(("output.dir".into(), o.clone()));
    }
    match command {
        Command::ReduceFeatures { tau } => out.push(("feature.reduce_tau".into(), tau.to_string())),
        Command::Train { classifier, regressor } => {
            if let Some(c) = classifier {
                out.push(("model.classifier".into(), c.clone()));
            }
            if let Some(r) = regressor {
                out.push(("model.regressor".into(), r.clone()));
            }
        }
        _ => {}
    }
    Ok(out)
}

const SYNTH_CONFIG: &str = "surge.cfg";

fn write_synth(cfg: &PipelineConfig, dir: &Path) -> Result<(), PipelineError> {
    let spec = cfg.synth_spec()?;
    let corpus = synth::generate(&spec)?;
    corpus.write(dir)?;
    let mut text = String::from(
        "input.points=points.csv\ninput.coast=coast.csv\ninput.storms=storms.csv\n\
         input.harmonics=harmonics.csv\ninput.gauges=gauges\noutput.dir=out\n",
    );
    for (k, v) in cfg.map.entries() {
        if k.starts_with("synth.") && !v.is_empty() {
            text.push_str(&format!("{k}={v}\n"));
        }
    }
    std::fs::write(dir.join(SYNTH_CONFIG), text).map_err(|source| surge_core::ingest::IngestError::Io {
        path: dir.join(SYNTH_CONFIG),
        source,
    })?;
    println!(
        "wrote {} storms x {} points (wet fraction {:.3}) to {}",
        corpus.storms.len(),
        corpus.points.len(),
        corpus.wet_fraction(),
        dir.display()
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let overrides = parse_overrides(&cli.common, &cli.command)?;
    let map = ConfigMap::load(cli.common.config.as_deref(), std::env::vars(), &overrides)?;
    let cfg = PipelineConfig::from_map(map)?;
    let out = cfg.output_dir.clone();
    match cli.command {
        Command::DetectEvents => {
            let gauges = pipeline::load_gauges(&cfg.map.required_path("input.gauges")?)?;
            let events = pipeline::detect_events(&cfg, &gauges)?;
            println!("{} events -> {}", events.len(), out.join(artifacts::EVENTS).display());
        }
        Command::BuildFeatures => {
            let events = match cfg.map.path("input.gauges") {
                Some(dir) => Some(pipeline::detect_events(&cfg, &pipeline::load_gauges(&dir)?)?),
                None => None,
            };
            let a = pipeline::assemble(&cfg, events.as_deref())?;
            println!("{} train rows, {} test rows", a.train.n_rows(), a.test.n_rows());
        }
        Command::ReduceFeatures { tau } => {
            let (train, _) = pipeline::load_assembled(&cfg)?;
            let kept = pipeline::reduce(&cfg, &train, tau)?;
            println!("kept {} of {} columns", kept.len(), train.n_cols());
        }
        Command::Train { .. } => {
            let (train, _) = pipeline::load_assembled(&cfg)?;
            let columns = pipeline::load_reduced_columns(&cfg)?;
            pipeline::train(&cfg, &train, columns.as_deref())?;
            println!("model -> {}", out.join(artifacts::MODEL).display());
        }
        Command::GridSearch => {
            let (train, test) = pipeline::load_assembled(&cfg)?;
            let rows = pipeline::run_grid_search(&cfg, &train, &test)?;
            for r in rows.iter().take(3) {
                println!("{}+{}: rmse {:.4}, r2 {:.4}", r.classifier, r.regressor, r.metrics.rmse, r.metrics.r2);
            }
        }
        Command::Predict { model, features } => {
            let model = TwoStageModel::load(&model.unwrap_or_else(|| out.join(artifacts::MODEL)))?;
            let matrix = load_feature_matrix(&features.unwrap_or_else(|| out.join(artifacts::TEST)))?;
            let preds = pipeline::predict(&model, &matrix)?;
            let path = out.join(artifacts::PREDICTIONS);
            std::fs::create_dir_all(&out).ok();
            std::fs::write(&path, pipeline::predictions_csv(&preds))
                .map_err(|source| surge_core::ingest::IngestError::Io { path: path.clone(), source })?;
            println!("{} predictions -> {}", preds.len(), path.display());
        }
        Command::Evaluate => {
            let preds = pipeline::load_predictions(&out.join(artifacts::PREDICTIONS))?;
            let points = load_point_set(&cfg.map.required_path("input.points")?)?;
            let events_path = out.join(artifacts::EVENTS);
            let (gauges, events) = match cfg.map.path("input.gauges") {
                Some(dir) if events_path.exists() => {
                    (pipeline::load_gauges(&dir)?, Some(surge_core::events::load_catalog(&events_path)?))
                }
                _ => (Vec::new(), None),
            };
            let report = pipeline::evaluate(&cfg, &preds, &points, &gauges, events.as_deref())?;
            let m = &report.overall;
            println!("r2 {:.4}, rmse {:.4} m, mae {:.4} m, accuracy {:.4}", m.r2, m.rmse, m.mae, m.accuracy);
        }
        Command::Run => {
            let s = pipeline::run(&cfg)?;
            let m = &s.report.overall;
            println!("r2 {:.4}, rmse {:.4} m, mae {:.4} m, accuracy {:.4}", m.r2, m.rmse, m.mae, m.accuracy);
            info!("manifest -> {}", out.join(artifacts::MANIFEST).display());
        }
        Command::Synth { dir } => write_synth(&cfg, &dir)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
