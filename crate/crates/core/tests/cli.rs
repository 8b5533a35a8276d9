use std::path::Path;
use std::process::{Command, Output};

fn surge(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surge"))
        .current_dir(cwd)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn surge")
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn synth_then_stagewise_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&surge(d, &["synth", "c", "--set", "synth.storms=6", "--set", "synth.points=80"]));
    let cfg = d.join("c/surge.cfg");
    let cfg = cfg.to_str().unwrap();
    let quick = ["--set", "model.rounds=15"];

    let out = ok(&surge(d, &["-c", cfg, "detect-events"]));
    assert!(out.contains("events"));
    ok(&surge(d, &["-c", cfg, "build-features"]));
    assert!(ok(&surge(d, &["-c", cfg, "reduce-features", "--tau", "0.9"])).contains("kept"));
    let mut args = vec!["-c", cfg, "train", "--classifier", "gbt", "--regressor", "gbt"];
    args.extend(quick);
    ok(&surge(d, &args));
    ok(&surge(d, &["-c", cfg, "predict"]));
    assert!(ok(&surge(d, &["-c", cfg, "evaluate"])).contains("rmse"));
    for f in ["events.csv", "features_train.csv", "feature_list.txt", "model.json", "predictions.csv", "metrics.json"] {
        assert!(d.join("c/out").join(f).exists(), "{f}");
    }
}

#[test]
fn run_and_grid_search() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&surge(d, &["synth", "c", "--set", "synth.storms=5", "--set", "synth.points=60"]));
    let cfg = d.join("c/surge.cfg");
    let cfg = cfg.to_str().unwrap();
    let fast = [
        "--set",
        "model.rounds=10",
        "--set",
        "model.width_divisor=64",
        "--set",
        "model.epochs_classifier=1",
        "--set",
        "model.epochs_regressor=1",
    ];
    let mut run = vec!["-c", cfg, "run"];
    run.extend(fast);
    assert!(ok(&surge(d, &run)).contains("r2"));
    assert!(d.join("c/out/manifest.json").exists());
    let mut grid = vec!["-c", cfg, "grid-search"];
    grid.extend(fast);
    ok(&surge(d, &grid));
    let table = std::fs::read_to_string(d.join("c/out/grid.csv")).unwrap();
    assert_eq!(table.lines().count(), 17);
}

#[test]
fn env_override_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&surge(d, &["synth", "c", "--set", "synth.storms=3", "--set", "synth.points=40"]));
    let cfg = d.join("c/surge.cfg");
    let cfg = cfg.to_str().unwrap();

    let bad = surge(d, &["-c", cfg, "run", "--set", "no.such_key=1"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown key"));

    let o = Command::new(env!("CARGO_BIN_EXE_surge"))
        .current_dir(d)
        .args(["-c", cfg, "build-features"])
        .env("SURGE_FEATURE_MODE", "sideways")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("feature.mode"));

    std::fs::remove_file(d.join("c/storms/storm_001/forcing.txt")).unwrap();
    let o = surge(d, &["-c", cfg, "run"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("assemble") && err.contains("missing file"), "{err}");
}
