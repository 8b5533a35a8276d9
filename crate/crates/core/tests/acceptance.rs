//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach stdout.

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use surge_core::eval::{self, PointOutcome, StationPeak};
use surge_core::events::{get_surge_events, EventParams};
use surge_core::features::stats::{mesh_box_stats, PointIndex};
use surge_core::features::{
    correlation_reduce, spatial_stats, temporal_stats, FeatureConfig, FeatureError, FeatureMatrix, FeatureRow,
    Neighborhood, Stat, Summary, TemporalVar,
};
use surge_core::ingest::{ForcingGrid, ForcingVar, GridGeometry, MeshPoint, SurgeLevel};
use surge_core::models::boost::{train_boosted, BoostConfig, BoostLoss};
use surge_core::models::{
    grid_search, Architecture, Candidate, Dataset, Head, ModelKind, Network, NetworkSpec, Predictor, Result as ModelResult,
    StageSettings, Standardizer, Task, TrainConfig,
};
use surge_core::pipeline::{self, artifacts};
use surge_core::synth::{OracleParams, SynthSpec};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- events

/// Maximal runs of `r >= t` as inclusive index pairs.
fn exceedance_runs(r: &[f64], t: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (k, &v) in r.iter().enumerate() {
        match (v >= t, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                out.push((s, k - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, r.len() - 1));
    }
    out
}

fn random_series(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(1..=500);
    let mut level: f64 = 0.0;
    let r: Vec<f64> = (0..n)
        .map(|_| {
            level = 0.8 * level + rng.random_range(-0.25..0.25);
            level
        })
        .collect();
    let times = (0..n).map(|k| 1.6e9 + 3600.0 * k as f64).collect();
    (r, times)
}

fn criterion_1() -> Check {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut total = 0;
    for case in 0..1000 {
        let (r, times) = random_series(&mut rng);
        let strict = EventParams {
            threshold: 0.3,
            continuity: 1.0,
            lull_hours: 0.0,
            shoulder_hours: 0.0,
        };
        let got: Vec<(f64, f64)> = get_surge_events(&r, &times, &strict)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|e| (e.start, e.end))
            .collect();
        let want: Vec<(f64, f64)> = exceedance_runs(&r, 0.3).iter().map(|&(a, b)| (times[a], times[b])).collect();
        ensure(got == want, || format!("case {case}: {got:?} vs brute force {want:?}"))?;
        total += want.len();

        let general = EventParams {
            threshold: rng.random_range(0.1..0.5),
            continuity: rng.random_range(0.05..1.0),
            lull_hours: rng.random_range(0.0..12.0),
            shoulder_hours: rng.random_range(0.0..24.0),
        };
        let ev = get_surge_events(&r, &times, &general).map_err(|e| e.to_string())?;
        for w in ev.windows(2) {
            ensure(w[0].end < w[1].start, || format!("case {case}: overlapping events"))?;
        }
        for (k, &v) in r.iter().enumerate() {
            if v >= general.threshold {
                let t = times[k];
                ensure(ev.iter().any(|e| e.start <= t && t <= e.end), || {
                    format!("case {case}: exceedance at sample {k} not covered")
                })?;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1} s"))?;
    Ok(format!("1000 series, {total} strict events, {secs:.2} s"))
}

// ------------------------------------------------------------ statistics

fn naive_summary(vals: &[f64]) -> Option<Summary> {
    if vals.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for &v in vals {
        sum += v;
        if v > max {
            max = v;
        }
        if v < min {
            min = v;
        }
    }
    Some(Summary {
        mean: sum / vals.len() as f64,
        max,
        min,
    })
}

fn inside(x: f64, c: f64, side: f64) -> bool {
    x >= c - side / 2.0 && x <= c + side / 2.0
}

fn random_grid(rng: &mut ChaCha8Rng) -> ForcingGrid {
    let geom = GridGeometry {
        lat0: rng.random_range(-5.0..5.0),
        lon0: rng.random_range(-5.0..5.0),
        dlat: rng.random_range(0.05..0.5),
        dlon: rng.random_range(0.05..0.5),
        nlat: rng.random_range(1..7),
        nlon: rng.random_range(1..7),
    };
    let nt = rng.random_range(1..9);
    let size = nt * geom.cells();
    let vars = [ForcingVar::WindX, ForcingVar::WindY, ForcingVar::Pressure, ForcingVar::IceAf]
        .into_iter()
        .map(|v| {
            let range = if v == ForcingVar::IceAf { 0.0..1.0 } else { -30.0..30.0 };
            (v, (0..size).map(|_| rng.random_range(range.clone())).collect())
        })
        .collect();
    ForcingGrid::new(geom, 1000.0, 600.0, nt, vars).expect("valid grid")
}

fn naive_temporal(g: &ForcingGrid, window: (f64, f64), var: TemporalVar, cell: usize) -> Option<Summary> {
    let cells = g.geometry.cells();
    let at = |v: ForcingVar, k: usize| g.values(v).unwrap()[k * cells + cell];
    let mut vals = Vec::new();
    for k in 0..g.nt {
        let t = g.t0 + k as f64 * g.dt;
        if t < window.0 || t > window.1 {
            continue;
        }
        vals.push(match var {
            TemporalVar::WindX => at(ForcingVar::WindX, k),
            TemporalVar::WindY => at(ForcingVar::WindY, k),
            TemporalVar::Magnitude => {
                let (x, y) = (at(ForcingVar::WindX, k), at(ForcingVar::WindY, k));
                (x * x + y * y).sqrt()
            }
            TemporalVar::Pressure => at(ForcingVar::Pressure, k),
            TemporalVar::IceAf => at(ForcingVar::IceAf, k),
        });
    }
    naive_summary(&vals)
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let vars = TemporalVar::for_config(true);
    let mut compared = 0usize;
    for case in 0..500 {
        let g = random_grid(&mut rng);
        let a = g.t0 + rng.random_range(-1.0..g.nt as f64) * g.dt;
        let window = (a, a + rng.random_range(0.0..4.0) * g.dt);
        let got = temporal_stats(&g, window, &vars);
        let geom = g.geometry;
        match got {
            Err(FeatureError::EmptyWindow { .. }) => {
                ensure(naive_temporal(&g, window, TemporalVar::WindX, 0).is_none(), || {
                    format!("case {case}: spurious EmptyWindow")
                })?;
            }
            Err(e) => return Err(format!("case {case}: {e}")),
            Ok(ts) => {
                for &var in &vars {
                    for cell in 0..geom.cells() {
                        let want = naive_temporal(&g, window, var, cell).ok_or("oracle window empty")?;
                        for st in Stat::ALL {
                            let v = ts.field(var, st).ok_or("missing field")?[cell];
                            ensure(v == want.get(st), || format!("case {case}: temporal {var:?} {st:?} cell {cell}"))?;
                            compared += 1;
                        }
                    }
                }
            }
        }

        // grid boxes
        let field: Vec<f64> = (0..geom.cells()).map(|_| rng.random_range(-5.0..5.0)).collect();
        let lon = geom.lon0 + rng.random_range(-0.5..geom.nlon as f64 + 0.5) * geom.dlon;
        let lat = geom.lat0 + rng.random_range(-0.5..geom.nlat as f64 + 0.5) * geom.dlat;
        let side = rng.random_range(0.01..1.5);
        let mut vals = Vec::new();
        for j in 0..geom.nlat {
            for i in 0..geom.nlon {
                let (x, y) = (geom.lon0 + i as f64 * geom.dlon, geom.lat0 + j as f64 * geom.dlat);
                if inside(x, lon, side) && inside(y, lat, side) {
                    vals.push(field[j * geom.nlon + i]);
                }
            }
        }
        match (spatial_stats(&field, &geom, lon, lat, Neighborhood::Box(side)), naive_summary(&vals)) {
            (Ok(s), Some(w)) => ensure(s == w, || format!("case {case}: box {s:?} vs {w:?}"))?,
            (Err(FeatureError::EmptyNeighborhood { .. }), None) => {}
            (got, want) => return Err(format!("case {case}: box {got:?} vs {want:?}")),
        }
        let dom = spatial_stats(&field, &geom, lon, lat, Neighborhood::Domain).map_err(|e| e.to_string())?;
        ensure(Some(dom) == naive_summary(&field), || format!("case {case}: domain"))?;

        // mesh boxes
        let pts: Vec<MeshPoint> = (0..rng.random_range(1..40))
            .map(|k| MeshPoint {
                id: k as u64,
                lon: rng.random_range(0.0..1.0),
                lat: rng.random_range(0.0..1.0),
                depth: rng.random_range(-3.0..20.0),
                is_coastal: true,
            })
            .collect();
        let depth: Vec<f64> = pts.iter().map(|p| p.depth).collect();
        let (cx, cy, side) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.01..0.8));
        let want = naive_summary(
            &pts.iter()
                .filter(|p| inside(p.lon, cx, side) && inside(p.lat, cy, side))
                .map(|p| p.depth)
                .collect::<Vec<_>>(),
        );
        let got = mesh_box_stats(&depth, &pts, &PointIndex::new(&pts), cx, cy, side).ok();
        ensure(got == want, || format!("case {case}: mesh box {got:?} vs {want:?}"))?;
        compared += 3;
    }
    Ok(format!("500 instances, {compared} values equal"))
}

// --------------------------------------------------------------- features

fn criterion_3() -> Check {
    let track = FeatureConfig::track().column_names().len();
    let trackless = FeatureConfig::trackless().column_names().len();
    ensure(track == 135 && trackless == 172, || format!("track {track}, trackless {trackless}"))?;
    Ok(format!("track {track}, trackless {trackless}"))
}

fn naive_corr(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (n, d, latent) = (300, 40, 8);
    let cols: Vec<String> = (0..d).map(|k| format!("f{k}")).collect();
    let mut m = FeatureMatrix::new(cols.clone()).map_err(|e| e.to_string())?;
    let mix: Vec<(usize, f64)> = (0..d).map(|_| (rng.random_range(0..latent), rng.random_range(0.05..1.5))).collect();
    for r in 0..n {
        let z: Vec<f64> = (0..latent).map(|_| rng.random_range(-1.0..1.0)).collect();
        let values = mix.iter().map(|&(k, s)| z[k] + s * rng.random_range(-1.0..1.0)).collect();
        m.push(FeatureRow {
            storm_id: "s".into(),
            point_id: r as u64,
            values,
            label: None,
        })
        .map_err(|e| e.to_string())?;
    }
    let mut counts = Vec::new();
    for tau in [0.9, 0.7, 0.5] {
        let red = correlation_reduce(&m, tau).map_err(|e| e.to_string())?;
        let idx: Vec<usize> = red.retained.iter().map(|c| m.column_index(c).unwrap()).collect();
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                let rho = naive_corr(&m.column(i), &m.column(j));
                ensure(rho.abs() <= tau + 1e-12, || format!("tau {tau}: {} and {} have rho {rho}", cols[i], cols[j]))?;
            }
        }
        counts.push(red.retained.len());
    }
    ensure(counts.windows(2).all(|w| w[1] <= w[0]), || format!("survivors {counts:?}"))?;
    Ok(format!("survivors at tau 0.9/0.7/0.5: {counts:?}"))
}

// ---------------------------------------------------------------- models

struct Forward {
    /// Pre-activations per layer.
    z: Vec<Vec<f64>>,
    /// Inputs per layer (x, then relu of hidden pre-activations).
    a: Vec<Vec<f64>>,
}

fn layer(w: &[f64], b: &[f64], inputs: usize, a: &[f64]) -> Vec<f64> {
    let outputs = b.len();
    let mut z = b.to_vec();
    for i in 0..inputs {
        let ai = a[i];
        if ai != 0.0 {
            for (zj, wij) in z.iter_mut().zip(&w[i * outputs..(i + 1) * outputs]) {
                *zj += ai * wij;
            }
        }
    }
    z
}

fn forward_row(net: &Network, x: &[f64]) -> Forward {
    let mut f = Forward {
        z: Vec::new(),
        a: vec![x.to_vec()],
    };
    for (k, l) in net.layers.iter().enumerate() {
        let z = layer(&l.weights, &l.bias, l.inputs, &f.a[k]);
        if k + 1 < net.layers.len() {
            f.a.push(z.iter().map(|v| v.max(0.0)).collect());
        }
        f.z.push(z);
    }
    f
}

/// Output of one row after pre-activation `j` of layer `l` moves by `dz`,
/// or `None` when some hidden unit crosses the ReLU kink.
fn perturbed_output(net: &Network, f: &Forward, l: usize, j: usize, dz: f64) -> Option<f64> {
    let last = net.layers.len() - 1;
    if l == last {
        return Some(f.z[l][0] + dz);
    }
    let (old, new) = (f.z[l][j], f.z[l][j] + dz);
    if (old > 0.0) != (new > 0.0) {
        return None;
    }
    let da = new.max(0.0) - old.max(0.0);
    if da == 0.0 {
        return Some(f.z[last][0]);
    }
    let next = &net.layers[l + 1];
    let mut z: Vec<f64> = f.z[l + 1]
        .iter()
        .zip(&next.weights[j * next.outputs..(j + 1) * next.outputs])
        .map(|(z, w)| z + da * w)
        .collect();
    for k in l + 1..last {
        if z.iter().zip(&f.z[k]).any(|(a, b)| (*a > 0.0) != (*b > 0.0)) {
            return None;
        }
        let a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
        let nl = &net.layers[k + 1];
        z = layer(&nl.weights, &nl.bias, nl.inputs, &a);
    }
    Some(z[0])
}

/// Worst relative error over all parameters, plus how many were skipped
/// because the probe crossed a kink.
fn grad_check(net: &Network, x: ArrayView2<f64>, y: &[f64]) -> (f64, usize, usize) {
    let h = 1e-5;
    let (_, grads) = net.loss_and_gradient(x, y);
    let fwd: Vec<Forward> = x.rows().into_iter().map(|r| forward_row(net, r.as_slice().unwrap())).collect();
    let base: Vec<f64> = fwd.iter().map(|f| f.z.last().unwrap()[0]).collect();
    let head = net.spec.head;
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0usize, 0usize);
    for (l, layer) in net.layers.iter().enumerate() {
        let n_w = layer.weights.len();
        for p in 0..n_w + layer.bias.len() {
            let (i, j) = if p < n_w { (Some(p / layer.outputs), p % layer.outputs) } else { (None, p - n_w) };
            let analytic = if p < n_w { grads[l].weights[p] } else { grads[l].bias[j] };
            let mut losses = [0.0; 2];
            let mut kink = false;
            for (s, sign) in [1.0, -1.0].into_iter().enumerate() {
                let mut out = base.clone();
                for (r, f) in fwd.iter().enumerate() {
                    let dz = sign * h * i.map_or(1.0, |i| f.a[l][i]);
                    if dz == 0.0 {
                        continue;
                    }
                    match perturbed_output(net, f, l, j, dz) {
                        Some(o) => out[r] = o,
                        None => kink = true,
                    }
                }
                losses[s] = surge_core::models::network::head_loss(head, &out, y);
            }
            let hits_output_kink = head == Head::Relu && base.iter().any(|z| z.abs() < 1e-3);
            if kink || hits_output_kink {
                skipped += 1;
                continue;
            }
            let fd = (losses[0] - losses[1]) / (2.0 * h);
            let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    (worst, checked, skipped)
}

fn criterion_5() -> Check {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut cases = Vec::new();
    for arch in Architecture::ALL {
        cases.push((arch, 16usize, 8usize));
    }
    cases.push((Architecture::Nn1, 1, 4));
    let mut notes = Vec::new();
    for (arch, div, rows) in cases {
        for head in [Head::Sigmoid, Head::Relu] {
            let d = 16;
            let x = Array2::from_shape_fn((rows, d), |_| rng.random_range(-1.0..1.0));
            let y: Vec<f64> = (0..rows)
                .map(|_| match head {
                    Head::Sigmoid => f64::from(rng.random_bool(0.5)),
                    Head::Relu => rng.random_range(0.2..2.0),
                })
                .collect();
            let bias = match head {
                Head::Sigmoid => 0.0,
                Head::Relu => 1.0,
            };
            let spec = NetworkSpec::new(arch, d, head, div);
            let net = Network::init(&spec, bias, rng.random()).map_err(|e| e.to_string())?;
            let (worst, checked, skipped) = grad_check(&net, x.view(), &y);
            ensure(worst < 1e-4, || format!("{} /{div} {head:?}: rel error {worst:e}", arch.name()))?;
            ensure(skipped * 100 <= checked, || format!("{} {head:?}: {skipped} kink skips", arch.name()))?;
            notes.push(format!("{}/{div} {head:?} {checked}", arch.name()));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("took {secs:.1} s"))?;
    Ok(format!("params checked: {}; {secs:.1} s", notes.join(", ")))
}

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let n = 400;
    let x: Array2<f64> = Array2::from_shape_fn((n, 4), |_| rng.random_range(-2.0..2.0));
    let yr: Vec<f64> = (0..n).map(|r| x[[r, 0]].sin() + x[[r, 1]] * x[[r, 2]] + 0.1 * rng.random_range(-1.0..1.0)).collect();
    let yc: Vec<f64> = (0..n).map(|r| f64::from(x[[r, 0]] + x[[r, 3]].powi(2) > 1.0 + rng.random_range(-0.3..0.3))).collect();
    let mut finals = Vec::new();
    for (loss, y) in [(BoostLoss::SquaredError, &yr), (BoostLoss::Logistic, &yc)] {
        let cfg = BoostConfig { rounds: 250, ..BoostConfig::new(loss) };
        let (_, hist) = train_boosted(&cfg, x.view(), y).map_err(|e| e.to_string())?;
        ensure(hist.len() == 251, || format!("{loss:?}: history length {}", hist.len()))?;
        for (k, w) in hist.windows(2).enumerate() {
            ensure(w[1] <= w[0] * (1.0 + 1e-12), || format!("{loss:?}: loss rose at round {}", k + 1))?;
        }
        finals.push(format!("{loss:?} {:.3e} -> {:.3e}", hist[0], hist[250]));
    }
    let c = vec![3.7; n];
    let (b, _) = train_boosted(&BoostConfig::new(BoostLoss::SquaredError), x.view(), &c).map_err(|e| e.to_string())?;
    let worst = b.predict(x.view()).iter().map(|p| (p - 3.7).abs()).fold(0.0, f64::max);
    ensure(worst <= 1e-9, || format!("constant target off by {worst:e}"))?;
    Ok(format!("{}; constant target error {worst:e}", finals.join(", ")))
}

// ------------------------------------------------------------ end to end

fn criterion_7(work: &std::path::Path) -> Check {
    let t0 = Instant::now();
    let spec = SynthSpec {
        n_storms: 50,
        n_points: 500,
        seed: 7,
        ..SynthSpec::default()
    };
    let corpus = common::write_corpus(&work.join("corpus50"), &spec);
    let cfg = common::corpus_config(&work.join("corpus50"), &work.join("run50"), &[]);
    let s = pipeline::run(&cfg).map_err(|e| e.to_string())?;
    let m = s.report.overall;
    let secs = t0.elapsed().as_secs_f64();
    ensure(m.r2 >= 0.8 && m.accuracy >= 0.95, || format!("r2 {:.4}, accuracy {:.4}", m.r2, m.accuracy))?;
    ensure(secs < 900.0, || format!("took {secs:.0} s"))?;
    Ok(format!(
        "wet fraction {:.2}, {} test rows: r2 {:.4}, rmse {:.4} m, accuracy {:.4}; {secs:.1} s",
        corpus.wet_fraction(),
        m.n,
        m.r2,
        m.rmse,
        m.accuracy
    ))
}

/// Knows the synthetic truth and evaluates it on raw feature values.
struct PlantedOracle {
    params: OracleParams,
    cols: [usize; 3],
}

struct OracleFit {
    params: OracleParams,
    cols: [usize; 3],
    task: Task,
    norm: Standardizer,
}

impl Predictor for OracleFit {
    fn predict(&self, x: ArrayView2<f64>) -> Vec<f64> {
        self.norm
            .invert(x)
            .rows()
            .into_iter()
            .map(|r| {
                let [w, d, depth] = self.cols.map(|c| r[c]);
                let level = surge_core::synth::truth_surge(&self.params, w, d, depth);
                match self.task {
                    Task::Classification => f64::from(level.is_wet()),
                    Task::Regression => level.meters(),
                }
            })
            .collect()
    }
}

impl Candidate for PlantedOracle {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn fit(&self, task: Task, _: ArrayView2<f64>, _: &[f64], _: &[usize], norm: &Standardizer) -> ModelResult<Box<dyn Predictor>> {
        Ok(Box::new(OracleFit {
            params: self.params,
            cols: self.cols,
            task,
            norm: norm.clone(),
        }))
    }
}

fn criterion_8(work: &std::path::Path) -> Check {
    let cfg = common::corpus_config(&work.join("corpus50"), &work.join("run50"), &[]);
    let (train, test) = pipeline::load_assembled(&cfg).map_err(|e| e.to_string())?;
    let (train, test) = (
        Dataset::from_matrix(&train).map_err(|e| e.to_string())?,
        Dataset::from_matrix(&test).map_err(|e| e.to_string())?,
    );
    let quick: Vec<StageSettings> = ModelKind::ALL
        .into_iter()
        .map(|k| {
            let mut s = StageSettings::new(k);
            s.width_divisor = 16;
            s.boost.rounds = 60;
            s.train = Some(TrainConfig {
                epochs: 3,
                batch_size: 64,
                lr0: 1e-3,
                ..TrainConfig::regression()
            });
            s
        })
        .collect();
    let mut cands: Vec<&dyn Candidate> = quick.iter().map(|s| s as &dyn Candidate).collect();
    let rows = grid_search(&cands, &cands, &train, &test, 0.5).map_err(|e| e.to_string())?;
    ensure(rows.len() == 16, || format!("{} rows for 4x4", rows.len()))?;
    let col = |name: &str| train.columns.iter().position(|c| c == name).ok_or(format!("no column {name}"));
    let oracle = PlantedOracle {
        params: OracleParams::default(),
        cols: [col("max_magnitude")?, col("coastal_dist")?, col("depth")?],
    };
    cands.push(&oracle);
    let rows5 = grid_search(&cands, &cands, &train, &test, 0.5).map_err(|e| e.to_string())?;
    let top = &rows5[0];
    ensure(top.classifier == "oracle" && top.regressor == "oracle", || {
        format!("top pair {}+{}", top.classifier, top.regressor)
    })?;
    Ok(format!(
        "16 rows for 4x4 (best {}+{} rmse {:.4}); planted oracle first with rmse {:.2e}",
        rows[0].classifier, rows[0].regressor, rows[0].metrics.rmse, top.metrics.rmse
    ))
}

fn criterion_9() -> Check {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let (t, p) = ([0.0, 1.0, 2.0], [0.0, 1.0, 3.0]);
    let (rmse, mae, r2) = (
        eval::rmse(&p, &t).map_err(|e| e.to_string())?,
        eval::mae(&p, &t).map_err(|e| e.to_string())?,
        eval::r2(&p, &t).map_err(|e| e.to_string())?,
    );
    ensure(close(rmse, (1.0f64 / 3.0).sqrt()) && close(mae, 1.0 / 3.0) && close(r2, 0.5), || {
        format!("rmse {rmse}, mae {mae}, r2 {r2}")
    })?;
    let mean = [1.0, 1.0, 1.0];
    ensure(close(eval::r2(&mean, &t).unwrap(), 0.0), || "mean predictor r2".into())?;
    ensure(close(eval::r2(&t, &t).unwrap(), 1.0) && eval::rmse(&t, &t).unwrap() == 0.0, || "identity".into())?;

    let peaks = [
        StationPeak { station: "a".into(), event: 0, predicted: 1.3, observed: 1.0 },
        StationPeak { station: "a".into(), event: 1, predicted: 0.6, observed: 1.0 },
    ];
    let s = eval::station_rmse(&peaks, &["a".to_string()]).map_err(|e| e.to_string())?["a"];
    ensure(close(s, (0.125f64).sqrt()), || format!("station rmse {s}"))?;

    let outcome = |storm: &str, pred, truth| PointOutcome {
        storm_id: storm.into(),
        point_id: 9,
        predicted: SurgeLevel::Wet(pred),
        truth: SurgeLevel::Wet(truth),
    };
    let sp = eval::spatial_mean_abs_error(&[outcome("x", 2.0, 1.0), outcome("y", 0.0, 1.0)], &[9]).map_err(|e| e.to_string())?;
    ensure(close(sp[&9].mae, 1.0), || format!("spatial mae {}", sp[&9].mae))?;
    let acc = eval::wet_dry_accuracy(
        &[SurgeLevel::Dry, SurgeLevel::Wet(1.0), SurgeLevel::Wet(0.5), SurgeLevel::Dry],
        &[SurgeLevel::Dry, SurgeLevel::Wet(2.0), SurgeLevel::Dry, SurgeLevel::Wet(0.1)],
    )
    .map_err(|e| e.to_string())?;
    ensure(close(acc, 0.5), || format!("accuracy {acc}"))?;
    Ok(format!("rmse {rmse:.6}, mae {mae:.6}, r2 {r2}, station {s:.6}"))
}

fn criterion_10(work: &std::path::Path) -> Check {
    let spec = SynthSpec {
        n_storms: 12,
        n_points: 150,
        seed: 10,
        ..SynthSpec::default()
    };
    let dir = work.join("corpus12");
    common::write_corpus(&dir, &spec);
    let extra = [
        ("model.classifier", "nn1"),
        ("model.width_divisor", "16"),
        ("model.epochs_classifier", "3"),
        ("model.batch_size", "64"),
        ("model.rounds", "40"),
        ("split.seed", "5"),
    ];
    let mut files = Vec::new();
    for k in 0..2 {
        let out = work.join(format!("det{k}"));
        pipeline::run(&common::corpus_config(&dir, &out, &extra)).map_err(|e| e.to_string())?;
        let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| format!("{f}: {e}"));
        files.push([read(artifacts::MODEL)?, read(artifacts::METRICS_JSON)?, read(artifacts::METRICS_CSV)?]);
    }
    for (k, name) in [artifacts::MODEL, artifacts::METRICS_JSON, artifacts::METRICS_CSV].iter().enumerate() {
        ensure(files[0][k] == files[1][k], || format!("{name} differs between runs"))?;
    }
    Ok(format!("model.json ({} bytes) and metric reports identical", files[0][0].len()))
}

fn main() {
    let work = tempfile::tempdir().expect("tempdir");
    let w = work.path();
    let checks: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("event detection oracle", Box::new(criterion_1)),
        ("statistics oracle", Box::new(criterion_2)),
        ("feature counts", Box::new(criterion_3)),
        ("correlation reduction", Box::new(criterion_4)),
        ("gradient check", Box::new(criterion_5)),
        ("boosting monotonicity", Box::new(criterion_6)),
        ("end-to-end learnability", Box::new(move || criterion_7(w))),
        ("grid search", Box::new(move || criterion_8(w))),
        ("metric hand cases", Box::new(criterion_9)),
        ("determinism", Box::new(move || criterion_10(w))),
    ];
    let mut failed = BTreeSet::new();
    for (k, (name, check)) in checks.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(why) => {
                println!("FAIL {:>2} {name}: {why}", k + 1);
                failed.insert(k + 1);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
