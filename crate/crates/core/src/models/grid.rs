//! Exhaustive classifier × regressor search scored on a test set.

use std::fmt::Write as _;

use ndarray::{ArrayView2, Axis};

use super::{compose, Dataset, ModelError, Predictor, Result, StageSettings, Standardizer, Task};
use crate::eval::{metrics, Metrics};

/// One learner that can be fitted for either stage.
pub trait Candidate {
    fn name(&self) -> String;

    /// Fits on standardized rows; `norm` maps them back to raw values.
    fn fit(
        &self,
        task: Task,
        x: ArrayView2<f64>,
        y: &[f64],
        groups: &[usize],
        norm: &Standardizer,
    ) -> Result<Box<dyn Predictor>>;
}

impl Candidate for StageSettings {
    fn name(&self) -> String {
        self.kind.name().to_string()
    }

    fn fit(
        &self,
        task: Task,
        x: ArrayView2<f64>,
        y: &[f64],
        groups: &[usize],
        _norm: &Standardizer,
    ) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(StageSettings::fit(self, task, x, y, groups)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub classifier: String,
    pub regressor: String,
    pub metrics: Metrics,
}

/// Fits every candidate once per stage on `train`, then scores all pairs on
/// `test` over every row (misclassified rows included). Rows are sorted by
/// RMSE, ties broken by R², wet/dry accuracy, then names.
pub fn grid_search(
    classifiers: &[&dyn Candidate],
    regressors: &[&dyn Candidate],
    train: &Dataset,
    test: &Dataset,
    threshold: f64,
) -> Result<Vec<GridRow>> {
    if classifiers.is_empty() || regressors.is_empty() {
        return Err(ModelError::InvalidSpec("need at least one candidate per stage".into()));
    }
    if train.columns != test.columns {
        return Err(ModelError::SchemaMismatch("train and test columns differ".into()));
    }
    let norm = Standardizer::fit(train.x.view());
    let z = norm.apply(train.x.view());
    let zt = norm.apply(test.x.view());
    let wet = train.wet_rows();
    if wet.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let zw = z.select(Axis(0), &wet);
    let yw: Vec<f64> = wet.iter().map(|&k| train.labels[k].meters()).collect();
    let gw: Vec<usize> = wet.iter().map(|&k| train.groups[k]).collect();

    let mut probs = Vec::with_capacity(classifiers.len());
    for c in classifiers {
        let m = c.fit(Task::Classification, z.view(), &train.wet_targets(), &train.groups, &norm)?;
        probs.push((c.name(), m.predict(zt.view())));
    }
    let mut etas = Vec::with_capacity(regressors.len());
    for r in regressors {
        let m = r.fit(Task::Regression, zw.view(), &yw, &gw, &norm)?;
        etas.push((r.name(), m.predict(zt.view())));
    }
    let mut rows = Vec::with_capacity(probs.len() * etas.len());
    for (cn, p) in &probs {
        for (rn, e) in &etas {
            let pred = compose(p, e, threshold);
            rows.push(GridRow {
                classifier: cn.clone(),
                regressor: rn.clone(),
                metrics: metrics(&pred, &test.labels)?,
            });
        }
    }
    rows.sort_by(|a, b| {
        a.metrics
            .rmse
            .total_cmp(&b.metrics.rmse)
            .then(b.metrics.r2.total_cmp(&a.metrics.r2))
            .then(b.metrics.accuracy.total_cmp(&a.metrics.accuracy))
            .then_with(|| a.classifier.cmp(&b.classifier))
            .then_with(|| a.regressor.cmp(&b.regressor))
    });
    Ok(rows)
}

pub fn grid_table_csv(rows: &[GridRow]) -> String {
    let mut out = String::from("rank,classifier,regressor,r2,rmse,mae,accuracy\n");
    for (k, r) in rows.iter().enumerate() {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            k + 1,
            r.classifier,
            r.regressor,
            m.r2,
            m.rmse,
            m.mae,
            m.accuracy
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SurgeLevel;
    use crate::models::{Architecture, ModelKind, TrainConfig};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Zero below a jump, so misclassified rows cost at least 0.2 m.
    fn truth(a: f64, b: f64) -> f64 {
        let v = a * 1.5 + b;
        if v > 0.0 {
            v + 0.2
        } else {
            0.0
        }
    }

    fn dataset(seed: u64, n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let labels = (0..n)
            .map(|r| match truth(x[[r, 0]], x[[r, 1]]) {
                v if v > 0.0 => SurgeLevel::Wet(v),
                _ => SurgeLevel::Dry,
            })
            .collect();
        Dataset {
            columns: vec!["a".into(), "b".into()],
            x,
            labels,
            groups: (0..n).map(|r| r % 4).collect(),
            storms: (0..4).map(|k| k.to_string()).collect(),
            point_ids: (0..n as u64).collect(),
        }
    }

    /// Knows the generating rule and applies it to raw values.
    struct Oracle;

    struct OraclePredictor {
        task: Task,
        norm: Standardizer,
    }

    impl Predictor for OraclePredictor {
        fn predict(&self, x: ArrayView2<f64>) -> Vec<f64> {
            let raw = self.norm.invert(x);
            raw.rows()
                .into_iter()
                .map(|r| {
                    let v = truth(r[0], r[1]);
                    match self.task {
                        Task::Classification => f64::from(v > 0.0),
                        Task::Regression => v,
                    }
                })
                .collect()
        }
    }

    impl Candidate for Oracle {
        fn name(&self) -> String {
            "oracle".into()
        }

        fn fit(&self, task: Task, _: ArrayView2<f64>, _: &[f64], _: &[usize], norm: &Standardizer) -> Result<Box<dyn Predictor>> {
            Ok(Box::new(OraclePredictor { task, norm: norm.clone() }))
        }
    }

    fn quick(kind: ModelKind) -> StageSettings {
        let mut s = StageSettings::new(kind);
        s.width_divisor = 64;
        s.boost.rounds = 20;
        s.train = Some(TrainConfig {
            epochs: 2,
            batch_size: 64,
            ..TrainConfig::regression()
        });
        s
    }

    #[test]
    fn single_pair_gives_one_row() {
        let (tr, te) = (dataset(1, 200), dataset(2, 100));
        let g = quick(ModelKind::Gbt);
        let rows = grid_search(&[&g], &[&g], &tr, &te, 0.5).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(grid_table_csv(&rows).starts_with("rank,classifier"));
    }

    #[test]
    fn planted_oracle_ranks_first() {
        let (tr, te) = (dataset(3, 300), dataset(4, 150));
        let settings: Vec<StageSettings> = [ModelKind::Network(Architecture::Nn1), ModelKind::Gbt]
            .into_iter()
            .map(quick)
            .collect();
        let mut cands: Vec<&dyn Candidate> = settings.iter().map(|s| s as &dyn Candidate).collect();
        cands.push(&Oracle);
        let rows = grid_search(&cands, &cands, &tr, &te, 0.5).unwrap();
        assert_eq!(rows.len(), 9);
        assert_eq!((rows[0].classifier.as_str(), rows[0].regressor.as_str()), ("oracle", "oracle"));
        assert!(rows[0].metrics.rmse < 1e-12);
    }
}
