//! Second-order gradient boosting over depth-limited regression trees with
//! histogram split search on quantile bins.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::network::{sigmoid, softplus};
use super::{ModelError, Result};
use crate::eval::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostLoss {
    Logistic,
    SquaredError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub min_child_weight: f64,
    /// Histogram bins per feature, at most 256.
    pub bins: usize,
    pub loss: BoostLoss,
}

impl BoostConfig {
    pub fn new(loss: BoostLoss) -> Self {
        Self {
            rounds: 250,
            max_depth: 6,
            shrinkage: 0.1,
            lambda: 1.0,
            min_child_weight: 1.0,
            bins: 256,
            loss,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(ModelError::InvalidSpec("rounds must be >= 1".into()));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(ModelError::InvalidSpec("shrinkage must be in (0, 1]".into()));
        }
        if !(2..=256).contains(&self.bins) || self.lambda < 0.0 || self.min_child_weight < 0.0 {
            return Err(ModelError::InvalidSpec("bins must be in 2..=256, lambda and min_child_weight >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, k: usize) -> usize {
            match t.nodes[k] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    pub loss: BoostLoss,
    pub n_features: usize,
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

impl Booster {
    /// Additive score before the link function.
    pub fn raw(&self, row: &[f64]) -> f64 {
        let mut s = self.base_score;
        for t in &self.trees {
            s += t.predict(row);
        }
        s
    }

    /// Probabilities for logistic loss, raw scores for squared error.
    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<f64> {
        let mut row = vec![0.0; x.ncols()];
        x.rows()
            .into_iter()
            .map(|r| {
                for (dst, src) in row.iter_mut().zip(r.iter()) {
                    *dst = *src;
                }
                let s = self.raw(&row);
                match self.loss {
                    BoostLoss::Logistic => sigmoid(s),
                    BoostLoss::SquaredError => s,
                }
            })
            .collect()
    }
}

/// Mean training loss for raw scores `f`.
pub fn boost_loss(loss: BoostLoss, f: &[f64], y: &[f64]) -> f64 {
    let terms: Vec<f64> = f
        .iter()
        .zip(y)
        .map(|(&f, &y)| match loss {
            BoostLoss::Logistic => softplus(f) - y * f,
            BoostLoss::SquaredError => (f - y) * (f - y),
        })
        .collect();
    pairwise_sum(&terms) / f.len() as f64
}

/// Split thresholds of one feature. Columns with few distinct values split
/// at midpoints; otherwise at quantiles.
fn thresholds(col: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = col.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut uniq = sorted.clone();
    uniq.dedup();
    if uniq.len() <= bins {
        return uniq.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect();
    }
    let n = sorted.len();
    let mut t: Vec<f64> = (1..bins).map(|k| sorted[k * n / bins]).collect();
    t.dedup();
    if t.last() == uniq.last() {
        t.pop();
    }
    t
}

struct Binned {
    n: usize,
    /// Column-major bin indices.
    bins: Vec<u8>,
    thresholds: Vec<Vec<f64>>,
    offsets: Vec<usize>,
    total_bins: usize,
}

impl Binned {
    fn new(x: ArrayView2<f64>, max_bins: usize) -> Self {
        let (n, d) = x.dim();
        let mut bins = vec![0u8; n * d];
        let mut ths = Vec::with_capacity(d);
        let mut offsets = Vec::with_capacity(d);
        let mut total = 0;
        for f in 0..d {
            let col: Vec<f64> = x.column(f).to_vec();
            let t = thresholds(&col, max_bins);
            for (r, &v) in col.iter().enumerate() {
                bins[f * n + r] = t.partition_point(|&th| th < v) as u8;
            }
            offsets.push(total);
            total += t.len() + 1;
            ths.push(t);
        }
        Self {
            n,
            bins,
            thresholds: ths,
            offsets,
            total_bins: total,
        }
    }

    fn histogram(&self, rows: &[u32], g: &[f64], h: &[f64]) -> Vec<(f64, f64)> {
        let mut hist = vec![(0.0, 0.0); self.total_bins];
        for (f, &off) in self.offsets.iter().enumerate() {
            let col = &self.bins[f * self.n..(f + 1) * self.n];
            let slot = &mut hist[off..off + self.thresholds[f].len() + 1];
            for &r in rows {
                let e = &mut slot[col[r as usize] as usize];
                e.0 += g[r as usize];
                e.1 += h[r as usize];
            }
        }
        hist
    }
}

struct Builder<'a> {
    data: &'a Binned,
    g: &'a [f64],
    h: &'a [f64],
    cfg: &'a BoostConfig,
    nodes: Vec<TreeNode>,
}

struct Best {
    feature: usize,
    bin: usize,
    gain: f64,
}

impl Builder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.cfg.lambda)
    }

    fn best_split(&self, hist: &[(f64, f64)], g: f64, h: f64) -> Option<Best> {
        let parent = self.score(g, h);
        let mut best: Option<Best> = None;
        for (f, &off) in self.data.offsets.iter().enumerate() {
            let nt = self.data.thresholds[f].len();
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..nt {
                gl += hist[off + k].0;
                hl += hist[off + k].1;
                let (gr, hr) = (g - gl, h - hl);
                if hl < self.cfg.min_child_weight || hr < self.cfg.min_child_weight {
                    continue;
                }
                let gain = self.score(gl, hl) + self.score(gr, hr) - parent;
                if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                    best = Some(Best { feature: f, bin: k, gain });
                }
            }
        }
        best
    }

    /// Grows the subtree for `rows`, adding leaf values to `pred`.
    fn grow(&mut self, rows: Vec<u32>, hist: Vec<(f64, f64)>, depth: usize, pred: &mut [f64]) -> usize {
        let gs: Vec<f64> = rows.iter().map(|&r| self.g[r as usize]).collect();
        let hs: Vec<f64> = rows.iter().map(|&r| self.h[r as usize]).collect();
        let (g, h) = (pairwise_sum(&gs), pairwise_sum(&hs));
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: 0.0 });
        let split = if depth < self.cfg.max_depth && rows.len() >= 2 {
            self.best_split(&hist, g, h)
        } else {
            None
        };
        let Some(best) = split else {
            let value = -g / (h + self.cfg.lambda) * self.cfg.shrinkage;
            for &r in &rows {
                pred[r as usize] += value;
            }
            self.nodes[id] = TreeNode::Leaf { value };
            return id;
        };
        let col = &self.data.bins[best.feature * self.data.n..(best.feature + 1) * self.data.n];
        let (left, right): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| (col[r as usize] as usize) <= best.bin);
        let (small, large_is_left) = if left.len() <= right.len() { (&left, false) } else { (&right, true) };
        let small_hist = self.data.histogram(small, self.g, self.h);
        let large_hist: Vec<(f64, f64)> = hist.iter().zip(&small_hist).map(|(p, s)| (p.0 - s.0, p.1 - s.1)).collect();
        let (lh, rh) = if large_is_left { (large_hist, small_hist) } else { (small_hist, large_hist) };
        drop(hist);
        let l = self.grow(left, lh, depth + 1, pred);
        let r = self.grow(right, rh, depth + 1, pred);
        self.nodes[id] = TreeNode::Split {
            feature: best.feature,
            threshold: self.data.thresholds[best.feature][best.bin],
            left: l,
            right: r,
        };
        id
    }
}

/// Fits `cfg.rounds` trees; returns the ensemble and the training loss
/// before the first and after every round.
pub fn train_boosted(cfg: &BoostConfig, x: ArrayView2<f64>, y: &[f64]) -> Result<(Booster, Vec<f64>)> {
    cfg.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    if y.len() != n {
        return Err(ModelError::InvalidSpec("target length does not match rows".into()));
    }
    for &v in y {
        let ok = match cfg.loss {
            BoostLoss::Logistic => v == 0.0 || v == 1.0,
            BoostLoss::SquaredError => v.is_finite(),
        };
        if !ok {
            return Err(ModelError::InvalidLabel(format!("target {v} invalid for {:?}", cfg.loss)));
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::InvalidSpec("non-finite feature value".into()));
    }
    let mean = pairwise_sum(y) / n as f64;
    let base_score = match cfg.loss {
        BoostLoss::SquaredError => mean,
        BoostLoss::Logistic => {
            let p = mean.clamp(1e-12, 1.0 - 1e-12);
            (p / (1.0 - p)).ln()
        }
    };
    let data = Binned::new(x, cfg.bins);
    let mut pred = vec![base_score; n];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let all: Vec<u32> = (0..n as u32).collect();
    let mut trees = Vec::with_capacity(cfg.rounds);
    let mut history = vec![boost_loss(cfg.loss, &pred, y)];
    for _ in 0..cfg.rounds {
        for r in 0..n {
            match cfg.loss {
                BoostLoss::SquaredError => {
                    g[r] = pred[r] - y[r];
                    h[r] = 1.0;
                }
                BoostLoss::Logistic => {
                    let p = sigmoid(pred[r]);
                    g[r] = p - y[r];
                    h[r] = (p * (1.0 - p)).max(1e-16);
                }
            }
        }
        let hist = data.histogram(&all, &g, &h);
        let mut b = Builder {
            data: &data,
            g: &g,
            h: &h,
            cfg,
            nodes: Vec::new(),
        };
        b.grow(all.clone(), hist, 0, &mut pred);
        trees.push(Tree { nodes: b.nodes });
        let loss = boost_loss(cfg.loss, &pred, y);
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch: trees.len() });
        }
        history.push(loss);
    }
    Ok((
        Booster {
            loss: cfg.loss,
            n_features: x.ncols(),
            base_score,
            trees,
        },
        history,
    ))
}
