//! Greedy correlation-threshold feature filter.

use log::warn;

use super::{FeatureError, FeatureMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    /// Surviving columns in their original order.
    pub retained: Vec<String>,
    /// Zero-variance columns dropped up front.
    pub constant: Vec<String>,
    /// Correlated columns in the order they were removed.
    pub removed: Vec<String>,
}

fn sum_pairwise(x: &[f64]) -> f64 {
    if x.len() <= 16 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    sum_pairwise(a) + sum_pairwise(b)
}

/// Centers the column and returns it with its sum of squares.
fn centered(x: &[f64]) -> (Vec<f64>, f64) {
    let mean = sum_pairwise(x) / x.len() as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let sq: Vec<f64> = c.iter().map(|v| v * v).collect();
    let ss = sum_pairwise(&sq);
    (c, ss)
}

/// Pearson correlation, or `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let (cx, sx) = centered(x);
    let (cy, sy) = centered(y);
    if sx == 0.0 || sy == 0.0 {
        return None;
    }
    let prod: Vec<f64> = cx.iter().zip(&cy).map(|(a, b)| a * b).collect();
    Some((sum_pairwise(&prod) / (sx.sqrt() * sy.sqrt())).clamp(-1.0, 1.0))
}

/// Removes features until no retained pair has |ρ| > `tau`. At each step the
/// most correlated pair loses the member with the larger mean |ρ| to the
/// other retained columns; ties drop the lexicographically greater name.
pub fn correlation_reduce(matrix: &FeatureMatrix, tau: f64) -> Result<Reduction, FeatureError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(FeatureError::InvalidTau(tau));
    }
    if matrix.n_rows() < 2 {
        return Err(FeatureError::TooFewRows(matrix.n_rows()));
    }
    let names = matrix.columns();
    let mut constant = Vec::new();
    let mut cols: Vec<usize> = Vec::new();
    let mut data: Vec<Vec<f64>> = Vec::new();
    for k in 0..matrix.n_cols() {
        let (c, ss) = centered(&matrix.column(k));
        if ss == 0.0 {
            warn!("dropping zero-variance column {}", names[k]);
            constant.push(names[k].clone());
        } else {
            let norm = ss.sqrt();
            cols.push(k);
            data.push(c.into_iter().map(|v| v / norm).collect());
        }
    }
    if cols.is_empty() {
        return Err(FeatureError::DegenerateColumn);
    }
    let n = cols.len();
    let mut rho = vec![0.0; n * n];
    let mut prod = vec![0.0; matrix.n_rows()];
    for a in 0..n {
        rho[a * n + a] = 1.0;
        for b in a + 1..n {
            for (p, (x, y)) in prod.iter_mut().zip(data[a].iter().zip(&data[b])) {
                *p = x * y;
            }
            let r = sum_pairwise(&prod).clamp(-1.0, 1.0).abs();
            rho[a * n + b] = r;
            rho[b * n + a] = r;
        }
    }

    let mut alive = vec![true; n];
    let mut removed = Vec::new();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..n {
            if !alive[a] {
                continue;
            }
            for b in a + 1..n {
                if alive[b] && rho[a * n + b] > tau && best.is_none_or(|(_, _, r)| rho[a * n + b] > r) {
                    best = Some((a, b, rho[a * n + b]));
                }
            }
        }
        let Some((a, b, _)) = best else { break };
        let others = alive.iter().filter(|&&x| x).count() - 1;
        let mean_abs = |k: usize| {
            let s: f64 = (0..n).filter(|&j| alive[j] && j != k).map(|j| rho[k * n + j]).sum();
            s / others as f64
        };
        let (ma, mb) = (mean_abs(a), mean_abs(b));
        let drop = if ma > mb {
            a
        } else if mb > ma {
            b
        } else if names[cols[a]] > names[cols[b]] {
            a
        } else {
            b
        };
        alive[drop] = false;
        removed.push(names[cols[drop]].clone());
    }
    let retained = (0..n).filter(|&k| alive[k]).map(|k| names[cols[k]].clone()).collect();
    Ok(Reduction {
        retained,
        constant,
        removed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureRow;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(cols: &[&str], data: &[Vec<f64>]) -> FeatureMatrix {
        let mut m = FeatureMatrix::new(cols.iter().map(|s| s.to_string()).collect()).unwrap();
        for (k, row) in data.iter().enumerate() {
            m.push(FeatureRow {
                storm_id: "s".into(),
                point_id: k as u64,
                values: row.clone(),
                label: None,
            })
            .unwrap();
        }
        m
    }

    fn random_matrix(seed: u64, rows: usize, cols: usize) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<Vec<f64>> = (0..4).map(|_| (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let names: Vec<String> = (0..cols).map(|k| format!("f{k:02}")).collect();
        let mixes: Vec<(usize, f64)> = (0..cols).map(|_| (rng.random_range(0..4), rng.random_range(0.0..1.5))).collect();
        let data: Vec<Vec<f64>> = (0..rows)
            .map(|r| {
                mixes
                    .iter()
                    .map(|&(b, noise)| base[b][r] + noise * rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        matrix(&refs, &data)
    }

    fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for (a, b) in x.iter().zip(y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx) * (a - mx);
            syy += (b - my) * (b - my);
        }
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn duplicate_column_keeps_one() {
        let data: Vec<Vec<f64>> = (0..10).map(|k| vec![k as f64, k as f64, ((k * 7) % 5) as f64]).collect();
        let m = matrix(&["a", "b", "c"], &data);
        let r = correlation_reduce(&m, 0.9).unwrap();
        assert_eq!(r.removed, vec!["b".to_string()]);
        assert_eq!(r.retained, vec!["a".to_string(), "c".to_string()]);
    }

    #[test]
    fn orthogonal_columns_survive() {
        let data = vec![
            vec![1.0, 1.0, 1.0],
            vec![-1.0, 1.0, -1.0],
            vec![1.0, -1.0, -1.0],
            vec![-1.0, -1.0, 1.0],
        ];
        let m = matrix(&["a", "b", "c"], &data);
        for tau in [1e-6, 0.1, 0.5, 1.0] {
            assert_eq!(correlation_reduce(&m, tau).unwrap().retained.len(), 3);
        }
    }

    #[test]
    fn constant_columns_dropped_first() {
        let data: Vec<Vec<f64>> = (0..5).map(|k| vec![2.0, k as f64]).collect();
        let m = matrix(&["c", "x"], &data);
        let r = correlation_reduce(&m, 0.5).unwrap();
        assert_eq!(r.constant, vec!["c".to_string()]);
        assert_eq!(r.retained, vec!["x".to_string()]);
        let all_const = matrix(&["c"], &[vec![1.0], vec![1.0]]);
        assert!(matches!(correlation_reduce(&all_const, 0.5), Err(FeatureError::DegenerateColumn)));
    }

    #[test]
    fn bad_arguments() {
        let m = matrix(&["a"], &[vec![1.0]]);
        assert!(matches!(correlation_reduce(&m, 0.5), Err(FeatureError::TooFewRows(1))));
        let m = matrix(&["a"], &[vec![1.0], vec![2.0]]);
        assert!(matches!(correlation_reduce(&m, 0.0), Err(FeatureError::InvalidTau(_))));
        assert!(matches!(correlation_reduce(&m, 1.5), Err(FeatureError::InvalidTau(_))));
    }

    #[test]
    fn survivors_pass_all_pairs_check() {
        for seed in 0..10 {
            let m = random_matrix(seed, 60, 20);
            let r = correlation_reduce(&m, 0.9).unwrap();
            for (i, a) in r.retained.iter().enumerate() {
                for b in &r.retained[i + 1..] {
                    let x = m.column(m.column_index(a).unwrap());
                    let y = m.column(m.column_index(b).unwrap());
                    assert!(naive_pearson(&x, &y).abs() <= 0.9 + 1e-12, "{a} {b}");
                }
            }
            assert_eq!(r.retained.len() + r.removed.len() + r.constant.len(), 20);
        }
    }

    #[test]
    fn survivor_count_monotone_in_tau() {
        let m = random_matrix(42, 80, 20);
        let counts: Vec<usize> = [1.0, 0.9, 0.7, 0.5]
            .iter()
            .map(|&t| correlation_reduce(&m, t).unwrap().retained.len())
            .collect();
        assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
        assert!(counts[3] < counts[0]);
    }

    #[test]
    fn pearson_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x: Vec<f64> = (0..30).map(|_| rng.random_range(-5.0..5.0)).collect();
            let y: Vec<f64> = (0..30).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert!((pearson(&x, &y).unwrap() - naive_pearson(&x, &y)).abs() < 1e-12);
        }
        assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_none());
    }
}
