use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fit_forest, HyperParams, Regressor};
use crate::error::{Error, Result};
use crate::ingest::DesignMatrix;
use crate::num::Scalar;

/// Seeded assignment of `0..n` to `k` folds of near-equal size.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Parameter(format!("k = {k}; need at least 2 folds")));
    }
    if n < k {
        return Err(Error::InsufficientData(format!("{n} rows for {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

pub fn rmse<T: Scalar>(pred: &[T], truth: &[T]) -> f64 {
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p.to_f64_lossy() - t.to_f64_lossy()).powi(2)).sum();
    (s / truth.len().max(1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
}

/// k-fold cross-validated RMSE of the forest learner.
pub fn cross_validate<T: Scalar>(m: &DesignMatrix<T>, hp: &HyperParams, k: usize, seed: u64) -> Result<CvReport> {
    m.target()?;
    let folds = kfold_indices(m.n_rows(), k, seed)?;
    let mut fold_rmse = Vec::with_capacity(k);
    for (f, test) in folds.iter().enumerate() {
        let train: Vec<usize> = folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, v)| v.iter().copied()).collect();
        let model = fit_forest(&m.select_rows(&train), hp)?;
        let held = m.select_rows(test);
        fold_rmse.push(rmse(&model.predict(&held)?, held.target()?));
    }
    let mean_rmse = fold_rmse.iter().sum::<f64>() / k as f64;
    Ok(CvReport { fold_rmse, mean_rmse })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub params: HyperParams,
    pub cv: CvReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_index: usize,
    pub best: HyperParams,
    pub rows: Vec<GridRow>,
}

/// Cross-validates every grid point on the same folds; the lowest mean RMSE
/// wins and ties go to the earlier point.
pub fn grid_search<T: Scalar>(m: &DesignMatrix<T>, grid: &[HyperParams], k: usize, seed: u64) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::Parameter("empty hyperparameter grid".into()));
    }
    let rows = grid
        .iter()
        .map(|hp| Ok(GridRow { params: hp.clone(), cv: cross_validate(m, hp, k, seed)? }))
        .collect::<Result<Vec<_>>>()?;
    let best_index = (0..rows.len()).fold(0, |b, i| if rows[i].cv.mean_rmse < rows[b].cv.mean_rmse { i } else { b });
    Ok(GridSearchResult { best_index, best: rows[best_index].params.clone(), rows })
}

impl GridSearchResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n_estimators", "max_depth", "min_samples_split", "max_features", "seed", "mean_cv_rmse", "best"])?;
        for (i, r) in self.rows.iter().enumerate() {
            w.write_record([
                r.params.n_estimators.to_string(),
                r.params.max_depth.to_string(),
                r.params.min_samples_split.to_string(),
                r.params.max_features.to_string(),
                r.params.seed.to_string(),
                format!("{:.6}", r.cv.mean_rmse),
                (i == self.best_index).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Cartesian product of the given axes over `base`.
pub fn expand_grid(base: &HyperParams, n_estimators: &[usize], max_depth: &[usize], min_samples_split: &[usize]) -> Vec<HyperParams> {
    let or = |v: &[usize], d: usize| if v.is_empty() { vec![d] } else { v.to_vec() };
    let mut out = Vec::new();
    for &n in &or(n_estimators, base.n_estimators) {
        for &d in &or(max_depth, base.max_depth) {
            for &s in &or(min_samples_split, base.min_samples_split) {
                out.push(HyperParams { n_estimators: n, max_depth: d, min_samples_split: s, ..base.clone() });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn folds_partition() {
        for (n, k) in [(10, 5), (11, 5), (5, 5), (103, 3)] {
            let folds = kfold_indices(n, k, 9).unwrap();
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            assert!(folds.iter().all(|f| f.len() == n / k || f.len() == n / k + 1));
        }
        assert!(matches!(kfold_indices(4, 5, 0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn constant_target_zero_rmse() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let m = DesignMatrix::from_rows(&rows, Some(vec![5.0; 20])).unwrap();
        let r = cross_validate(&m, &HyperParams { n_estimators: 5, ..HyperParams::desk() }, 5, 1).unwrap();
        assert!(r.fold_rmse.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn deep_trees_win_on_interactions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let y = rows.iter().map(|r| if (r[0] > 0.5) ^ (r[1] > 0.5) { 100.0 } else { 0.0 } + 10.0 * r[0]).collect();
        let m = DesignMatrix::from_rows(&rows, Some(y)).unwrap();
        let base = HyperParams { n_estimators: 20, max_features: super::super::MaxFeatures::All, ..HyperParams::desk() };
        let grid = expand_grid(&base, &[], &[1, 20], &[]);
        let res = grid_search(&m, &grid, 5, 0).unwrap();
        assert_eq!(res.rows.len(), 2);
        assert_eq!(res.best.max_depth, 20);
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
