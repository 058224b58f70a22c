use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeBuilder};
use super::{check_columns, HyperParams, Regressor};
use crate::error::{Error, Result};
use crate::ingest::DesignMatrix;
use crate::num::Scalar;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest<T> {
    pub schema_version: u32,
    pub hyperparams: HyperParams,
    pub columns: Vec<String>,
    pub column_sources: Vec<String>,
    pub medians: BTreeMap<String, f64>,
    pub trees: Vec<DecisionTree<T>>,
}

/// Independent generator for tree `index`: the master seed picks the key,
/// the tree index picks the stream.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `n` row indices drawn uniformly with replacement.
pub fn bootstrap_indices<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Bagged trees; tree `i` sees a bootstrap drawn from its own stream, so the
/// result does not depend on thread scheduling.
pub fn fit_forest<T: Scalar>(m: &DesignMatrix<T>, hp: &HyperParams) -> Result<RandomForest<T>> {
    hp.validate()?;
    m.target()?;
    if m.n_rows() == 0 {
        return Err(Error::InsufficientData("cannot fit a forest on an empty matrix".into()));
    }
    let trees = (0..hp.n_estimators)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_rng(hp.seed, i);
            let mut idx = bootstrap_indices(m.n_rows(), &mut rng);
            TreeBuilder::new(m, hp, &mut rng)?.fit(&mut idx)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomForest {
        schema_version: MODEL_SCHEMA_VERSION,
        hyperparams: hp.clone(),
        columns: m.columns.clone(),
        column_sources: m.column_sources.clone(),
        medians: m.medians.clone(),
        trees,
    })
}

impl<T: Scalar> RandomForest<T> {
    pub fn predict_row(&self, row: &[T]) -> T {
        let s: f64 = self.trees.iter().map(|t| t.predict_row(row).to_f64_lossy()).sum();
        T::lit(s / self.trees.len() as f64)
    }

    /// Mean impurity decrease per original feature, normalized to sum 1.
    /// A forest without splits yields all zeros.
    pub fn feature_importances(&self) -> BTreeMap<String, f64> {
        let mut out: BTreeMap<String, f64> = self.column_sources.iter().map(|s| (s.clone(), 0.0)).collect();
        for t in &self.trees {
            for (j, v) in t.importances.iter().enumerate() {
                *out.get_mut(&self.column_sources[j]).expect("source present") += v / self.trees.len() as f64;
            }
        }
        let total: f64 = out.values().sum();
        if total > 0.0 {
            out.values_mut().for_each(|v| *v /= total);
        }
        out
    }

    /// Per-column importances before the roll-up, normalized like
    /// [`Self::feature_importances`].
    pub fn column_importances(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.columns.len()];
        for t in &self.trees {
            for (o, v) in out.iter_mut().zip(&t.importances) {
                *o += v / self.trees.len() as f64;
            }
        }
        let total: f64 = out.iter().sum();
        if total > 0.0 {
            out.iter_mut().for_each(|v| *v /= total);
        }
        out
    }
}

impl<T: Scalar + Serialize + DeserializeOwned> RandomForest<T> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(s);
        // trees are nested as deep as max_depth
        de.disable_recursion_limit();
        let f = Self::deserialize(&mut de)?;
        de.end()?;
        if f.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Schema(format!("model schema_version {} (expected {MODEL_SCHEMA_VERSION})", f.schema_version)));
        }
        if f.columns.len() != f.column_sources.len() || f.trees.iter().any(|t| t.importances.len() != f.columns.len()) {
            return Err(Error::Schema("model columns are inconsistent".into()));
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl<T: Scalar> Regressor<T> for RandomForest<T> {
    fn predict(&self, m: &DesignMatrix<T>) -> Result<Vec<T>> {
        check_columns(&self.columns, m)?;
        Ok((0..m.n_rows()).into_par_iter().map(|i| self.predict_row(m.row(i))).collect())
    }

    fn name(&self) -> &'static str {
        "random_forest"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MaxFeatures;
    use rand_distr::{Distribution, Normal};

    fn linear(n: usize, seed: u64) -> DesignMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)]).collect();
        let y = rows.iter().map(|r| 3.0 * r[0] + noise.sample(&mut rng)).collect();
        DesignMatrix::from_rows(&rows, Some(y)).unwrap()
    }

    #[test]
    fn table4_preset_instantiates() {
        let hp = HyperParams::table4();
        assert_eq!((hp.n_estimators, hp.max_depth, hp.min_samples_split, hp.max_features), (2500, 200, 4, MaxFeatures::Sqrt));
        let m = linear(40, 1);
        let f = fit_forest(&m, &hp).unwrap();
        assert_eq!(f.trees.len(), 2500);
        assert!(f.trees.iter().all(|t| t.root.depth() <= 200));
    }

    #[test]
    fn learns_linear_signal_and_is_deterministic() {
        let m = linear(2000, 2);
        let hp = HyperParams::desk();
        let f = fit_forest(&m, &hp).unwrap();
        let p = f.predict(&m).unwrap();
        let y = m.target().unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let ss_res: f64 = p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
        let ss_tot: f64 = y.iter().map(|b| (b - mean).powi(2)).sum();
        assert!(1.0 - ss_res / ss_tot >= 0.95);
        let (lo, hi) = y.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
        assert!(p.iter().all(|v| *v >= lo && *v <= hi));
        let g = fit_forest(&m, &hp).unwrap();
        assert_eq!(f.to_json().unwrap(), g.to_json().unwrap());
    }

    #[test]
    fn json_round_trip_and_column_check() {
        let m = linear(100, 3);
        let f = fit_forest(&m, &HyperParams { n_estimators: 5, ..HyperParams::desk() }).unwrap();
        let back = RandomForest::<f64>::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        let mut other = m.clone();
        other.columns[1] = "renamed".into();
        assert!(matches!(f.predict(&other), Err(Error::Schema(_))));
    }

    #[test]
    fn importances_prefer_signal() {
        let m = linear(1000, 4);
        let f = fit_forest(&m, &HyperParams { n_estimators: 50, ..HyperParams::desk() }).unwrap();
        let imp = f.feature_importances();
        assert!(imp["x0"] > 10.0 * imp["x1"]);
        assert!((imp.values().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bootstrap_unique_fraction() {
        let n = 1000;
        let mut total = 0.0;
        for i in 0..2500 {
            let mut seen = vec![false; n];
            for j in bootstrap_indices(n, &mut tree_rng(7, i)) {
                seen[j] = true;
            }
            total += seen.iter().filter(|s| **s).count() as f64 / n as f64;
        }
        assert!((total / 2500.0 - (1.0 - (-1.0f64).exp())).abs() < 0.02);
    }
}
