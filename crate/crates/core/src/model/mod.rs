//! Regression learners: a from-scratch random forest (with single tree and
//! least-squares baselines), cross-validated grid search, OCR-augmented
//! training sets and the cross-county distribution adjustment.

mod adjust;
mod augment;
mod cv;
mod forest;
mod linear;
mod tree;

pub use adjust::{adjust_distribution, estimate_moments, AdjustmentParams};
pub use augment::{augment_training, ocr_labeled_records};
pub use cv::{cross_validate, expand_grid, grid_search, kfold_indices, rmse, CvReport, GridRow, GridSearchResult};
pub use forest::{bootstrap_indices, fit_forest, tree_rng, RandomForest, MODEL_SCHEMA_VERSION};
pub use linear::{fit_linear, LinearModel};
pub use tree::{fit_tree, DecisionTree, Node};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::DesignMatrix;
use crate::num::Scalar;

/// Number of candidate features drawn per node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `ceil(sqrt(d))`.
    Sqrt,
    All,
    /// `ceil(f * d)`, at least 1.
    Fraction(f64),
}

impl MaxFeatures {
    pub fn resolve(&self, d: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().ceil() as usize,
            MaxFeatures::All => d,
            MaxFeatures::Fraction(f) => (f * d as f64).ceil() as usize,
        };
        k.clamp(1, d.max(1))
    }
}

impl fmt::Display for MaxFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxFeatures::Sqrt => write!(f, "sqrt"),
            MaxFeatures::All => write!(f, "all"),
            MaxFeatures::Fraction(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for MaxFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "all" => Ok(MaxFeatures::All),
            _ => s
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0 && *v <= 1.0)
                .map(MaxFeatures::Fraction)
                .ok_or_else(|| Error::Parameter(format!("max_features {s:?}: expected sqrt, all or a fraction in (0, 1]"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self::table4()
    }
}

impl HyperParams {
    /// The published configuration.
    pub fn table4() -> Self {
        Self { n_estimators: 2500, max_depth: 200, min_samples_split: 4, max_features: MaxFeatures::Sqrt, seed: 0 }
    }

    /// Same tree settings with 200 trees, for laptop-scale runs.
    pub fn desk() -> Self {
        Self { n_estimators: 200, ..Self::table4() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "table4" => Ok(Self::table4()),
            "desk" => Ok(Self::desk()),
            _ => Err(Error::Parameter(format!("unknown hyperparameter preset {name:?} (table4, desk)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_estimators < 1 || self.max_depth < 1 || self.min_samples_split < 2 {
            return Err(Error::Parameter(format!(
                "need n_estimators >= 1, max_depth >= 1, min_samples_split >= 2 (got {}, {}, {})",
                self.n_estimators, self.max_depth, self.min_samples_split
            )));
        }
        if let MaxFeatures::Fraction(f) = self.max_features {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Parameter(format!("max_features fraction {f} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Common prediction interface of the built-in learners.
pub trait Regressor<T: Scalar>: Send + Sync {
    fn predict(&self, m: &DesignMatrix<T>) -> Result<Vec<T>>;
    fn name(&self) -> &'static str;
}

impl<T: Scalar> Regressor<T> for DecisionTree<T> {
    fn predict(&self, m: &DesignMatrix<T>) -> Result<Vec<T>> {
        Ok((0..m.n_rows()).map(|i| self.predict_row(m.row(i))).collect())
    }

    fn name(&self) -> &'static str {
        "decision_tree"
    }
}

pub(crate) fn check_columns<T: Scalar>(expected: &[String], m: &DesignMatrix<T>) -> Result<()> {
    if expected != m.columns.as_slice() {
        let missing: Vec<&String> = expected.iter().filter(|c| !m.columns.contains(c)).take(5).collect();
        return Err(Error::Schema(format!(
            "matrix columns differ from the model's ({} vs {}; first missing: {missing:?})",
            m.n_cols(),
            expected.len()
        )));
    }
    Ok(())
}

/// Built-in learner selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum Learner {
    Forest(HyperParams),
    Tree(HyperParams),
    Linear,
}

impl Learner {
    pub fn fit<T: Scalar>(&self, m: &DesignMatrix<T>) -> Result<Box<dyn Regressor<T>>> {
        Ok(match self {
            Learner::Forest(hp) => Box::new(fit_forest(m, hp)?),
            Learner::Tree(hp) => {
                let mut rng = tree_rng(hp.seed, 0);
                Box::new(fit_tree(m, hp, &mut rng)?)
            }
            Learner::Linear => Box::new(fit_linear(m)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_and_parsing() {
        assert_eq!(HyperParams::preset("table4").unwrap(), HyperParams::table4());
        assert_eq!(HyperParams::desk().n_estimators, 200);
        assert!(HyperParams::preset("huge").is_err());
        assert_eq!("sqrt".parse::<MaxFeatures>().unwrap(), MaxFeatures::Sqrt);
        assert_eq!("0.5".parse::<MaxFeatures>().unwrap(), MaxFeatures::Fraction(0.5));
        assert!("1.5".parse::<MaxFeatures>().is_err());
        assert_eq!(MaxFeatures::Sqrt.resolve(10), 4);
        assert_eq!(MaxFeatures::Sqrt.resolve(16), 4);
        assert!(HyperParams { min_samples_split: 1, ..HyperParams::desk() }.validate().is_err());
    }

    #[test]
    fn learners_share_interface() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..30).map(|i| 2.0 * i as f64).collect();
        let m = DesignMatrix::from_rows(&rows, Some(y)).unwrap();
        let hp = HyperParams { n_estimators: 10, ..HyperParams::desk() };
        for l in [Learner::Forest(hp.clone()), Learner::Tree(hp), Learner::Linear] {
            let r = l.fit(&m).unwrap();
            assert_eq!(r.predict(&m).unwrap().len(), 30);
        }
    }
}
