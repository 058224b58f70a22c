use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::ingest::DesignMatrix;
use crate::model::{fit_forest, HyperParams, Regressor};
use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C2stResult {
    pub test_accuracy: f64,
    pub n_test: usize,
    /// One-sided normal approximation against chance accuracy.
    pub p_value: f64,
    /// Label-permutation p-value, when requested.
    pub p_permutation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C2stOptions {
    pub hyperparams: HyperParams,
    /// 0 disables the permutation test.
    pub permutations: usize,
}

impl Default for C2stOptions {
    fn default() -> Self {
        Self { hyperparams: HyperParams::desk(), permutations: 0 }
    }
}

/// `1 - Phi((acc - 0.5) / sqrt(0.25 / n_test))`.
pub fn c2st_p_value(accuracy: f64, n_test: usize) -> f64 {
    let z = (accuracy - 0.5) / (0.25 / n_test as f64).sqrt();
    let phi = Normal::new(0.0, 1.0).expect("standard normal").cdf(z);
    (1.0 - phi).clamp(0.0, 1.0)
}

/// Seeded half/half split within each label.
fn stratified_split(labels: &[bool], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let half = idx.len() / 2;
        train.extend_from_slice(&idx[..half]);
        test.extend_from_slice(&idx[half..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn held_out_accuracy<T: Scalar>(x: &DesignMatrix<T>, labels: &[bool], seed: u64, hp: &HyperParams) -> Result<(f64, usize)> {
    let (train, test) = stratified_split(labels, seed);
    let y: Vec<T> = labels.iter().map(|&l| if l { T::one() } else { T::zero() }).collect();
    let all = x.clone().with_target(y)?;
    let model = fit_forest(&all.select_rows(&train), &HyperParams { seed, ..hp.clone() })?;
    let pred = model.predict(&all.select_rows(&test))?;
    let half = T::lit(0.5);
    let correct = pred.iter().zip(&test).filter(|(p, &i)| (**p > half) == labels[i]).count();
    Ok((correct as f64 / test.len() as f64, test.len()))
}

/// Classifier two-sample test: can a forest tell rows with a recorded label
/// from rows without one better than chance?
pub fn c2st_mar_test<T: Scalar>(
    present: &DesignMatrix<T>,
    missing: &DesignMatrix<T>,
    seed: u64,
    opts: &C2stOptions,
) -> Result<C2stResult> {
    for (name, m) in [("present", present), ("missing", missing)] {
        if m.n_rows() < 20 {
            return Err(Error::InsufficientData(format!("{name} group has {} rows; need 20", m.n_rows())));
        }
    }
    // chance accuracy is 0.5 only for equal groups, so the larger one is
    // subsampled
    let n = present.n_rows().min(missing.n_rows());
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut take = |m: &DesignMatrix<T>| {
        let mut idx: Vec<usize> = (0..m.n_rows()).collect();
        if m.n_rows() > n {
            idx.shuffle(&mut rng);
            idx.truncate(n);
            idx.sort_unstable();
        }
        let mut m = m.select_rows(&idx);
        m.target = None;
        m
    };
    let a = take(present);
    let x = a.concat(&take(missing))?;
    let labels: Vec<bool> = (0..x.n_rows()).map(|i| i >= a.n_rows()).collect();
    let (test_accuracy, n_test) = held_out_accuracy(&x, &labels, seed, &opts.hyperparams)?;
    let p_permutation = if opts.permutations > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_5eed);
        let mut hits = 0;
        for k in 0..opts.permutations {
            let mut perm = labels.clone();
            perm.shuffle(&mut rng);
            let (acc, _) = held_out_accuracy(&x, &perm, seed.wrapping_add(k as u64 + 1), &opts.hyperparams)?;
            hits += usize::from(acc >= test_accuracy);
        }
        Some((1 + hits) as f64 / (1 + opts.permutations) as f64)
    } else {
        None
    };
    Ok(C2stResult { test_accuracy, n_test, p_value: c2st_p_value(test_accuracy, n_test), p_permutation })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chance_accuracy_gives_half() {
        assert!((c2st_p_value(0.5, 100) - 0.5).abs() < 1e-12);
        assert!(c2st_p_value(0.6, 100) < c2st_p_value(0.55, 100));
        assert!(c2st_p_value(0.9, 200) < 1e-6);
    }

    #[test]
    fn split_is_stratified() {
        let labels: Vec<bool> = (0..50).map(|i| i >= 30).collect();
        let (train, test) = stratified_split(&labels, 1);
        assert_eq!(train.iter().filter(|&&i| labels[i]).count(), 10);
        assert_eq!(test.iter().filter(|&&i| !labels[i]).count(), 15);
        assert_eq!(train.len() + test.len(), 50);
    }

    #[test]
    fn small_groups_rejected() {
        let m = DesignMatrix::<f64>::from_rows(&vec![vec![1.0]; 10], None).unwrap();
        let big = DesignMatrix::<f64>::from_rows(&vec![vec![1.0]; 30], None).unwrap();
        assert!(matches!(c2st_mar_test(&m, &big, 0, &C2stOptions::default()), Err(Error::InsufficientData(_))));
    }
}
