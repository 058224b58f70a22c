use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Moments for mapping predictions from the source county's value
/// distribution onto the target county's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentParams {
    pub mu_source: f64,
    pub sigma_source: f64,
    pub mu_target: f64,
    pub sigma_target: f64,
    /// Size of the hand-labeled target sample the moments came from.
    pub target_sample_n: usize,
}

impl AdjustmentParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_source > 0.0) || !(self.sigma_target > 0.0) {
            return Err(Error::Parameter(format!(
                "standard deviations must be positive (source {}, target {})",
                self.sigma_source, self.sigma_target
            )));
        }
        if ![self.mu_source, self.mu_target, self.sigma_source, self.sigma_target].iter().all(|v| v.is_finite()) {
            return Err(Error::Parameter("non-finite adjustment moments".into()));
        }
        Ok(())
    }

    /// Parameters of the reverse map.
    pub fn inverse(&self) -> Self {
        Self {
            mu_source: self.mu_target,
            sigma_source: self.sigma_target,
            mu_target: self.mu_source,
            sigma_target: self.sigma_source,
            target_sample_n: self.target_sample_n,
        }
    }
}

/// `y' = (y - mu_s) / sigma_s * sigma_t + mu_t`, elementwise.
pub fn adjust_distribution<T: Scalar>(predictions: &[T], p: &AdjustmentParams) -> Result<Vec<T>> {
    p.validate()?;
    // multiply before dividing so integral examples stay exact
    Ok(predictions
        .iter()
        .map(|y| T::lit((y.to_f64_lossy() - p.mu_source) * p.sigma_target / p.sigma_source + p.mu_target))
        .collect())
}

/// Sample mean and `n - 1` standard deviation.
pub fn estimate_moments<T: Scalar>(sample: &[T]) -> Result<(T, T)> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} values; moments need at least 2")));
    }
    let mean = sample.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n as f64;
    let var = sample.iter().map(|v| (v.to_f64_lossy() - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((T::lit(mean), T::lit(var.sqrt())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> AdjustmentParams {
        AdjustmentParams { mu_source: 3000.0, sigma_source: 1000.0, mu_target: 2300.0, sigma_target: 800.0, target_sample_n: 100 }
    }

    #[test]
    fn hand_example_and_inverse() {
        assert_eq!(adjust_distribution(&[3085.0f64], &p()).unwrap(), vec![2368.0]);
        let ys: Vec<f64> = vec![120.0, 3085.5, 9999.0, -4.0];
        let back = adjust_distribution(&adjust_distribution(&ys, &p()).unwrap(), &p().inverse()).unwrap();
        for (a, b) in back.iter().zip(&ys) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn equal_moments_identity_and_errors() {
        let same = AdjustmentParams { mu_target: 3000.0, sigma_target: 1000.0, ..p() };
        assert_eq!(adjust_distribution(&[1.0, 2.5, 7000.0], &same).unwrap(), vec![1.0, 2.5, 7000.0]);
        let bad = AdjustmentParams { sigma_source: 0.0, ..p() };
        assert!(matches!(adjust_distribution(&[1.0f64], &bad), Err(Error::Parameter(_))));
    }

    #[test]
    fn moments() {
        assert_eq!(estimate_moments(&[2.0f64, 2.0, 2.0]).unwrap(), (2.0, 0.0));
        let (m, s) = estimate_moments(&[1.0f64, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(estimate_moments(&[1.0f64]).is_err());
    }
}
