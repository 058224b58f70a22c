use serde::{Deserialize, Serialize};

use super::{check_columns, Regressor};
use crate::error::{Error, Result};
use crate::ingest::DesignMatrix;
use crate::num::Scalar;

/// Ordinary least squares with intercept. A vanishing ridge term keeps the
/// normal equations solvable when one-hot groups are collinear with the
/// intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub columns: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

const RIDGE: f64 = 1e-8;

/// Solves `a x = b` for symmetric positive definite `a` (row-major, n x n).
fn cholesky_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return Err(Error::Domain("normal equations are not positive definite".into()));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Ok(b)
}

pub fn fit_linear<T: Scalar>(m: &DesignMatrix<T>) -> Result<LinearModel> {
    let y = m.target()?;
    let (n, d) = (m.n_rows(), m.n_cols());
    if n == 0 {
        return Err(Error::InsufficientData("cannot fit a linear model on an empty matrix".into()));
    }
    // centring separates the intercept and conditions the system
    let mean_x: Vec<f64> = (0..d).map(|j| (0..n).map(|i| m.get(i, j).to_f64_lossy()).sum::<f64>() / n as f64).collect();
    let mean_y = y.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n as f64;
    let mut xtx = vec![0.0; d * d];
    let mut xty = vec![0.0; d];
    let mut row = vec![0.0; d];
    for i in 0..n {
        for (j, r) in row.iter_mut().enumerate() {
            *r = m.get(i, j).to_f64_lossy() - mean_x[j];
        }
        let yi = y[i].to_f64_lossy() - mean_y;
        for a in 0..d {
            xty[a] += row[a] * yi;
            for b in 0..=a {
                xtx[a * d + b] += row[a] * row[b];
            }
        }
    }
    let scale = (0..d).map(|j| xtx[j * d + j]).fold(0.0f64, f64::max).max(1.0);
    for a in 0..d {
        for b in 0..a {
            xtx[b * d + a] = xtx[a * d + b];
        }
        xtx[a * d + a] += RIDGE * scale;
    }
    let coefficients = cholesky_solve(xtx, xty, d)?;
    let intercept = mean_y - coefficients.iter().zip(&mean_x).map(|(c, x)| c * x).sum::<f64>();
    Ok(LinearModel { columns: m.columns.clone(), intercept, coefficients })
}

impl<T: Scalar> Regressor<T> for LinearModel {
    fn predict(&self, m: &DesignMatrix<T>) -> Result<Vec<T>> {
        check_columns(&self.columns, m)?;
        Ok((0..m.n_rows())
            .map(|i| {
                let v = self.intercept
                    + m.row(i).iter().zip(&self.coefficients).map(|(x, c)| x.to_f64_lossy() * c).sum::<f64>();
                T::lit(v)
            })
            .collect())
    }

    fn name(&self) -> &'static str {
        "linear"
    }
}
