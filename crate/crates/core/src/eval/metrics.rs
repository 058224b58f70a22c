use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    /// Absent when the true values have zero variance.
    pub r2: Option<f64>,
    pub mae: f64,
    /// Percentages.
    pub mape: f64,
    pub rmspe: f64,
    /// Signed median percentage error.
    pub mpe: f64,
    /// Fractions of predictions within 5/10/20% of the true value.
    pub within_5: f64,
    pub within_10: f64,
    pub within_20: f64,
    /// Closed interval of true values kept by trimming, when trimmed.
    pub trim_bounds: Option<(f64, f64)>,
}

/// Linear-interpolation quantile of sorted data (numpy's default).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn to_f64<T: Scalar>(pairs: &[(T, T)]) -> Vec<(f64, f64)> {
    pairs.iter().map(|(p, t)| (p.to_f64_lossy(), t.to_f64_lossy())).collect()
}

/// 5th and 95th percentiles of the true values.
pub fn middle_90_bounds<T: Scalar>(pairs: &[(T, T)]) -> Result<(f64, f64)> {
    if pairs.len() < 20 {
        return Err(Error::InsufficientData(format!("{} pairs; trimming needs at least 20", pairs.len())));
    }
    let mut t: Vec<f64> = pairs.iter().map(|(_, t)| t.to_f64_lossy()).collect();
    t.sort_by(f64::total_cmp);
    Ok((quantile_sorted(&t, 0.05), quantile_sorted(&t, 0.95)))
}

/// Pairs whose true value lies in the closed interval, in input order.
pub fn trim_with_bounds<T: Scalar>(pairs: &[(T, T)], bounds: (f64, f64)) -> Vec<(T, T)> {
    pairs
        .iter()
        .filter(|(_, t)| {
            let t = t.to_f64_lossy();
            t >= bounds.0 && t <= bounds.1
        })
        .copied()
        .collect()
}

/// Keeps pairs whose true value lies between the 5th and 95th percentiles.
pub fn trim_middle_90<T: Scalar>(pairs: &[(T, T)]) -> Result<(Vec<(T, T)>, (f64, f64))> {
    let b = middle_90_bounds(pairs)?;
    Ok((trim_with_bounds(pairs, b), b))
}

fn median_of(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Metrics over `(prediction, truth)` pairs; every truth must be positive.
pub fn compute_metrics<T: Scalar>(pairs: &[(T, T)]) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no pairs to evaluate".into()));
    }
    let pairs = to_f64(pairs);
    if let Some((_, t)) = pairs.iter().find(|(_, t)| !(*t > 0.0)) {
        return Err(Error::Domain(format!("true value {t} is not positive")));
    }
    let n = pairs.len() as f64;
    let rel: Vec<f64> = pairs.iter().map(|(p, t)| (p - t) / t).collect();
    let mean_t = pairs.iter().map(|(_, t)| t).sum::<f64>() / n;
    let ss_tot: f64 = pairs.iter().map(|(_, t)| (t - mean_t).powi(2)).sum();
    let ss_res: f64 = pairs.iter().map(|(p, t)| (p - t).powi(2)).sum();
    // relative to the scale of t so that constant truths stay undefined
    let r2 = (ss_tot > 1e-12 * mean_t * mean_t * n).then(|| 1.0 - ss_res / ss_tot);
    let within = |x: f64| rel.iter().filter(|r| r.abs() <= x + 1e-12).count() as f64 / n;
    Ok(MetricsReport {
        n: pairs.len(),
        r2,
        mae: pairs.iter().map(|(p, t)| (p - t).abs()).sum::<f64>() / n,
        mape: rel.iter().map(|r| r.abs()).sum::<f64>() / n * 100.0,
        rmspe: (rel.iter().map(|r| r * r).sum::<f64>() / n).sqrt() * 100.0,
        mpe: median_of(rel.clone()) * 100.0,
        within_5: within(0.05),
        within_10: within(0.10),
        within_20: within(0.20),
        trim_bounds: None,
    })
}

/// Metrics on all pairs and on the middle 90% by true value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub full: MetricsReport,
    pub trimmed: Option<MetricsReport>,
}

pub fn evaluate<T: Scalar>(pairs: &[(T, T)]) -> Result<EvaluationReport> {
    let full = compute_metrics(pairs)?;
    let trimmed = match trim_middle_90(pairs) {
        Ok((kept, b)) => Some(MetricsReport { trim_bounds: Some(b), ..compute_metrics(&kept)? }),
        Err(Error::InsufficientData(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(EvaluationReport { full, trimmed })
}

/// Aligned text table with one column per labeled report.
pub fn metrics_table(reports: &[(&str, &MetricsReport)]) -> String {
    let fmt_pct = |v: f64| format!("{v:.2}%");
    let rows: [(&str, Box<dyn Fn(&MetricsReport) -> String>); 9] = [
        ("N", Box::new(|r| r.n.to_string())),
        ("R2", Box::new(|r| r.r2.map_or("n/a".into(), |v| format!("{v:.3}")))),
        ("MAE", Box::new(|r| format!("{:.2}", r.mae))),
        ("MAPE", Box::new(move |r| fmt_pct(r.mape))),
        ("RMSPE", Box::new(move |r| fmt_pct(r.rmspe))),
        ("MPE", Box::new(move |r| fmt_pct(r.mpe))),
        ("Within 5%", Box::new(move |r| fmt_pct(100.0 * r.within_5))),
        ("Within 10%", Box::new(move |r| fmt_pct(100.0 * r.within_10))),
        ("Within 20%", Box::new(move |r| fmt_pct(100.0 * r.within_20))),
    ];
    let cells: Vec<Vec<String>> = rows.iter().map(|(_, f)| reports.iter().map(|(_, r)| f(r)).collect()).collect();
    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let col_w: Vec<usize> = (0..reports.len())
        .map(|j| cells.iter().map(|c| c[j].len()).chain([reports[j].0.len()]).max().unwrap_or(0))
        .collect();
    let mut out = format!("{:label_w$}", "Metric");
    for (j, (name, _)) in reports.iter().enumerate() {
        let _ = write!(out, "  {name:>w$}", w = col_w[j]);
    }
    out.push('\n');
    for (i, (label, _)) in rows.iter().enumerate() {
        let _ = write!(out, "{label:label_w$}");
        for (j, c) in cells[i].iter().enumerate() {
            let _ = write!(out, "  {c:>w$}", w = col_w[j]);
        }
        out.push('\n');
    }
    out
}
