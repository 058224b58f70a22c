use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Census tract variables keyed by tract id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TractTable {
    pub variables: Vec<String>,
    /// Row per tract; `NaN` marks a missing value.
    pub rows: BTreeMap<String, Vec<f64>>,
}

impl TractTable {
    /// CSV with `tract_id` followed by named numeric columns; blank cells
    /// are missing.
    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("tract_id") {
            return Err(Error::Schema(format!("{}: first column must be tract_id", path.display())));
        }
        let mut rows = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .skip(1)
                .map(|s| {
                    let s = s.trim();
                    if s.is_empty() {
                        Ok(f64::NAN)
                    } else {
                        s.parse().map_err(|_| Error::Schema(format!("tract {}: {s:?} is not numeric", &rec[0])))
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.insert(rec[0].to_string(), vals);
        }
        Ok(Self { variables: header[1..].to_vec(), rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(std::iter::once("tract_id".to_string()).chain(self.variables.iter().cloned()))?;
        for (id, vals) in &self.rows {
            let cells = vals.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() });
            w.write_record(std::iter::once(id.clone()).chain(cells))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `parcel_id,tract_id` CSV.
pub fn load_tract_mapping(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Schema(format!("{}: expected parcel_id,tract_id", path.display())));
        }
        out.insert(rec[0].to_string(), rec[1].to_string());
    }
    Ok(out)
}

pub fn save_tract_mapping(path: &Path, mapping: &BTreeMap<String, String>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["parcel_id", "tract_id"])?;
    for (p, t) in mapping {
        w.write_record([p, t])?;
    }
    w.flush()?;
    Ok(())
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    let tiny = |s: f64, m: f64| s <= 1e-24 * (1.0 + m * m) * n;
    if tiny(sxx, mx) || tiny(syy, my) {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub variable: String,
    pub correlation: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasAuditReport {
    pub rows: Vec<BiasRow>,
}

/// A parcel's prediction and true value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParcelOutcome {
    pub parcel_id: String,
    pub predicted: f64,
    pub actual: f64,
}

/// Correlates each parcel's absolute percentage error with its tract's
/// variables. Parcels without a tract, or whose tract has no row, fail the
/// join together.
pub fn bias_audit(
    outcomes: &[ParcelOutcome],
    mapping: &BTreeMap<String, String>,
    tracts: &TractTable,
) -> Result<BiasAuditReport> {
    let unmapped: Vec<String> = outcomes
        .iter()
        .filter(|o| mapping.get(&o.parcel_id).is_none_or(|t| !tracts.rows.contains_key(t)))
        .map(|o| o.parcel_id.clone())
        .collect();
    if !unmapped.is_empty() {
        return Err(Error::Join(unmapped));
    }
    if let Some(o) = outcomes.iter().find(|o| !(o.actual > 0.0)) {
        return Err(Error::Domain(format!("parcel {}: true value {} is not positive", o.parcel_id, o.actual)));
    }
    let rows = tracts
        .variables
        .iter()
        .enumerate()
        .map(|(j, var)| {
            let (ape, x): (Vec<f64>, Vec<f64>) = outcomes
                .iter()
                .filter_map(|o| {
                    let v = tracts.rows[&mapping[&o.parcel_id]][j];
                    (!v.is_nan()).then(|| (100.0 * (o.predicted - o.actual).abs() / o.actual, v))
                })
                .unzip();
            BiasRow { variable: var.clone(), correlation: pearson(&ape, &x), n: ape.len() }
        })
        .collect();
    Ok(BiasAuditReport { rows })
}

impl BiasAuditReport {
    pub fn to_table(&self) -> String {
        let w = self.rows.iter().map(|r| r.variable.len()).chain(["Variable".len()]).max().unwrap_or(8);
        let mut out = format!("{:w$}  {:>11}  {:>6}\n", "Variable", "Correlation", "N");
        for r in &self.rows {
            let c = r.correlation.map_or("n/a".into(), |c| format!("{c:.3}"));
            let _ = writeln!(out, "{:w$}  {c:>11}  {:>6}", r.variable, r.n);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(id: &str, p: f64, t: f64) -> ParcelOutcome {
        ParcelOutcome { parcel_id: id.into(), predicted: p, actual: t }
    }

    #[test]
    fn exact_linear_and_constant_variables() {
        let outs: Vec<_> = (0..10).map(|i| outcome(&format!("P{i}"), 100.0 + i as f64, 100.0)).collect();
        let mapping = outs.iter().enumerate().map(|(i, o)| (o.parcel_id.clone(), format!("T{i}"))).collect();
        let tracts = TractTable {
            variables: vec!["income".into(), "flat".into()],
            rows: (0..10).map(|i| (format!("T{i}"), vec![3.0 * i as f64 + 1.0, 7.0])).collect(),
        };
        let r = bias_audit(&outs, &mapping, &tracts).unwrap();
        assert!((r.rows[0].correlation.unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(r.rows[1].correlation, None);
        assert!(r.to_table().contains("n/a"));
    }

    #[test]
    fn unmapped_parcels_listed() {
        let outs = vec![outcome("A", 1.0, 1.0), outcome("B", 1.0, 1.0), outcome("C", 1.0, 1.0)];
        let mapping = BTreeMap::from([("A".to_string(), "T1".to_string()), ("C".to_string(), "T9".to_string())]);
        let tracts = TractTable { variables: vec!["v".into()], rows: BTreeMap::from([("T1".into(), vec![1.0])]) };
        match bias_audit(&outs, &mapping, &tracts) {
            Err(Error::Join(ids)) => assert_eq!(ids, ["B", "C"]),
            other => panic!("expected a join error, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = TractTable {
            variables: vec!["a".into(), "b".into()],
            rows: BTreeMap::from([("1".into(), vec![1.5, f64::NAN]), ("2".into(), vec![2.0, 3.0])]),
        };
        let p = dir.path().join("t.csv");
        t.save(&p).unwrap();
        let back = TractTable::load(&p).unwrap();
        assert_eq!(back.variables, t.variables);
        assert!(back.rows["1"][1].is_nan() && back.rows["2"] == vec![2.0, 3.0]);
    }
}
