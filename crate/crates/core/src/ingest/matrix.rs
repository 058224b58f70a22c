use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Dense row-major numeric features, optionally with a dollar target.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    pub row_ids: Vec<String>,
    pub columns: Vec<String>,
    /// Original feature of every column (one-hot columns share one).
    pub column_sources: Vec<String>,
    values: Vec<T>,
    pub target: Option<Vec<T>>,
    /// Numeric imputation medians from the fit data.
    pub medians: BTreeMap<String, f64>,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn new(
        row_ids: Vec<String>,
        columns: Vec<String>,
        column_sources: Vec<String>,
        values: Vec<T>,
        target: Option<Vec<T>>,
    ) -> Result<Self> {
        let (n, d) = (row_ids.len(), columns.len());
        if values.len() != n * d {
            return Err(Error::Schema(format!("{} values for {n}x{d} matrix", values.len())));
        }
        if column_sources.len() != d {
            return Err(Error::Schema("column_sources length differs from columns".into()));
        }
        if target.as_ref().is_some_and(|t| t.len() != n) {
            return Err(Error::Schema("target length differs from row count".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema("design matrix contains non-finite values".into()));
        }
        Ok(Self { row_ids, columns, column_sources, values, target, medians: BTreeMap::new() })
    }

    /// Unnamed matrix from rows; columns are `x0, x1, ...`.
    pub fn from_rows(rows: &[Vec<T>], target: Option<Vec<T>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Schema("ragged rows".into()));
        }
        let columns: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        Self::new(
            (0..rows.len()).map(|i| i.to_string()).collect(),
            columns.clone(),
            columns,
            rows.iter().flatten().copied().collect(),
            target,
        )
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.columns.len() + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        let d = self.columns.len();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn target(&self) -> Result<&[T]> {
        self.target.as_deref().ok_or_else(|| Error::Schema("design matrix has no target".into()))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let d = self.columns.len();
        let mut values = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
            columns: self.columns.clone(),
            column_sources: self.column_sources.clone(),
            values,
            target: self.target.as_ref().map(|t| idx.iter().map(|&i| t[i]).collect()),
            medians: self.medians.clone(),
        }
    }

    pub fn with_target(mut self, target: Vec<T>) -> Result<Self> {
        if target.len() != self.n_rows() {
            return Err(Error::Schema("target length differs from row count".into()));
        }
        self.target = Some(target);
        Ok(self)
    }

    /// Rows of `other` appended below; columns must agree.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.columns != other.columns {
            return Err(Error::Schema("cannot stack matrices with different columns".into()));
        }
        let target = match (&self.target, &other.target) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            (None, None) => None,
            _ => return Err(Error::Schema("only one matrix has a target".into())),
        };
        let mut m = Self::new(
            self.row_ids.iter().chain(&other.row_ids).cloned().collect(),
            self.columns.clone(),
            self.column_sources.clone(),
            self.values.iter().chain(&other.values).copied().collect(),
            target,
        )?;
        m.medians = self.medians.clone();
        Ok(m)
    }

    pub fn cast<U: Scalar>(&self) -> DesignMatrix<U> {
        let c = |v: &T| U::lit(v.to_f64_lossy());
        DesignMatrix {
            row_ids: self.row_ids.clone(),
            columns: self.columns.clone(),
            column_sources: self.column_sources.clone(),
            values: self.values.iter().map(c).collect(),
            target: self.target.as_ref().map(|t| t.iter().map(c).collect()),
            medians: self.medians.clone(),
        }
    }

    /// CSV with `parcel_id`, the feature columns and `target` when present.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["parcel_id".to_string()];
        header.extend(self.columns.iter().cloned());
        if self.target.is_some() {
            header.push("target".into());
        }
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.row_ids[i].clone()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            if let Some(t) = &self.target {
                rec.push(t[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `<stem>.csv` and the `<stem>.json` sidecar.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(csv_path)?))?;
        let sidecar = MatrixSidecar {
            columns: self.columns.clone(),
            column_sources: self.column_sources.clone(),
            medians: self.medians.clone(),
        };
        std::fs::write(csv_path.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let sidecar: MatrixSidecar = serde_json::from_str(&std::fs::read_to_string(csv_path.with_extension("json"))?)?;
        let mut rdr = csv::Reader::from_path(csv_path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let d = sidecar.columns.len();
        if header.len() < d + 1 || header[1..=d] != sidecar.columns[..] {
            return Err(Error::Schema(format!("{} does not match its sidecar", csv_path.display())));
        }
        let has_target = header.len() == d + 2;
        let (mut ids, mut values, mut target) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            ids.push(rec[0].to_string());
            let parse = |s: &str| -> Result<T> {
                s.parse::<f64>().map(T::lit).map_err(|_| Error::Schema(format!("non-numeric cell {s:?}")))
            };
            for j in 1..=d {
                values.push(parse(&rec[j])?);
            }
            if has_target {
                target.push(parse(&rec[d + 1])?);
            }
        }
        let mut m = Self::new(ids, sidecar.columns, sidecar.column_sources, values, has_target.then_some(target))?;
        m.medians = sidecar.medians;
        Ok(m)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MatrixSidecar {
    columns: Vec<String>,
    column_sources: Vec<String>,
    medians: BTreeMap<String, f64>,
}

/// Seeded shuffle of `0..n` cut at `floor(n * (1 - test_fraction))`.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Parameter(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    if n < 5 {
        return Err(Error::InsufficientData(format!("{n} rows cannot be split")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * (1.0 - test_fraction)) + 1e-9).floor() as usize;
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

pub fn train_test_split<T: Scalar>(m: &DesignMatrix<T>, test_fraction: f64, seed: u64) -> Result<(DesignMatrix<T>, DesignMatrix<T>)> {
    let (train, test) = split_indices(m.n_rows(), test_fraction, seed)?;
    Ok((m.select_rows(&train), m.select_rows(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_and_determinism() {
        let (a, b) = split_indices(10_452, 0.2, 1).unwrap();
        assert_eq!((a.len(), b.len()), (8361, 2091));
        assert_eq!(split_indices(10_452, 0.2, 1).unwrap(), (a.clone(), b.clone()));
        let mut all: Vec<usize> = a.into_iter().chain(b).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10_452).collect::<Vec<_>>());
        assert!(matches!(split_indices(4, 0.2, 1), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn select_and_round_trip() {
        let m = DesignMatrix::<f64>::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.5], vec![5.0, 6.0]], Some(vec![10.0, 20.0, 30.0]))
            .unwrap();
        let s = m.select_rows(&[2, 0]);
        assert_eq!(s.row(0), &[5.0, 6.0]);
        assert_eq!(s.target().unwrap(), &[30.0, 10.0]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        m.save(&p).unwrap();
        assert_eq!(DesignMatrix::<f64>::load(&p).unwrap(), m);
        let f: DesignMatrix<f32> = m.cast();
        assert_eq!(f.get(1, 1), 4.5f32);
    }
}
