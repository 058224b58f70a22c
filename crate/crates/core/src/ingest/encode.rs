use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::clean::{FieldValue, ParcelRecord};
use super::matrix::DesignMatrix;
use super::schema::{FeatureKind, FeatureSchema, MISSING};
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Column layout and imputation state fitted on training records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    features: Vec<EncodedFeature>,
    pub medians: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum EncodedFeature {
    Numeric(String),
    Categorical(String, Vec<String>),
}

/// numpy-style median (mean of the two central values for even counts).
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

impl OneHotEncoder {
    pub fn fit(records: &[ParcelRecord], schema: &FeatureSchema) -> Result<Self> {
        schema.validate()?;
        let mut features = Vec::new();
        let mut medians = BTreeMap::new();
        for f in &schema.features {
            match &f.kind {
                FeatureKind::Numeric => {
                    let mut vals: Vec<f64> =
                        records.iter().filter_map(|r| r.features.get(&f.name).and_then(FieldValue::as_num)).collect();
                    medians.insert(f.name.clone(), median(&mut vals).unwrap_or(0.0));
                    features.push(EncodedFeature::Numeric(f.name.clone()));
                }
                FeatureKind::Categorical { domain } => {
                    let domain = if domain.len() == 1 {
                        let seen: BTreeSet<&str> = records
                            .iter()
                            .filter_map(|r| r.features.get(&f.name).and_then(FieldValue::as_cat))
                            .filter(|c| *c != MISSING)
                            .collect();
                        seen.into_iter().map(str::to_string).chain([MISSING.to_string()]).collect()
                    } else {
                        domain.clone()
                    };
                    features.push(EncodedFeature::Categorical(f.name.clone(), domain));
                }
            }
        }
        Ok(Self { features, medians })
    }

    pub fn columns(&self) -> (Vec<String>, Vec<String>) {
        let mut names = Vec::new();
        let mut sources = Vec::new();
        for f in &self.features {
            match f {
                EncodedFeature::Numeric(n) => {
                    names.push(n.clone());
                    sources.push(n.clone());
                }
                EncodedFeature::Categorical(n, domain) => {
                    for d in domain {
                        names.push(format!("{n}={d}"));
                        sources.push(n.clone());
                    }
                }
            }
        }
        (names, sources)
    }

    /// Encodes records; the target is attached when every record carries a
    /// label.
    pub fn transform<T: Scalar>(&self, records: &[ParcelRecord]) -> Result<DesignMatrix<T>> {
        let (columns, sources) = self.columns();
        let mut values = Vec::with_capacity(records.len() * columns.len());
        for r in records {
            for f in &self.features {
                match f {
                    EncodedFeature::Numeric(n) => {
                        let v = match r.features.get(n) {
                            Some(FieldValue::Num(v)) if v.is_finite() => *v,
                            Some(FieldValue::Cat(s)) => {
                                return Err(Error::Schema(format!("parcel {}: {n} = {s:?} is not numeric", r.parcel_id)))
                            }
                            _ => self.medians[n],
                        };
                        values.push(T::lit(v));
                    }
                    EncodedFeature::Categorical(n, domain) => {
                        let label = match r.features.get(n) {
                            Some(FieldValue::Cat(s)) => s.as_str(),
                            Some(FieldValue::Num(v)) => {
                                return Err(Error::Schema(format!("parcel {}: {n} = {v} is not categorical", r.parcel_id)))
                            }
                            _ => MISSING,
                        };
                        let hit = domain.iter().position(|d| d == label).unwrap_or(domain.len() - 1);
                        values.extend((0..domain.len()).map(|k| if k == hit { T::one() } else { T::zero() }));
                    }
                }
            }
        }
        let target = records
            .iter()
            .map(|r| r.label.map(|l| T::lit(l.value_dollars as f64)))
            .collect::<Option<Vec<T>>>()
            .filter(|_| !records.is_empty());
        let mut m = DesignMatrix::new(records.iter().map(|r| r.parcel_id.clone()).collect(), columns, sources, values, target)?;
        m.medians = self.medians.clone();
        Ok(m)
    }
}

/// Fits the encoder on `records` and encodes them.
pub fn one_hot_encode<T: Scalar>(records: &[ParcelRecord], schema: &FeatureSchema) -> Result<(OneHotEncoder, DesignMatrix<T>)> {
    let enc = OneHotEncoder::fit(records, schema)?;
    let m = enc.transform(records)?;
    Ok((enc, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::schema::FeatureDef;
    use FieldValue::{Cat, Missing, Num};

    fn schema() -> FeatureSchema {
        FeatureSchema {
            features: vec![FeatureDef::categorical("c", &["A", "B"]), FeatureDef::numeric("sqft")],
            grouping: Default::default(),
            recode: Default::default(),
            ..FeatureSchema::hamilton()
        }
    }

    fn rec(id: &str, c: FieldValue, sqft: FieldValue) -> ParcelRecord {
        ParcelRecord::new(id, "h").with("c", c).with("sqft", sqft)
    }

    #[test]
    fn indicators_medians_and_unseen() {
        let train = vec![
            rec("1", Cat("A".into()), Num(1000.0)),
            rec("2", Cat("B".into()), Num(1200.0)),
            rec("3", Missing, Num(1400.0)),
        ];
        let (enc, m) = one_hot_encode::<f64>(&train, &schema()).unwrap();
        assert_eq!(m.columns, ["c=A", "c=B", "c=missing", "sqft"]);
        assert_eq!(m.row(0), &[1.0, 0.0, 0.0, 1000.0]);
        assert_eq!(m.row(2), &[0.0, 0.0, 1.0, 1400.0]);
        assert!(m.target.is_none());
        let test = enc.transform::<f64>(&[rec("4", Cat("Z".into()), Missing)]).unwrap();
        assert_eq!(test.row(0), &[0.0, 0.0, 1.0, 1200.0]);
    }

    #[test]
    fn open_domain_learns_sorted_categories() {
        let s = FeatureSchema { features: vec![FeatureDef::categorical("c", &[])], ..schema() };
        let train = vec![rec("1", Cat("z".into()), Missing), rec("2", Cat("a".into()), Missing)];
        let (_, m) = one_hot_encode::<f64>(&train, &s).unwrap();
        assert_eq!(m.columns, ["c=a", "c=z", "c=missing"]);
    }

    #[test]
    fn group_rows_sum_to_one() {
        let train: Vec<_> = ["A", "B", "Q", "  "].iter().enumerate().map(|(i, c)| rec(&i.to_string(), Cat(c.to_string()), Num(1.0))).collect();
        let (_, m) = one_hot_encode::<f32>(&train, &schema()).unwrap();
        for i in 0..m.n_rows() {
            assert_eq!(m.row(i)[..3].iter().sum::<f32>(), 1.0);
        }
    }
}
