use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::schema::{
    FeatureSchema, Tier, ATTIC_CATEGORY, ATTIC_FULL_FLAG, GRADE, GRADE_ORDER, GRADE_SCORE, SQFT_COMPONENTS, SQFT_TOTAL,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Num(f64),
    Cat(String),
    Missing,
}

impl FieldValue {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            FieldValue::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            FieldValue::Cat(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, FieldValue::Missing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelSource {
    Hand,
    Ocr { confidence: f64 },
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub value_dollars: u64,
    pub year: i32,
    pub handwritten: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParcelRecord {
    pub parcel_id: String,
    pub county: String,
    pub features: BTreeMap<String, FieldValue>,
    pub label: Option<Label>,
    pub label_source: LabelSource,
}

impl ParcelRecord {
    pub fn new(parcel_id: impl Into<String>, county: impl Into<String>) -> Self {
        Self {
            parcel_id: parcel_id.into(),
            county: county.into(),
            features: BTreeMap::new(),
            label: None,
            label_source: LabelSource::None,
        }
    }

    pub fn num(&self, name: &str) -> Option<f64> {
        self.features.get(name).and_then(FieldValue::as_num)
    }

    pub fn with(mut self, name: &str, value: FieldValue) -> Self {
        self.features.insert(name.to_string(), value);
        self
    }
}

/// Concatenates the identifier components, keeps ASCII alphanumerics and
/// uppercases.
pub fn normalize_parcel_id<S: AsRef<str>>(components: &[S]) -> Result<String> {
    let id: String = components
        .iter()
        .flat_map(|c| c.as_ref().chars())
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_uppercase())
        .collect();
    if id.is_empty() {
        let raw: Vec<&str> = components.iter().map(AsRef::as_ref).collect();
        return Err(Error::InvalidIdentifier(raw.join("|")));
    }
    Ok(id)
}

/// Replaces every field exactly equal to a null token with `Missing`.
pub fn standardize_nulls(features: &mut BTreeMap<String, FieldValue>, null_tokens: &[String]) {
    for v in features.values_mut() {
        if let FieldValue::Cat(s) = v {
            if null_tokens.iter().any(|t| t == s) {
                *v = FieldValue::Missing;
            }
        }
    }
}

/// Fills a zero (or missing) total living area from its components; a
/// record whose square footage is zero everywhere is torn down and dropped.
pub fn impute_total_sqft(mut record: ParcelRecord) -> Option<ParcelRecord> {
    let total = record.num(SQFT_TOTAL).unwrap_or(0.0);
    if total > 0.0 {
        return Some(record);
    }
    let sum: f64 = SQFT_COMPONENTS.iter().filter_map(|c| record.num(c)).filter(|v| *v > 0.0).sum();
    if sum > 0.0 {
        record.features.insert(SQFT_TOTAL.into(), FieldValue::Num(sum));
        Some(record)
    } else {
        None
    }
}

fn truthy(v: Option<&FieldValue>) -> bool {
    match v {
        Some(FieldValue::Num(x)) => *x != 0.0,
        Some(FieldValue::Cat(s)) => matches!(s.trim().to_ascii_lowercase().as_str(), "1" | "y" | "yes" | "true"),
        _ => false,
    }
}

/// Applies the grouping tables and derives the attic category and the
/// numeric grade score.
pub fn group_categories(mut record: ParcelRecord, grouping: &BTreeMap<String, BTreeMap<String, String>>) -> ParcelRecord {
    for (name, table) in grouping {
        if let Some(FieldValue::Cat(s)) = record.features.get_mut(name) {
            if let Some(g) = table.get(s.as_str()) {
                *s = g.clone();
            }
        }
    }
    if !record.features.contains_key(ATTIC_CATEGORY) {
        if let Some(sqft) = record.num("sqft_attic") {
            let cat = if sqft <= 0.0 {
                "No attic"
            } else if truthy(record.features.get(ATTIC_FULL_FLAG)) {
                "Full attic"
            } else {
                "Partial attic"
            };
            record.features.insert(ATTIC_CATEGORY.into(), FieldValue::Cat(cat.into()));
        }
    }
    if let Some(FieldValue::Cat(g)) = record.features.get(GRADE) {
        if let Some(pos) = GRADE_ORDER.iter().position(|o| o == g) {
            record.features.insert(GRADE_SCORE.into(), FieldValue::Num((pos + 1) as f64));
        }
    }
    record
}

/// Recodes foreign codings and, for the shared tier, keeps only the shared
/// features. Records lacking a shared feature entirely are a schema error.
pub fn harmonize(records: Vec<ParcelRecord>, schema: &FeatureSchema) -> Result<Vec<ParcelRecord>> {
    records
        .into_iter()
        .map(|r| {
            let mut r = group_categories(r, &BTreeMap::new());
            for (name, table) in &schema.recode {
                if let Some(FieldValue::Cat(s)) = r.features.get_mut(name) {
                    if let Some(m) = table.get(s.as_str()) {
                        *s = m.clone();
                    }
                }
            }
            let r = group_categories(r, &schema.grouping);
            if schema.tier == Tier::Shared {
                if let Some(f) = schema.features.iter().find(|f| !r.features.contains_key(&f.name)) {
                    return Err(Error::Schema(format!("parcel {} has no field {}", r.parcel_id, f.name)));
                }
                let mut r = r;
                r.features.retain(|k, _| schema.feature(k).is_some());
                Ok(r)
            } else {
                Ok(r)
            }
        })
        .collect()
}

/// Null standardization, total-area imputation and category grouping.
/// Idempotent.
pub fn clean_records(records: Vec<ParcelRecord>, schema: &FeatureSchema) -> Vec<ParcelRecord> {
    records
        .into_iter()
        .filter_map(|mut r| {
            standardize_nulls(&mut r.features, &schema.null_tokens);
            let r = impute_total_sqft(r)?;
            let mut r = group_categories(r, &schema.grouping);
            if r.label.is_some_and(|l| l.value_dollars == 0) {
                r.label = None;
                r.label_source = LabelSource::None;
            }
            Some(r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use FieldValue::{Cat, Missing, Num};

    fn rec() -> ParcelRecord {
        ParcelRecord::new("P1", "hamilton")
    }

    #[test]
    fn parcel_ids() {
        assert_eq!(normalize_parcel_id(&["12", "a-3", "045", ""]).unwrap(), "12A3045");
        assert_eq!(normalize_parcel_id(&["ABC123"]).unwrap(), "ABC123");
        assert!(matches!(normalize_parcel_id(&["--", ".."]), Err(Error::InvalidIdentifier(_))));
    }

    #[test]
    fn null_tokens() {
        let mut f = BTreeMap::from([
            ("grade".to_string(), Cat("  ".into())),
            ("value".to_string(), Cat("New".into())),
            ("style".to_string(), Cat("A".into())),
        ]);
        standardize_nulls(&mut f, &super::super::schema::default_null_tokens());
        assert_eq!(f["grade"], Missing);
        assert_eq!(f["value"], Missing);
        assert_eq!(f["style"], Cat("A".into()));
    }

    #[test]
    fn sqft_imputation() {
        let r = rec().with(SQFT_TOTAL, Num(0.0)).with("sqft_floor1", Num(800.0)).with("sqft_attic", Num(200.0));
        assert_eq!(impute_total_sqft(r).unwrap().num(SQFT_TOTAL), Some(1000.0));
        let r = rec().with(SQFT_TOTAL, Num(1500.0)).with("sqft_floor1", Num(800.0));
        assert_eq!(impute_total_sqft(r).unwrap().num(SQFT_TOTAL), Some(1500.0));
        let mut r = rec().with(SQFT_TOTAL, Num(0.0));
        for c in SQFT_COMPONENTS {
            r = r.with(c, Num(0.0));
        }
        assert!(impute_total_sqft(r).is_none());
    }

    #[test]
    fn grouping_and_attic() {
        let schema = FeatureSchema::hamilton();
        let r = group_categories(rec().with(GRADE, Cat("Outstanding".into())), &schema.grouping);
        assert_eq!(r.features[GRADE], Cat("Exceptional".into()));
        assert_eq!(r.num(GRADE_SCORE), Some(9.0));
        let r = group_categories(rec().with(GRADE, Cat("Average".into())), &schema.grouping);
        assert_eq!(r.features[GRADE], Cat("Average".into()));
        let r = group_categories(rec().with("sqft_attic", Num(0.0)), &schema.grouping);
        assert_eq!(r.features[ATTIC_CATEGORY], Cat("No attic".into()));
        let r = group_categories(rec().with("sqft_attic", Num(100.0)), &schema.grouping);
        assert_eq!(r.features[ATTIC_CATEGORY], Cat("Partial attic".into()));
        let r = group_categories(rec().with("sqft_attic", Num(100.0)).with(ATTIC_FULL_FLAG, Cat("Y".into())), &schema.grouping);
        assert_eq!(r.features[ATTIC_CATEGORY], Cat("Full attic".into()));
    }

    fn shared_conformant(county: &str) -> ParcelRecord {
        let schema = FeatureSchema::shared();
        let mut r = ParcelRecord::new("P9", county);
        for f in &schema.features {
            let v = if f.is_numeric() { Num(1.0) } else { Cat("Average".into()) };
            r.features.insert(f.name.clone(), v);
        }
        r
    }

    #[test]
    fn harmonize_shared_tier() {
        let schema = FeatureSchema::shared();
        let mut ham = shared_conformant("hamilton").with("sqft_floor2", Num(600.0));
        ham.features.remove(ATTIC_CATEGORY);
        ham = ham.with("sqft_attic", Num(0.0));
        let out = harmonize(vec![ham], &schema).unwrap();
        assert!(!out[0].features.contains_key("sqft_floor2"));
        assert_eq!(out[0].features[ATTIC_CATEGORY], Cat("No attic".into()));

        let fr = shared_conformant("franklin").with(GRADE, Cat("A+2".into()));
        let out = harmonize(vec![fr], &schema).unwrap();
        assert_eq!(out[0].features[GRADE], Cat("Exceptional".into()));

        let ok = shared_conformant("franklin");
        let once = harmonize(vec![ok.clone()], &schema).unwrap();
        assert_eq!(once[0], ok);
        assert_eq!(harmonize(once.clone(), &schema).unwrap(), once);

        let mut bad = shared_conformant("franklin");
        bad.features.remove("fireplaces");
        assert!(matches!(harmonize(vec![bad], &schema), Err(Error::Schema(_))));
    }
}
