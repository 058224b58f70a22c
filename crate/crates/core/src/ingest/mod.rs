//! Parcel feature ingestion: loading, cleaning, cross-county harmonization
//! and one-hot encoding into design matrices.

mod clean;
mod encode;
mod matrix;
mod schema;

pub use clean::{
    clean_records, group_categories, harmonize, impute_total_sqft, normalize_parcel_id, standardize_nulls, FieldValue, Label,
    LabelSource, ParcelRecord,
};
pub use encode::{median, one_hot_encode, OneHotEncoder};
pub use matrix::{split_indices, train_test_split, DesignMatrix};
pub use schema::{
    default_null_tokens, FeatureDef, FeatureKind, FeatureSchema, Tier, ATTIC_CATEGORY, ATTIC_FULL_FLAG, GRADE, GRADE_ORDER,
    GRADE_SCORE, MISSING, SQFT_COMPONENTS, SQFT_TOTAL,
};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Assessment year a blank label year stands for.
pub const DEFAULT_LABEL_YEAR: i32 = 1933;

/// Reads a features CSV (header row, `parcel_id` first). Null tokens become
/// missing and schema-numeric columns are parsed; an optional `county`
/// column overrides `default_county`.
pub fn load_features_csv(path: &Path, schema: &FeatureSchema, default_county: &str) -> Result<Vec<ParcelRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::None).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("parcel_id") {
        return Err(Error::Schema(format!("{}: first column must be parcel_id", path.display())));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut r = ParcelRecord::new(normalize_parcel_id(&[&rec[0]])?, default_county);
        for (name, raw) in header.iter().zip(rec.iter()).skip(1) {
            if name == "county" {
                r.county = raw.trim().to_ascii_lowercase();
                continue;
            }
            let value = if schema.null_tokens.iter().any(|t| t == raw) {
                FieldValue::Missing
            } else if schema.is_numeric(name) {
                let v: f64 = raw
                    .trim()
                    .parse()
                    .map_err(|_| Error::Schema(format!("parcel {}: {name} = {raw:?} is not numeric", r.parcel_id)))?;
                FieldValue::Num(v)
            } else {
                FieldValue::Cat(raw.trim().to_string())
            };
            r.features.insert(name.clone(), value);
        }
        out.push(r);
    }
    Ok(out)
}

/// Writes records with the union of their feature names as columns;
/// missing values are blank.
pub fn write_features_csv(path: &Path, records: &[ParcelRecord]) -> Result<()> {
    let names: BTreeSet<&String> = records.iter().flat_map(|r| r.features.keys()).collect();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["parcel_id".to_string(), "county".to_string()];
    header.extend(names.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.parcel_id.clone(), r.county.clone()];
        for n in &names {
            row.push(match r.features.get(*n) {
                Some(FieldValue::Num(v)) => v.to_string(),
                Some(FieldValue::Cat(s)) => s.clone(),
                _ => String::new(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub parcel_id: String,
    pub value_dollars: String,
    #[serde(default)]
    pub year: String,
    #[serde(default)]
    pub handwritten: String,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub confidence: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledParcel {
    pub parcel_id: String,
    pub label: Label,
    pub source: LabelSource,
}

/// Reads `parcel_id,value_dollars,year,handwritten,source,confidence`.
///
/// A blank year is the default assessment year; rows outside `target_year`
/// (when given) and rows without a positive value are skipped. The first
/// row per parcel wins.
pub fn load_labels_csv(path: &Path, target_year: Option<i32>) -> Result<Vec<LabeledParcel>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for row in rdr.deserialize::<LabelRow>() {
        let row = row?;
        let id = normalize_parcel_id(&[&row.parcel_id])?;
        let Ok(value) = row.value_dollars.trim().replace([',', '$'], "").parse::<f64>() else { continue };
        if !(value > 0.0) {
            continue;
        }
        let year = if row.year.trim().is_empty() {
            DEFAULT_LABEL_YEAR
        } else {
            row.year.trim().parse().map_err(|_| Error::Schema(format!("parcel {id}: year {:?}", row.year)))?
        };
        if target_year.is_some_and(|t| t != year) {
            continue;
        }
        let handwritten = matches!(row.handwritten.trim().to_ascii_lowercase().as_str(), "1" | "true" | "y" | "yes");
        let source = match row.source.trim().to_ascii_lowercase().as_str() {
            "ocr" => LabelSource::Ocr { confidence: row.confidence.trim().parse().unwrap_or(0.0) },
            _ => LabelSource::Hand,
        };
        if seen.insert(id.clone()) {
            let label = Label { value_dollars: value.round() as u64, year, handwritten };
            out.push(LabeledParcel { parcel_id: id, label, source });
        }
    }
    Ok(out)
}

pub fn write_labels_csv(path: &Path, labels: &[LabeledParcel]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["parcel_id", "value_dollars", "year", "handwritten", "source", "confidence"])?;
    for l in labels {
        let (source, conf) = match l.source {
            LabelSource::Ocr { confidence } => ("ocr", format!("{confidence}")),
            _ => ("hand", String::new()),
        };
        w.write_record([
            l.parcel_id.as_str(),
            &l.label.value_dollars.to_string(),
            &l.label.year.to_string(),
            if l.label.handwritten { "1" } else { "0" },
            source,
            &conf,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Attaches labels by parcel id; unmatched records keep no label.
pub fn attach_labels(records: &mut [ParcelRecord], labels: &[LabeledParcel]) {
    let by_id: HashMap<&str, &LabeledParcel> = labels.iter().map(|l| (l.parcel_id.as_str(), l)).collect();
    for r in records {
        if let Some(l) = by_id.get(r.parcel_id.as_str()) {
            r.label = Some(l.label);
            r.label_source = l.source;
        }
    }
}

/// Features, cleaned and harmonized, with labels attached.
pub fn ingest(features_csv: &Path, labels_csv: Option<&Path>, schema: &FeatureSchema, county: &str) -> Result<Vec<ParcelRecord>> {
    schema.validate()?;
    let mut records = load_features_csv(features_csv, schema, county)?;
    if let Some(p) = labels_csv {
        attach_labels(&mut records, &load_labels_csv(p, Some(DEFAULT_LABEL_YEAR))?);
    }
    harmonize(clean_records(records, schema), schema)
}

/// Records that carry a label, in input order.
pub fn labeled(records: &[ParcelRecord]) -> Vec<ParcelRecord> {
    records.iter().filter(|r| r.label.is_some()).cloned().collect()
}

/// Parcel id -> label value, for joins.
pub fn label_map(records: &[ParcelRecord]) -> BTreeMap<String, u64> {
    records.iter().filter_map(|r| r.label.map(|l| (r.parcel_id.clone(), l.value_dollars))).collect()
}
