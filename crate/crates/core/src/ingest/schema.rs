use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MISSING: &str = "missing";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    /// A domain of just `"missing"` is open: encoding adds the categories
    /// seen in training, sorted.
    Categorical { domain: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureDef {
    pub fn numeric(name: &str) -> Self {
        Self { name: name.into(), kind: FeatureKind::Numeric }
    }

    pub fn categorical(name: &str, domain: &[&str]) -> Self {
        let mut d: Vec<String> = domain.iter().map(|s| s.to_string()).collect();
        if !d.iter().any(|s| s == MISSING) {
            d.push(MISSING.into());
        }
        Self { name: name.into(), kind: FeatureKind::Categorical { domain: d } }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, FeatureKind::Numeric)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    /// Every feature the richer county records.
    Full,
    /// Features comparable across both counties.
    Shared,
}

/// Square-footage components summed when the total is absent.
pub const SQFT_COMPONENTS: [&str; 5] = ["sqft_attic", "sqft_basement", "sqft_floor1", "sqft_floor2", "sqft_half_floor"];
pub const SQFT_TOTAL: &str = "sqft_total";
pub const ATTIC_CATEGORY: &str = "attic_category";
/// Raw flag marking a finished full attic.
pub const ATTIC_FULL_FLAG: &str = "attic_full";
pub const GRADE: &str = "grade";
pub const GRADE_SCORE: &str = "grade_score";

/// Grade descriptions from lowest to highest; `grade_score` is the 1-based
/// position.
pub const GRADE_ORDER: [&str; 9] =
    ["Poor", "Fair", "Below Average", "Average", "Above Average", "Good", "Very Good", "Excellent", "Exceptional"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub tier: Tier,
    pub features: Vec<FeatureDef>,
    /// feature -> raw label -> grouped label.
    #[serde(default)]
    pub grouping: BTreeMap<String, BTreeMap<String, String>>,
    /// feature -> foreign code -> local label, applied by harmonization.
    #[serde(default)]
    pub recode: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default = "default_null_tokens")]
    pub null_tokens: Vec<String>,
}

pub fn default_null_tokens() -> Vec<String> {
    vec!["  ".into(), "New".into(), String::new()]
}

fn table(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

impl FeatureSchema {
    /// Full feature set of the training county.
    pub fn hamilton() -> Self {
        use FeatureDef as F;
        let features = vec![
            F::numeric("sqft_attic"),
            F::numeric("sqft_basement"),
            F::numeric("sqft_floor1"),
            F::numeric("sqft_floor2"),
            F::numeric("sqft_half_floor"),
            F::numeric(SQFT_TOTAL),
            F::numeric("stories"),
            F::numeric("year_built"),
            F::categorical("style", &["Bungalow", "Cape Cod", "Colonial", "Conventional", "Tudor", "Victorian", "Other"]),
            F::categorical(GRADE, &GRADE_ORDER),
            F::numeric(GRADE_SCORE),
            F::categorical("exterior_wall", &["Frame", "Brick", "Stone", "Stucco", "Siding", "Other"]),
            F::categorical("basement_type", &["None", "Crawl", "Partial", "Full"]),
            F::categorical("heating", &["None", "Forced Air", "Hot Water", "Steam", "Electric", "Other"]),
            F::categorical("air_conditioning", &["None", "Central", "Partial"]),
            F::numeric("total_rooms"),
            F::numeric("full_baths"),
            F::numeric("half_baths"),
            F::numeric("fireplaces"),
            F::categorical("garage_type", &["None", "Attached", "Detached", "Basement", "Carport"]),
            F::numeric("garage_capacity"),
            F::categorical("land_use_code", &["510", "520", "530", "550", "599"]),
            F::categorical("neighborhood", &[]),
            F::numeric("parcels_in_sale"),
        ];
        let grouping = BTreeMap::from([(
            GRADE.to_string(),
            table(&[("Exceptional+", "Exceptional"), ("Outstanding", "Exceptional"), ("Extraordinary", "Exceptional")]),
        )]);
        Self { tier: Tier::Full, features, grouping, recode: Self::franklin_recode(), null_tokens: default_null_tokens() }
    }

    /// Harmonized subset usable on both counties.
    pub fn shared() -> Self {
        let full = Self::hamilton();
        let keep = [
            ATTIC_CATEGORY,
            SQFT_TOTAL,
            "sqft_floor1",
            "stories",
            "year_built",
            "land_use_code",
            "parcels_in_sale",
            GRADE,
            "exterior_wall",
            "basement_type",
            "heating",
            "air_conditioning",
            "total_rooms",
            "full_baths",
            "half_baths",
            "fireplaces",
            "garage_capacity",
        ];
        let mut features = Vec::new();
        for name in keep {
            if name == ATTIC_CATEGORY {
                features.push(FeatureDef::categorical(ATTIC_CATEGORY, &["No attic", "Partial attic", "Full attic"]));
            } else {
                features.push(full.features.iter().find(|f| f.name == name).expect("shared feature in full schema").clone());
            }
        }
        Self { tier: Tier::Shared, features, ..full }
    }

    /// Letter grades and attic wording of the second county.
    fn franklin_recode() -> BTreeMap<String, BTreeMap<String, String>> {
        BTreeMap::from([
            (
                GRADE.to_string(),
                table(&[
                    ("E", "Poor"),
                    ("D-", "Fair"),
                    ("D", "Fair"),
                    ("D+", "Fair"),
                    ("C-", "Below Average"),
                    ("C", "Average"),
                    ("C+", "Above Average"),
                    ("B-", "Good"),
                    ("B", "Good"),
                    ("B+", "Very Good"),
                    ("A-", "Very Good"),
                    ("A", "Excellent"),
                    ("A+", "Excellent"),
                    ("A+1", "Exceptional"),
                    ("A+2", "Exceptional"),
                    ("AA-", "Exceptional"),
                    ("AA", "Exceptional"),
                    ("AA+", "Exceptional"),
                ]),
            ),
            (
                ATTIC_CATEGORY.to_string(),
                table(&[("No Attic", "No attic"), ("Partial Attic", "Partial attic"), ("Full Attic", "Full attic")]),
            ),
        ])
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature {}", f.name)));
            }
            if let FeatureKind::Categorical { domain } = &f.kind {
                if domain.is_empty() || !domain.iter().any(|d| d == MISSING) {
                    return Err(Error::Schema(format!("domain of {} must include {MISSING:?}", f.name)));
                }
                let unique: HashSet<&String> = domain.iter().collect();
                if unique.len() != domain.len() {
                    return Err(Error::Schema(format!("domain of {} has duplicates", f.name)));
                }
            }
        }
        for (name, t) in self.grouping.iter().chain(&self.recode) {
            // a chain a -> b -> c would make the mapping order-dependent
            if t.values().any(|v| t.get(v).is_some_and(|w| w != v)) {
                return Err(Error::Schema(format!("mapping table for {name} is not idempotent")));
            }
        }
        Ok(())
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureDef> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn is_numeric(&self, name: &str) -> bool {
        self.feature(name).is_some_and(FeatureDef::is_numeric)
            || SQFT_COMPONENTS.contains(&name)
            || name == SQFT_TOTAL
            || name == GRADE_SCORE
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s: Self = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        FeatureSchema::hamilton().validate().unwrap();
        let shared = FeatureSchema::shared();
        shared.validate().unwrap();
        assert_eq!(shared.features.len(), 17);
        assert!(shared.feature("sqft_floor2").is_none());
        assert!(shared.feature(ATTIC_CATEGORY).is_some());
    }

    #[test]
    fn validation_catches_bad_domains() {
        let mut s = FeatureSchema::hamilton();
        s.features.push(FeatureDef { name: "x".into(), kind: FeatureKind::Categorical { domain: vec!["A".into()] } });
        assert!(s.validate().is_err());
        let mut s = FeatureSchema::hamilton();
        s.features.push(FeatureDef::numeric("stories"));
        assert!(s.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = FeatureSchema::shared();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"kind\":\"categorical\""));
        let back: FeatureSchema = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
