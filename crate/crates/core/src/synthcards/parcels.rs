use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{save_tract_mapping, TractTable};
use crate::ingest::{
    write_features_csv, write_labels_csv, FieldValue, Label, LabelSource, LabeledParcel, ParcelRecord, ATTIC_CATEGORY,
    ATTIC_FULL_FLAG, DEFAULT_LABEL_YEAR, GRADE, GRADE_ORDER, SQFT_TOTAL,
};

/// Cost-table valuation: living area priced by grade, depreciated by age,
/// plus fixed amounts per amenity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValuationParams {
    /// $/sqft of living area, one rate per grade from lowest to highest.
    pub base_rates: [f64; 9],
    /// Fraction of the grade rate paid for basement and attic area.
    pub secondary_area_factor: f64,
    pub base_cost: f64,
    pub room_adder: f64,
    pub full_bath_adder: f64,
    pub half_bath_adder: f64,
    pub fireplace_adder: f64,
    /// Per garage space.
    pub garage_adder: f64,
    /// Brick or stone walls.
    pub masonry_adder: f64,
    pub central_air_adder: f64,
    /// Hot water or steam heat.
    pub hydronic_heat_adder: f64,
    /// Added per neighbourhood index step away from the middle one.
    pub neighborhood_step: f64,
    pub depreciation_per_year: f64,
    pub min_condition: f64,
}

impl Default for ValuationParams {
    fn default() -> Self {
        Self {
            base_rates: [0.9, 1.1, 1.3, 1.6, 1.9, 2.3, 2.8, 3.4, 4.2],
            secondary_area_factor: 0.3,
            base_cost: 1000.0,
            room_adder: 40.0,
            full_bath_adder: 200.0,
            half_bath_adder: 80.0,
            fireplace_adder: 120.0,
            garage_adder: 150.0,
            masonry_adder: 400.0,
            central_air_adder: 300.0,
            hydronic_heat_adder: 200.0,
            neighborhood_step: 60.0,
            depreciation_per_year: 0.002,
            min_condition: 0.8,
        }
    }
}

impl ValuationParams {
    /// Value of a parcel in the labelling year; uses the canonical grade
    /// names, so it applies to records before any county recoding.
    pub fn value(&self, f: &ParcelFacts) -> f64 {
        let rate = self.base_rates[f.grade];
        let condition = (1.0 - self.depreciation_per_year * (DEFAULT_LABEL_YEAR as f64 - f.year_built)).max(self.min_condition);
        let area = f.living_sqft + self.secondary_area_factor * (f.basement_sqft + f.attic_sqft);
        let structure = rate * area * condition;
        let nbhd = (f.neighborhood as f64 - (NEIGHBORHOODS as f64 - 1.0) / 2.0).round();
        structure
            + self.base_cost
            + self.room_adder * f.rooms
            + self.full_bath_adder * f.full_baths
            + self.half_bath_adder * f.half_baths
            + self.fireplace_adder * f.fireplaces
            + self.garage_adder * f.garage_capacity
            + if f.masonry { self.masonry_adder } else { 0.0 }
            + if f.central_air { self.central_air_adder } else { 0.0 }
            + if f.hydronic_heat { self.hydronic_heat_adder } else { 0.0 }
            + self.neighborhood_step * nbhd
    }
}

const NEIGHBORHOODS: usize = 12;

/// The drawn quantities the valuation depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParcelFacts {
    /// Index into the grade order.
    pub grade: usize,
    pub year_built: f64,
    pub living_sqft: f64,
    pub basement_sqft: f64,
    pub attic_sqft: f64,
    pub rooms: f64,
    pub full_baths: f64,
    pub half_baths: f64,
    pub fireplaces: f64,
    pub garage_capacity: f64,
    pub neighborhood: usize,
    pub masonry: bool,
    pub central_air: bool,
    pub hydronic_heat: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingMechanism {
    /// Cards go missing independently of the features.
    Mar,
    /// Larger houses lose their cards four times as often.
    Shifted,
}

/// Field naming of the emitted features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountyStyle {
    /// Full field set with descriptive grades.
    Hamilton,
    /// Shared fields only, letter grades and capitalised attic wording.
    Franklin,
}

impl CountyStyle {
    pub fn name(self) -> &'static str {
        match self {
            CountyStyle::Hamilton => "hamilton",
            CountyStyle::Franklin => "franklin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParcelSpec {
    pub seed: u64,
    pub n: usize,
    pub valuation: ValuationParams,
    /// Label noise standard deviation as a fraction of the mean noiseless
    /// value.
    pub noise_sigma_fraction: f64,
    pub mechanism: MissingMechanism,
    /// Overall share of parcels whose card is missing.
    pub missing_rate: f64,
    pub county: CountyStyle,
    pub n_tracts: usize,
}

impl Default for SynthParcelSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n: 1000,
            valuation: ValuationParams::default(),
            noise_sigma_fraction: 0.1,
            mechanism: MissingMechanism::Mar,
            missing_rate: 0.3,
            county: CountyStyle::Hamilton,
            n_tracts: 20,
        }
    }
}

impl SynthParcelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Parameter("n must be at least 1".into()));
        }
        if self.valuation.base_rates.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Parameter("base rates must be positive".into()));
        }
        if !(self.noise_sigma_fraction >= 0.0) || !(0.0..1.0).contains(&self.missing_rate) || self.n_tracts == 0 {
            return Err(Error::Parameter("noise must be non-negative, missing rate in [0, 1), tracts at least 1".into()));
        }
        Ok(())
    }
}

/// A generated dataset. `records`, `facts`, `noiseless` and `card_missing`
/// are parallel.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParcels {
    /// Features as the county would publish them, with the label attached
    /// when the card survives.
    pub records: Vec<ParcelRecord>,
    pub facts: Vec<ParcelFacts>,
    pub noiseless: Vec<f64>,
    pub card_missing: Vec<bool>,
    pub labels: Vec<LabeledParcel>,
    pub tracts: TractTable,
    pub mapping: BTreeMap<String, String>,
}

impl SynthParcels {
    /// Writes `features.csv`, `labels.csv`, `tracts.csv`, `tract_map.csv`
    /// and `truth.csv` (noiseless value and card status per parcel).
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_features_csv(&dir.join("features.csv"), &self.records)?;
        write_labels_csv(&dir.join("labels.csv"), &self.labels)?;
        self.tracts.save(&dir.join("tracts.csv"))?;
        save_tract_mapping(&dir.join("tract_map.csv"), &self.mapping)?;
        let mut w = csv::Writer::from_path(dir.join("truth.csv"))?;
        w.write_record(["parcel_id", "noiseless_value", "card_missing"])?;
        for ((r, v), m) in self.records.iter().zip(&self.noiseless).zip(&self.card_missing) {
            w.write_record([r.parcel_id.as_str(), &format!("{v:.6}"), if *m { "1" } else { "0" }])?;
        }
        w.flush()?;
        Ok(())
    }
}

const STYLES: [&str; 7] = ["Bungalow", "Cape Cod", "Colonial", "Conventional", "Tudor", "Victorian", "Other"];
const WALLS: [&str; 6] = ["Frame", "Brick", "Stone", "Stucco", "Siding", "Other"];
const HEATING: [&str; 6] = ["None", "Forced Air", "Hot Water", "Steam", "Electric", "Other"];
const AC: [&str; 3] = ["None", "Central", "Partial"];
const LAND_USE: [&str; 5] = ["510", "520", "530", "550", "599"];
const GRADE_WEIGHTS: [f64; 9] = [0.01, 0.04, 0.12, 0.30, 0.22, 0.14, 0.09, 0.05, 0.03];
const FRANKLIN_GRADES: [&str; 9] = ["E", "D", "C-", "C", "C+", "B", "B+", "A", "AA"];

fn weighted<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn pick<R: Rng>(rng: &mut R, options: &[&str]) -> FieldValue {
    FieldValue::Cat(options.choose(rng).expect("non-empty options").to_string())
}

fn draw_parcel<R: Rng>(rng: &mut R, id: &str, county: CountyStyle) -> (ParcelRecord, ParcelFacts) {
    use FieldValue::{Cat, Num};
    let grade = weighted(rng, &GRADE_WEIGHTS);
    let stories = *[1.0, 1.5, 2.0].choose(rng).expect("stories");
    let floor1 = rng.random_range(800.0f64..2000.0).round();
    let floor2 = if stories == 2.0 { (floor1 * rng.random_range(0.85..1.0)).round() } else { 0.0 };
    let half_floor = if stories == 1.5 { (floor1 * rng.random_range(0.4..0.6)).round() } else { 0.0 };
    let living = floor1 + floor2 + half_floor;
    let basement_type = ["None", "Crawl", "Partial", "Full"][weighted(rng, &[0.1, 0.15, 0.25, 0.5])];
    let basement = match basement_type {
        "Full" => (floor1 * rng.random_range(0.8..1.0)).round(),
        "Partial" => (floor1 * rng.random_range(0.3..0.6)).round(),
        _ => 0.0,
    };
    let attic = if rng.random_bool(0.5) { (floor1 * rng.random_range(0.2..0.5)).round() } else { 0.0 };
    let attic_full = attic > 0.0 && rng.random_bool(0.4);
    let year_built = rng.random_range(1850..=1932) as f64;
    let rooms = (living / 250.0 + rng.random_range(-1.0..1.0)).round().max(3.0);
    let full_baths = 1.0 + f64::from(u8::from(living > 1800.0)) + f64::from(u8::from(rng.random_bool(0.2)));
    let half_baths = f64::from(u8::from(rng.random_bool(0.4)));
    let fireplaces = weighted(rng, &[0.5, 0.35, 0.15]) as f64;
    let garage_type = ["None", "Attached", "Detached", "Basement", "Carport"][weighted(rng, &[0.3, 0.2, 0.35, 0.05, 0.1])];
    let garage_capacity = if garage_type == "None" { 0.0 } else { rng.random_range(1..=2) as f64 };
    let neighborhood = rng.random_range(0..NEIGHBORHOODS);
    let wall = *WALLS.choose(rng).expect("walls");
    let heating = *HEATING.choose(rng).expect("heating");
    let ac = *AC.choose(rng).expect("air conditioning");

    let facts = ParcelFacts {
        grade,
        year_built,
        living_sqft: living,
        basement_sqft: basement,
        attic_sqft: attic,
        rooms,
        full_baths,
        half_baths,
        fireplaces,
        garage_capacity,
        neighborhood,
        masonry: matches!(wall, "Brick" | "Stone"),
        central_air: ac == "Central",
        hydronic_heat: matches!(heating, "Hot Water" | "Steam"),
    };
    let attic_cat = match (attic > 0.0, attic_full) {
        (false, _) => "No attic",
        (true, false) => "Partial attic",
        (true, true) => "Full attic",
    };
    let mut r = ParcelRecord::new(id, county.name())
        .with(SQFT_TOTAL, Num(living))
        .with("sqft_floor1", Num(floor1))
        .with("stories", Num(stories))
        .with("year_built", Num(year_built))
        .with("land_use_code", pick(rng, &LAND_USE))
        .with("parcels_in_sale", Num(1.0))
        .with("exterior_wall", Cat(wall.into()))
        .with("basement_type", Cat(basement_type.into()))
        .with("heating", Cat(heating.into()))
        .with("air_conditioning", Cat(ac.into()))
        .with("total_rooms", Num(rooms))
        .with("full_baths", Num(full_baths))
        .with("half_baths", Num(half_baths))
        .with("fireplaces", Num(fireplaces))
        .with("garage_capacity", Num(garage_capacity));
    match county {
        CountyStyle::Hamilton => {
            r = r
                .with(GRADE, Cat(GRADE_ORDER[grade].into()))
                .with("sqft_attic", Num(attic))
                .with(ATTIC_FULL_FLAG, Cat(if attic_full { "Y" } else { "N" }.into()))
                .with("sqft_basement", Num(basement))
                .with("sqft_floor2", Num(floor2))
                .with("sqft_half_floor", Num(half_floor))
                .with("style", pick(rng, &STYLES))
                .with("garage_type", Cat(garage_type.into()))
                .with("neighborhood", Cat(format!("N{:02}", neighborhood + 1)));
        }
        CountyStyle::Franklin => {
            let wording = attic_cat.replace("attic", "Attic");
            r = r.with(GRADE, Cat(FRANKLIN_GRADES[grade].into())).with(ATTIC_CATEGORY, Cat(wording));
        }
    }
    (r, facts)
}

/// Draws `spec.n` parcels, values them, adds label noise, removes the
/// labels of parcels whose card is missing and assigns census tracts.
pub fn generate_parcels(spec: &SynthParcelSpec) -> Result<SynthParcels> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.n.to_string().len().max(6);
    let (mut records, facts): (Vec<ParcelRecord>, Vec<ParcelFacts>) =
        (0..spec.n).map(|i| draw_parcel(&mut rng, &format!("P{:0width$}", i + 1), spec.county)).unzip();
    let noiseless: Vec<f64> = facts.iter().map(|f| spec.valuation.value(f)).collect();
    let mean = noiseless.iter().sum::<f64>() / spec.n as f64;
    let sigma = spec.noise_sigma_fraction * mean;

    let mut sorted: Vec<f64> = facts.iter().map(|f| f.living_sqft).collect();
    sorted.sort_by(f64::total_cmp);
    let median_sqft = sorted[sorted.len() / 2];
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut labels = Vec::new();
    let mut card_missing = Vec::with_capacity(spec.n);
    for ((r, f), v) in records.iter_mut().zip(&facts).zip(&noiseless) {
        let e = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        let p_missing = match spec.mechanism {
            MissingMechanism::Mar => spec.missing_rate,
            MissingMechanism::Shifted if f.living_sqft >= median_sqft => (1.6 * spec.missing_rate).min(1.0),
            MissingMechanism::Shifted => 0.4 * spec.missing_rate,
        };
        let missing = rng.random_bool(p_missing);
        let handwritten = rng.random_bool(0.3);
        card_missing.push(missing);
        if missing {
            continue;
        }
        let label = Label { value_dollars: (v + e).round().max(1.0) as u64, year: DEFAULT_LABEL_YEAR, handwritten };
        r.label = Some(label);
        r.label_source = LabelSource::Hand;
        labels.push(LabeledParcel { parcel_id: r.parcel_id.clone(), label, source: LabelSource::Hand });
    }

    let variables: Vec<String> =
        ["median_income", "pct_black", "pct_owner_occupied", "pct_poverty"].iter().map(|s| s.to_string()).collect();
    let income = Normal::new(55_000.0, 15_000.0).expect("income distribution");
    let tracts = TractTable {
        variables,
        rows: (0..spec.n_tracts)
            .map(|t| {
                let row: Vec<f64> = vec![
                    f64::max(income.sample(&mut rng), 8_000.0).round(),
                    rng.random_range(0.0..60.0),
                    rng.random_range(20.0..90.0),
                    rng.random_range(2.0..40.0),
                ];
                (format!("T{:04}", t + 1), row)
            })
            .collect(),
    };
    let mapping = records
        .iter()
        .map(|r| (r.parcel_id.clone(), format!("T{:04}", rng.random_range(0..spec.n_tracts) + 1)))
        .collect();
    Ok(SynthParcels { records, facts, noiseless, card_missing, labels, tracts, mapping })
}
