//! Parcel-side commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use ledgerlens::eval::{
    bias_audit, c2st_mar_test, cost_estimate, evaluate as evaluate_pairs, load_tract_mapping, metrics_table, C2stOptions,
    CostScenario, ParcelOutcome, TractTable,
};
use ledgerlens::ingest::{
    attach_labels, clean_records, harmonize, labeled, load_features_csv, load_labels_csv, one_hot_encode, split_indices,
    write_features_csv, write_labels_csv, FeatureSchema, LabeledParcel, OneHotEncoder, ParcelRecord, DEFAULT_LABEL_YEAR,
};
use ledgerlens::model::{
    adjust_distribution, augment_training, estimate_moments, expand_grid, fit_forest, grid_search as run_grid_search,
    ocr_labeled_records, AdjustmentParams, HyperParams, RandomForest, Regressor,
};
use ledgerlens::ocr::load_predictions_csv;
use ledgerlens::synthcards::{generate_parcels, CountyStyle, MissingMechanism};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{CliError, Ctx, OutArgs};

/// Feature source flags shared by the tabular commands.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Features CSV with `parcel_id` first.
    #[arg(long)]
    pub features: PathBuf,
    /// Labels CSV (`parcel_id,value_dollars,...`).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// `hamilton`, `shared` or a schema JSON file.
    #[arg(long, default_value = "hamilton")]
    pub schema: String,
    /// County of rows without a `county` column.
    #[arg(long, default_value = "hamilton")]
    pub county: String,
}

pub fn load_schema(name: &str) -> Result<FeatureSchema, CliError> {
    let schema = match name {
        "hamilton" => FeatureSchema::hamilton(),
        "shared" => FeatureSchema::shared(),
        path => FeatureSchema::load(Path::new(path)).map_err(|e| CliError::Config(format!("schema {path}: {e}")))?,
    };
    schema.validate()?;
    Ok(schema)
}

/// Raw row count and the cleaned, harmonized records with labels attached.
fn load_records(d: &DataArgs, schema: &FeatureSchema) -> Result<(usize, Vec<ParcelRecord>), CliError> {
    let mut records = load_features_csv(&d.features, schema, &d.county)?;
    let n_raw = records.len();
    if let Some(l) = &d.labels {
        attach_labels(&mut records, &load_labels_csv(l, Some(DEFAULT_LABEL_YEAR))?);
    }
    Ok((n_raw, harmonize(clean_records(records, schema), schema)?))
}

/// One predicted value per parcel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParcelPrediction {
    pub parcel_id: String,
    pub predicted: f64,
}

pub fn save_parcel_predictions(path: &Path, rows: &[ParcelPrediction]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_parcel_predictions(path: &Path) -> Result<Vec<ParcelPrediction>, CliError> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<Result<Vec<ParcelPrediction>, _>>()?)
}

fn label_values(path: &Path) -> Result<BTreeMap<String, f64>, CliError> {
    Ok(load_labels_csv(path, None)?.into_iter().map(|l| (l.parcel_id, l.label.value_dollars as f64)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CountyArg {
    Hamilton,
    Franklin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MechanismArg {
    Mar,
    Shifted,
}

#[derive(Debug, Args)]
pub struct SynthParcelsArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub county: Option<CountyArg>,
    /// How cards go missing.
    #[arg(long, value_enum)]
    pub mechanism: Option<MechanismArg>,
    #[arg(long)]
    pub missing_rate: Option<f64>,
    /// Label noise as a fraction of the mean value.
    #[arg(long)]
    pub noise: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn synth_parcels(ctx: &mut Ctx, a: SynthParcelsArgs) -> Result<bool, CliError> {
    let mut spec = ctx.cfg.synth_parcels.clone();
    spec.seed = ctx.cfg.seed;
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(c) = a.county {
        spec.county = match c {
            CountyArg::Hamilton => CountyStyle::Hamilton,
            CountyArg::Franklin => CountyStyle::Franklin,
        };
    }
    if let Some(m) = a.mechanism {
        spec.mechanism = match m {
            MechanismArg::Mar => MissingMechanism::Mar,
            MechanismArg::Shifted => MissingMechanism::Shifted,
        };
    }
    if let Some(r) = a.missing_rate {
        spec.missing_rate = r;
    }
    if let Some(s) = a.noise {
        spec.noise_sigma_fraction = s;
    }
    ctx.cfg.synth_parcels = spec.clone();
    let data = generate_parcels(&spec)?;
    let mut run = ctx.run("synth parcels", &a.out.out)?;
    data.write(&run.out_dir)?;
    for f in ["features.csv", "labels.csv", "tracts.csv", "tract_map.csv", "truth.csv"] {
        run.artifact(f);
    }
    run.write_json("spec.json", &spec)?;
    run.input("parcels_requested", spec.n);
    run.output("parcels", data.records.len());
    run.output("labels", data.labels.len());
    run.output("tracts", data.tracts.rows.len());
    run.finish()
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn ingest(ctx: &mut Ctx, a: IngestArgs) -> Result<bool, CliError> {
    let schema = load_schema(&a.data.schema)?;
    let (n_raw, records) = load_records(&a.data, &schema)?;
    let mut run = ctx.run("ingest", &a.out.out)?;
    write_features_csv(&run.artifact("cleaned.csv"), &records)?;
    let with_labels = labeled(&records);
    let labels: Vec<LabeledParcel> = with_labels
        .iter()
        .map(|r| LabeledParcel { parcel_id: r.parcel_id.clone(), label: r.label.expect("labeled"), source: r.label_source })
        .collect();
    write_labels_csv(&run.artifact("labels.csv"), &labels)?;
    let (enc, m) = one_hot_encode::<f64>(&records, &schema)?;
    m.save(&run.artifact("matrix.csv"))?;
    run.artifact("matrix.json");
    run.write_json("encoder.json", &enc)?;
    for r in &records {
        ctx.log.emit("ingest", &r.parcel_id, "clean", true, json!({ "labeled": r.label.is_some() }))?;
    }
    run.input("rows", n_raw);
    // dropping unusable rows is cleaning, not failure
    run.output("records", records.len());
    run.output("dropped_rows", n_raw - records.len());
    run.output("labeled", labels.len());
    run.output("columns", m.n_cols());
    run.finish()
}

#[derive(Debug, Clone, Args)]
pub struct ForestArgs {
    /// Hyperparameter preset: `table4` or `desk`.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub n_estimators: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_samples_split: Option<usize>,
    /// `sqrt`, `all` or a fraction.
    #[arg(long)]
    pub max_features: Option<String>,
}

fn hyperparams(ctx: &mut Ctx, f: &ForestArgs) -> Result<HyperParams, CliError> {
    let mut fc = ctx.cfg.forest.clone();
    if let Some(p) = &f.preset {
        fc.preset = p.clone();
    }
    fc.n_estimators = f.n_estimators.or(fc.n_estimators);
    fc.max_depth = f.max_depth.or(fc.max_depth);
    fc.min_samples_split = f.min_samples_split.or(fc.min_samples_split);
    fc.max_features = f.max_features.clone().or(fc.max_features);
    let hp = fc.resolve(ctx.cfg.seed)?;
    ctx.cfg.forest = fc;
    Ok(hp)
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// OCR predictions CSV whose confident readings extend the training set.
    #[arg(long)]
    pub ocr_predictions: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub ocr_retain: f64,
    /// Hold out this share of the labeled rows and report test metrics.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Print the resolved hyperparameters without fitting.
    #[arg(long)]
    pub dry_run: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn train(ctx: &mut Ctx, a: TrainArgs) -> Result<bool, CliError> {
    let hp = hyperparams(ctx, &a.forest)?;
    println!("{}", serde_json::to_string(&hp)?);
    let mut run = ctx.run("train", &a.out.out)?;
    run.write_json("hyperparams.json", &hp)?;
    if a.dry_run {
        return run.finish();
    }
    let schema = load_schema(&a.data.schema)?;
    let (n_raw, records) = load_records(&a.data, &schema)?;
    let hand = labeled(&records);
    let training = match &a.ocr_predictions {
        Some(p) => {
            let ocr = ocr_labeled_records(&records, &load_predictions_csv(p)?);
            run.input("ocr_labeled", ocr.len());
            augment_training(&hand, &ocr, a.ocr_retain)?
        }
        None => hand.clone(),
    };
    run.input("rows", n_raw);
    run.input("hand_labeled", hand.len());
    let (train_rows, test_rows) = match a.test_fraction {
        Some(f) => {
            let (tr, te) = split_indices(training.len(), f, ctx.cfg.seed)?;
            (tr.iter().map(|&i| training[i].clone()).collect(), te.iter().map(|&i| training[i].clone()).collect())
        }
        None => (training, Vec::new()),
    };
    let (enc, m) = one_hot_encode::<f64>(&train_rows, &schema)?;
    let forest = fit_forest(&m, &hp)?;
    forest.save(&run.artifact("model.json"))?;
    run.write_json("encoder.json", &enc)?;
    run.write_json("importances.json", &forest.feature_importances())?;
    if !test_rows.is_empty() {
        let tm = enc.transform::<f64>(&test_rows)?;
        let pred = forest.predict(&tm)?;
        let pairs: Vec<(f64, f64)> = pred.into_iter().zip(tm.target()?.iter().copied()).collect();
        let report = evaluate_pairs(&pairs)?;
        print!("{}", metrics_table(&[("test", &report.full)]));
        run.write_json("test_metrics.json", &report)?;
        run.output("test_rows", test_rows.len());
    }
    run.output("training_rows", train_rows.len());
    run.output("trees", forest.trees.len());
    run.finish()
}

#[derive(Debug, Args)]
pub struct GridSearchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long, value_delimiter = ',')]
    pub grid_n_estimators: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub grid_max_depth: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub grid_min_samples_split: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn grid_search(ctx: &mut Ctx, a: GridSearchArgs) -> Result<bool, CliError> {
    let base = hyperparams(ctx, &a.forest)?;
    let grid = expand_grid(&base, &a.grid_n_estimators, &a.grid_max_depth, &a.grid_min_samples_split);
    let schema = load_schema(&a.data.schema)?;
    let (n_raw, records) = load_records(&a.data, &schema)?;
    let rows = labeled(&records);
    let (_, m) = one_hot_encode::<f64>(&rows, &schema)?;
    let result = run_grid_search(&m, &grid, a.folds, ctx.cfg.seed)?;
    let mut run = ctx.run("grid-search", &a.out.out)?;
    result.write_csv(std::fs::File::create(run.artifact("grid.csv"))?)?;
    run.write_json("grid.json", &result)?;
    println!("{}", serde_json::to_string(&result.best)?);
    run.input("rows", n_raw);
    run.input("labeled", rows.len());
    run.output("grid_points", result.rows.len());
    run.finish()
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Defaults to `encoder.json` next to the model.
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn predict(ctx: &mut Ctx, a: PredictArgs) -> Result<bool, CliError> {
    let forest = RandomForest::<f64>::load(&a.model)?;
    let enc_path = a.encoder.clone().unwrap_or_else(|| a.model.with_file_name("encoder.json"));
    let enc: OneHotEncoder = serde_json::from_str(&std::fs::read_to_string(&enc_path)?)?;
    let schema = load_schema(&a.data.schema)?;
    let (n_raw, records) = load_records(&a.data, &schema)?;
    let m = enc.transform::<f64>(&records)?;
    let pred = forest.predict(&m)?;
    let rows: Vec<ParcelPrediction> =
        m.row_ids.iter().zip(pred).map(|(id, p)| ParcelPrediction { parcel_id: id.clone(), predicted: p }).collect();
    let mut run = ctx.run("predict", &a.out.out)?;
    save_parcel_predictions(&run.artifact("predictions.csv"), &rows)?;
    run.input("rows", n_raw);
    run.output("predictions", rows.len());
    run.output("dropped_rows", n_raw - rows.len());
    run.finish()
}

#[derive(Debug, Args)]
pub struct AdjustArgs {
    /// Parcel predictions CSV (`parcel_id,predicted`).
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub mu_source: Option<f64>,
    #[arg(long)]
    pub sigma_source: Option<f64>,
    #[arg(long)]
    pub mu_target: Option<f64>,
    #[arg(long)]
    pub sigma_target: Option<f64>,
    /// Hand-labeled target-county sample; its moments set the target.
    #[arg(long)]
    pub target_sample: Option<PathBuf>,
    /// Apply the reverse map.
    #[arg(long)]
    pub inverse: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn adjust(ctx: &mut Ctx, a: AdjustArgs) -> Result<bool, CliError> {
    let preds = load_parcel_predictions(&a.predictions)?;
    let values: Vec<f64> = preds.iter().map(|p| p.predicted).collect();
    let (mu_s, sd_s) = match (a.mu_source, a.sigma_source) {
        (Some(m), Some(s)) => (m, s),
        (None, None) => estimate_moments(&values)?,
        _ => return Err(CliError::Config("give both --mu-source and --sigma-source or neither".into())),
    };
    let (mu_t, sd_t, n_t) = match (a.mu_target, a.sigma_target, &a.target_sample) {
        (Some(m), Some(s), None) => (m, s, 0),
        (None, None, Some(p)) => {
            let sample: Vec<f64> = label_values(p)?.into_values().collect();
            let (m, s) = estimate_moments(&sample)?;
            (m, s, sample.len())
        }
        _ => return Err(CliError::Config("give --mu-target with --sigma-target, or --target-sample".into())),
    };
    let mut params =
        AdjustmentParams { mu_source: mu_s, sigma_source: sd_s, mu_target: mu_t, sigma_target: sd_t, target_sample_n: n_t };
    if a.inverse {
        params = params.inverse();
    }
    let adjusted = adjust_distribution(&values, &params)?;
    let rows: Vec<ParcelPrediction> = preds
        .iter()
        .zip(adjusted)
        .map(|(p, v)| ParcelPrediction { parcel_id: p.parcel_id.clone(), predicted: v })
        .collect();
    let mut run = ctx.run("adjust", &a.out.out)?;
    save_parcel_predictions(&run.artifact("adjusted.csv"), &rows)?;
    run.write_json("params.json", &params)?;
    run.input("predictions", preds.len());
    run.output("adjusted", rows.len());
    run.finish()
}

/// Predictions paired with labels by parcel id, in prediction order.
fn joined(preds: &[ParcelPrediction], labels: &BTreeMap<String, f64>) -> Vec<ParcelOutcome> {
    preds
        .iter()
        .filter_map(|p| {
            labels.get(&p.parcel_id).map(|&t| ParcelOutcome { parcel_id: p.parcel_id.clone(), predicted: p.predicted, actual: t })
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn evaluate(ctx: &mut Ctx, a: EvaluateArgs) -> Result<bool, CliError> {
    let preds = load_parcel_predictions(&a.predictions)?;
    let outcomes = joined(&preds, &label_values(&a.labels)?);
    let pairs: Vec<(f64, f64)> = outcomes.iter().map(|o| (o.predicted, o.actual)).collect();
    let report = evaluate_pairs(&pairs)?;
    let mut table = vec![("all", &report.full)];
    if let Some(t) = &report.trimmed {
        table.push(("middle 90%", t));
    }
    print!("{}", metrics_table(&table));
    let mut run = ctx.run("evaluate", &a.out.out)?;
    run.write_json("metrics.json", &report)?;
    run.input("predictions", preds.len());
    run.output("matched", outcomes.len());
    run.finish()
}

#[derive(Debug, Args)]
pub struct AuditBiasArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// `tract_id` followed by numeric variables.
    #[arg(long)]
    pub tracts: PathBuf,
    /// `parcel_id,tract_id`.
    #[arg(long)]
    pub tract_map: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn audit_bias(ctx: &mut Ctx, a: AuditBiasArgs) -> Result<bool, CliError> {
    let preds = load_parcel_predictions(&a.predictions)?;
    let outcomes = joined(&preds, &label_values(&a.labels)?);
    let report = bias_audit(&outcomes, &load_tract_mapping(&a.tract_map)?, &TractTable::load(&a.tracts)?)?;
    print!("{}", report.to_table());
    let mut run = ctx.run("audit-bias", &a.out.out)?;
    run.write_json("bias.json", &report)?;
    run.input("predictions", preds.len());
    run.output("matched", outcomes.len());
    run.finish()
}

#[derive(Debug, Args)]
pub struct AuditMarArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Label permutations for an exact p-value; 0 skips it.
    #[arg(long, default_value_t = 0)]
    pub permutations: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn audit_mar(ctx: &mut Ctx, a: AuditMarArgs) -> Result<bool, CliError> {
    let hp = hyperparams(ctx, &a.forest)?;
    let schema = load_schema(&a.data.schema)?;
    let (n_raw, mut records) = load_records(&a.data, &schema)?;
    for r in &mut records {
        // the test compares features only
        r.label_source = ledgerlens::ingest::LabelSource::None;
    }
    let (present, missing): (Vec<ParcelRecord>, Vec<ParcelRecord>) = records.into_iter().partition(|r| r.label.is_some());
    let enc = OneHotEncoder::fit(&[present.clone(), missing.clone()].concat(), &schema)?;
    let mut pm = enc.transform::<f64>(&present)?;
    pm.target = None;
    let mm = enc.transform::<f64>(&missing)?;
    let result = c2st_mar_test(&pm, &mm, ctx.cfg.seed, &C2stOptions { hyperparams: hp, permutations: a.permutations })?;
    println!("accuracy {:.4} on {} held-out rows, p = {:.3e}", result.test_accuracy, result.n_test, result.p_value);
    let mut run = ctx.run("audit-mar", &a.out.out)?;
    run.write_json("c2st.json", &result)?;
    run.input("rows", n_raw);
    run.output("with_label", present.len());
    run.output("without_label", missing.len());
    run.finish()
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Built-in scenario, e.g. `published`.
    #[arg(long)]
    pub preset: Option<String>,
    /// TOML file with a full scenario.
    #[arg(long, conflicts_with = "preset")]
    pub scenario: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn cost(ctx: &mut Ctx, a: CostArgs) -> Result<bool, CliError> {
    let scenario = match (&a.preset, &a.scenario, &ctx.cfg.cost) {
        (Some(p), _, _) => CostScenario::preset(p)?,
        (None, Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        (None, None, Some(c)) => c.clone(),
        (None, None, None) => CostScenario::published(),
    };
    let report = cost_estimate(&scenario)?;
    print!("{}", report.to_table());
    let mut run = ctx.run("cost", &a.out.out)?;
    run.write_json("scenario.json", &scenario)?;
    run.write_json("cost.json", &report)?;
    run.finish()
}
