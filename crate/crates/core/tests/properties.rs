//! Randomized invariants across the tabular and recognition stages.

use std::collections::BTreeMap;

use ledgerlens::eval::{c2st_p_value, compute_metrics};
use ledgerlens::ingest::{clean_records, harmonize, one_hot_encode, DesignMatrix, FeatureSchema};
use ledgerlens::model::{adjust_distribution, fit_forest, AdjustmentParams, HyperParams, MaxFeatures, Regressor};
use ledgerlens::ocr::{confidence_filter, OcrPrediction};
use ledgerlens::synthcards::{generate_parcels, SynthParcelSpec};
use proptest::prelude::*;

fn preds(confs: &[u8]) -> Vec<OcrPrediction> {
    confs
        .iter()
        .enumerate()
        .map(|(i, c)| OcrPrediction {
            doc_id: format!("d{}", i % 5),
            column_name: "BUILDINGS".into(),
            row_index: i,
            text: i.to_string(),
            confidence: f64::from(*c) / 10.0,
        })
        .collect()
}

proptest! {
    #[test]
    fn filter_keeps_ceiling_and_grows_with_fraction(confs in prop::collection::vec(0u8..=10, 0..60), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let p = preds(&confs);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (k_lo, d_lo) = confidence_filter(&p, lo);
        let (k_hi, _) = confidence_filter(&p, hi);
        prop_assert_eq!(k_lo.len() + d_lo.len(), p.len());
        prop_assert_eq!(k_lo.len(), (lo * p.len() as f64 - 1e-9).ceil().max(0.0) as usize);
        prop_assert!(k_lo.iter().all(|x| k_hi.contains(x)));
    }

    #[test]
    fn metrics_scale_mae_and_nothing_else(pairs in prop::collection::vec((1.0f64..1e4, 0.5f64..1.5), 2..30), c in 0.01f64..100.0) {
        let pairs: Vec<(f64, f64)> = pairs.iter().map(|(t, r)| (t * r, *t)).collect();
        let base = compute_metrics(&pairs).unwrap();
        let scaled: Vec<(f64, f64)> = pairs.iter().map(|(p, t)| (p * c, t * c)).collect();
        let s = compute_metrics(&scaled).unwrap();
        prop_assert!((s.mae - c * base.mae).abs() <= 1e-9 * (1.0 + c * base.mae));
        prop_assert!((s.mape - base.mape).abs() <= 1e-9 * (1.0 + base.mape));
        prop_assert!(base.within_5 <= base.within_10 && base.within_10 <= base.within_20);
    }

    #[test]
    fn adjustment_round_trips(ys in prop::collection::vec(0.0f64..1e5, 1..20), ms in 1.0f64..1e4, ss in 1.0f64..1e4, mt in 1.0f64..1e4, st in 1.0f64..1e4) {
        let p = AdjustmentParams { mu_source: ms, sigma_source: ss, mu_target: mt, sigma_target: st, target_sample_n: 0 };
        let back = adjust_distribution(&adjust_distribution(&ys, &p).unwrap(), &p.inverse()).unwrap();
        for (a, b) in ys.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn p_value_falls_with_accuracy(a in 0.0f64..=1.0, b in 0.0f64..=1.0, n in 10usize..500) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(c2st_p_value(hi, n) <= c2st_p_value(lo, n));
    }
}

fn encoded(seed: u64) -> (FeatureSchema, DesignMatrix<f64>) {
    let data = generate_parcels(&SynthParcelSpec { seed, n: 300, missing_rate: 0.0, ..SynthParcelSpec::default() }).unwrap();
    let schema = FeatureSchema::hamilton();
    let records = harmonize(clean_records(data.records, &schema), &schema).unwrap();
    let (_, m) = one_hot_encode::<f64>(&records, &schema).unwrap();
    (schema, m)
}

#[test]
fn cleaning_is_idempotent() {
    let data = generate_parcels(&SynthParcelSpec { seed: 11, n: 300, ..SynthParcelSpec::default() }).unwrap();
    let schema = FeatureSchema::hamilton();
    let once = clean_records(data.records, &schema);
    assert_eq!(clean_records(once.clone(), &schema), once);
}

#[test]
fn one_hot_groups_have_exactly_one_indicator() {
    let (schema, m) = encoded(12);
    for f in schema.features.iter().filter(|f| !f.is_numeric()) {
        let cols: Vec<usize> = (0..m.n_cols()).filter(|&j| m.column_sources[j] == f.name).collect();
        assert!(!cols.is_empty(), "{}", f.name);
        for i in 0..m.n_rows() {
            assert_eq!(cols.iter().map(|&j| m.get(i, j)).sum::<f64>(), 1.0, "{} row {i}", f.name);
        }
    }
}

#[test]
fn forest_predictions_stay_within_training_targets() {
    let (_, m) = encoded(13);
    let hp = HyperParams { n_estimators: 20, max_depth: 6, min_samples_split: 2, max_features: MaxFeatures::Sqrt, seed: 3 };
    let forest = fit_forest(&m, &hp).unwrap();
    let y = m.target().unwrap();
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    // far outside the training range on every column
    let probe: Vec<Vec<f64>> = vec![vec![-1e9; m.n_cols()], vec![1e9; m.n_cols()]];
    let probe = DesignMatrix::new(
        vec!["lo".into(), "hi".into()],
        m.columns.clone(),
        m.column_sources.clone(),
        probe.concat(),
        None,
    )
    .unwrap();
    for p in forest.predict(&m).unwrap().into_iter().chain(forest.predict(&probe).unwrap()) {
        assert!(p >= lo && p <= hi, "{p} outside [{lo}, {hi}]");
    }
}

#[test]
fn importance_roll_up_preserves_the_total() {
    let (_, m) = encoded(14);
    let hp = HyperParams { n_estimators: 10, seed: 1, ..HyperParams::desk() };
    let forest = fit_forest(&m, &hp).unwrap();
    let by_feature = forest.feature_importances();
    let by_column = forest.column_importances();
    assert!((by_feature.values().sum::<f64>() - by_column.iter().sum::<f64>()).abs() < 1e-9);
    let mut rolled: BTreeMap<&str, f64> = BTreeMap::new();
    for (j, v) in by_column.iter().enumerate() {
        *rolled.entry(m.column_sources[j].as_str()).or_default() += v;
    }
    for (k, v) in &by_feature {
        assert!((rolled[k.as_str()] - v).abs() < 1e-9, "{k}");
    }
}
