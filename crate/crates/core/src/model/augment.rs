use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::ingest::{normalize_parcel_id, Label, LabelSource, ParcelRecord, DEFAULT_LABEL_YEAR};
use crate::num::ceil_fraction;
use crate::ocr::{normalize_prediction, OcrPrediction};

/// Copies of the feature records whose parcel has a usable OCR reading,
/// labeled with the normalized value. Unparseable readings are skipped;
/// zeros are kept here and dropped by [`augment_training`].
pub fn ocr_labeled_records(features: &[ParcelRecord], preds: &[OcrPrediction]) -> Vec<ParcelRecord> {
    let mut by_id: HashMap<String, (u64, f64)> = HashMap::new();
    for p in preds {
        let (Ok(id), Ok(v)) = (normalize_parcel_id(&[&p.doc_id]), normalize_prediction(p)) else { continue };
        by_id.entry(id).or_insert((v, p.confidence));
    }
    features
        .iter()
        .filter_map(|r| {
            let (v, c) = by_id.get(&r.parcel_id)?;
            let mut r = r.clone();
            r.label = Some(Label { value_dollars: *v, year: DEFAULT_LABEL_YEAR, handwritten: false });
            r.label_source = LabelSource::Ocr { confidence: *c };
            Some(r)
        })
        .collect()
}

fn ocr_confidence(r: &ParcelRecord) -> f64 {
    match r.label_source {
        LabelSource::Ocr { confidence } => confidence,
        _ => 1.0,
    }
}

/// Hand labels plus the most confident `ceil(retain * n)` nonzero OCR
/// labels. A parcel with a hand label never takes its OCR label.
pub fn augment_training(hand: &[ParcelRecord], ocr: &[ParcelRecord], retain: f64) -> Result<Vec<ParcelRecord>> {
    if !(retain > 0.0 && retain <= 1.0) {
        return Err(Error::Parameter(format!("retain fraction {retain} outside (0, 1]")));
    }
    let mut pool: Vec<&ParcelRecord> = ocr.iter().filter(|r| r.label.is_some_and(|l| l.value_dollars > 0)).collect();
    pool.sort_by(|a, b| ocr_confidence(b).total_cmp(&ocr_confidence(a)).then_with(|| a.parcel_id.cmp(&b.parcel_id)));
    pool.truncate(ceil_fraction(pool.len(), retain));
    let mut out: Vec<ParcelRecord> = hand.iter().filter(|r| r.label.is_some()).cloned().collect();
    let mut taken: BTreeSet<String> = out.iter().map(|r| r.parcel_id.clone()).collect();
    for r in pool {
        if taken.insert(r.parcel_id.clone()) {
            out.push(r.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(id: &str, v: u64, src: LabelSource) -> ParcelRecord {
        let mut r = ParcelRecord::new(id, "h");
        r.label = Some(Label { value_dollars: v, year: 1933, handwritten: false });
        r.label_source = src;
        r
    }

    #[test]
    fn hand_label_wins_and_zeros_dropped() {
        let hand = vec![labeled("P1", 3000, LabelSource::Hand)];
        let ocr = vec![
            labeled("P1", 2900, LabelSource::Ocr { confidence: 0.99 }),
            labeled("P2", 0, LabelSource::Ocr { confidence: 0.99 }),
            labeled("P3", 1500, LabelSource::Ocr { confidence: 0.5 }),
        ];
        let out = augment_training(&hand, &ocr, 1.0).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].label.unwrap().value_dollars, 3000);
        assert_eq!(out[0].label_source, LabelSource::Hand);
        assert_eq!(out[1].parcel_id, "P3");
    }

    #[test]
    fn retain_keeps_most_confident() {
        let ocr: Vec<_> = (0..10).map(|i| labeled(&format!("Q{i}"), 100, LabelSource::Ocr { confidence: i as f64 / 10.0 })).collect();
        let out = augment_training(&[], &ocr, 0.5).unwrap();
        let ids: Vec<&str> = out.iter().map(|r| r.parcel_id.as_str()).collect();
        assert_eq!(ids, ["Q9", "Q8", "Q7", "Q6", "Q5"]);
        assert!(augment_training(&[], &ocr, 0.0).is_err());
    }

    #[test]
    fn ocr_join() {
        let feats = vec![ParcelRecord::new("A1", "h"), ParcelRecord::new("B2", "h")];
        let preds = vec![OcrPrediction {
            doc_id: "a-1".into(),
            column_name: "BUILDINGS".into(),
            row_index: 0,
            text: "3,085".into(),
            confidence: 0.9,
        }];
        let out = ocr_labeled_records(&feats, &preds);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].label.unwrap().value_dollars, 3085);
        assert_eq!(out[0].label_source, LabelSource::Ocr { confidence: 0.9 });
    }
}
