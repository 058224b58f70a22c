//! Recognition of digit strings in rectified cells.
//!
//! Backends sit behind [`OcrBackend`]; the module adds the blank-to-zero
//! normalization, confidence-ranked retention and an order-preserving batch
//! driver that never aborts on a single failing cell.

mod glyph;
mod remote;

pub use glyph::GlyphCorrelationBackend;
pub use remote::{RemoteOcrBackend, RemoteOcrConfig};

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::imagecore::GrayImage;
use crate::num::ceil_fraction;

/// Identifies one cell of one document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub doc_id: String,
    pub column_name: String,
    pub row_index: usize,
}

impl CellKey {
    pub fn new(doc_id: impl Into<String>, column_name: impl Into<String>, row_index: usize) -> Self {
        Self { doc_id: doc_id.into(), column_name: column_name.into(), row_index }
    }

    /// `{doc_id}_{column}_{row}`, the stem of the cell's image file.
    pub fn cell_id(&self) -> String {
        format!("{}_{}_{}", self.doc_id, self.column_name, self.row_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrPrediction {
    pub doc_id: String,
    pub column_name: String,
    pub row_index: usize,
    pub text: String,
    pub confidence: f64,
}

impl OcrPrediction {
    pub fn key(&self) -> CellKey {
        CellKey::new(self.doc_id.clone(), self.column_name.clone(), self.row_index)
    }

    fn order_key(&self) -> (&str, &str, usize) {
        (&self.doc_id, &self.column_name, self.row_index)
    }
}

/// Raw backend output for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Recognition {
    pub text: String,
    pub confidence: f64,
    /// Requests spent, including retries.
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordBox {
    pub text: String,
    pub rect: Rect,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub recognize_cell: bool,
    pub word_boxes: bool,
    /// Safe to call from several threads at once.
    pub concurrent: bool,
}

pub trait OcrBackend: Send + Sync {
    fn name(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    fn recognize_cell(&self, key: &CellKey, cell: &GrayImage) -> Result<Recognition>;

    fn word_boxes(&self, _img: &GrayImage) -> Result<Vec<WordBox>> {
        Err(Error::Unsupported("word boxes"))
    }
}

/// Runs `backend` on one cell.
pub fn recognize(backend: &dyn OcrBackend, key: &CellKey, cell: &GrayImage) -> Result<OcrPrediction> {
    if !backend.capabilities().recognize_cell {
        return Err(Error::Unsupported("cell recognition"));
    }
    let r = backend.recognize_cell(key, cell)?;
    if !r.confidence.is_finite() {
        return Err(Error::Protocol(format!("{} returned confidence {}", backend.name(), r.confidence)));
    }
    Ok(OcrPrediction {
        doc_id: key.doc_id.clone(),
        column_name: key.column_name.clone(),
        row_index: key.row_index,
        text: r.text,
        confidence: r.confidence,
    })
}

/// Fixture-keyed answers, looked up by cell id first and doc id second.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    pub answers: HashMap<String, (String, f64)>,
}

impl MockBackend {
    pub fn new<K: Into<String>, T: Into<String>>(answers: impl IntoIterator<Item = (K, (T, f64))>) -> Self {
        Self { answers: answers.into_iter().map(|(k, (t, c))| (k.into(), (t.into(), c))).collect() }
    }
}

impl OcrBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { recognize_cell: true, word_boxes: false, concurrent: true }
    }

    fn recognize_cell(&self, key: &CellKey, _cell: &GrayImage) -> Result<Recognition> {
        self.answers
            .get(&key.cell_id())
            .or_else(|| self.answers.get(&key.doc_id))
            .map(|(text, confidence)| Recognition { text: text.clone(), confidence: *confidence, attempts: 1 })
            .ok_or_else(|| Error::Protocol(format!("mock has no answer for {}", key.cell_id())))
    }
}

const SEPARATORS: [char; 4] = [',', '.', '$', ' '];

/// Dollar value of a prediction: separators stripped, blank read as zero.
pub fn normalize_text(text: &str) -> Result<u64> {
    let digits: String = text.chars().filter(|c| !SEPARATORS.contains(c)).collect();
    if digits.is_empty() {
        return Ok(0);
    }
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(Error::InvalidCharacters(text.to_string()));
    }
    digits.parse().map_err(|_| Error::InvalidCharacters(text.to_string()))
}

pub fn normalize_prediction(pred: &OcrPrediction) -> Result<u64> {
    normalize_text(&pred.text)
}

/// Keeps the `ceil(retain_fraction * n)` most confident predictions.
///
/// Ties in confidence are ordered by `(doc_id, column_name, row_index)`;
/// both halves come back in that ranking order.
pub fn confidence_filter(preds: &[OcrPrediction], retain_fraction: f64) -> (Vec<OcrPrediction>, Vec<OcrPrediction>) {
    let mut ranked: Vec<&OcrPrediction> = preds.iter().collect();
    ranked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.order_key().cmp(&b.order_key())));
    let keep = ceil_fraction(preds.len(), retain_fraction.clamp(0.0, 1.0));
    let kept = ranked[..keep].iter().map(|p| (*p).clone()).collect();
    let dropped = ranked[keep..].iter().map(|p| (*p).clone()).collect();
    (kept, dropped)
}

/// Outcome for one cell of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEntry {
    pub key: CellKey,
    pub outcome: std::result::Result<OcrPrediction, String>,
    pub attempts: u32,
}

/// Recognizes every cell; the output order equals the input order.
///
/// Concurrent backends run on the rayon pool, others sequentially.
pub fn batch_recognize(backend: &dyn OcrBackend, cells: Vec<(CellKey, GrayImage)>) -> Vec<BatchEntry> {
    let run = |(key, cell): &(CellKey, GrayImage)| -> BatchEntry {
        let outcome = backend.recognize_cell(key, cell).and_then(|r| {
            let attempts = r.attempts;
            if !r.confidence.is_finite() {
                return Err(Error::Protocol(format!("confidence {}", r.confidence)));
            }
            let pred = OcrPrediction {
                doc_id: key.doc_id.clone(),
                column_name: key.column_name.clone(),
                row_index: key.row_index,
                text: r.text,
                confidence: r.confidence,
            };
            Ok((pred, attempts))
        });
        match outcome {
            Ok((pred, attempts)) => BatchEntry { key: key.clone(), outcome: Ok(pred), attempts },
            Err(e) => {
                let attempts = match &e {
                    Error::BackendUnavailable { attempts, .. } => *attempts,
                    _ => 1,
                };
                log::warn!("OCR failed for {}: {e}", key.cell_id());
                BatchEntry { key: key.clone(), outcome: Err(e.to_string()), attempts }
            }
        }
    };
    if backend.capabilities().concurrent {
        cells.par_iter().map(run).collect()
    } else {
        cells.iter().map(run).collect()
    }
}

/// Writes `doc_id,column,row,text,confidence,value_dollars`; the value is
/// blank when the text does not normalize.
pub fn write_predictions_csv<W: Write>(out: W, preds: &[OcrPrediction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["doc_id", "column", "row", "text", "confidence", "value_dollars"])?;
    for p in preds {
        let value = normalize_prediction(p).map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            p.doc_id.as_str(),
            p.column_name.as_str(),
            &p.row_index.to_string(),
            p.text.as_str(),
            &format!("{:.6}", p.confidence),
            &value,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_predictions_csv(path: &Path, preds: &[OcrPrediction]) -> Result<()> {
    write_predictions_csv(std::fs::File::create(path)?, preds)
}

pub fn load_predictions_csv(path: &Path) -> Result<Vec<OcrPrediction>> {
    #[derive(Deserialize)]
    struct Row {
        doc_id: String,
        column: String,
        row: usize,
        text: String,
        confidence: f64,
    }
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize::<Row>()
        .map(|r| {
            let r = r?;
            Ok(OcrPrediction { doc_id: r.doc_id, column_name: r.column, row_index: r.row, text: r.text, confidence: r.confidence })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(doc: &str, row: usize, confidence: f64) -> OcrPrediction {
        OcrPrediction { doc_id: doc.into(), column_name: "BUILDINGS".into(), row_index: row, text: "1".into(), confidence }
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_text("").unwrap(), 0);
        assert_eq!(normalize_text("  ").unwrap(), 0);
        assert_eq!(normalize_text("1,250").unwrap(), 1250);
        assert_eq!(normalize_text("$3 085.").unwrap(), 3085);
        assert!(matches!(normalize_text("12a4"), Err(Error::InvalidCharacters(_))));
    }

    #[test]
    fn filter_tie_break_is_stable() {
        let preds = vec![pred("d", 0, 0.9), pred("b", 0, 0.5), pred("a", 0, 0.5), pred("c", 0, 0.1)];
        let (kept, dropped) = confidence_filter(&preds, 0.5);
        assert_eq!(kept.iter().map(|p| p.doc_id.as_str()).collect::<Vec<_>>(), ["d", "a"]);
        assert_eq!(dropped.len(), 2);
    }

    #[test]
    fn filter_counts() {
        let preds: Vec<_> = (0..1000).map(|i| pred("d", i, (i % 97) as f64 / 97.0)).collect();
        for (f, n) in [(0.90, 900), (0.95, 950), (0.99, 990), (1.0, 1000)] {
            let (k, d) = confidence_filter(&preds, f);
            assert_eq!((k.len(), d.len()), (n, 1000 - n));
        }
    }

    #[test]
    fn mock_passthrough_and_batch_order() {
        let mock = MockBackend::new([("cell42", ("1250", 0.8))]);
        let key = CellKey::new("cell42", "BUILDINGS", 0);
        let img = GrayImage::filled(4, 4, 255).unwrap();
        let p = recognize(&mock, &key, &img).unwrap();
        assert_eq!((p.text.as_str(), p.confidence), ("1250", 0.8));

        let answers: Vec<(String, (String, f64))> = (0..10).map(|i| (format!("d{i}"), (i.to_string(), 0.5))).collect();
        let mock = MockBackend::new(answers);
        let mut cells: Vec<_> = (0..10).map(|i| (CellKey::new(format!("d{i}"), "B", 0), img.clone())).collect();
        cells.push((CellKey::new("unknown", "B", 0), img.clone()));
        let out = batch_recognize(&mock, cells);
        assert_eq!(out.len(), 11);
        for (i, e) in out.iter().take(10).enumerate() {
            assert_eq!(e.outcome.as_ref().unwrap().text, i.to_string());
        }
        assert!(out[10].outcome.is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let mut preds = vec![pred("a", 0, 0.25), pred("b", 1, 1.0)];
        preds[1].text = "x".into();
        save_predictions_csv(&path, &preds).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("doc_id,column,row,text,confidence,value_dollars\n"));
        assert!(text.contains("a,BUILDINGS,0,1,0.250000,1\n"));
        assert!(text.contains("b,BUILDINGS,1,x,1.000000,\n"));
        assert_eq!(load_predictions_csv(&path).unwrap(), preds);
    }
}
