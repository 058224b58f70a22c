//! Card batches end to end: align, segment, recognize, normalize and filter
//! by confidence. Per-document failures are recorded and the batch goes on.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{align_prepared, AlignmentLogEntry, AlignmentStatus, AlignmentPolicy, PreparedTemplate};
use crate::error::{Error, Result};
use crate::imagecore::{rectify_quad, GrayImage};
use crate::ocr::{batch_recognize, confidence_filter, normalize_prediction, CellKey, OcrBackend, OcrPrediction};
use crate::segment::{extract_first_cell, project_layout, FirstCellParams, HeaderLocator, TemplateLayout};

/// Which cells of an aligned card are recognized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellSelection {
    /// Every cell of the layout.
    #[default]
    All,
    /// Only the first entry of the header column.
    First,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub policy: AlignmentPolicy,
    pub first_cell: FirstCellParams,
    /// Column whose first entry the single-cell route extracts.
    pub header_word: String,
    pub cells: CellSelection,
    /// Share of the most confident predictions kept.
    pub retain: f64,
    /// Use the single-cell route when alignment is flagged.
    pub single_cell_fallback: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            policy: AlignmentPolicy::default(),
            first_cell: FirstCellParams::default(),
            header_word: "BUILDINGS".into(),
            cells: CellSelection::All,
            retain: 1.0,
            single_cell_fallback: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if !(self.retain > 0.0 && self.retain <= 1.0) {
            return Err(Error::Parameter(format!("retain {} outside (0, 1]", self.retain)));
        }
        if self.header_word.trim().is_empty() {
            return Err(Error::Parameter("header word is empty".into()));
        }
        Ok(())
    }
}

/// The template side of the comprehensive route.
pub struct TemplateContext<'a> {
    pub template: &'a PreparedTemplate,
    pub layout: &'a TemplateLayout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Comprehensive,
    SingleCell,
}

/// What happened to one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocReport {
    pub doc_id: String,
    pub alignment: Option<AlignmentLogEntry>,
    pub route: Option<Route>,
    pub cells_segmented: usize,
    /// Cells of an aligned card that could not be cut out, for example
    /// because they fall outside the scan.
    pub cells_failed: usize,
    pub cells_recognized: usize,
    pub error: Option<String>,
}

impl DocReport {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub input: usize,
    pub succeeded: usize,
    pub failed: usize,
}

impl StageCounts {
    pub fn tally(input: usize, succeeded: usize) -> Self {
        Self { input, succeeded, failed: input - succeeded }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub docs: Vec<DocReport>,
    /// Every recognized cell in document order.
    pub predictions: Vec<OcrPrediction>,
    pub kept: Vec<OcrPrediction>,
    pub dropped: Vec<OcrPrediction>,
    pub alignment: StageCounts,
    pub segmentation: StageCounts,
    pub recognition: StageCounts,
    /// Recognized cells whose text normalizes to a dollar value.
    pub normalization: StageCounts,
}

impl PipelineReport {
    pub fn failed_docs(&self) -> usize {
        self.docs.iter().filter(|d| !d.ok()).count()
    }
}

type Cells = Vec<(CellKey, GrayImage)>;

/// Locates the cells of one card.
pub fn segment_document(
    doc_id: &str,
    img: &GrayImage,
    ctx: Option<&TemplateContext<'_>>,
    locator: &dyn HeaderLocator,
    cfg: &PipelineConfig,
) -> (DocReport, Cells) {
    let mut report =
        DocReport { doc_id: doc_id.to_string(), alignment: None, route: None, cells_segmented: 0, cells_failed: 0, cells_recognized: 0, error: None };
    let mut cells = Vec::new();
    if let Some(ctx) = ctx {
        match align_prepared(img, ctx.template, &cfg.policy) {
            Ok(a) => {
                report.alignment = Some(a.log_entry(doc_id));
                if let (true, Some(h)) = (a.is_aligned(), a.homography) {
                    match comprehensive_cells(doc_id, img, ctx.layout, &h, cfg) {
                        Ok((c, failures)) => {
                            report.route = Some(Route::Comprehensive);
                            report.cells_failed = failures.len();
                            if !failures.is_empty() {
                                report.error = Some(failures.join("; "));
                            }
                            cells = c;
                        }
                        Err(e) => report.error = Some(e.to_string()),
                    }
                } else {
                    report.error = Some("alignment flagged for manual inspection".into());
                }
            }
            Err(e) => report.error = Some(e.to_string()),
        }
        if report.route.is_some() || !cfg.single_cell_fallback {
            report.cells_segmented = cells.len();
            return (report, cells);
        }
    }
    match extract_first_cell(img, doc_id, &cfg.header_word, locator, &cfg.first_cell) {
        Ok((region, cell)) => {
            report.route = Some(Route::SingleCell);
            report.error = None;
            cells.push((CellKey::new(doc_id, region.column_name, region.row_index), cell));
        }
        Err(e) => {
            let prior = report.error.take().map(|p| format!("{p}; ")).unwrap_or_default();
            report.error = Some(format!("{prior}{e}"));
        }
    }
    report.cells_segmented = cells.len();
    (report, cells)
}

fn comprehensive_cells(
    doc_id: &str,
    img: &GrayImage,
    layout: &TemplateLayout,
    scan_to_template: &crate::Homography,
    cfg: &PipelineConfig,
) -> Result<(Cells, Vec<String>)> {
    let regions = project_layout(doc_id, layout, scan_to_template)?;
    let (mut cells, mut failures) = (Vec::new(), Vec::new());
    for (r, c) in regions.into_iter().zip(&layout.cells) {
        if cfg.cells == CellSelection::First && !(r.column_name == cfg.header_word && r.row_index == 0) {
            continue;
        }
        let key = CellKey::new(doc_id, r.column_name, r.row_index);
        let (w, h) = (c.w.round().max(1.0) as usize, c.h.round().max(1.0) as usize);
        match rectify_quad(img, &r.quad, w, h) {
            Ok(cell) => cells.push((key, cell)),
            Err(e) => failures.push(format!("{}: {e}", key.cell_id())),
        }
    }
    Ok((cells, failures))
}

/// Runs the whole batch. Documents are processed in parallel; every output
/// is in input order, so results do not depend on the worker count.
pub fn run_pipeline(
    docs: &[(String, GrayImage)],
    ctx: Option<&TemplateContext<'_>>,
    locator: &dyn HeaderLocator,
    backend: &dyn OcrBackend,
    cfg: &PipelineConfig,
) -> Result<PipelineReport> {
    cfg.validate()?;
    let segmented: Vec<(DocReport, Cells)> =
        docs.par_iter().map(|(id, img)| segment_document(id, img, ctx, locator, cfg)).collect();
    let mut reports = Vec::with_capacity(docs.len());
    let mut all_cells = Vec::new();
    for (r, c) in segmented {
        reports.push(r);
        all_cells.extend(c);
    }
    let n_cells = all_cells.len();
    let entries = batch_recognize(backend, all_cells);
    let index: HashMap<String, usize> = reports.iter().enumerate().map(|(i, r)| (r.doc_id.clone(), i)).collect();
    let mut predictions = Vec::with_capacity(entries.len());
    for e in entries {
        let report = &mut reports[index[&e.key.doc_id]];
        match e.outcome {
            Ok(p) => {
                report.cells_recognized += 1;
                predictions.push(p);
            }
            Err(msg) => {
                let prior = report.error.take().map(|p| format!("{p}; ")).unwrap_or_default();
                report.error = Some(format!("{prior}{}: {msg}", e.key.cell_id()));
            }
        }
    }
    let normalized = predictions.iter().filter(|p| normalize_prediction(p).is_ok()).count();
    let (kept, dropped) = confidence_filter(&predictions, cfg.retain);
    let aligned = reports.iter().filter(|r| r.alignment.as_ref().is_some_and(|a| a.status == AlignmentStatus::Aligned)).count();
    let with_cells = reports.iter().filter(|r| r.cells_segmented > 0).count();
    Ok(PipelineReport {
        alignment: StageCounts::tally(if ctx.is_some() { docs.len() } else { 0 }, aligned),
        segmentation: StageCounts::tally(docs.len(), with_cells),
        recognition: StageCounts::tally(n_cells, predictions.len()),
        normalization: StageCounts::tally(predictions.len(), normalized),
        docs: reports,
        predictions,
        kept,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocr::{GlyphCorrelationBackend, MockBackend};
    use crate::segment::NccHeaderLocator;
    use crate::synthcards::{card_layout, render_card, render_template, CardSpec, SynthCardConfig};

    fn cards(n: u64, cfg: &SynthCardConfig) -> Vec<(String, GrayImage, crate::synthcards::CardTruth)> {
        let (t, l) = (render_template(), card_layout());
        (0..n)
            .map(|s| {
                let (img, truth) = render_card(&CardSpec::random(s, cfg), &t, &l).unwrap();
                (truth.doc_id.clone(), img, truth)
            })
            .collect()
    }

    #[test]
    fn comprehensive_route_reads_cards() {
        let mild = SynthCardConfig { max_rotation_deg: 2.0, max_corner_jitter: 0.01, max_translation: 5.0, ..SynthCardConfig::default() };
        let docs = cards(3, &mild);
        let policy = AlignmentPolicy::default();
        let prepared = PreparedTemplate::new(&render_template(), &policy).unwrap();
        let layout = card_layout();
        let ctx = TemplateContext { template: &prepared, layout: &layout };
        let input: Vec<_> = docs.iter().map(|(id, img, _)| (id.clone(), img.clone())).collect();
        let cfg = PipelineConfig::default();
        let r = run_pipeline(&input, Some(&ctx), &NccHeaderLocator::default(), &GlyphCorrelationBackend::new(), &cfg).unwrap();
        assert_eq!(r.predictions.len(), 3 * layout.cells.len());
        assert_eq!(r.segmentation, StageCounts { input: 3, succeeded: 3, failed: 0 });
        for p in &r.predictions {
            let truth = &docs.iter().find(|d| d.0 == p.doc_id).unwrap().2;
            assert_eq!(p.text, truth.cell(&p.column_name, p.row_index).unwrap().text);
        }
    }

    #[test]
    fn single_cell_route_and_filter_counts() {
        let docs = cards(4, &SynthCardConfig::clean());
        let input: Vec<_> = docs.iter().map(|(id, img, _)| (id.clone(), img.clone())).collect();
        let answers: Vec<(String, (String, f64))> =
            docs.iter().enumerate().map(|(i, d)| (d.0.clone(), ("1".to_string(), 0.5 + i as f64 / 10.0))).collect();
        let cfg = PipelineConfig { retain: 0.5, ..PipelineConfig::default() };
        let r = run_pipeline(&input, None, &NccHeaderLocator::default(), &MockBackend::new(answers), &cfg).unwrap();
        assert!(r.docs.iter().all(|d| d.route == Some(Route::SingleCell)));
        assert_eq!((r.kept.len(), r.dropped.len()), (2, 2));
        assert_eq!(r.kept[0].doc_id, docs[3].0);
    }

    #[test]
    fn blank_image_fails_without_aborting() {
        let mut input: Vec<_> = cards(1, &SynthCardConfig::clean()).into_iter().map(|(id, img, _)| (id, img)).collect();
        input.push(("blank".into(), GrayImage::filled(960, 760, 240).unwrap()));
        let cfg = PipelineConfig { cells: CellSelection::First, ..PipelineConfig::default() };
        let r = run_pipeline(&input, None, &NccHeaderLocator::default(), &GlyphCorrelationBackend::new(), &cfg).unwrap();
        assert_eq!(r.segmentation, StageCounts { input: 2, succeeded: 1, failed: 1 });
        assert!(r.docs[1].error.is_some());
        assert_eq!(r.failed_docs(), 1);
    }
}
