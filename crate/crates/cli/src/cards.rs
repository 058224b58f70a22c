//! Card-side commands.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use ledgerlens::align::{align_prepared, PreparedTemplate};
use ledgerlens::imagecore::{load_gray, save_png, warp_perspective};
use ledgerlens::ocr::{
    batch_recognize, confidence_filter, normalize_prediction, save_predictions_csv, CellKey, GlyphCorrelationBackend, OcrBackend,
    RemoteOcrBackend,
};
use ledgerlens::pipeline::{run_pipeline, segment_document, CellSelection, DocReport, PipelineConfig, TemplateContext};
use ledgerlens::segment::{cell_file_name, NccHeaderLocator, TemplateLayout};
use ledgerlens::synthcards::{card_layout, render_card, render_template, CardSpec, SynthCardConfig};
use ledgerlens::GrayImage;
use rayon::prelude::*;
use serde_json::json;

use crate::{BackendKind, CliError, Ctx, OutArgs};

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "tif", "tiff", "jpg", "jpeg"];

/// Image files of `dir` sorted by name, keyed by file stem.
pub fn list_images(dir: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))? {
        let p = entry?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if p.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            out.push((stem, p));
        }
    }
    out.sort();
    Ok(out)
}

/// Loads every image, turned by `quarter_turns`; failures keep their
/// message.
fn load_all(files: &[(String, PathBuf)], quarter_turns: i32) -> Vec<(String, Result<GrayImage, String>)> {
    files
        .par_iter()
        .map(|(id, p)| {
            let img = load_gray(p).map(|i| if quarter_turns % 4 == 0 { i } else { i.rotate90(quarter_turns) });
            (id.clone(), img.map_err(|e| e.to_string()))
        })
        .collect()
}

/// Splits loaded documents into images and failures, logging the latter.
fn loaded(
    ctx: &mut Ctx,
    command: &str,
    docs: Vec<(String, Result<GrayImage, String>)>,
) -> Result<Vec<(String, GrayImage)>, CliError> {
    let mut ok = Vec::with_capacity(docs.len());
    for (id, r) in docs {
        match r {
            Ok(img) => ok.push((id, img)),
            Err(e) => {
                log::warn!("{id}: {e}");
                ctx.log.emit(command, &id, "load", false, json!({ "error": e }))?;
            }
        }
    }
    Ok(ok)
}

fn template_context(template: Option<&Path>, layout: Option<&Path>) -> Result<Option<(GrayImage, TemplateLayout)>, CliError> {
    match (template, layout) {
        (Some(t), Some(l)) => {
            let layout = TemplateLayout::load(l)?;
            layout.validate()?;
            Ok(Some((load_gray(t)?, layout)))
        }
        (None, None) => Ok(None),
        _ => Err(CliError::Config("--template and --layout go together".into())),
    }
}

fn backend(ctx: &Ctx, kind: BackendKind, endpoint: Option<String>) -> Result<Box<dyn OcrBackend>, CliError> {
    Ok(match kind {
        BackendKind::Builtin => Box::new(GlyphCorrelationBackend::new()),
        BackendKind::Remote => {
            let mut cfg = ctx.cfg.remote.clone();
            if let Some(e) = endpoint {
                cfg.endpoint = e;
            }
            Box::new(RemoteOcrBackend::new(cfg)?)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CellsArg {
    All,
    First,
}

#[derive(Debug, Args)]
pub struct SynthCardsArgs {
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// No warp and no noise.
    #[arg(long)]
    pub clean: bool,
    #[arg(long)]
    pub max_rotation: Option<f64>,
    /// Corner jitter as a fraction of the card width.
    #[arg(long)]
    pub max_jitter: Option<f64>,
    /// Pixels.
    #[arg(long)]
    pub max_translation: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Seed of card `i` of a run; distinct runs do not share cards.
pub fn card_seed(master: u64, i: usize) -> u64 {
    master.wrapping_mul(100_000).wrapping_add(i as u64)
}

pub fn synth_cards(ctx: &mut Ctx, a: SynthCardsArgs) -> Result<bool, CliError> {
    let mut cfg = if a.clean { SynthCardConfig::clean() } else { ctx.cfg.synth_cards.clone() };
    if let Some(v) = a.max_rotation {
        cfg.max_rotation_deg = v;
    }
    if let Some(v) = a.max_jitter {
        cfg.max_corner_jitter = v;
    }
    if let Some(v) = a.max_translation {
        cfg.max_translation = v;
    }
    ctx.cfg.synth_cards = cfg.clone();
    let mut run = ctx.run("synth cards", &a.out.out)?;
    let (template, layout) = (render_template(), card_layout());
    save_png(&template, &run.artifact("template.png"))?;
    layout.save(&run.artifact("layout.json"))?;
    std::fs::create_dir_all(run.out_dir.join("cards"))?;
    std::fs::create_dir_all(run.out_dir.join("truth"))?;
    let (cards_dir, truth_dir) = (run.artifact("cards"), run.artifact("truth"));
    let seed = ctx.cfg.seed;
    let results: Vec<Result<String, String>> = (0..a.n)
        .into_par_iter()
        .map(|i| {
            let spec = CardSpec::random(card_seed(seed, i), &cfg);
            let (img, truth) = render_card(&spec, &template, &layout).map_err(|e| e.to_string())?;
            save_png(&img, &cards_dir.join(format!("{}.png", spec.doc_id))).map_err(|e| e.to_string())?;
            truth.save(&truth_dir.join(format!("{}.json", spec.doc_id))).map_err(|e| e.to_string())?;
            Ok(spec.doc_id)
        })
        .collect();
    let mut ok = 0;
    for (i, r) in results.iter().enumerate() {
        let id = r.as_ref().cloned().unwrap_or_else(|_| format!("card#{i}"));
        ctx.log.emit("synth cards", &id, "render", r.is_ok(), json!({ "error": r.as_ref().err() }))?;
        ok += usize::from(r.is_ok());
    }
    run.input("cards_requested", a.n);
    run.stage("render", a.n, ok);
    run.output("cards", ok);
    run.finish()
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Directory of scans.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub template: PathBuf,
    /// Quarter turns applied to every scan before alignment.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub rotate: i32,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn align(ctx: &mut Ctx, a: AlignArgs) -> Result<bool, CliError> {
    let policy = ctx.cfg.pipeline.policy.clone();
    policy.validate()?;
    let files = list_images(&a.input)?;
    let template = load_gray(&a.template)?;
    let prepared = PreparedTemplate::new(&template, &policy)?;
    let mut run = ctx.run("align", &a.out.out)?;
    let docs = loaded(ctx, "align", load_all(&files, a.rotate))?;
    let aligned_dir = run.artifact("aligned");
    std::fs::create_dir_all(&aligned_dir)?;
    let (tw, th) = (template.width(), template.height());
    let results: Vec<_> = docs
        .par_iter()
        .map(|(id, img)| {
            let r = align_prepared(img, &prepared, &policy).map_err(|e| e.to_string())?;
            if let (true, Some(h)) = (r.is_aligned(), r.homography) {
                let warped = warp_perspective(img, &h, tw, th).map_err(|e| e.to_string())?;
                save_png(&warped, &aligned_dir.join(format!("{id}.png"))).map_err(|e| e.to_string())?;
            }
            Ok::<_, String>(r.log_entry(id))
        })
        .collect();
    let mut entries = Vec::new();
    let mut n_aligned = 0;
    for ((id, _), r) in docs.iter().zip(&results) {
        match r {
            Ok(e) => {
                let ok = e.status == ledgerlens::align::AlignmentStatus::Aligned;
                n_aligned += usize::from(ok);
                ctx.log.emit("align", id, "align", ok, serde_json::to_value(e)?)?;
                entries.push(e.clone());
            }
            Err(msg) => ctx.log.emit("align", id, "align", false, json!({ "error": msg }))?,
        }
    }
    run.write_json("alignment.json", &entries)?;
    run.input("documents", files.len());
    run.stage("load", files.len(), docs.len());
    run.stage("alignment", docs.len(), n_aligned);
    run.output("aligned_images", n_aligned);
    run.finish()
}

/// Effective pipeline settings; stored back so the manifest hash covers
/// the flags.
fn pipeline_config(ctx: &mut Ctx, retain: Option<f64>, header: Option<String>, cells: Option<CellsArg>) -> Result<PipelineConfig, CliError> {
    let mut p = ctx.cfg.pipeline.clone();
    if let Some(r) = retain {
        p.retain = r;
    }
    if let Some(h) = header {
        p.header_word = h;
    }
    if let Some(c) = cells {
        p.cells = match c {
            CellsArg::All => CellSelection::All,
            CellsArg::First => CellSelection::First,
        };
    }
    p.validate()?;
    ctx.cfg.pipeline = p.clone();
    Ok(p)
}

fn emit_doc_reports(ctx: &mut Ctx, command: &str, reports: &[DocReport]) -> Result<(), CliError> {
    for r in reports {
        ctx.log.emit(command, &r.doc_id, "document", r.ok(), serde_json::to_value(r)?)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Template image; with --layout selects the comprehensive route.
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Column header of the single-cell route.
    #[arg(long)]
    pub header: Option<String>,
    #[arg(long, value_enum)]
    pub cells: Option<CellsArg>,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub rotate: i32,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn segment(ctx: &mut Ctx, a: SegmentArgs) -> Result<bool, CliError> {
    let pcfg = pipeline_config(ctx, None, a.header, a.cells)?;
    let files = list_images(&a.input)?;
    let tpl = template_context(a.template.as_deref(), a.layout.as_deref())?;
    let prepared = tpl.as_ref().map(|(t, _)| PreparedTemplate::new(t, &pcfg.policy)).transpose()?;
    let tctx = tpl.as_ref().zip(prepared.as_ref()).map(|((_, layout), template)| TemplateContext { template, layout });
    let mut run = ctx.run("segment", &a.out.out)?;
    let docs = loaded(ctx, "segment", load_all(&files, a.rotate))?;
    let cells_dir = run.artifact("cells");
    std::fs::create_dir_all(&cells_dir)?;
    let locator = NccHeaderLocator::default();
    let results: Vec<(DocReport, usize)> = docs
        .par_iter()
        .map(|(id, img)| {
            let (mut report, cells) = segment_document(id, img, tctx.as_ref(), &locator, &pcfg);
            let mut written = 0;
            for (k, cell) in &cells {
                match save_png(cell, &cells_dir.join(cell_file_name(&k.doc_id, &k.column_name, k.row_index))) {
                    Ok(()) => written += 1,
                    Err(e) => report.error = Some(e.to_string()),
                }
            }
            (report, written)
        })
        .collect();
    let (reports, written): (Vec<DocReport>, Vec<usize>) = results.into_iter().unzip();
    emit_doc_reports(ctx, "segment", &reports)?;
    run.write_json("documents.json", &reports)?;
    let segmented: usize = reports.iter().map(|r| r.cells_segmented).sum();
    let cell_failures: usize = reports.iter().map(|r| r.cells_failed).sum();
    run.input("documents", files.len());
    run.stage("load", files.len(), docs.len());
    run.stage("segmentation", docs.len(), reports.iter().filter(|r| r.cells_segmented > 0).count());
    run.stage("cells", segmented + cell_failures, segmented);
    run.stage("write", segmented, written.iter().sum());
    run.output("cell_images", written.iter().sum());
    run.finish()
}

#[derive(Debug, Args)]
pub struct OcrArgs {
    /// Directory of cell images named `<doc>_<COLUMN>_<row>.png`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = BackendKind::Builtin)]
    pub backend: BackendKind,
    /// Remote backend URL; overrides the configuration.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub retain: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Inverse of `cell_file_name`.
pub fn parse_cell_stem(stem: &str) -> Option<CellKey> {
    let mut parts = stem.rsplitn(3, '_');
    let row = parts.next()?.parse().ok()?;
    let column = parts.next()?;
    let doc = parts.next()?;
    (!doc.is_empty() && !column.is_empty()).then(|| CellKey::new(doc, column, row))
}

pub fn ocr(ctx: &mut Ctx, a: OcrArgs) -> Result<bool, CliError> {
    let pcfg = pipeline_config(ctx, a.retain, None, None)?;
    let backend = backend(ctx, a.backend, a.endpoint)?;
    let files = list_images(&a.input)?;
    let mut run = ctx.run("ocr", &a.out.out)?;
    let mut cells = Vec::new();
    for (id, r) in load_all(&files, 0) {
        let parsed = parse_cell_stem(&id).ok_or_else(|| format!("file name {id:?} is not <doc>_<COLUMN>_<row>"));
        match parsed.and_then(|k| r.map(|img| (k, img))) {
            Ok(c) => cells.push(c),
            Err(e) => ctx.log.emit("ocr", &id, "load", false, json!({ "error": e }))?,
        }
    }
    let n_loaded = cells.len();
    let entries = batch_recognize(backend.as_ref(), cells);
    let mut preds = Vec::new();
    for e in entries {
        let detail = json!({ "cell": e.key.cell_id(), "attempts": e.attempts, "error": e.outcome.as_ref().err() });
        ctx.log.emit("ocr", &e.key.doc_id, "recognize", e.outcome.is_ok(), detail)?;
        if let Ok(p) = e.outcome {
            preds.push(p);
        }
    }
    let normalized = preds.iter().filter(|p| normalize_prediction(p).is_ok()).count();
    let (kept, dropped) = confidence_filter(&preds, pcfg.retain);
    save_predictions_csv(&run.artifact("predictions.csv"), &kept)?;
    save_predictions_csv(&run.artifact("dropped.csv"), &dropped)?;
    run.input("cell_images", files.len());
    run.stage("load", files.len(), n_loaded);
    run.stage("recognition", n_loaded, preds.len());
    run.stage("normalization", preds.len(), normalized);
    run.output("kept", kept.len());
    run.output("dropped", dropped.len());
    run.finish()
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Directory of card scans.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Template image; with --layout selects the comprehensive route.
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BackendKind::Builtin)]
    pub backend: BackendKind,
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Share of the most confident cells kept.
    #[arg(long)]
    pub retain: Option<f64>,
    #[arg(long)]
    pub header: Option<String>,
    #[arg(long, value_enum)]
    pub cells: Option<CellsArg>,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub rotate: i32,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn pipeline(ctx: &mut Ctx, a: PipelineArgs) -> Result<bool, CliError> {
    let pcfg = pipeline_config(ctx, a.retain, a.header, a.cells)?;
    let backend = backend(ctx, a.backend, a.endpoint)?;
    let files = list_images(&a.input)?;
    let tpl = template_context(a.template.as_deref(), a.layout.as_deref())?;
    let prepared = tpl.as_ref().map(|(t, _)| PreparedTemplate::new(t, &pcfg.policy)).transpose()?;
    let tctx = tpl.as_ref().zip(prepared.as_ref()).map(|((_, layout), template)| TemplateContext { template, layout });
    let mut run = ctx.run("pipeline", &a.out.out)?;
    let docs = loaded(ctx, "pipeline", load_all(&files, a.rotate))?;
    let report = run_pipeline(&docs, tctx.as_ref(), &NccHeaderLocator::default(), backend.as_ref(), &pcfg)?;
    emit_doc_reports(ctx, "pipeline", &report.docs)?;
    save_predictions_csv(&run.artifact("predictions.csv"), &report.kept)?;
    save_predictions_csv(&run.artifact("dropped.csv"), &report.dropped)?;
    run.write_json("documents.json", &report.docs)?;
    let segmented: usize = report.docs.iter().map(|r| r.cells_segmented).sum();
    let cell_failures: usize = report.docs.iter().map(|r| r.cells_failed).sum();
    run.input("documents", files.len());
    run.stage("load", files.len(), docs.len());
    if tctx.is_some() {
        run.stage_counts("alignment", &report.alignment);
    }
    run.stage_counts("segmentation", &report.segmentation);
    run.stage("cells", segmented + cell_failures, segmented);
    run.stage_counts("recognition", &report.recognition);
    run.stage_counts("normalization", &report.normalization);
    run.output("cells_segmented", segmented);
    run.output("kept", report.kept.len());
    run.output("dropped", report.dropped.len());
    run.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_stems_round_trip() {
        let name = cell_file_name("card_00012", "BUILDINGS", 3);
        let k = parse_cell_stem(name.trim_end_matches(".png")).unwrap();
        assert_eq!((k.doc_id.as_str(), k.column_name.as_str(), k.row_index), ("card_00012", "BUILDINGS", 3));
        assert!(parse_cell_stem("nounderscore").is_none());
        assert!(parse_cell_stem("doc_COL_x").is_none());
    }

    #[test]
    fn card_seeds_are_distinct_across_runs() {
        assert_eq!(card_seed(0, 7), 7);
        assert_ne!(card_seed(1, 0), card_seed(0, 1));
    }
}
