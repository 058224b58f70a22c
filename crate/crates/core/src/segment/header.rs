use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::font;
use crate::geometry::Rect;
use crate::imagecore::{downsample_box, GrayImage, IntegralImage};
use crate::ocr::OcrBackend;

/// Finds the printed column header on a card.
pub trait HeaderLocator: Send + Sync {
    fn locate(&self, img: &GrayImage, header_word: &str) -> Result<Rect>;
}

/// Normalized cross-correlation against a header patch, coarse to fine.
#[derive(Debug, Clone)]
pub struct NccHeaderLocator {
    /// Font scale used when the patch is rendered from the built-in font.
    pub font_scale: usize,
    pub min_score: f64,
    /// Stored patch; when `None` the header word is rendered on demand.
    pub patch: Option<GrayImage>,
}

/// White padding around a rendered header patch; the correlation includes it.
const PATCH_MARGIN: usize = 2;
const COARSE_CANDIDATES: usize = 5;

impl Default for NccHeaderLocator {
    fn default() -> Self {
        Self { font_scale: 3, min_score: 0.7, patch: None }
    }
}

impl NccHeaderLocator {
    pub fn with_patch(patch: GrayImage) -> Self {
        Self { patch: Some(patch), ..Default::default() }
    }

    fn patch_and_margin(&self, word: &str) -> (GrayImage, usize) {
        match &self.patch {
            Some(p) => (p.clone(), 0),
            None => (font::render_text(&word.to_ascii_uppercase(), self.font_scale, PATCH_MARGIN), PATCH_MARGIN),
        }
    }
}

impl HeaderLocator for NccHeaderLocator {
    fn locate(&self, img: &GrayImage, header_word: &str) -> Result<Rect> {
        if header_word.trim().is_empty() {
            return Err(Error::Parameter("header word is empty".into()));
        }
        let (patch, margin) = self.patch_and_margin(header_word);
        if patch.width() > img.width() || patch.height() > img.height() {
            return Err(Error::HeaderNotFound(header_word.to_string()));
        }
        let factor = (patch.height() / 8).max(1);
        let coarse_img = downsample_box(img, factor);
        let coarse_patch = downsample_box(&patch, factor);
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        if coarse_patch.width() <= coarse_img.width() && coarse_patch.height() <= coarse_img.height() {
            let (scores, sw) = ncc_map(&coarse_img, &coarse_patch);
            let mut order: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > 0.3).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            for i in order {
                let (x, y) = (i % sw, i / sw);
                if candidates.iter().all(|&(_, cx, cy)| cx.abs_diff(x) > 2 || cy.abs_diff(y) > 2) {
                    candidates.push((scores[i], x, y));
                    if candidates.len() == COARSE_CANDIDATES {
                        break;
                    }
                }
            }
        }

        let radius = factor + 1;
        let max_x = img.width() - patch.width();
        let max_y = img.height() - patch.height();
        let mut best: Option<(f64, usize, usize)> = None;
        for (_, cx, cy) in candidates {
            let (x0, y0) = ((cx * factor).saturating_sub(radius), (cy * factor).saturating_sub(radius));
            let (x1, y1) = ((cx * factor + radius).min(max_x), (cy * factor + radius).min(max_y));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let s = ncc_at(img, &patch, x, y);
                    if best.is_none_or(|(b, _, _)| s > b) {
                        best = Some((s, x, y));
                    }
                }
            }
        }
        match best {
            Some((score, x, y)) if score >= self.min_score => Ok(Rect::new(
                (x + margin) as f64,
                (y + margin) as f64,
                (patch.width() - 2 * margin) as f64,
                (patch.height() - 2 * margin) as f64,
            )),
            _ => Err(Error::HeaderNotFound(header_word.to_string())),
        }
    }
}

fn zero_mean(patch: &GrayImage) -> (Vec<f64>, f64) {
    let mean = patch.mean();
    let p: Vec<f64> = patch.pixels().iter().map(|&v| v as f64 - mean).collect();
    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    (p, norm)
}

fn ncc_with(img: &GrayImage, ii: &IntegralImage, p: &[f64], pnorm: f64, pw: usize, ph: usize, x: usize, y: usize) -> f64 {
    let n = (pw * ph) as f64;
    let s = ii.rect_sum(x, y, x + pw, y + ph) as f64;
    let ss = ii.rect_sum_sq(x, y, x + pw, y + ph) as f64;
    let var = ss - s * s / n;
    if var <= 1e-9 || pnorm <= 1e-9 {
        return 0.0;
    }
    let w = img.width();
    let px = img.pixels();
    let mut dot = 0.0;
    for row in 0..ph {
        let base = (y + row) * w + x;
        let prow = &p[row * pw..(row + 1) * pw];
        dot += px[base..base + pw].iter().zip(prow).map(|(&a, &b)| a as f64 * b).sum::<f64>();
    }
    dot / (var.sqrt() * pnorm)
}

/// NCC score of `patch` placed with its top-left at every valid offset;
/// returns the scores row-major and the row stride.
pub fn ncc_map(img: &GrayImage, patch: &GrayImage) -> (Vec<f64>, usize) {
    let (pw, ph) = (patch.width(), patch.height());
    let sw = img.width() - pw + 1;
    let sh = img.height() - ph + 1;
    let ii = IntegralImage::new(img);
    let (p, pnorm) = zero_mean(patch);
    let scores = (0..sh)
        .into_par_iter()
        .flat_map_iter(|y| {
            let (ii, p) = (&ii, &p);
            (0..sw).map(move |x| ncc_with(img, ii, p, pnorm, pw, ph, x, y))
        })
        .collect();
    (scores, sw)
}

fn ncc_at(img: &GrayImage, patch: &GrayImage, x: usize, y: usize) -> f64 {
    let window = img.crop(x, y, patch.width(), patch.height()).expect("offset inside image");
    let (p, pnorm) = zero_mean(patch);
    let ii = IntegralImage::new(&window);
    ncc_with(&window, &ii, &p, pnorm, patch.width(), patch.height(), 0, 0)
}

/// Delegates to a backend that reports word boxes.
pub struct OcrHeaderLocator {
    pub backend: Arc<dyn OcrBackend>,
}

impl HeaderLocator for OcrHeaderLocator {
    fn locate(&self, img: &GrayImage, header_word: &str) -> Result<Rect> {
        if !self.backend.capabilities().word_boxes {
            return Err(Error::Unsupported("word boxes"));
        }
        self.backend
            .word_boxes(img)?
            .into_iter()
            .filter(|w| w.text.trim().eq_ignore_ascii_case(header_word.trim()))
            .max_by(|a, b| a.confidence.total_cmp(&b.confidence))
            .map(|w| w.rect)
            .ok_or_else(|| Error::HeaderNotFound(header_word.to_string()))
    }
}
