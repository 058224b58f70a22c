use super::{Capabilities, CellKey, OcrBackend, Recognition};
use crate::error::Result;
use crate::font;
use crate::imagecore::{median3, GrayImage};

const CANVAS: usize = 28;
const BODY: usize = 20;
const BANK_SCALES: [usize; 3] = [2, 3, 4];
/// Horizontal stretches stored per digit; rectified cells are rarely square.
const BANK_ASPECTS: [f64; 5] = [0.6, 0.75, 0.9, 1.0, 1.15];

/// Built-in recognizer: connected components scored against a 0-9 glyph
/// bank by normalized cross-correlation.
#[derive(Debug, Clone)]
pub struct GlyphCorrelationBackend {
    bank: Vec<(char, Vec<f64>)>,
    /// Minimum luminance spread (after the median filter) for a cell to be
    /// considered inked at all.
    pub min_contrast: u8,
}

impl Default for GlyphCorrelationBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl GlyphCorrelationBackend {
    pub fn new() -> Self {
        let mut bank = Vec::new();
        for c in '0'..='9' {
            for scale in BANK_SCALES {
                // the bank goes through the same filtering as a query
                let img = median3(&font::render_text(&c.to_string(), scale, 3));
                let ink: Vec<bool> = img.pixels().iter().map(|&p| p < 128).collect();
                let (mask, mw, mh) = tight(&ink, img.width(), img.height());
                for a in BANK_ASPECTS {
                    bank.push((c, normalize(&mask, mw, mh, a)));
                }
            }
        }
        Self { bank, min_contrast: 60 }
    }

    /// Text and per-character peak scores.
    pub fn read(&self, cell: &GrayImage) -> (String, Vec<f64>) {
        let img = median3(cell);
        let (lo, hi) = img.pixels().iter().fold((255u8, 0u8), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        if hi.saturating_sub(lo) < self.min_contrast {
            return (String::new(), Vec::new());
        }
        let t = otsu(&img);
        let (w, h) = (img.width(), img.height());
        let ink: Vec<bool> = img.pixels().iter().map(|&p| p <= t).collect();
        let glyphs = characters(&ink, w, h);
        let mut text = String::new();
        let mut scores = Vec::new();
        for g in glyphs {
            let (mask, mw, mh) = g.mask(&ink, w);
            let q = normalize(&mask, mw, mh, 1.0);
            let (c, s) = self
                .bank
                .iter()
                .map(|(c, t)| (*c, dot(&q, t)))
                .fold(('?', f64::NEG_INFINITY), |best, x| if x.1 > best.1 { x } else { best });
            text.push(c);
            scores.push(s);
        }
        (text, scores)
    }
}

impl OcrBackend for GlyphCorrelationBackend {
    fn name(&self) -> &str {
        "builtin"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { recognize_cell: true, word_boxes: false, concurrent: true }
    }

    fn recognize_cell(&self, _key: &CellKey, cell: &GrayImage) -> Result<Recognition> {
        let (text, scores) = self.read(cell);
        let confidence = if scores.is_empty() {
            0.0
        } else {
            let log_sum: f64 = scores.iter().map(|s| s.clamp(1e-6, 1.0).ln()).sum();
            (log_sum / scores.len() as f64).exp().clamp(0.0, 1.0)
        };
        Ok(Recognition { text, confidence, attempts: 1 })
    }
}

fn otsu(img: &GrayImage) -> u8 {
    let mut hist = [0u64; 256];
    for &p in img.pixels() {
        hist[p as usize] += 1;
    }
    let total = img.pixels().len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_t) = (-1.0, 127u8);
    for (t, &c) in hist.iter().enumerate() {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let (m0, m1) = (sum0 / w0, (sum_all - sum0) / w1);
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_t = t as u8;
        }
    }
    best_t
}

#[derive(Debug, Clone, Copy)]
struct Glyph {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Glyph {
    fn width(&self) -> usize {
        self.x1 - self.x0
    }

    fn height(&self) -> usize {
        self.y1 - self.y0
    }

    fn mask(&self, ink: &[bool], stride: usize) -> (Vec<bool>, usize, usize) {
        let (w, h) = (self.width(), self.height());
        let m = (0..w * h).map(|i| ink[(self.y0 + i / w) * stride + self.x0 + i % w]).collect();
        (m, w, h)
    }
}

/// 8-connected components that look like characters, merged per column
/// and ordered left to right.
fn characters(ink: &[bool], w: usize, h: usize) -> Vec<Glyph> {
    let mut label = vec![usize::MAX; w * h];
    let mut comps: Vec<(Glyph, usize, bool)> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !ink[start] || label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut g = Glyph { x0: start % w, y0: start / w, x1: start % w + 1, y1: start / w + 1 };
        let (mut area, mut touches) = (0usize, false);
        label[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            area += 1;
            touches |= x == 0 || y == 0 || x == w - 1 || y == h - 1;
            g.x0 = g.x0.min(x);
            g.y0 = g.y0.min(y);
            g.x1 = g.x1.max(x + 1);
            g.y1 = g.y1.max(y + 1);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if ink[j] && label[j] == usize::MAX {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        comps.push((g, area, touches));
    }

    let mut kept: Vec<Glyph> =
        comps.into_iter().filter(|(_, area, touches)| !touches && *area >= 6).map(|(g, _, _)| g).collect();
    kept.sort_by_key(|g| (g.x0, g.y0));

    // pieces of one broken character share a column span
    let mut merged: Vec<Glyph> = Vec::new();
    for g in kept {
        if let Some(last) = merged.last_mut() {
            let overlap = last.x1.min(g.x1).saturating_sub(last.x0.max(g.x0));
            if 2 * overlap >= last.width().min(g.width()) {
                last.x0 = last.x0.min(g.x0);
                last.y0 = last.y0.min(g.y0);
                last.x1 = last.x1.max(g.x1);
                last.y1 = last.y1.max(g.y1);
                continue;
            }
        }
        merged.push(g);
    }
    let mut split: Vec<Glyph> = merged.into_iter().flat_map(|g| split_touching(g, ink, w)).collect();
    split.retain(|g| g.height() * 20 >= h * 3 && g.height() * 10 <= h * 9 && g.width() <= 2 * g.height());
    split
}

/// Cuts a component holding several touching characters at the columns of
/// least ink near the expected character pitch.
fn split_touching(g: Glyph, ink: &[bool], stride: usize) -> Vec<Glyph> {
    let pitch = (font::GLYPH_W + 1) as f64 / font::GLYPH_H as f64 * g.height() as f64;
    let gap = g.height() as f64 / font::GLYPH_H as f64;
    let n = ((g.width() as f64 + gap) / pitch).round().max(1.0) as usize;
    if n < 2 {
        return vec![g];
    }
    let column = |x: usize| (g.y0..g.y1).filter(|&y| ink[y * stride + x]).count();
    let mut cuts = vec![g.x0];
    let reach = (pitch / 3.0).round() as usize;
    for k in 1..n {
        let expect = g.x0 + (k as f64 * g.width() as f64 / n as f64).round() as usize;
        let lo = expect.saturating_sub(reach).max(cuts[k - 1] + 1);
        let hi = (expect + reach).min(g.x1 - 1);
        let cut = (lo..=hi.max(lo)).min_by_key(|&x| (column(x), x.abs_diff(expect))).unwrap_or(expect);
        cuts.push(cut);
    }
    cuts.push(g.x1);
    cuts.windows(2)
        .filter_map(|c| {
            let (x0, x1) = (c[0], c[1]);
            let rows: Vec<usize> = (g.y0..g.y1).filter(|&y| (x0..x1).any(|x| ink[y * stride + x])).collect();
            Some(Glyph { x0, y0: *rows.first()?, x1, y1: rows.last()? + 1 })
        })
        .map(|p| {
            // trim blank columns left at the cut
            let used: Vec<usize> = (p.x0..p.x1).filter(|&x| (p.y0..p.y1).any(|y| ink[y * stride + x])).collect();
            Glyph { x0: used[0], x1: used[used.len() - 1] + 1, ..p }
        })
        .collect()
}

fn tight(mask: &[bool], w: usize, h: usize) -> (Vec<bool>, usize, usize) {
    let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        x0 = x0.min(i % w);
        y0 = y0.min(i / w);
        x1 = x1.max(i % w + 1);
        y1 = y1.max(i / w + 1);
    }
    let (tw, th) = (x1 - x0, y1 - y0);
    ((0..tw * th).map(|i| mask[(y0 + i / tw) * w + x0 + i % tw]).collect(), tw, th)
}

/// Resamples a character mask to a fixed body height inside the canvas,
/// keeping its aspect ratio times `stretch`, then scales it to zero mean and
/// unit norm.
fn normalize(mask: &[bool], w: usize, h: usize, stretch: f64) -> Vec<f64> {
    const SUB: usize = 4;
    let scale = BODY as f64 / h as f64;
    let tw = ((w as f64 * scale * stretch).round() as usize).clamp(1, CANVAS);
    let ox = (CANVAS - tw) / 2;
    let oy = (CANVAS - BODY) / 2;
    let mut out = vec![0.0; CANVAS * CANVAS];
    for v in 0..BODY {
        for u in 0..tw {
            let mut hits = 0;
            for sy in 0..SUB {
                for sx in 0..SUB {
                    let fx = (u as f64 + (sx as f64 + 0.5) / SUB as f64) * w as f64 / tw as f64;
                    let fy = (v as f64 + (sy as f64 + 0.5) / SUB as f64) * h as f64 / BODY as f64;
                    let (ix, iy) = ((fx as usize).min(w - 1), (fy as usize).min(h - 1));
                    hits += mask[iy * w + ix] as usize;
                }
            }
            out[(oy + v) * CANVAS + ox + u] = hits as f64 / (SUB * SUB) as f64;
        }
    }
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    out.iter_mut().for_each(|x| *x -= mean);
    let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    out.iter_mut().for_each(|x| *x /= norm);
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> CellKey {
        CellKey::new("d", "BUILDINGS", 0)
    }

    #[test]
    fn blank_cell_is_empty_with_zero_confidence() {
        let r = GlyphCorrelationBackend::new().recognize_cell(&key(), &GrayImage::filled(200, 64, 255).unwrap()).unwrap();
        assert_eq!((r.text.as_str(), r.confidence), ("", 0.0));
    }

    #[test]
    fn reads_its_own_font() {
        let mut cell = GrayImage::filled(200, 64, 250).unwrap();
        font::draw_text(&mut cell, "3085", 40, 20, 3, 15);
        let r = GlyphCorrelationBackend::new().recognize_cell(&key(), &cell).unwrap();
        assert_eq!(r.text, "3085");
        assert!(r.confidence >= 0.99, "{}", r.confidence);
    }

    #[test]
    fn every_digit_at_other_scales() {
        let b = GlyphCorrelationBackend::new();
        for scale in [2, 4] {
            let mut cell = GrayImage::filled(260, 64, 250).unwrap();
            font::draw_text(&mut cell, "0123456789", 10, 16, scale, 15);
            assert_eq!(b.read(&cell).0, "0123456789", "scale {scale}");
        }
    }

    #[test]
    fn border_rules_are_ignored() {
        let mut cell = GrayImage::filled(200, 64, 250).unwrap();
        for x in 0..200 {
            cell.set(x, 0, 10);
            cell.set(x, 63, 10);
        }
        for y in 0..64 {
            cell.set(0, y, 10);
            cell.set(199, y, 10);
        }
        assert_eq!(GlyphCorrelationBackend::new().read(&cell).0, "");
        font::draw_text(&mut cell, "71", 60, 20, 3, 15);
        assert_eq!(GlyphCorrelationBackend::new().read(&cell).0, "71");
    }

    #[test]
    fn touching_digits_are_split() {
        let mut cell = GrayImage::filled(200, 64, 250).unwrap();
        for (i, c) in "4906".chars().enumerate() {
            font::draw_char(&mut cell, c, 30 + i as isize * 16, 20, 3, 1, 15);
        }
        assert_eq!(GlyphCorrelationBackend::new().read(&cell).0, "4906");
    }
}
