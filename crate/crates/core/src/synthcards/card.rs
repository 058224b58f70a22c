use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::font;
use crate::geometry::{fit_homography_dlt, Point};
use crate::imagecore::{warp_perspective, GrayImage};
use crate::segment::{LayoutCell, TemplateLayout};
use crate::{Homography, PointF, Quad};

pub const CARD_WIDTH: usize = 960;
pub const CARD_HEIGHT: usize = 760;
pub const HEADER_SCALE: usize = 3;
pub const VALUE_COLUMNS: [&str; 4] = ["YEAR", "LAND", "BUILDINGS", "TOTAL"];
pub const DATA_ROWS: usize = 7;

const COLUMN_EDGES: [usize; 6] = [25, 145, 335, 505, 695, 935];
const COLUMN_NAMES: [&str; 5] = ["YEAR", "LAND", "BUILDINGS", "TOTAL", "REMARKS"];
const TABLE_TOP: usize = 260;
const HEADER_ROW_H: usize = 44;
const DATA_ROW_H: usize = 54;
const RULE: usize = 2;
const PAPER: u8 = 245;
const INK: u8 = 25;
const PLATE_SEED: u64 = 0x5EED_1933;

fn row_edges() -> Vec<usize> {
    let mut e = vec![TABLE_TOP, TABLE_TOP + HEADER_ROW_H];
    for _ in 0..DATA_ROWS {
        e.push(e[e.len() - 1] + DATA_ROW_H);
    }
    e
}

/// Data cells of the valuation table. A cell spans rule centre to rule
/// centre.
pub fn card_layout() -> TemplateLayout {
    let rows = row_edges();
    let mut cells = Vec::new();
    for (c, name) in VALUE_COLUMNS.iter().enumerate() {
        for r in 0..DATA_ROWS {
            cells.push(LayoutCell {
                column: name.to_string(),
                row: r,
                x: COLUMN_EDGES[c] as f64 + 1.0,
                y: rows[r + 1] as f64 + 1.0,
                w: (COLUMN_EDGES[c + 1] - COLUMN_EDGES[c]) as f64,
                h: DATA_ROW_H as f64,
            });
        }
    }
    TemplateLayout { width: CARD_WIDTH, height: CARD_HEIGHT, cells }
}

fn fill(img: &mut GrayImage, x0: usize, y0: usize, x1: usize, y1: usize, v: u8) {
    for y in y0..y1.min(img.height()) {
        for x in x0..x1.min(img.width()) {
            img.set(x, y, v);
        }
    }
}

fn frame(img: &mut GrayImage, x0: usize, y0: usize, x1: usize, y1: usize, t: usize, v: u8) {
    fill(img, x0, y0, x1, y0 + t, v);
    fill(img, x0, y1 - t, x1, y1, v);
    fill(img, x0, y0, x0 + t, y1, v);
    fill(img, x1 - t, y0, x1, y1, v);
}

/// The blank reference card: printed headings, field boxes and the
/// valuation grid.
pub fn render_template() -> GrayImage {
    let mut img = GrayImage::filled(CARD_WIDTH, CARD_HEIGHT, PAPER).expect("card size");
    frame(&mut img, 8, 8, CARD_WIDTH - 8, CARD_HEIGHT - 8, 3, INK);
    font::draw_text(&mut img, "COUNTY AUDITOR", 40, 30, 4, INK);
    font::draw_text(&mut img, "REAL PROPERTY RECORD", 40, 72, 3, INK);
    font::draw_text(&mut img, "FORM 12-B", 760, 34, 2, INK);
    frame(&mut img, 740, 60, 930, 130, 2, INK);
    font::draw_text(&mut img, "CLASS", 752, 70, 2, INK);
    font::draw_text(&mut img, "DIST NO", 752, 100, 2, INK);
    for (i, label) in ["WARD", "BLOCK", "ACRES", "ZONE"].iter().enumerate() {
        let y = 150 + 26 * i;
        font::draw_text(&mut img, label, 752, y as isize, 2, INK);
        fill(&mut img, 840, y + 16, 930, y + 18, INK);
    }
    for (i, label) in ["PARCEL NO", "OWNER", "ADDRESS", "LOT / SUB"].iter().enumerate() {
        let y = 120 + 34 * i;
        font::draw_text(&mut img, label, 40, y as isize, 2, INK);
        fill(&mut img, 170, y + 16, 700, y + 18, INK);
    }
    let rows = row_edges();
    let (left, right) = (COLUMN_EDGES[0], COLUMN_EDGES[5] + RULE);
    for &y in &rows {
        fill(&mut img, left, y, right, y + RULE, INK);
    }
    let (top, bottom) = (rows[0], rows[rows.len() - 1] + RULE);
    for &x in &COLUMN_EDGES {
        fill(&mut img, x, top, x + RULE, bottom, INK);
    }
    let remark_x = COLUMN_EDGES[4] + 14;
    for (r, code) in ["A NEW", "B ADD", "C REV", "D DEM", "E EXM", "F SPL", "G COR"].iter().enumerate() {
        let y = rows[r + 1] + (DATA_ROW_H - font::text_height(2)) / 2;
        font::draw_text(&mut img, code, remark_x as isize, y as isize, 2, INK);
    }
    let foot = rows[rows.len() - 1] + 18;
    font::draw_text(&mut img, "APPRAISED BY", 40, foot as isize, 2, INK);
    fill(&mut img, 190, foot + 16, 420, foot + 18, INK);
    font::draw_text(&mut img, "REVIEWED", 40, foot as isize + 30, 2, INK);
    frame(&mut img, 560, foot - 6, 930, foot + 44, 2, INK);
    font::draw_text(&mut img, "SHEET NO", 575, foot as isize + 4, 2, INK);
    font::draw_text(&mut img, "CARD 1 OF 1", 735, foot as isize + 24, 2, INK);
    plate_defects(&mut img, &rows);
    let text_y = TABLE_TOP + (HEADER_ROW_H - font::text_height(HEADER_SCALE)) / 2;
    for (c, name) in COLUMN_NAMES.iter().enumerate() {
        let w = COLUMN_EDGES[c + 1] - COLUMN_EDGES[c];
        let x = COLUMN_EDGES[c] + 1 + (w - font::text_width(name, HEADER_SCALE)) / 2;
        font::draw_text(&mut img, name, x as isize, text_y as isize, HEADER_SCALE, INK);
    }
    img
}

/// Small ink spurs along the rules. A printing plate repeats its flaws in
/// every impression; they give otherwise identical grid crossings distinct
/// neighbourhoods.
fn plate_defects(img: &mut GrayImage, rows: &[usize]) {
    let mut rng = ChaCha8Rng::seed_from_u64(PLATE_SEED);
    let (left, right) = (COLUMN_EDGES[0], COLUMN_EDGES[5] + RULE);
    let (top, bottom) = (rows[0], rows[rows.len() - 1] + RULE);
    for &y in rows {
        let mut x = left + rng.random_range(4..20);
        while x + 4 < right {
            let (len, depth) = (rng.random_range(1..=3), rng.random_range(1..=3));
            if rng.random_bool(0.5) {
                fill(img, x, y.saturating_sub(depth), x + len, y, INK);
            } else {
                fill(img, x, y + RULE, x + len, y + RULE + depth, INK);
            }
            x += rng.random_range(8..24);
        }
    }
    for &x in &COLUMN_EDGES {
        let mut y = top + rng.random_range(4..20);
        while y + 4 < bottom {
            let (len, depth) = (rng.random_range(1..=3), rng.random_range(1..=3));
            if rng.random_bool(0.5) {
                fill(img, x.saturating_sub(depth), y, x, y + len, INK);
            } else {
                fill(img, x + RULE, y, x + RULE + depth, y + len, INK);
            }
            y += rng.random_range(8..24);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpParams {
    pub rotation_deg: f64,
    /// Corner displacements as fractions of the card width, clockwise from
    /// top-left.
    pub corner_jitter: [(f64, f64); 4],
    pub translation: (f64, f64),
}

impl WarpParams {
    pub fn identity() -> Self {
        Self { rotation_deg: 0.0, corner_jitter: [(0.0, 0.0); 4], translation: (0.0, 0.0) }
    }

    /// Template-to-scan transform: perspective jitter of the card corners,
    /// then rotation about the centre, then translation.
    pub fn homography(&self, width: usize, height: usize) -> Result<Homography> {
        let (w, h) = (width as f64, height as f64);
        let src = [PointF::new(0.0, 0.0), PointF::new(w, 0.0), PointF::new(w, h), PointF::new(0.0, h)];
        let dst: Vec<PointF> =
            src.iter().zip(&self.corner_jitter).map(|(p, (jx, jy))| PointF::new(p.x + jx * w, p.y + jy * w)).collect();
        let persp = fit_homography_dlt(&src, &dst)?;
        let rot = Homography::rotation_about(self.rotation_deg.to_radians(), Point::new(w / 2.0, h / 2.0));
        let shift = Homography::translation(self.translation.0, self.translation.1);
        Ok(shift.compose(&rot).compose(&persp))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Fraction of pixels forced to black or white.
    pub salt_pepper: f64,
    /// Peak-to-peak brightness change across the card, in grey levels.
    pub gradient: f64,
    /// Standard deviation of additive Gaussian noise, in grey levels.
    #[serde(default)]
    pub gaussian_sigma: f64,
}

impl NoiseParams {
    pub fn none() -> Self {
        Self { salt_pepper: 0.0, gradient: 0.0, gaussian_sigma: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardSpec {
    pub doc_id: String,
    pub seed: u64,
    /// `(column, row)` -> digit string; absent cells are blank.
    pub contents: BTreeMap<String, String>,
    pub warp: WarpParams,
    pub noise: NoiseParams,
    /// Glyph scale of the stamped digits.
    pub digit_scale: usize,
    /// Probability that a cell's digits are stamped with thicker strokes.
    pub thick_probability: f64,
}

pub fn content_key(column: &str, row: usize) -> String {
    format!("{column}/{row}")
}

/// Envelopes from which random card specs are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthCardConfig {
    pub max_rotation_deg: f64,
    pub max_corner_jitter: f64,
    pub max_translation: f64,
    pub salt_pepper: f64,
    pub gradient: f64,
    pub gaussian_sigma: f64,
    pub digit_scale: usize,
    pub thick_probability: f64,
    /// Probability that the first BUILDINGS entry is left blank.
    pub blank_first_probability: f64,
}

impl Default for SynthCardConfig {
    fn default() -> Self {
        Self {
            max_rotation_deg: 5.0,
            max_corner_jitter: 0.03,
            max_translation: 15.0,
            salt_pepper: 0.0005,
            gradient: 20.0,
            gaussian_sigma: 4.0,
            digit_scale: 3,
            thick_probability: 0.25,
            blank_first_probability: 0.0,
        }
    }
}

impl SynthCardConfig {
    /// No warp and no noise.
    pub fn clean() -> Self {
        Self { max_rotation_deg: 0.0, max_corner_jitter: 0.0, max_translation: 0.0, salt_pepper: 0.0, gradient: 0.0, gaussian_sigma: 0.0, ..Self::default() }
    }
}

impl CardSpec {
    /// Random contents and distortions for `seed`. Filled rows are
    /// consecutive from the top and the first row carries no year.
    pub fn random(seed: u64, cfg: &SynthCardConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut contents = BTreeMap::new();
        let filled = rng.random_range(1..=DATA_ROWS);
        let mut year = 1933u64;
        for r in 0..filled {
            let land = rng.random_range(50..=4000u64);
            let building = (rng.random_range(6.0f64..9.6).exp()).round() as u64;
            if r > 0 {
                year += rng.random_range(1..=6);
                contents.insert(content_key("YEAR", r), year.to_string());
            }
            contents.insert(content_key("LAND", r), land.to_string());
            if !(r == 0 && rng.random_bool(cfg.blank_first_probability)) {
                contents.insert(content_key("BUILDINGS", r), building.to_string());
            }
            contents.insert(content_key("TOTAL", r), (land + building).to_string());
        }
        let mut sym = |m: f64| if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
        let warp = WarpParams {
            rotation_deg: sym(cfg.max_rotation_deg),
            corner_jitter: [
                (sym(cfg.max_corner_jitter), sym(cfg.max_corner_jitter)),
                (sym(cfg.max_corner_jitter), sym(cfg.max_corner_jitter)),
                (sym(cfg.max_corner_jitter), sym(cfg.max_corner_jitter)),
                (sym(cfg.max_corner_jitter), sym(cfg.max_corner_jitter)),
            ],
            translation: (sym(cfg.max_translation), sym(cfg.max_translation)),
        };
        Self {
            doc_id: format!("card{seed:05}"),
            seed,
            contents,
            warp,
            noise: NoiseParams { salt_pepper: cfg.salt_pepper, gradient: cfg.gradient, gaussian_sigma: cfg.gaussian_sigma },
            digit_scale: cfg.digit_scale,
            thick_probability: cfg.thick_probability,
        }
    }

    pub fn validate(&self, layout: &TemplateLayout) -> Result<()> {
        for (k, v) in &self.contents {
            if !v.chars().all(|c| c.is_ascii_digit()) {
                return Err(Error::Parameter(format!("cell {k}: {v:?} is not a digit string")));
            }
            let known = layout.cells.iter().any(|c| content_key(&c.column, c.row) == *k);
            if !known {
                return Err(Error::Parameter(format!("cell {k} is not in the layout")));
            }
        }
        if self.warp.rotation_deg.abs() > 45.0 || self.warp.corner_jitter.iter().any(|(x, y)| x.abs() > 0.2 || y.abs() > 0.2) {
            return Err(Error::Parameter("warp outside the supported envelope".into()));
        }
        if !(0.0..=1.0).contains(&self.noise.salt_pepper) || !(self.noise.gaussian_sigma >= 0.0) || !(0.0..=1.0).contains(&self.thick_probability) || self.digit_scale == 0 {
            return Err(Error::Parameter("noise or glyph parameters out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCell {
    pub column: String,
    pub row: usize,
    pub text: String,
    /// Cell corners in scan coordinates.
    pub quad: Quad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardTruth {
    pub doc_id: String,
    pub seed: u64,
    /// Template-to-scan homography, row-major.
    pub homography: [f64; 9],
    pub cells: Vec<TruthCell>,
}

impl CardTruth {
    pub fn cell(&self, column: &str, row: usize) -> Option<&TruthCell> {
        self.cells.iter().find(|c| c.column == column && c.row == row)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Stamps the contents into a copy of the template, warps and adds noise.
pub fn render_card(spec: &CardSpec, template: &GrayImage, layout: &TemplateLayout) -> Result<(GrayImage, CardTruth)> {
    spec.validate(layout)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xC0FF_EE00_D15C_A11D);
    let mut img = template.clone();
    let scale = spec.digit_scale;
    for cell in &layout.cells {
        let Some(text) = spec.contents.get(&content_key(&cell.column, cell.row)) else { continue };
        let thick = usize::from(rng.random_bool(spec.thick_probability));
        let tw = font::text_width(text, scale) + thick;
        let th = font::text_height(scale) + thick;
        let slack_x = (cell.w as usize).saturating_sub(tw + 16);
        let slack_y = (cell.h as usize).saturating_sub(th + 16);
        let x = cell.x as usize + 8 + rng.random_range(0..=slack_x);
        let y = cell.y as usize + 8 + slack_y / 2 + rng.random_range(0..=slack_y / 2);
        let ink = rng.random_range(10..=60u8);
        for (i, c) in text.chars().enumerate() {
            let jitter = rng.random_range(0..3i64) as isize - 1;
            font::draw_char(&mut img, c, (x + i * font::advance(scale)) as isize, y as isize + jitter, scale, thick, ink);
        }
    }
    let h = spec.warp.homography(template.width(), template.height())?;
    let mut scan = warp_perspective(&img, &h, template.width(), template.height())?;
    let (w, hgt) = (scan.width(), scan.height());
    if spec.noise.gradient != 0.0 || spec.noise.gaussian_sigma > 0.0 {
        let gauss = Normal::new(0.0, spec.noise.gaussian_sigma.max(0.0)).map_err(|e| Error::Parameter(e.to_string()))?;
        for y in 0..hgt {
            for x in 0..w {
                let d = spec.noise.gradient * ((x + y) as f64 / (w + hgt) as f64 - 0.5);
                let e = if spec.noise.gaussian_sigma > 0.0 { gauss.sample(&mut rng) } else { 0.0 };
                let v = (scan.get(x, y) as f64 - d + e).round().clamp(0.0, 255.0) as u8;
                scan.set(x, y, v);
            }
        }
    }
    if spec.noise.salt_pepper > 0.0 {
        for p in scan.pixels_mut() {
            if rng.random_bool(spec.noise.salt_pepper) {
                *p = if rng.random_bool(0.5) { 0 } else { 255 };
            }
        }
    }
    let cells = layout
        .cells
        .iter()
        .map(|c| {
            let corners = c.rect().corners().map(|p| h.apply(p).expect("card warp is finite"));
            Ok(TruthCell {
                column: c.column.clone(),
                row: c.row,
                text: spec.contents.get(&content_key(&c.column, c.row)).cloned().unwrap_or_default(),
                quad: Quad::new(corners)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = CardTruth { doc_id: spec.doc_id.clone(), seed: spec.seed, homography: h.to_row_major(), cells };
    Ok((scan, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_valid_and_header_fits_window() {
        let l = card_layout();
        l.validate().unwrap();
        assert_eq!(l.cells.len(), 4 * DATA_ROWS);
        let b = l.cell("BUILDINGS", 0).unwrap();
        let header_w = font::text_width("BUILDINGS", HEADER_SCALE) as f64;
        assert!(b.w < 1.5 * header_w && b.w > header_w);
    }

    #[test]
    fn identity_warp_keeps_layout_quads() {
        let (t, l) = (render_template(), card_layout());
        let mut spec = CardSpec::random(3, &SynthCardConfig::clean());
        spec.warp = WarpParams::identity();
        let (img, truth) = render_card(&spec, &t, &l).unwrap();
        for c in &truth.cells {
            let r = l.cell(&c.column, c.row).unwrap().rect();
            for (a, b) in c.quad.corners.iter().zip(r.corners()) {
                assert!(a.distance(&b) < 1e-9);
            }
        }
        assert!(img.mean_abs_diff(&t) > 0.0);
        assert_eq!(truth.cell("BUILDINGS", 0).unwrap().text, spec.contents[&content_key("BUILDINGS", 0)]);
    }

    #[test]
    fn rotation_maps_corners() {
        let (t, l) = (render_template(), card_layout());
        let mut spec = CardSpec::random(4, &SynthCardConfig::clean());
        spec.warp = WarpParams { rotation_deg: 3.0, ..WarpParams::identity() };
        let (_, truth) = render_card(&spec, &t, &l).unwrap();
        let rot = Homography::rotation_about(3.0f64.to_radians(), Point::new(480.0, 380.0));
        let cell = l.cell("TOTAL", 5).unwrap();
        let expect = cell.rect().corners().map(|p| rot.apply(p).unwrap());
        let got = truth.cell("TOTAL", 5).unwrap().quad.corners;
        for (a, b) in got.iter().zip(expect) {
            assert!(a.distance(&b) < 1e-6);
        }
    }

    #[test]
    fn deterministic() {
        let (t, l) = (render_template(), card_layout());
        let spec = CardSpec::random(11, &SynthCardConfig::default());
        let (a, ta) = render_card(&spec, &t, &l).unwrap();
        let (b, tb) = render_card(&spec, &t, &l).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_eq!(CardSpec::random(11, &SynthCardConfig::default()), spec);
    }

    #[test]
    fn rejects_non_digits() {
        let mut spec = CardSpec::random(1, &SynthCardConfig::clean());
        spec.contents.insert(content_key("LAND", 0), "12a".into());
        assert!(render_card(&spec, &render_template(), &card_layout()).is_err());
    }
}
