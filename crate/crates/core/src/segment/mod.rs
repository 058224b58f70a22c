//! Cell localization.
//!
//! Two routes lead to cell regions. The single-cell route finds the printed
//! column header, runs a restricted Hough transform in a window below it and
//! intersects the ruling lines around the first entry. The comprehensive
//! route projects every rectangle of the template layout into the scan
//! through the alignment homography.

mod header;
mod hough;
mod layout;

pub use header::{ncc_map, HeaderLocator, NccHeaderLocator, OcrHeaderLocator};
pub use hough::{hough_lines, intersect, line_intersections, HoughParams, LineRT};
pub use layout::{cell_file_name, project_layout, CellRegion, LayoutCell, TemplateLayout};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::imagecore::{rectify_quad, GrayImage};
use crate::{PointF, Quad};

/// Locates the printed header; see [`HeaderLocator`].
pub fn locate_header(img: &GrayImage, header_word: &str, locator: &dyn HeaderLocator) -> Result<Rect> {
    if header_word.trim().is_empty() {
        return Err(Error::Parameter("header word is empty".into()));
    }
    locator.locate(img, header_word)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FirstCellParams {
    /// Working-window width as a multiple of the header width.
    pub window_width_factor: f64,
    /// Working-window extent below the header as a multiple of its height.
    pub window_depth_factor: f64,
    pub out_width: usize,
    pub out_height: usize,
    pub hough: HoughParams,
}

impl Default for FirstCellParams {
    fn default() -> Self {
        Self { window_width_factor: 1.5, window_depth_factor: 6.0, out_width: 200, out_height: 64, hough: HoughParams::default() }
    }
}

/// Extracts the first entry under `header_word`.
///
/// The returned quad lies in `img` coordinates; the image is the quad
/// rectified to the configured output size.
pub fn extract_first_cell(
    img: &GrayImage,
    doc_id: &str,
    header_word: &str,
    locator: &dyn HeaderLocator,
    params: &FirstCellParams,
) -> Result<(CellRegion, GrayImage)> {
    let header = locate_header(img, header_word, locator)?;
    let fail = |why: &str| Error::SegmentationFailure(format!("{doc_id}: {why}"));

    let cx = header.center().x;
    let half_w = 0.5 * params.window_width_factor * header.w;
    // half a header height of headroom catches rules that touch the glyphs
    let x0 = (cx - half_w).floor().max(0.0) as usize;
    let y0 = (header.y - 0.5 * header.h).floor().max(0.0) as usize;
    let x1 = ((cx + half_w).ceil() as usize).min(img.width());
    let y1 = ((header.bottom() + params.window_depth_factor * header.h).ceil() as usize).min(img.height());
    if x1 <= x0 + 1 || y1 <= y0 + 1 {
        return Err(fail("working window is empty"));
    }
    let window = img.crop(x0, y0, x1 - x0, y1 - y0)?;
    let (ox, oy) = (x0 as f64, y0 as f64);
    let lines: Vec<LineRT> = hough_lines(&window, &params.hough).iter().map(|l| l.translated(-ox, -oy)).collect();

    let (hs, vs): (Vec<LineRT>, Vec<LineRT>) = lines.into_iter().partition(LineRT::is_horizontal);
    let mut below: Vec<(f64, LineRT)> =
        hs.iter().map(|l| (l.y_at(cx), *l)).filter(|(y, _)| *y > header.bottom()).collect();
    below.sort_by(|a, b| a.0.total_cmp(&b.0));
    if below.len() < 2 {
        return Err(fail("fewer than two horizontal rules below the header"));
    }
    let (top, bottom) = (below[0].1, below[1].1);
    let mid_y = 0.5 * (below[0].0 + below[1].0);
    let left = vs
        .iter()
        .map(|l| (l.x_at(mid_y), *l))
        .filter(|(x, _)| *x < header.x + 2.0)
        .max_by(|a, b| a.0.total_cmp(&b.0));
    let right = vs
        .iter()
        .map(|l| (l.x_at(mid_y), *l))
        .filter(|(x, _)| *x > header.right() - 2.0)
        .min_by(|a, b| a.0.total_cmp(&b.0));
    let (Some((_, left)), Some((_, right))) = (left, right) else {
        return Err(fail("no vertical rules flanking the header"));
    };

    let corner = |a: &LineRT, b: &LineRT| intersect(a, b).ok_or_else(|| fail("parallel rules"));
    let corners: [PointF; 4] =
        [corner(&top, &left)?, corner(&top, &right)?, corner(&bottom, &right)?, corner(&bottom, &left)?];
    let quad = Quad::new(corners).map_err(|e| fail(&e.to_string()))?;
    let cell = rectify_quad(img, &quad, params.out_width, params.out_height)?;
    let region = CellRegion { doc_id: doc_id.to_string(), quad, column_name: header_word.to_string(), row_index: 0 };
    Ok((region, cell))
}

/// Batch accounting for single-cell extraction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationSummary {
    pub attempted: usize,
    pub segmented: usize,
    pub failed: usize,
    pub failure_ids: Vec<String>,
}

impl SegmentationSummary {
    pub fn record(&mut self, doc_id: &str, ok: bool) {
        self.attempted += 1;
        if ok {
            self.segmented += 1;
        } else {
            self.failed += 1;
            self.failure_ids.push(doc_id.to_string());
        }
    }

    /// Success rate in percent, one decimal.
    pub fn success_rate(&self) -> f64 {
        if self.attempted == 0 {
            return 0.0;
        }
        (1000.0 * self.segmented as f64 / self.attempted as f64).round() / 10.0
    }
}
