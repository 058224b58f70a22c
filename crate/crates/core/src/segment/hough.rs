use serde::{Deserialize, Serialize};

use crate::imagecore::{adaptive_threshold_mean, GrayImage};
use crate::PointF;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoughParams {
    pub threshold_window: usize,
    pub threshold_offset: f64,
    /// Accepted deviation from 0 and 90 degrees.
    pub angle_tolerance_deg: u32,
    /// Minimum votes as a fraction of the image dimension the line spans.
    pub min_vote_fraction: f64,
    /// Peaks of one orientation closer than this (pixels) are merged.
    pub merge_distance: f64,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self { threshold_window: 15, threshold_offset: 10.0, angle_tolerance_deg: 2, min_vote_fraction: 0.5, merge_distance: 10.0 }
    }
}

/// `x cos(theta) + y sin(theta) = rho` in continuous image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineRT {
    pub rho: f64,
    pub theta: f64,
    pub votes: u32,
}

impl LineRT {
    /// Near-horizontal lines have theta close to 90 degrees.
    pub fn is_horizontal(&self) -> bool {
        (self.theta - std::f64::consts::FRAC_PI_2).abs() < std::f64::consts::FRAC_PI_4
    }

    /// y on the line at abscissa `x` (horizontal lines).
    pub fn y_at(&self, x: f64) -> f64 {
        (self.rho - x * self.theta.cos()) / self.theta.sin()
    }

    /// x on the line at ordinate `y` (vertical lines).
    pub fn x_at(&self, y: f64) -> f64 {
        (self.rho - y * self.theta.sin()) / self.theta.cos()
    }

    /// Same line expressed in a frame whose origin sits at `(dx, dy)` of
    /// the current one.
    pub fn translated(&self, dx: f64, dy: f64) -> LineRT {
        LineRT { rho: self.rho - dx * self.theta.cos() - dy * self.theta.sin(), ..*self }
    }
}

/// Detects near-axis-aligned ruling lines.
///
/// The image is binarized with an adaptive mean threshold; every ink pixel
/// votes in a 1 px x 1 degree accumulator restricted to the angles within the
/// tolerance of 0 and 90 degrees. Peaks reaching the vote fraction of the
/// spanned dimension are kept, peaks of one orientation closer than the
/// merge distance collapse onto the strongest, and each survivor's rho is
/// refined to the vote-weighted centroid of its neighbouring bins.
pub fn hough_lines(img: &GrayImage, params: &HoughParams) -> Vec<LineRT> {
    let (w, h) = (img.width(), img.height());
    let mask = adaptive_threshold_mean(img, params.threshold_window, params.threshold_offset);
    let tol = params.angle_tolerance_deg as i32;
    let degrees: Vec<i32> = (-tol..=tol).map(|d| d.rem_euclid(180)).chain((90 - tol)..=(90 + tol)).collect();
    let thetas: Vec<f64> = degrees.iter().map(|&d| (d as f64).to_radians()).collect();
    let trig: Vec<(f64, f64)> = thetas.iter().map(|t| (t.cos(), t.sin())).collect();
    let diag = ((w * w + h * h) as f64).sqrt().ceil() as i64 + 2;
    let n_rho = (2 * diag + 1) as usize;
    let mut acc = vec![0u32; thetas.len() * n_rho];

    for y in 0..h {
        for x in 0..w {
            if !mask[y * w + x] {
                continue;
            }
            // pixel centers
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            for (ti, (c, s)) in trig.iter().enumerate() {
                let r = (fx * c + fy * s).round() as i64 + diag;
                acc[ti * n_rho + r as usize] += 1;
            }
        }
    }

    let is_horizontal_bin = |ti: usize| (degrees[ti] - 90).abs() <= tol;
    let mut peaks: Vec<(u32, usize, usize)> = Vec::new();
    for ti in 0..thetas.len() {
        let min_votes = params.min_vote_fraction * if is_horizontal_bin(ti) { w } else { h } as f64;
        for ri in 0..n_rho {
            let v = acc[ti * n_rho + ri];
            if v > 0 && v as f64 >= min_votes {
                peaks.push((v, ti, ri));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let position = |l: &LineRT| if l.is_horizontal() { l.y_at(cx) } else { l.x_at(cy) };
    let mut accepted: Vec<LineRT> = Vec::new();
    for (votes, ti, ri) in peaks {
        let rho = refine_rho(&acc[ti * n_rho..(ti + 1) * n_rho], ri) - diag as f64;
        let line = LineRT { rho, theta: thetas[ti], votes };
        let dup = accepted
            .iter()
            .any(|a| a.is_horizontal() == line.is_horizontal() && (position(a) - position(&line)).abs() < params.merge_distance);
        if !dup {
            accepted.push(line);
        }
    }
    accepted.sort_by(|a, b| b.is_horizontal().cmp(&a.is_horizontal()).then(position(a).total_cmp(&position(b))));
    accepted
}

fn refine_rho(row: &[u32], peak: usize) -> f64 {
    let peak_votes = row[peak] as f64;
    let lo = peak.saturating_sub(2);
    let hi = (peak + 2).min(row.len() - 1);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &v) in row.iter().enumerate().take(hi + 1).skip(lo) {
        if v as f64 >= 0.5 * peak_votes {
            num += i as f64 * v as f64;
            den += v as f64;
        }
    }
    num / den
}

/// Intersection of two lines; `None` when they are within 1 degree of
/// parallel.
pub fn intersect(a: &LineRT, b: &LineRT) -> Option<PointF> {
    let mut dt = (a.theta - b.theta).abs() % std::f64::consts::PI;
    dt = dt.min(std::f64::consts::PI - dt);
    if dt < 1f64.to_radians() {
        return None;
    }
    let (c1, s1, c2, s2) = (a.theta.cos(), a.theta.sin(), b.theta.cos(), b.theta.sin());
    let det = c1 * s2 - s1 * c2;
    Some(PointF::new((a.rho * s2 - b.rho * s1) / det, (c1 * b.rho - c2 * a.rho) / det))
}

/// Grid of intersections: one row per horizontal line (sorted by y), one
/// column per vertical line (sorted by x). Near-parallel pairs are `None`.
pub fn line_intersections(horizontals: &[LineRT], verticals: &[LineRT]) -> Vec<Vec<Option<PointF>>> {
    if horizontals.is_empty() || verticals.is_empty() {
        return Vec::new();
    }
    let mut hs = horizontals.to_vec();
    let mut vs = verticals.to_vec();
    // order at the centroid of all intersections' neighbourhood
    hs.sort_by(|a, b| a.y_at(0.0).total_cmp(&b.y_at(0.0)));
    vs.sort_by(|a, b| a.x_at(0.0).total_cmp(&b.x_at(0.0)));
    hs.iter().map(|h| vs.iter().map(|v| intersect(h, v)).collect()).collect()
}
