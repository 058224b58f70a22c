use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::Feature;
use crate::error::{Error, Result};
use crate::num::ceil_fraction;
use crate::PointF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMatch {
    pub template_index: usize,
    pub scan_index: usize,
    pub distance: u32,
}

/// Brute-force nearest neighbour in Hamming distance for every template
/// descriptor, sorted ascending by distance, truncated to
/// `ceil(retain_fraction * total)`.
pub fn match_descriptors(template: &[Feature], scan: &[Feature], retain_fraction: f64) -> Result<Vec<FeatureMatch>> {
    if template.is_empty() || scan.is_empty() {
        return Err(Error::NoFeatures(format!(
            "{} template / {} scan descriptors",
            template.len(),
            scan.len()
        )));
    }
    if !(retain_fraction > 0.0 && retain_fraction <= 1.0) {
        return Err(Error::Parameter(format!("retain_fraction {retain_fraction} outside (0, 1]")));
    }
    let mut matches: Vec<FeatureMatch> = template
        .par_iter()
        .enumerate()
        .map(|(ti, t)| {
            let (scan_index, distance) = scan
                .iter()
                .enumerate()
                .map(|(si, s)| (si, t.descriptor.hamming(&s.descriptor)))
                .min_by_key(|&(si, d)| (d, si))
                .expect("scan set non-empty");
            FeatureMatch { template_index: ti, scan_index, distance }
        })
        .collect();
    matches.sort_by_key(|m| (m.distance, m.template_index));
    matches.truncate(ceil_fraction(matches.len(), retain_fraction));
    Ok(matches)
}

/// Index of the 2x2 partition cell about the image center:
/// 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right.
pub fn quadrant(p: PointF, dims: (usize, usize)) -> u8 {
    let right = p.x >= dims.0 as f64 / 2.0;
    let bottom = p.y >= dims.1 as f64 / 2.0;
    right as u8 + 2 * bottom as u8
}

/// Keeps matches whose endpoints occupy the same quadrant of their own image.
pub fn quadrant_filter(
    matches: &[FeatureMatch],
    template: &[Feature],
    scan: &[Feature],
    template_dims: (usize, usize),
    scan_dims: (usize, usize),
) -> Vec<FeatureMatch> {
    matches
        .iter()
        .filter(|m| {
            let tp = template[m.template_index].keypoint.position;
            let sp = scan[m.scan_index].keypoint.position;
            quadrant(tp, template_dims) == quadrant(sp, scan_dims)
        })
        .copied()
        .collect()
}
