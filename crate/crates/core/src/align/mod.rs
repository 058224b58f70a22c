//! Registration of a scanned card onto the blank reference template.
//!
//! Each attempt detects oriented corners on both images, keeps the best
//! fraction of Hamming matches, discards matches whose endpoints fall in
//! different quadrants, and runs RANSAC. An attempt succeeds when the
//! consensus set reaches `min_inliers`; otherwise the feature budget grows
//! along the retry schedule. A card that exhausts the schedule is flagged for
//! manual inspection rather than treated as an error.

mod features;
mod matching;
mod ransac;

pub use features::{detect_and_describe, BinaryDescriptor, Feature, Keypoint, PATCH_SIZE};
pub use matching::{match_descriptors, quadrant, quadrant_filter, FeatureMatch};
pub use ransac::{estimate_homography_ransac, RansacOutcome, RansacParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{brighten_dark_regions, GrayImage};
use crate::{Homography, PointF};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentPolicy {
    /// Feature budgets tried in order.
    pub feature_counts: Vec<usize>,
    pub retain_fraction: f64,
    pub min_inliers: usize,
    pub max_reprojection_error: f64,
    pub ransac_iterations: usize,
    pub seed: u64,
    /// `(threshold, target)` for dark-region brightening of both images
    /// before detection; `None` disables it.
    pub brighten: Option<(u8, u8)>,
}

impl Default for AlignmentPolicy {
    fn default() -> Self {
        Self {
            feature_counts: vec![5000, 7000, 10000],
            retain_fraction: 0.05,
            min_inliers: 15,
            max_reprojection_error: 6.0,
            ransac_iterations: 2000,
            seed: 0,
            brighten: Some((64, 96)),
        }
    }
}

impl AlignmentPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.feature_counts.is_empty() {
            return Err(Error::Parameter("feature_counts schedule is empty".into()));
        }
        if self.feature_counts.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Parameter("feature_counts schedule must be non-decreasing".into()));
        }
        if !(self.retain_fraction > 0.0 && self.retain_fraction <= 1.0) {
            return Err(Error::Parameter(format!("retain_fraction {} outside (0, 1]", self.retain_fraction)));
        }
        if self.min_inliers < 4 {
            return Err(Error::Parameter("min_inliers must be at least 4".into()));
        }
        if let Some((t, g)) = self.brighten {
            if t > g {
                return Err(Error::Parameter(format!("brighten threshold {t} exceeds target {g}")));
            }
        }
        Ok(())
    }

    fn ransac(&self, attempt: usize) -> RansacParams {
        RansacParams {
            iterations: self.ransac_iterations,
            max_reprojection_error: self.max_reprojection_error,
            seed: self.seed ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentStatus {
    Aligned,
    FlaggedForManualInspection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub status: AlignmentStatus,
    /// Maps scan coordinates to template coordinates.
    pub homography: Option<Homography>,
    pub inlier_count: usize,
    pub mean_reprojection_error: f64,
    pub attempts_used: usize,
}

impl AlignmentResult {
    pub fn is_aligned(&self) -> bool {
        self.status == AlignmentStatus::Aligned
    }

    pub fn log_entry(&self, doc_id: &str) -> AlignmentLogEntry {
        AlignmentLogEntry {
            doc_id: doc_id.to_string(),
            status: self.status,
            h: self.homography.map(|h| h.to_row_major()),
            inliers: self.inlier_count,
            mean_err: self.mean_reprojection_error,
            attempts: self.attempts_used,
        }
    }
}

/// One line of the alignment JSON-lines run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentLogEntry {
    pub doc_id: String,
    pub status: AlignmentStatus,
    pub h: Option<[f64; 9]>,
    pub inliers: usize,
    pub mean_err: f64,
    pub attempts: usize,
}

/// Template features for each budget of a policy, computed once and shared
/// across any number of alignment tasks.
#[derive(Debug, Clone)]
pub struct PreparedTemplate {
    dims: (usize, usize),
    features: Vec<(usize, Vec<Feature>)>,
}

impl PreparedTemplate {
    pub fn new(template: &GrayImage, policy: &AlignmentPolicy) -> Result<Self> {
        policy.validate()?;
        let prepared = preprocess(template, policy);
        let mut features: Vec<(usize, Vec<Feature>)> = Vec::new();
        for &count in &policy.feature_counts {
            if features.iter().any(|(c, _)| *c == count) {
                continue;
            }
            features.push((count, detect_and_describe(&prepared, count)?));
        }
        Ok(Self { dims: (template.width(), template.height()), features })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn features_for(&self, count: usize) -> Option<&[Feature]> {
        self.features.iter().find(|(c, _)| *c == count).map(|(_, f)| f.as_slice())
    }
}

fn preprocess(img: &GrayImage, policy: &AlignmentPolicy) -> GrayImage {
    match policy.brighten {
        Some((t, g)) => brighten_dark_regions(img, t, g),
        None => img.clone(),
    }
}

struct Attempt {
    homography: Option<Homography>,
    inliers: usize,
    mean_error: f64,
}

fn attempt(
    scan: &GrayImage,
    template: &PreparedTemplate,
    count: usize,
    index: usize,
    policy: &AlignmentPolicy,
) -> Result<Attempt> {
    let t_feats = template.features_for(count).ok_or_else(|| Error::Parameter(format!("template not prepared for budget {count}")))?;
    let s_feats = detect_and_describe(scan, count)?;
    let matches = match_descriptors(t_feats, &s_feats, policy.retain_fraction)?;
    let filtered = quadrant_filter(&matches, t_feats, &s_feats, template.dims, (scan.width(), scan.height()));
    let src: Vec<PointF> = filtered.iter().map(|m| s_feats[m.scan_index].keypoint.position).collect();
    let dst: Vec<PointF> = filtered.iter().map(|m| t_feats[m.template_index].keypoint.position).collect();
    let out = estimate_homography_ransac(&src, &dst, &policy.ransac(index))?;
    Ok(Attempt { homography: Some(out.homography), inliers: out.inliers.len(), mean_error: out.mean_error })
}

/// Aligns a scan against a template prepared for the same policy.
pub fn align_prepared(scan: &GrayImage, template: &PreparedTemplate, policy: &AlignmentPolicy) -> Result<AlignmentResult> {
    policy.validate()?;
    let scan = preprocess(scan, policy);
    let mut best: Option<Attempt> = None;
    let mut attempts_used = 0;
    for (index, &count) in policy.feature_counts.iter().enumerate() {
        attempts_used = index + 1;
        let outcome = match attempt(&scan, template, count, index, policy) {
            Ok(a) => a,
            Err(e) => {
                log::debug!("alignment attempt {attempts_used} (budget {count}) failed: {e}");
                Attempt { homography: None, inliers: 0, mean_error: f64::NAN }
            }
        };
        if outcome.inliers >= policy.min_inliers {
            return Ok(AlignmentResult {
                status: AlignmentStatus::Aligned,
                homography: outcome.homography,
                inlier_count: outcome.inliers,
                mean_reprojection_error: outcome.mean_error,
                attempts_used,
            });
        }
        if best.as_ref().is_none_or(|b| outcome.inliers > b.inliers) {
            best = Some(outcome);
        }
    }
    let best = best.expect("schedule is non-empty");
    Ok(AlignmentResult {
        status: AlignmentStatus::FlaggedForManualInspection,
        homography: best.homography,
        inlier_count: best.inliers,
        mean_reprojection_error: best.mean_error,
        attempts_used,
    })
}

/// Registers `scan` onto `template`; failure to align is reported through
/// the returned status.
pub fn align_card(scan: &GrayImage, template: &GrayImage, policy: &AlignmentPolicy) -> Result<AlignmentResult> {
    let prepared = PreparedTemplate::new(template, policy)?;
    align_prepared(scan, &prepared, policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_policy_matches_retry_schedule() {
        let p = AlignmentPolicy::default();
        assert_eq!(p.feature_counts, vec![5000, 7000, 10000]);
        assert_eq!(p.retain_fraction, 0.05);
        assert_eq!(p.min_inliers, 15);
        assert_eq!(p.max_reprojection_error, 6.0);
        assert_eq!(p.ransac_iterations, 2000);
        p.validate().unwrap();
    }

    #[test]
    fn policy_validation() {
        let mut p = AlignmentPolicy { feature_counts: vec![], ..Default::default() };
        assert!(p.validate().is_err());
        p.feature_counts = vec![7000, 5000];
        assert!(p.validate().is_err());
        p.feature_counts = vec![5000];
        p.min_inliers = 3;
        assert!(p.validate().is_err());
        p.min_inliers = 4;
        p.retain_fraction = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn log_entry_shape() {
        let r = AlignmentResult {
            status: AlignmentStatus::FlaggedForManualInspection,
            homography: None,
            inlier_count: 3,
            mean_reprojection_error: 1.5,
            attempts_used: 3,
        };
        let v = serde_json::to_value(r.log_entry("card-7")).unwrap();
        assert_eq!(v["status"], "flagged_for_manual_inspection");
        assert!(v["h"].is_null());
        assert_eq!(v["attempts"], 3);
        assert_eq!(v["doc_id"], "card-7");
    }
}
