use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{fit_homography_dlt, has_collinear_triple, reprojection_error, Homography, Point};
use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutcome<T> {
    pub homography: Homography<T>,
    /// Indices into the correspondence list, ascending.
    pub inliers: Vec<usize>,
    /// Mean reprojection error over the inliers.
    pub mean_error: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    pub max_reprojection_error: f64,
    pub seed: u64,
}

const REFIT_ROUNDS: usize = 5;

fn consensus<T: Scalar>(h: &Homography<T>, src: &[Point<T>], dst: &[Point<T>], threshold: T) -> (Vec<usize>, T) {
    let mut inliers = Vec::new();
    let mut total = T::zero();
    for (i, (s, d)) in src.iter().zip(dst).enumerate() {
        let e = reprojection_error(h, *s, *d);
        if e <= threshold {
            inliers.push(i);
            total = total + e;
        }
    }
    (inliers, total)
}

fn better<T: Scalar>(count: usize, total: T, best: &Option<(Homography<T>, Vec<usize>, T)>) -> bool {
    match best {
        None => true,
        Some((_, b_in, b_total)) => count > b_in.len() || (count == b_in.len() && total < *b_total),
    }
}

/// Robust homography mapping `src[i]` to `dst[i]`.
///
/// Each round draws four distinct correspondences from a seeded stream,
/// skips configurations with a collinear triple, fits the exact model and
/// scores it by the number of pairs within `max_reprojection_error`. The
/// best-scoring model is refit on its inliers with the normalized DLT and the
/// consensus set recomputed under the refit, repeating until the set is
/// stable.
pub fn estimate_homography_ransac<T: Scalar>(
    src: &[Point<T>],
    dst: &[Point<T>],
    params: &RansacParams,
) -> Result<RansacOutcome<T>> {
    assert_eq!(src.len(), dst.len(), "correspondence lists differ in length");
    let n = src.len();
    if n < 4 {
        return Err(Error::InsufficientCorrespondences(n));
    }
    let threshold = T::lit(params.max_reprojection_error);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Homography<T>, Vec<usize>, T)> = None;

    for _ in 0..params.iterations.max(1) {
        let sample = rand::seq::index::sample(&mut rng, n, 4);
        let s: Vec<Point<T>> = sample.iter().map(|i| src[i]).collect();
        let d: Vec<Point<T>> = sample.iter().map(|i| dst[i]).collect();
        if has_collinear_triple(&s) || has_collinear_triple(&d) {
            continue;
        }
        let Ok(h) = fit_homography_dlt(&s, &d) else { continue };
        let (inliers, total) = consensus(&h, src, dst, threshold);
        if better(inliers.len(), total, &best) {
            best = Some((h, inliers, total));
        }
    }

    let (mut h, mut inliers, mut total) = best.ok_or(Error::DegenerateConfiguration)?;
    // the least-squares refit replaces the minimal-sample model even when a
    // borderline pair drops out of its consensus; a few rounds settle the set
    for _ in 0..REFIT_ROUNDS {
        if inliers.len() < 4 {
            break;
        }
        let s: Vec<Point<T>> = inliers.iter().map(|&i| src[i]).collect();
        let d: Vec<Point<T>> = inliers.iter().map(|&i| dst[i]).collect();
        let Ok(refit) = fit_homography_dlt(&s, &d) else { break };
        let (r_in, r_total) = consensus(&refit, src, dst, threshold);
        if r_in.len() < 4 {
            break;
        }
        let settled = r_in == inliers;
        h = refit;
        inliers = r_in;
        total = r_total;
        if settled {
            break;
        }
    }
    let mean_error = if inliers.is_empty() { T::zero() } else { total / T::from_usize_lossy(inliers.len()) };
    Ok(RansacOutcome { homography: h, inliers, mean_error })
}
