//! Oriented FAST corners with rotated binary descriptors.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{gaussian_blur, GrayImage};
use crate::PointF;

/// Side of the square patch the descriptor and orientation are computed on.
pub const PATCH_SIZE: usize = 31;
const HALF_PATCH: isize = (PATCH_SIZE / 2) as isize;
const BORDER: usize = PATCH_SIZE / 2 + 1;
const FAST_THRESHOLD: i16 = 20;
const FAST_ARC: usize = 9;
const HARRIS_K: f64 = 0.04;
const HARRIS_BLOCK: isize = 3; // half-width of the 7x7 window
const DESCRIPTOR_BLUR_SIGMA: f64 = 2.0;
const PATTERN_SEED: u64 = 0x0B5E_55ED;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Pixel center in continuous image coordinates.
    pub position: PointF,
    pub response: f64,
    pub orientation: f64,
}

/// 256 intensity-comparison bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct BinaryDescriptor(pub [u64; 4]);

impl BinaryDescriptor {
    pub const BITS: u32 = 256;

    #[inline]
    pub fn hamming(&self, other: &Self) -> u32 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a ^ b).count_ones()).sum()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i / 64] & (1 << (i % 64)) != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub keypoint: Keypoint,
    pub descriptor: BinaryDescriptor,
}

/// Bresenham circle of radius 3, clockwise from 12 o'clock.
const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

fn comparison_pattern() -> &'static [[(i8, i8); 2]; 256] {
    static PATTERN: OnceLock<[[(i8, i8); 2]; 256]> = OnceLock::new();
    PATTERN.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(PATTERN_SEED);
        let normal = Normal::new(0.0, PATCH_SIZE as f64 / 5.0).expect("valid sigma");
        let draw = |rng: &mut ChaCha8Rng| -> (i8, i8) {
            let x = normal.sample(rng).round().clamp(-HALF_PATCH as f64, HALF_PATCH as f64);
            let y = normal.sample(rng).round().clamp(-HALF_PATCH as f64, HALF_PATCH as f64);
            (x as i8, y as i8)
        };
        let mut out = [[(0i8, 0i8); 2]; 256];
        for pair in out.iter_mut() {
            loop {
                let a = draw(&mut rng);
                let b = draw(&mut rng);
                if a != b {
                    *pair = [a, b];
                    break;
                }
            }
        }
        out
    })
}

fn is_fast_corner(img: &GrayImage, x: usize, y: usize) -> bool {
    let w = img.width();
    let px = img.pixels();
    let center = px[y * w + x] as i16;
    let at = |k: usize| {
        let (dx, dy) = CIRCLE[k];
        px[(y as isize + dy) as usize * w + (x as isize + dx) as usize] as i16
    };
    // an arc of 9 covers at least two of the four compass points
    let compass = [at(0), at(4), at(8), at(12)];
    let brighter = compass.iter().filter(|&&v| v > center + FAST_THRESHOLD).count();
    let darker = compass.iter().filter(|&&v| v < center - FAST_THRESHOLD).count();
    if brighter < 2 && darker < 2 {
        return false;
    }
    let mut states = [0i8; 16];
    for (k, s) in states.iter_mut().enumerate() {
        let v = at(k);
        *s = if v > center + FAST_THRESHOLD {
            1
        } else if v < center - FAST_THRESHOLD {
            -1
        } else {
            0
        };
    }
    for target in [1i8, -1] {
        let mut run = 0;
        for k in 0..16 + FAST_ARC {
            if states[k % 16] == target {
                run += 1;
                if run >= FAST_ARC {
                    return true;
                }
            } else {
                run = 0;
            }
        }
    }
    false
}

struct Gradients {
    width: usize,
    gx: Vec<i32>,
    gy: Vec<i32>,
}

impl Gradients {
    fn sobel(img: &GrayImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let mut gx = vec![0i32; w * h];
        let mut gy = vec![0i32; w * h];
        let p = |x: isize, y: isize| img.get_clamped(x, y) as i32;
        for y in 0..h as isize {
            for x in 0..w as isize {
                let i = y as usize * w + x as usize;
                gx[i] = (p(x + 1, y - 1) + 2 * p(x + 1, y) + p(x + 1, y + 1)) - (p(x - 1, y - 1) + 2 * p(x - 1, y) + p(x - 1, y + 1));
                gy[i] = (p(x - 1, y + 1) + 2 * p(x, y + 1) + p(x + 1, y + 1)) - (p(x - 1, y - 1) + 2 * p(x, y - 1) + p(x + 1, y - 1));
            }
        }
        Self { width: w, gx, gy }
    }

    fn harris(&self, x: usize, y: usize) -> f64 {
        let (mut sxx, mut syy, mut sxy) = (0f64, 0f64, 0f64);
        for dy in -HARRIS_BLOCK..=HARRIS_BLOCK {
            for dx in -HARRIS_BLOCK..=HARRIS_BLOCK {
                let i = (y as isize + dy) as usize * self.width + (x as isize + dx) as usize;
                let (ix, iy) = (self.gx[i] as f64, self.gy[i] as f64);
                sxx += ix * ix;
                syy += iy * iy;
                sxy += ix * iy;
            }
        }
        // scale keeps responses in a readable range for 8-bit Sobel input
        let norm = 1.0 / (4.0 * 255.0 * 49.0);
        let (sxx, syy, sxy) = (sxx * norm, syy * norm, sxy * norm);
        sxx * syy - sxy * sxy - HARRIS_K * (sxx + syy) * (sxx + syy)
    }
}

/// Intensity-centroid orientation over the inscribed disc of the patch.
fn orientation(img: &GrayImage, x: usize, y: usize) -> f64 {
    let (mut m10, mut m01) = (0f64, 0f64);
    let r2 = HALF_PATCH * HALF_PATCH;
    for dy in -HALF_PATCH..=HALF_PATCH {
        for dx in -HALF_PATCH..=HALF_PATCH {
            if dx * dx + dy * dy > r2 {
                continue;
            }
            let v = img.get((x as isize + dx) as usize, (y as isize + dy) as usize) as f64;
            m10 += dx as f64 * v;
            m01 += dy as f64 * v;
        }
    }
    m01.atan2(m10)
}

fn describe(smoothed: &GrayImage, x: usize, y: usize, angle: f64) -> BinaryDescriptor {
    let (s, c) = angle.sin_cos();
    let mut d = BinaryDescriptor::default();
    let sample = |(px, py): (i8, i8)| {
        let (px, py) = (px as f64, py as f64);
        let rx = (c * px - s * py).round() as isize;
        let ry = (s * px + c * py).round() as isize;
        smoothed.get_clamped(x as isize + rx, y as isize + ry)
    };
    for (i, [a, b]) in comparison_pattern().iter().enumerate() {
        if sample(*a) < sample(*b) {
            d.0[i / 64] |= 1 << (i % 64);
        }
    }
    d
}

/// Detects up to `n_features` oriented corners ranked by Harris response and
/// computes their descriptors. Deterministic for a given image.
pub fn detect_and_describe(img: &GrayImage, n_features: usize) -> Result<Vec<Feature>> {
    if img.width() < PATCH_SIZE || img.height() < PATCH_SIZE {
        return Err(Error::Dimension(format!(
            "feature detection needs at least {PATCH_SIZE}x{PATCH_SIZE}, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let (w, h) = (img.width(), img.height());
    let grads = Gradients::sobel(img);
    let mut response = vec![f64::NEG_INFINITY; w * h];
    let mut candidates = Vec::new();
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            if is_fast_corner(img, x, y) {
                let r = grads.harris(x, y);
                response[y * w + x] = r;
                candidates.push((x, y));
            }
        }
    }
    // 3x3 non-maximum suppression on the Harris response; ties resolved by
    // raster order so the result is deterministic
    let mut kept: Vec<(usize, usize, f64)> = candidates
        .into_iter()
        .filter(|&(x, y)| {
            let r = response[y * w + x];
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let j = (y as isize + dy) as usize * w + (x as isize + dx) as usize;
                    let other = response[j];
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if other > r || (other == r && earlier) {
                        return false;
                    }
                }
            }
            true
        })
        .map(|(x, y)| (x, y, response[y * w + x]))
        .collect();
    kept.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0)));
    kept.truncate(n_features);

    let smoothed = gaussian_blur(img, DESCRIPTOR_BLUR_SIGMA);
    Ok(kept
        .into_iter()
        .map(|(x, y, r)| {
            let angle = orientation(img, x, y);
            Feature {
                keypoint: Keypoint {
                    position: PointF::new(x as f64 + 0.5, y as f64 + 0.5),
                    response: r.max(0.0),
                    orientation: angle,
                },
                descriptor: describe(&smoothed, x, y, angle),
            }
        })
        .collect())
}
