//! 8-bit grayscale rasters and the geometric resampling used by every stage
//! of the card pipeline.

mod filter;
mod io;

pub use filter::{adaptive_threshold_mean, downsample_box, gaussian_blur, median3, IntegralImage};
pub use io::{encode_png, load_gray, save_png};

use crate::error::{Error, Result};
use crate::geometry::{fit_homography_dlt, Homography, Point, Quad};

/// Row-major 8-bit luminance raster.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GrayImage({}x{})", self.width, self.height)
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("{width}x{height} image")));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "buffer of {} bytes for {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.get(xc, yc)
    }

    /// Bilinear sample at a continuous coordinate (pixel-area convention).
    /// Returns `None` outside the image area.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0 && x <= self.width as f64 && y <= self.height as f64) {
            return None;
        }
        let fx = x - 0.5;
        let fy = y - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let ax = fx - x0;
        let ay = fy - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let p00 = self.get_clamped(xi, yi) as f64;
        let p10 = self.get_clamped(xi + 1, yi) as f64;
        let p01 = self.get_clamped(xi, yi + 1) as f64;
        let p11 = self.get_clamped(xi + 1, yi + 1) as f64;
        let top = p00 + (p10 - p00) * ax;
        let bottom = p01 + (p11 - p01) * ax;
        Some(top + (bottom - top) * ay)
    }

    /// Copies the window `[x, x+w) x [y, y+h)` clipped to the image.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        let x1 = (x + w).min(self.width);
        let y1 = (y + h).min(self.height);
        if x >= x1 || y >= y1 {
            return Err(Error::Dimension(format!(
                "crop {w}x{h}@({x},{y}) outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut out = Vec::with_capacity((x1 - x) * (y1 - y));
        for row in y..y1 {
            out.extend_from_slice(&self.pixels[row * self.width + x..row * self.width + x1]);
        }
        Self::new(x1 - x, y1 - y, out)
    }

    /// Rotates clockwise by `quarter_turns * 90` degrees.
    pub fn rotate90(&self, quarter_turns: i32) -> Self {
        let (w, h) = (self.width, self.height);
        match quarter_turns.rem_euclid(4) {
            0 => self.clone(),
            1 => Self::from_fn(h, w, |x, y| self.get(y, h - 1 - x)).expect("non-empty"),
            2 => Self::from_fn(w, h, |x, y| self.get(w - 1 - x, h - 1 - y)).expect("non-empty"),
            _ => Self::from_fn(h, w, |x, y| self.get(w - 1 - y, x)).expect("non-empty"),
        }
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }

    pub fn mean_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height), "image sizes differ");
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs() as f64)
            .sum::<f64>()
            / self.pixels.len() as f64
    }
}

/// Luma conversion with fixed weights 0.299/0.587/0.114.
pub fn to_grayscale(rgb: &image::RgbImage) -> Result<GrayImage> {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Dimension(format!("{w}x{h} image")));
    }
    let pixels = rgb
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            let luma = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
            luma.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(w, h, pixels)
}

/// Linearly compresses luminance below `threshold` into `[0, target)`;
/// brighter pixels are unchanged.
pub fn brighten_dark_regions(img: &GrayImage, threshold: u8, target: u8) -> GrayImage {
    debug_assert!(threshold <= target);
    if threshold == 0 {
        return img.clone();
    }
    let scale = target as f64 / threshold as f64;
    let lut: Vec<u8> = (0..=255u16)
        .map(|v| if v < threshold as u16 { (v as f64 * scale).round().min(255.0) as u8 } else { v as u8 })
        .collect();
    let pixels = img.pixels.iter().map(|&p| lut[p as usize]).collect();
    GrayImage { width: img.width, height: img.height, pixels }
}

/// Resamples `img` into the frame of `h` (output pixel `(u, v)` reads the
/// source at `h^-1 (u, v, 1)`); samples falling outside the source are white.
pub fn warp_perspective(img: &GrayImage, h: &Homography<f64>, out_width: usize, out_height: usize) -> Result<GrayImage> {
    let inv = h.inverse()?;
    let m = *inv.matrix();
    let mut pixels = Vec::with_capacity(out_width * out_height);
    for v in 0..out_height {
        let cy = v as f64 + 0.5;
        for u in 0..out_width {
            let cx = u as f64 + 0.5;
            let w = m[2][0] * cx + m[2][1] * cy + m[2][2];
            let value = if w.abs() < f64::EPSILON {
                None
            } else {
                let sx = (m[0][0] * cx + m[0][1] * cy + m[0][2]) / w;
                let sy = (m[1][0] * cx + m[1][1] * cy + m[1][2]) / w;
                img.sample_bilinear(sx, sy)
            };
            pixels.push(value.map_or(255, |s| s.round().clamp(0.0, 255.0) as u8));
        }
    }
    GrayImage::new(out_width, out_height, pixels)
}

/// Tolerance for quad corners lying outside the image before rejection.
pub const QUAD_BOUNDS_TOLERANCE: f64 = 2.0;

/// Homography taking the quad onto the `out_width x out_height` rectangle.
pub fn quad_to_rect_homography(region: &Quad<f64>, out_width: usize, out_height: usize) -> Result<Homography<f64>> {
    let (w, h) = (out_width as f64, out_height as f64);
    let dst = [Point::new(0.0, 0.0), Point::new(w, 0.0), Point::new(w, h), Point::new(0.0, h)];
    fit_homography_dlt(&region.corners, &dst)
}

/// Stretches the quadrilateral region to an upright rectangle.
pub fn rectify_quad(img: &GrayImage, region: &Quad<f64>, out_width: usize, out_height: usize) -> Result<GrayImage> {
    let region = Quad::new(region.corners)?;
    let (w, h) = (img.width as f64, img.height as f64);
    let tol = QUAD_BOUNDS_TOLERANCE;
    let mut corners = region.corners;
    for c in corners.iter_mut() {
        if c.x < -tol || c.y < -tol || c.x > w + tol || c.y > h + tol {
            return Err(Error::Dimension(format!(
                "quad corner ({:.1}, {:.1}) outside {}x{} image",
                c.x, c.y, img.width, img.height
            )));
        }
        c.x = c.x.clamp(0.0, w);
        c.y = c.y.clamp(0.0, h);
    }
    let region = Quad::new(corners)?;
    let hm = quad_to_rect_homography(&region, out_width, out_height)?;
    warp_perspective(img, &hm, out_width, out_height)
}
