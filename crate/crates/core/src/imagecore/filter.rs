use super::GrayImage;

/// Summed-area table with one row/column of zero padding.
pub struct IntegralImage {
    width: usize,
    height: usize,
    sum: Vec<u64>,
    sum_sq: Vec<u64>,
}

impl IntegralImage {
    pub fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let stride = w + 1;
        let mut sum = vec![0u64; stride * (h + 1)];
        let mut sum_sq = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            let mut row_sq = 0u64;
            for x in 0..w {
                let v = img.get(x, y) as u64;
                row += v;
                row_sq += v * v;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
                sum_sq[(y + 1) * stride + x + 1] = sum_sq[y * stride + x + 1] + row_sq;
            }
        }
        Self { width: w, height: h, sum, sum_sq }
    }

    /// Sum over `[x0, x1) x [y0, y1)` (clipped).
    pub fn rect_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> u64 {
        self.rect(&self.sum, x0, y0, x1, y1)
    }

    pub fn rect_sum_sq(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> u64 {
        self.rect(&self.sum_sq, x0, y0, x1, y1)
    }

    fn rect(&self, table: &[u64], x0: usize, y0: usize, x1: usize, y1: usize) -> u64 {
        let (x1, y1) = (x1.min(self.width), y1.min(self.height));
        if x0 >= x1 || y0 >= y1 {
            return 0;
        }
        let s = self.width + 1;
        table[y1 * s + x1] + table[y0 * s + x0] - table[y0 * s + x1] - table[y1 * s + x0]
    }
}

/// Marks ink: a pixel is foreground when it is darker than the mean of its
/// `window x window` neighborhood by more than `offset`.
pub fn adaptive_threshold_mean(img: &GrayImage, window: usize, offset: f64) -> Vec<bool> {
    let ii = IntegralImage::new(img);
    let r = window / 2;
    let (w, h) = (img.width(), img.height());
    let mut out = vec![false; w * h];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            let mean = ii.rect_sum(x0, y0, x1, y1) as f64 / n;
            out[y * w + x] = (img.get(x, y) as f64) < mean - offset;
        }
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (img.width(), img.height());
    let mut tmp = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * img.get_clamped(x as isize + i as isize - r, y as isize) as f64;
            }
            tmp[y * w + x] = acc as f32;
        }
    }
    GrayImage::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for (i, kv) in k.iter().enumerate() {
            let yy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
            acc += kv * tmp[yy * w + x] as f64;
        }
        acc.round().clamp(0.0, 255.0) as u8
    })
    .expect("same dimensions")
}

/// 3x3 median filter with edge replication.
pub fn median3(img: &GrayImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let mut win = [0u8; 9];
        let mut i = 0;
        for dy in -1..=1 {
            for dx in -1..=1 {
                win[i] = img.get_clamped(x as isize + dx, y as isize + dy);
                i += 1;
            }
        }
        win.sort_unstable();
        win[4]
    })
    .expect("same dimensions")
}

/// Block-average downsampling by an integer factor (partial edge blocks are
/// dropped).
pub fn downsample_box(img: &GrayImage, factor: usize) -> GrayImage {
    if factor <= 1 {
        return img.clone();
    }
    let w = (img.width() / factor).max(1);
    let h = (img.height() / factor).max(1);
    let ii = IntegralImage::new(img);
    GrayImage::from_fn(w, h, |x, y| {
        let (x0, y0) = (x * factor, y * factor);
        let s = ii.rect_sum(x0, y0, x0 + factor, y0 + factor);
        let n = ((x0 + factor).min(img.width()) - x0) * ((y0 + factor).min(img.height()) - y0);
        ((s as f64) / n as f64).round() as u8
    })
    .expect("non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_sums() {
        let img = GrayImage::from_fn(5, 4, |x, y| (x + 10 * y) as u8).unwrap();
        let ii = IntegralImage::new(&img);
        let direct: u64 = (1..3).flat_map(|y| (2..5).map(move |x| (x + 10 * y) as u64)).sum();
        assert_eq!(ii.rect_sum(2, 1, 5, 3), direct);
        assert_eq!(ii.rect_sum(0, 0, 99, 99), (0..4).flat_map(|y| (0..5).map(move |x| (x + 10 * y) as u64)).sum::<u64>());
    }

    #[test]
    fn adaptive_threshold_finds_thin_line() {
        let img = GrayImage::from_fn(40, 40, |_, y| if y == 20 { 0 } else { 230 }).unwrap();
        let mask = adaptive_threshold_mean(&img, 15, 10.0);
        assert!((0..40).all(|x| mask[20 * 40 + x]));
        assert_eq!(mask.iter().filter(|&&m| m).count(), 40);
    }

    #[test]
    fn median_removes_isolated_pepper() {
        let mut img = GrayImage::filled(9, 9, 255).unwrap();
        img.set(4, 4, 0);
        assert!(median3(&img).pixels().iter().all(|&p| p == 255));
    }

    #[test]
    fn blur_preserves_constant() {
        let img = GrayImage::filled(12, 9, 77).unwrap();
        assert_eq!(gaussian_blur(&img, 2.0), img);
    }
}
