//! Planar geometry: points, quadrilaterals and projective transforms.
//!
//! Image coordinates follow the pixel-area convention: pixel `(i, j)` covers
//! `[i, i+1) x [j, j+1)` and its center sits at `(i + 0.5, j + 0.5)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Self) -> T {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn cast<U: Scalar>(&self) -> Point<U> {
        Point::new(U::lit(self.x.to_f64_lossy()), U::lit(self.y.to_f64_lossy()))
    }
}

/// Axis-aligned rectangle `[x, x+w) x [y, y+h)` in continuous coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> Point<f64> {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// True when the open interiors intersect (shared edges do not count).
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x < other.right() && other.x < self.right() && self.y < other.bottom() && other.y < self.bottom()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Rect {
        Rect::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    pub fn corners(&self) -> [Point<f64>; 4] {
        [
            Point::new(self.x, self.y),
            Point::new(self.right(), self.y),
            Point::new(self.right(), self.bottom()),
            Point::new(self.x, self.bottom()),
        ]
    }

    pub fn to_quad(&self) -> Result<Quad<f64>> {
        Quad::new(self.corners())
    }
}

/// Twice the signed area of triangle `abc` (positive when `c` is clockwise
/// from `ab` on screen, i.e. counter-clockwise in y-up terms).
fn cross3<T: Scalar>(a: Point<T>, b: Point<T>, c: Point<T>) -> T {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Four corners ordered top-left, top-right, bottom-right, bottom-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quad<T> {
    pub corners: [Point<T>; 4],
}

impl<T: Scalar> Quad<T> {
    /// Validates ordering, convexity and non-zero area.
    pub fn new(corners: [Point<T>; 4]) -> Result<Self> {
        if corners.iter().any(|p| !p.is_finite()) {
            return Err(Error::DegenerateQuad("non-finite corner".into()));
        }
        let q = Self { corners };
        let area = q.signed_area();
        let scale = q.diameter().powi(2);
        if !(area > T::lit(1e-9) * scale.max(T::one())) {
            return Err(Error::DegenerateQuad(format!(
                "signed area {} is not positive",
                area.to_f64_lossy()
            )));
        }
        for i in 0..4 {
            let turn = cross3(corners[i], corners[(i + 1) % 4], corners[(i + 2) % 4]);
            if turn <= T::zero() {
                return Err(Error::DegenerateQuad(format!("not convex at corner {}", (i + 1) % 4)));
            }
        }
        Ok(q)
    }

    pub fn from_rect(x: T, y: T, w: T, h: T) -> Result<Self> {
        Self::new([
            Point::new(x, y),
            Point::new(x + w, y),
            Point::new(x + w, y + h),
            Point::new(x, y + h),
        ])
    }

    /// Shoelace area; positive for the documented corner order in image
    /// coordinates (y down).
    pub fn signed_area(&self) -> T {
        polygon_signed_area(&self.corners)
    }

    fn diameter(&self) -> T {
        let c = &self.corners;
        c[0].distance(&c[2]).max(c[1].distance(&c[3]))
    }

    pub fn bounding_box(&self) -> (T, T, T, T) {
        let xs = self.corners.iter().map(|p| p.x);
        let ys = self.corners.iter().map(|p| p.y);
        let min_x = xs.clone().fold(T::infinity(), T::min);
        let max_x = xs.fold(T::neg_infinity(), T::max);
        let min_y = ys.clone().fold(T::infinity(), T::min);
        let max_y = ys.fold(T::neg_infinity(), T::max);
        (min_x, min_y, max_x, max_y)
    }

    /// Intersection over union of two convex quads.
    pub fn iou(&self, other: &Self) -> T {
        let inter = convex_clip(&self.corners, &other.corners);
        let inter_area = if inter.len() >= 3 { polygon_signed_area(&inter).abs() } else { T::zero() };
        let union = self.signed_area().abs() + other.signed_area().abs() - inter_area;
        if union <= T::zero() {
            T::zero()
        } else {
            inter_area / union
        }
    }
}

pub fn polygon_signed_area<T: Scalar>(pts: &[Point<T>]) -> T {
    let n = pts.len();
    let mut acc = T::zero();
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        acc = acc + a.x * b.y - b.x * a.y;
    }
    acc * T::lit(0.5)
}

/// Sutherland-Hodgman clip of `subject` by the convex polygon `clip`
/// (both in the positive orientation of [`Quad`]).
fn convex_clip<T: Scalar>(subject: &[Point<T>], clip: &[Point<T>]) -> Vec<Point<T>> {
    let mut output: Vec<Point<T>> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut output);
        let inside = |p: Point<T>| cross3(a, b, p) >= T::zero();
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (cin, pin) = (inside(cur), inside(prev));
            if cin != pin {
                let d1 = cross3(a, b, prev);
                let d2 = cross3(a, b, cur);
                let t = d1 / (d1 - d2);
                output.push(Point::new(prev.x + (cur.x - prev.x) * t, prev.y + (cur.y - prev.y) * t));
            }
            if cin {
                output.push(cur);
            }
        }
    }
    output
}

/// 3x3 projective transform acting on column vectors `(x, y, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography<T> {
    m: [[T; 3]; 3],
}

impl<T: Scalar> Homography<T> {
    pub const MIN_ABS_DET: f64 = 1e-12;

    /// Builds a homography, rejecting singular matrices and normalizing so
    /// that `m[2][2] = 1` when it is non-zero.
    pub fn new(m: [[T; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::SingularTransform { det: f64::NAN });
        }
        let h = Self { m }.normalized();
        let det = h.det();
        if !(det.abs() > T::lit(Self::MIN_ABS_DET)) {
            return Err(Error::SingularTransform { det: det.to_f64_lossy() });
        }
        Ok(h)
    }

    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self { m: [[o, z, z], [z, o, z], [z, z, o]] }
    }

    pub fn translation(dx: T, dy: T) -> Self {
        let (o, z) = (T::one(), T::zero());
        Self { m: [[o, z, dx], [z, o, dy], [z, z, o]] }
    }

    pub fn scaling(sx: T, sy: T) -> Self {
        let (o, z) = (T::one(), T::zero());
        Self { m: [[sx, z, z], [z, sy, z], [z, z, o]] }
    }

    /// Rotation by `radians` about `center` (clockwise on screen for positive
    /// angles, since y points down).
    pub fn rotation_about(radians: T, center: Point<T>) -> Self {
        let (s, c) = radians.sin_cos();
        let (o, z) = (T::one(), T::zero());
        let rot = Self { m: [[c, -s, z], [s, c, z], [z, z, o]] };
        Self::translation(center.x, center.y)
            .compose(&rot)
            .compose(&Self::translation(-center.x, -center.y))
    }

    pub fn matrix(&self) -> &[[T; 3]; 3] {
        &self.m
    }

    pub fn to_row_major(&self) -> [T; 9] {
        let m = &self.m;
        [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2]]
    }

    pub fn from_row_major(v: [T; 9]) -> Result<Self> {
        Self::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    fn normalized(self) -> Self {
        let s = self.m[2][2];
        if s == T::zero() {
            return self;
        }
        let mut m = self.m;
        m.iter_mut().flatten().for_each(|v| *v = *v / s);
        Self { m }
    }

    pub fn det(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = &self.m;
        let det = self.det();
        if !(det.abs() > T::lit(Self::MIN_ABS_DET)) {
            return Err(Error::SingularTransform { det: det.to_f64_lossy() });
        }
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        let mut inv = adj;
        inv.iter_mut().flatten().for_each(|v| *v = *v / det);
        Self::new(inv)
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let mut out = [[T::zero(); 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        Self { m: out }.normalized()
    }

    /// Maps a point; `None` when it lands on the line at infinity.
    pub fn apply(&self, p: Point<T>) -> Option<Point<T>> {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if w.abs() < T::epsilon() {
            return None;
        }
        let x = (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w;
        let y = (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w;
        Some(Point::new(x, y))
    }

    pub fn frobenius_norm(&self) -> T {
        self.m.iter().flatten().map(|v| *v * *v).sum::<T>().sqrt()
    }

    /// `||self - other||_F / ||other||_F` after both are normalized.
    pub fn relative_frobenius_distance(&self, other: &Self) -> T {
        let diff: T = self
            .m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .map(|(a, b)| (*a - *b) * (*a - *b))
            .sum();
        diff.sqrt() / other.frobenius_norm()
    }

    pub fn cast<U: Scalar>(&self) -> Homography<U> {
        let mut m = [[U::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = U::lit(self.m[i][j].to_f64_lossy());
            }
        }
        Homography { m }
    }
}

/// Squared-distance reprojection error of `src -> dst` under `h`.
pub fn reprojection_error<T: Scalar>(h: &Homography<T>, src: Point<T>, dst: Point<T>) -> T {
    match h.apply(src) {
        Some(p) => p.distance(&dst),
        None => T::infinity(),
    }
}

/// True when any three of the points are (nearly) collinear.
pub fn has_collinear_triple<T: Scalar>(pts: &[Point<T>]) -> bool {
    let n = pts.len();
    let scale = pts
        .iter()
        .flat_map(|a| pts.iter().map(move |b| a.distance(b)))
        .fold(T::zero(), T::max);
    let tol = T::lit(1e-6) * scale * scale;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if cross3(pts[i], pts[j], pts[k]).abs() <= tol {
                    return true;
                }
            }
        }
    }
    false
}

/// Similarity transform moving the centroid to the origin with mean distance
/// sqrt(2).
fn normalizing_transform<T: Scalar>(pts: &[Point<T>]) -> Homography<T> {
    let n = T::from_usize_lossy(pts.len());
    let cx = pts.iter().map(|p| p.x).sum::<T>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<T>() / n;
    let mean_dist = pts.iter().map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()).sum::<T>() / n;
    let s = if mean_dist > T::zero() { T::lit(std::f64::consts::SQRT_2) / mean_dist } else { T::one() };
    let z = T::zero();
    Homography { m: [[s, z, -s * cx], [z, s, -s * cy], [z, z, T::one()]] }
}

/// Normalized direct linear transform: the algebraic least-squares homography
/// mapping `src[i]` to `dst[i]` (exact for four points in general position).
pub fn fit_homography_dlt<T: Scalar>(src: &[Point<T>], dst: &[Point<T>]) -> Result<Homography<T>> {
    assert_eq!(src.len(), dst.len(), "correspondence lists differ in length");
    if src.len() < 4 {
        return Err(Error::InsufficientCorrespondences(src.len()));
    }
    let ts = normalizing_transform(src);
    let td = normalizing_transform(dst);

    let mut ata = [[T::zero(); 9]; 9];
    for (s, d) in src.iter().zip(dst) {
        let p = ts.apply(*s).expect("affine normalization");
        let q = td.apply(*d).expect("affine normalization");
        let (o, z) = (T::one(), T::zero());
        let rows = [
            [-p.x, -p.y, -o, z, z, z, q.x * p.x, q.x * p.y, q.x],
            [z, z, z, -p.x, -p.y, -o, q.y * p.x, q.y * p.y, q.y],
        ];
        for r in &rows {
            for i in 0..9 {
                for j in i..9 {
                    ata[i][j] = ata[i][j] + r[i] * r[j];
                }
            }
        }
    }
    for i in 0..9 {
        for j in 0..i {
            ata[i][j] = ata[j][i];
        }
    }
    let (values, vectors) = symmetric_eigen(ata);
    let min_idx = (0..9)
        .min_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    let v: [T; 9] = std::array::from_fn(|k| vectors[k][min_idx]);
    let hn = Homography { m: [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]] };
    let td_inv = td.inverse()?;
    let h = td_inv.compose(&hn).compose(&ts);
    Homography::new(h.m)
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns the
/// eigenvalues and a matrix whose columns are the matching eigenvectors.
pub fn symmetric_eigen<T: Scalar, const N: usize>(mut a: [[T; N]; N]) -> ([T; N], [[T; N]; N]) {
    let mut v = [[T::zero(); N]; N];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = T::one();
    }
    let two = T::lit(2.0);
    for _sweep in 0..100 {
        let off: T = (0..N).flat_map(|i| (0..N).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let diag: T = (0..N).map(|i| a[i][i] * a[i][i]).sum();
        if off <= T::epsilon() * T::epsilon() * diag.max(T::min_positive_value()) {
            break;
        }
        for p in 0..N {
            for q in p + 1..N {
                if a[p][q] == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (two * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..N {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..N {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    (std::array::from_fn(|i| a[i][i]), v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point<f64> {
        Point::new(x, y)
    }

    #[test]
    fn quad_rejects_bad_order_and_collinear() {
        assert!(Quad::new([p(0., 0.), p(1., 0.), p(1., 1.), p(0., 1.)]).is_ok());
        assert!(Quad::new([p(0., 0.), p(0., 1.), p(1., 1.), p(1., 0.)]).is_err());
        assert!(Quad::new([p(0., 0.), p(1., 0.), p(2., 0.), p(3., 0.)]).is_err());
        // bow-tie
        assert!(Quad::new([p(0., 0.), p(1., 0.), p(0., 1.), p(1., 1.)]).is_err());
    }

    #[test]
    fn iou_of_shifted_squares() {
        let a = Quad::<f64>::from_rect(0., 0., 10., 10.).unwrap();
        let b = Quad::<f64>::from_rect(5., 0., 10., 10.).unwrap();
        assert!((a.iou(&a) - 1.0).abs() < 1e-12);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        let c = Quad::from_rect(20., 20., 1., 1.).unwrap();
        assert_eq!(a.iou(&c), 0.0);
    }

    #[test]
    fn unit_square_scaled_by_two_forces_diag() {
        let src = [p(0., 0.), p(1., 0.), p(1., 1.), p(0., 1.)];
        let dst = [p(0., 0.), p(2., 0.), p(2., 2.), p(0., 2.)];
        let h = fit_homography_dlt(&src, &dst).unwrap();
        let expect = Homography::scaling(2.0, 2.0);
        assert!(h.relative_frobenius_distance(&expect) < 1e-12, "{h:?}");
    }

    #[test]
    fn dlt_recovers_projective_map_in_f32_and_f64() {
        let truth = Homography::new([[1.02, 0.03, 5.0], [-0.02, 0.98, -3.0], [1e-5, -2e-5, 1.0]]).unwrap();
        let src: Vec<_> = (0..12).map(|i| p(37.0 * (i % 4) as f64 + 3.0, 51.0 * (i / 4) as f64 + 7.0)).collect();
        let dst: Vec<_> = src.iter().map(|s| truth.apply(*s).unwrap()).collect();
        let h = fit_homography_dlt(&src, &dst).unwrap();
        assert!(h.relative_frobenius_distance(&truth) < 1e-10);

        let src32: Vec<Point<f32>> = src.iter().map(|q| q.cast()).collect();
        let dst32: Vec<Point<f32>> = dst.iter().map(|q| q.cast()).collect();
        let h32 = fit_homography_dlt(&src32, &dst32).unwrap();
        assert!(h32.cast::<f64>().relative_frobenius_distance(&truth) < 1e-3);
    }

    #[test]
    fn inverse_and_compose() {
        let h = Homography::new([[2.0, 0.5, 1.0], [0.1, 1.5, -4.0], [0.001, 0.002, 1.0]]).unwrap();
        let id = h.compose(&h.inverse().unwrap());
        assert!(id.relative_frobenius_distance(&Homography::identity()) < 1e-12);
        assert!(matches!(
            Homography::new([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]),
            Err(Error::SingularTransform { .. })
        ));
    }

    #[test]
    fn rotation_about_center_fixes_center() {
        let c = p(50.0, 30.0);
        let r = Homography::rotation_about(0.3, c);
        let q = r.apply(c).unwrap();
        assert!(q.distance(&c) < 1e-12);
    }

    #[test]
    fn collinear_detection() {
        assert!(has_collinear_triple(&[p(0., 0.), p(1., 1.), p(2., 2.), p(5., 0.)]));
        assert!(!has_collinear_triple(&[p(0., 0.), p(1., 0.), p(1., 1.), p(0., 1.)]));
    }

    #[test]
    fn jacobi_diagonalizes() {
        let a = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 1.0]];
        let (vals, vecs) = symmetric_eigen(a);
        for k in 0..3 {
            for i in 0..3 {
                let av: f64 = (0..3).map(|j| a[i][j] * vecs[j][k]).sum();
                assert!((av - vals[k] * vecs[i][k]).abs() < 1e-10);
            }
        }
    }
}
