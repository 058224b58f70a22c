use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used by the geometric and statistical code paths.
///
/// Implemented for `f32` and `f64`; the crate root exposes `f64` aliases for
/// the common types.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 literal representable")
    }

    fn from_usize_lossy(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize representable")
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `ceil(fraction * n)` with a guard against representation error in the
/// product (0.9 * 1000 must be 900, not 901).
pub fn ceil_fraction(n: usize, fraction: f64) -> usize {
    let raw = fraction * n as f64;
    let k = (raw - 1e-9 * raw.abs().max(1.0)).ceil();
    (k.max(0.0) as usize).min(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceil_fraction_exact_products() {
        assert_eq!(ceil_fraction(5000, 0.05), 250);
        assert_eq!(ceil_fraction(1000, 0.90), 900);
        assert_eq!(ceil_fraction(1000, 0.95), 950);
        assert_eq!(ceil_fraction(1000, 0.99), 990);
        assert_eq!(ceil_fraction(7, 0.5), 4);
        assert_eq!(ceil_fraction(3, 1.0), 3);
        assert_eq!(ceil_fraction(0, 0.9), 0);
    }

    #[test]
    fn literals_round_trip() {
        assert_eq!(<f32 as Scalar>::lit(0.5), 0.5f32);
        assert_eq!(<f64 as Scalar>::from_usize_lossy(12), 12.0);
    }
}
