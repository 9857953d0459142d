//! Scalar abstraction shared by the numeric parts of the pipeline
//! (PageRank scores, embedding similarity, metric ratios).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Percentage of `num / den`; `None` when `den` is zero.
pub fn percent<T: Scalar>(num: usize, den: usize) -> Option<T> {
    if den == 0 {
        None
    } else {
        Some(T::lit(100.0) * T::from_count(num) / T::from_count(den))
    }
}

/// Harmonic mean of two percentages, zero when both are zero.
pub fn harmonic_mean<T: Scalar>(p: T, r: T) -> T {
    if p + r == T::zero() {
        T::zero()
    } else {
        T::lit(2.0) * p * r / (p + r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_and_f1() {
        assert_eq!(percent::<f64>(1, 0), None);
        let p: f64 = percent(2, 3).unwrap();
        assert!((p - 66.666_666_666_666_67).abs() < 1e-9);
        assert_eq!(harmonic_mean(0.0f64, 0.0), 0.0);
        let f: f32 = harmonic_mean(50.0f32, 100.0);
        assert!((f - 66.666_67).abs() < 1e-3);
    }
}
