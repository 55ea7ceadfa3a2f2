//! Floating-point scalar abstraction shared by the statistics, quality and
//! selection modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real number type used for weights, scores and priorities.
///
/// Implemented for `f32` and `f64`. Every computation in the crate is written
/// against this trait so callers can trade precision for memory.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from a count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable as float")
    }

    /// Lossy conversion from `f64`, used for constants and file input.
    fn from_f64_lossy(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite f64 representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Harmonic number `H(r) = 1 + 1/2 + ... + 1/r`; `H(0) = 0`.
pub fn harmonic<T: Scalar>(r: usize) -> T {
    (1..=r).map(|k| T::one() / T::from_count(k)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_small_values() {
        assert_eq!(harmonic::<f64>(0), 0.0);
        assert_eq!(harmonic::<f64>(1), 1.0);
        assert!((harmonic::<f64>(3) - 11.0 / 6.0).abs() < 1e-15);
        assert!((harmonic::<f32>(4) - 25.0 / 12.0).abs() < 1e-6);
    }
}
