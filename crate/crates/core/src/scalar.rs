//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal, panicking only if the target type cannot hold it.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Sums logarithms in ascending order and exponentiates once.
///
/// Sorting first makes the result independent of the order the factors were
/// supplied in, so two routes that multiply the same multiset of factors agree
/// bit for bit.
pub fn sum_sorted<T: Real>(terms: &mut [T]) -> T {
    terms.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    terms.iter().fold(T::zero(), |acc, &t| acc + t)
}

/// Product of positive factors computed in log space.
pub fn log_product<T: Real, I: IntoIterator<Item = T>>(factors: I) -> T {
    let mut logs: Vec<T> = factors.into_iter().map(Float::ln).collect();
    sum_sorted(&mut logs).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_product_is_order_independent() {
        let a = log_product([1.7_f64, 3.1, 2.05, 9.5]);
        let b = log_product([9.5_f64, 2.05, 1.7, 3.1]);
        assert_eq!(a.to_bits(), b.to_bits());
        assert!((a - 1.7 * 3.1 * 2.05 * 9.5).abs() < 1e-12 * a);
    }

    #[test]
    fn works_for_f32() {
        let p = log_product([2.0_f32, 4.0]);
        assert!((p - 8.0).abs() < 1e-5);
        assert_eq!(f32::lit(0.25), 0.25);
    }
}
