//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Every literal used by the crate is representable.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("integer representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    compensation: T,
}

impl<T: Real> CompensatedSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            compensation: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.compensation
    }
}

/// Compensated sum of an iterator.
pub fn csum<T: Real, I: IntoIterator<Item = T>>(iter: I) -> T {
    let mut acc = CompensatedSum::new();
    for x in iter {
        acc.add(x);
    }
    acc.value()
}

/// `x / y` on the extended nonnegative reals: `0/0 = 0`, `x/0 = inf` for `x > 0`.
#[inline]
pub fn ext_ratio<T: Real>(num: T, den: T) -> T {
    if den > T::zero() {
        num / den
    } else if num > T::zero() {
        T::infinity()
    } else {
        T::zero()
    }
}

/// `d^p`, with `p == 1` and `p == 2` special-cased so that the common exponents stay exact.
#[inline]
pub fn powp<T: Real>(d: T, p: T) -> T {
    if p == T::one() {
        d
    } else if p == T::of(2.0) {
        d * d
    } else {
        d.powf(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1.0e16, 1.0, -1.0e16, 1.0];
        assert_eq!(csum(xs.iter().copied()), 2.0);
    }

    #[test]
    fn extended_ratio_conventions() {
        assert_eq!(ext_ratio(0.0_f64, 0.0), 0.0);
        assert!(ext_ratio(0.5_f64, 0.0).is_infinite());
        assert_eq!(ext_ratio(1.0_f32, 4.0), 0.25);
    }
}
