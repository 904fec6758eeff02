//! Floating-point scalar abstraction; everything numeric is generic over [`Real`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Tolerance on probability sums.
    const SUM_TOL: f64;
    /// Tolerance on unitarity / Kraus completeness.
    const CPTP_TOL: f64;
    /// Negative probabilities above `-CLAMP_TOL` are rounded to zero.
    const CLAMP_TOL: f64;

    /// Lossy conversion from an f64 literal.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every Real")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f64 {
    const SUM_TOL: f64 = 1e-9;
    const CPTP_TOL: f64 = 1e-10;
    const CLAMP_TOL: f64 = 1e-12;
}

impl Real for f32 {
    const SUM_TOL: f64 = 1e-4;
    const CPTP_TOL: f64 = 1e-4;
    const CLAMP_TOL: f64 = 1e-6;
}

/// Kahan-compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum<T> {
    sum: T,
    comp: T,
}

impl<T: Real> KahanSum<T> {
    pub fn new() -> Self {
        Self { sum: T::zero(), comp: T::zero() }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum
    }
}

pub fn kahan_sum<T: Real>(xs: impl IntoIterator<Item = T>) -> T {
    let mut acc = KahanSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_beats_naive_on_many_small_terms() {
        let xs = std::iter::once(1.0f64).chain(std::iter::repeat(1e-16).take(10_000));
        let s = kahan_sum(xs);
        assert!((s - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn of_roundtrips() {
        assert_eq!(f32::of(0.5), 0.5f32);
        assert_eq!(f64::of(0.25).f64(), 0.25);
    }
}
