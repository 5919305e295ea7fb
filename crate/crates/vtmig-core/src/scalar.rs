//! Floating-point scalar abstraction: all core math is generic over `Scalar`,
//! instantiated as `f32` or `f64` (concrete aliases live at the crate root).

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; panics only on non-representable input
    /// (never happens for finite constants used throughout this crate).
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 value representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Population mean and standard deviation of a slice. Empty input gives (0, 0).
pub fn mean_std<T: Scalar>(values: &[T]) -> (T, T) {
    if values.is_empty() {
        return (T::zero(), T::zero());
    }
    let n = T::of(values.len() as f64);
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<T>()
        / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_population_convention() {
        let (m, s) = mean_std(&[0.0f64, 2.0]);
        assert_eq!(m, 1.0);
        assert_eq!(s, 1.0); // population sigma, not sample
    }

    #[test]
    fn of_round_trips_for_f32_and_f64() {
        assert_eq!(<f32 as Scalar>::of(0.5), 0.5f32);
        assert_eq!(<f64 as Scalar>::of(0.5), 0.5f64);
    }
}
