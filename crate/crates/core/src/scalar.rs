use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used for probabilities, costs and values.
///
/// Implemented for `f32` and `f64`; every solver and simulator type in the
/// crate is generic over it.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion used for literals and integer quantities.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("scalar conversion")
    }

    #[inline]
    fn of_u64(v: u64) -> Self {
        Self::from_u64(v).expect("scalar conversion")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar conversion")
    }

    /// Tolerance for row sums of stochastic matrices.
    fn stochastic_tol() -> Self;
}

impl Scalar for f64 {
    fn stochastic_tol() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn stochastic_tol() -> Self {
        1e-6
    }
}

/// `max(x, 0)`.
#[inline]
pub fn positive_part<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}
