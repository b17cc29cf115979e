//! Scalar abstraction shared by every estimator in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating point type the model estimators are computed in: `f32` or `f64`.
///
/// Counts are always integers; only the smoothed estimates, posteriors,
/// scheduler probabilities and perplexities are generic.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable as a float")
    }

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable as a float")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Draw a uniform variate in `[0, 1)` as the scalar type.
pub(crate) fn unit<F: Scalar, R: rand::Rng + ?Sized>(rng: &mut R) -> F {
    let u = F::from_f64_lossy(rng.gen::<f64>());
    // f32 rounding can push 0.99999999 to 1.0
    if u >= F::one() {
        F::one() - F::epsilon()
    } else {
        u
    }
}
