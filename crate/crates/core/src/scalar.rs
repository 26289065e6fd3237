use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the numeric kernels are written against.
///
/// Implemented for `f32` and `f64`. The satisfaction model and the dense
/// simplex are generic over it; the rest of the crate works in `f64` through
/// the aliases exported at the crate root.
pub trait Scalar:
    'static + Float + NumAssign + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync
{
    /// Converts an `f64` literal, panicking only for types that cannot hold it.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("literal representable in scalar type")
    }

    /// Tolerance used for feasibility and pivoting decisions.
    fn tolerance() -> Self;
}

impl Scalar for f32 {
    fn tolerance() -> Self {
        1e-5
    }
}

impl Scalar for f64 {
    fn tolerance() -> Self {
        1e-9
    }
}
