//! Numeric element types the tensor engine can run on.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used for tensors and model weights.
///
/// Implemented for `f32` (the serialized model precision) and `f64`.
pub trait Scalar: Float + NumAssign + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static {
    /// Converts a stored `f32` weight or pixel value.
    fn of_f32(v: f32) -> Self;

    /// Narrowing conversion used when writing pixels and weights back out.
    fn as_f32(self) -> f32;
}

impl Scalar for f32 {
    #[inline]
    fn of_f32(v: f32) -> Self {
        v
    }

    #[inline]
    fn as_f32(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    #[inline]
    fn of_f32(v: f32) -> Self {
        v as f64
    }

    #[inline]
    fn as_f32(self) -> f32 {
        self as f32
    }
}
