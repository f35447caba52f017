//! Scalar abstraction so the numeric core works over f32 or f64.
//!
//! Training and checkpoints default to f64 (gradient checking needs the
//! headroom); f32 remains available through the same generic code paths.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign};

/// Floating-point scalar usable throughout the numeric core.
pub trait Scalar: Float + NumAssign + Sum<Self> + Debug + Display + Send + Sync + 'static {
    /// Lossy conversion from f64 (exact for f64 itself).
    fn from_f64(v: f64) -> Self;
    /// Widening conversion to f64 (distinct from ToPrimitive::to_f64).
    fn as_f64(self) -> f64;

    fn two() -> Self {
        Self::from_f64(2.0)
    }
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}
