//! Scalar abstraction for the deterministic physics code.
//!
//! Closed-form calibration math, the OMIT forward model and the coupled-mode
//! evolution are written against [`Real`] so they run in `f32` or `f64`.
//! The stochastic simulator and the click-stream analysis work on counts and
//! timestamps and stay concrete `f64`.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

pub use nalgebra::Complex;

/// Floating point scalar: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + std::fmt::Debug {
    /// Converts an `f64` literal or parameter into this scalar.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("value representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn finite(self) -> bool {
        self.to_f64_lossy().is_finite()
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn cexp<T: Real>(z: Complex<T>) -> Complex<T> {
    nalgebra::ComplexField::exp(z)
}

pub(crate) fn cabs<T: Real>(z: Complex<T>) -> T {
    nalgebra::ComplexField::modulus(z)
}
