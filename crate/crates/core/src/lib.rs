//! Guided-phonon cavity model: coupled cavity/waveguide-comb dynamics, OMIT
//! spectra, heralding Monte-Carlo, correlation analysis and run plumbing.
//!
//! Physics layers are generic over [`Real`]; the aliases below fix the
//! common precisions.

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod lm;
pub mod mc;
pub mod model;
pub mod omit;
pub mod presets;
pub mod recipes;
pub mod scalar;
pub mod units;

pub use error::{Error, Result};
pub use scalar::Real;

pub type DeviceModelF64 = model::DeviceModel<f64>;
pub type DeviceModelF32 = model::DeviceModel<f32>;
pub type WaveguideModeCombF64 = model::WaveguideModeComb<f64>;
pub type WaveguideModeCombF32 = model::WaveguideModeComb<f32>;
pub type CoupledModesF64 = dynamics::CoupledModes<f64>;
pub type CoupledModesF32 = dynamics::CoupledModes<f32>;
pub type SpectrumF64 = omit::Spectrum<f64>;
pub type SpectrumF32 = omit::Spectrum<f32>;
