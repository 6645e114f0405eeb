//! Parameter sets of the measured device.

use crate::model::{
    comb_coupling_for_decay, DetectionChain, DeviceModel, HeatingModel, MechanicalCavityMode,
    OpticalCavityParams, WaveguideGeometry, WaveguideModeComb,
};
use crate::scalar::Real;
use crate::units::SPEED_OF_LIGHT;

pub const WAVELENGTH_M: f64 = 1541e-9;
pub const KAPPA_T_HZ: f64 = 1021e6;
pub const KAPPA_E_HZ: f64 = 364e6;
pub const OMEGA_M_HZ: f64 = 4.98e9;
pub const G0_HZ: f64 = 460e3;
pub const PULSE_ENERGY_J: f64 = 119e-15;
pub const PULSE_FWHM_NS: f64 = 40.0;
pub const FSR_HZ: f64 = 11e6;
pub const T_C_NS: f64 = 10.0;
pub const COMB_MODES: usize = 21;
pub const LINEWIDTH_FLOOR_HZ: f64 = 10e3;
pub const T1_US: f64 = 78.0;
pub const WAVEGUIDE_LENGTH_M: f64 = 92e-6;
pub const ROUND_TRIP_NS: f64 = 85.0;
pub const ETA_DET_MEASURED: f64 = 0.038;
pub const P_S: f64 = 0.014;
pub const DARK_PER_TRIAL: f64 = 1e-5;
pub const DEAD_TIME_NS: f64 = 100.0;
pub const REPETITION_US: f64 = 200.0;
pub const READ_DELAY_NS: f64 = 170.0;

fn tau<T: Real>(hz: f64) -> T {
    T::lit(std::f64::consts::TAU * hz)
}

pub fn optics<T: Real>() -> OpticalCavityParams<T> {
    let w_c = std::f64::consts::TAU * SPEED_OF_LIGHT / WAVELENGTH_M;
    OpticalCavityParams::from_total(T::lit(w_c), tau(KAPPA_T_HZ), tau(KAPPA_E_HZ)).expect("valid preset")
}

pub fn mech<T: Real>() -> MechanicalCavityMode<T> {
    MechanicalCavityMode::new(tau(OMEGA_M_HZ), T::lit(1e6 / T1_US), tau(G0_HZ)).expect("valid preset")
}

/// Equal-coupling comb of `n` modes with spacing `fsr_hz` centered on the
/// cavity mode, couplings set for an amplitude decay time `t_c_ns`.
pub fn comb_with<T: Real>(n: usize, fsr_hz: f64, t_c_ns: f64) -> WaveguideModeComb<T> {
    let g = comb_coupling_for_decay(T::lit(fsr_hz), T::lit(t_c_ns));
    WaveguideModeComb::uniform(n, tau(OMEGA_M_HZ), T::lit(fsr_hz), g, tau(LINEWIDTH_FLOOR_HZ)).expect("valid preset")
}

/// 21 modes, 11 MHz spacing (covering the 80 MHz filter band with margin), `T_c` = 10 ns.
pub fn comb<T: Real>() -> WaveguideModeComb<T> {
    comb_with(COMB_MODES, FSR_HZ, T_C_NS)
}

pub fn detection<T: Real>() -> DetectionChain<T> {
    DetectionChain {
        eta_c: T::lit(0.37),
        eta_f: T::lit(0.38),
        eta_snspd: T::lit(0.90),
        eta_loss: T::lit(0.80),
        dark_rate_per_trial: T::lit(DARK_PER_TRIAL),
        dead_time: T::lit(DEAD_TIME_NS),
        n_detectors: 2,
        eta_det_measured: Some(T::lit(ETA_DET_MEASURED)),
    }
}

pub fn heating<T: Real>() -> HeatingModel<T> {
    HeatingModel::new(T::lit(0.070), T::lit(5.29), T::lit(0.216), T::lit(5.21)).expect("valid preset")
}

pub fn geometry<T: Real>() -> WaveguideGeometry<T> {
    let vg = 2.0 * WAVEGUIDE_LENGTH_M / (ROUND_TRIP_NS * 1e-9);
    WaveguideGeometry::new(T::lit(WAVEGUIDE_LENGTH_M), T::lit(vg)).expect("valid preset")
}

pub fn device<T: Real>() -> DeviceModel<T> {
    DeviceModel {
        optics: optics(),
        mech: mech(),
        comb: comb(),
        detection: detection(),
        heating: heating(),
        geometry: Some(geometry()),
    }
}
