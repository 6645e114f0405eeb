//! Device parameters and closed-form calibration math.

pub mod fit;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::units::HBAR;

/// Regime bound above which `p_write` formulas are no longer trusted.
pub const P_WRITE_WARN: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalCavityParams<T: Real> {
    pub omega_c: T,
    pub kappa_e: T,
    pub kappa_i: T,
}

impl<T: Real> OpticalCavityParams<T> {
    pub fn new(omega_c: T, kappa_e: T, kappa_i: T) -> Result<Self> {
        for (v, name) in [(omega_c, "omega_c"), (kappa_e, "kappa_e"), (kappa_i, "kappa_i")] {
            if !v.finite() || v <= T::zero() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v:?}")));
            }
        }
        Ok(Self { omega_c, kappa_e, kappa_i })
    }

    /// From total and extrinsic rates.
    pub fn from_total(omega_c: T, kappa_t: T, kappa_e: T) -> Result<Self> {
        Self::new(omega_c, kappa_e, kappa_t - kappa_e)
    }

    pub fn kappa_t(&self) -> T {
        self.kappa_e + self.kappa_i
    }

    pub fn eta_dev(&self) -> T {
        self.kappa_e / self.kappa_t()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicalCavityMode<T: Real> {
    pub omega_m: T,
    pub gamma_m: T,
    /// Effective single-photon coupling (collective over the filter band).
    pub g0: T,
}

impl<T: Real> MechanicalCavityMode<T> {
    pub fn new(omega_m: T, gamma_m: T, g0: T) -> Result<Self> {
        if !omega_m.finite() || omega_m <= T::zero() {
            return Err(Error::InvalidParameter("omega_m must be positive".into()));
        }
        if !gamma_m.finite() || gamma_m < T::zero() || !g0.finite() || g0 < T::zero() {
            return Err(Error::InvalidParameter("gamma_m and g0 must be non-negative".into()));
        }
        Ok(Self { omega_m, gamma_m, g0 })
    }
}

/// One Fabry-Perot phonon mode of the waveguide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombMode<T: Real> {
    pub omega: T,
    /// Coupling to the cavity mode, `gamma_e,l`.
    pub coupling: T,
    /// Intrinsic linewidth `Gamma_l`.
    pub linewidth: T,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WaveguideModeComb<T: Real> {
    modes: Vec<CombMode<T>>,
}

impl<T: Real> WaveguideModeComb<T> {
    pub fn new(modes: Vec<CombMode<T>>) -> Result<Self> {
        for (i, m) in modes.iter().enumerate() {
            if !(m.omega.finite() && m.coupling.finite() && m.linewidth.finite()) {
                return Err(Error::NonFinite("comb mode"));
            }
            if m.coupling < T::zero() || m.linewidth < T::zero() {
                return Err(Error::InvalidParameter(format!("comb mode {i} has a negative rate")));
            }
            if i > 0 && m.omega <= modes[i - 1].omega {
                return Err(Error::InvalidParameter("comb frequencies must be strictly increasing".into()));
            }
        }
        Ok(Self { modes })
    }

    pub fn empty() -> Self {
        Self { modes: Vec::new() }
    }

    /// `n` equally spaced modes centered on `center`, spacing `2 pi fsr_hz`.
    pub fn uniform(n: usize, center: T, fsr_hz: T, coupling: T, linewidth: T) -> Result<Self> {
        let spacing = T::two_pi() * fsr_hz;
        let mid = T::lit((n as f64 - 1.0) / 2.0);
        let modes = (0..n)
            .map(|l| CombMode {
                omega: center + (T::lit(l as f64) - mid) * spacing,
                coupling,
                linewidth,
            })
            .collect();
        Self::new(modes)
    }

    pub fn modes(&self) -> &[CombMode<T>] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn with_coupling(&self, coupling: T) -> Self {
        Self {
            modes: self.modes.iter().map(|m| CombMode { coupling, ..*m }).collect(),
        }
    }

    pub fn scale_couplings(&self, factor: T) -> Self {
        Self {
            modes: self
                .modes
                .iter()
                .map(|m| CombMode { coupling: m.coupling * factor, ..*m })
                .collect(),
        }
    }

    /// Mean spacing in Hz, `None` for fewer than two modes.
    pub fn mean_fsr_hz(&self) -> Option<T> {
        let n = self.modes.len();
        if n < 2 {
            return None;
        }
        let span = self.modes[n - 1].omega - self.modes[0].omega;
        Some(span / (T::lit((n - 1) as f64) * T::two_pi()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionChain<T: Real> {
    pub eta_c: T,
    pub eta_f: T,
    pub eta_snspd: T,
    pub eta_loss: T,
    /// Dark-count probability per trial, summed over detectors.
    pub dark_rate_per_trial: T,
    /// Per-detector dead time (ns).
    pub dead_time: T,
    pub n_detectors: usize,
    /// Measured overall efficiency; replaces the product when set.
    pub eta_det_measured: Option<T>,
}

impl<T: Real> DetectionChain<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: T| v.finite() && v >= T::zero() && v <= T::one();
        for (v, name) in [
            (self.eta_c, "eta_c"),
            (self.eta_f, "eta_F"),
            (self.eta_snspd, "eta_SNSPD"),
            (self.eta_loss, "eta_loss"),
        ] {
            if !unit(v) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1]")));
            }
        }
        if let Some(e) = self.eta_det_measured {
            if !unit(e) {
                return Err(Error::InvalidParameter("measured eta_det must lie in [0, 1]".into()));
            }
        }
        if !unit(self.dark_rate_per_trial) || self.dark_rate_per_trial >= T::one() {
            return Err(Error::InvalidParameter("dark_rate_per_trial must lie in [0, 1)".into()));
        }
        if !self.dead_time.finite() || self.dead_time < T::zero() {
            return Err(Error::InvalidParameter("dead_time must be non-negative".into()));
        }
        if self.n_detectors == 0 || self.n_detectors > u8::MAX as usize {
            return Err(Error::InvalidParameter("n_detectors must be in 1..=255".into()));
        }
        Ok(())
    }

    pub fn ideal() -> Self {
        Self {
            eta_c: T::one(),
            eta_f: T::one(),
            eta_snspd: T::one(),
            eta_loss: T::one(),
            dark_rate_per_trial: T::zero(),
            dead_time: T::zero(),
            n_detectors: 2,
            eta_det_measured: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseKind {
    Write,
    Read,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec<T: Real> {
    pub kind: PulseKind,
    /// Pulse energy (J).
    pub energy: T,
    /// Intensity FWHM (ns).
    pub fwhm: T,
    /// Center time within the trial (ns).
    pub center_time: T,
}

impl<T: Real> PulseSpec<T> {
    pub fn new(kind: PulseKind, energy: T, fwhm: T, center_time: T) -> Result<Self> {
        if !energy.finite() || energy < T::zero() {
            return Err(Error::InvalidParameter("pulse energy must be non-negative".into()));
        }
        if !fwhm.finite() || fwhm <= T::zero() {
            return Err(Error::InvalidParameter("pulse fwhm must be positive".into()));
        }
        Ok(Self { kind, energy, fwhm, center_time })
    }
}

/// Linear occupancy fits `n = intercept + slope * p_s` for an isolated pulse
/// pair (`base`) and for pulses preceded by a heating pulse (`preceded`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatingModel<T: Real> {
    pub base_intercept: T,
    pub base_slope: T,
    pub preceded_intercept: T,
    pub preceded_slope: T,
}

impl<T: Real> HeatingModel<T> {
    pub fn new(base_intercept: T, base_slope: T, preceded_intercept: T, preceded_slope: T) -> Result<Self> {
        let h = Self { base_intercept, base_slope, preceded_intercept, preceded_slope };
        for v in [base_intercept, base_slope, preceded_intercept, preceded_slope] {
            if !v.finite() || v < T::zero() {
                return Err(Error::InvalidParameter("heating coefficients must be non-negative".into()));
            }
        }
        Ok(h)
    }

    pub fn none() -> Self {
        Self {
            base_intercept: T::zero(),
            base_slope: T::zero(),
            preceded_intercept: T::zero(),
            preceded_slope: T::zero(),
        }
    }

    /// Constant occupancy `n`, independent of pulse strength and history.
    pub fn constant(n: T) -> Self {
        Self {
            base_intercept: n,
            base_slope: T::zero(),
            preceded_intercept: n,
            preceded_slope: T::zero(),
        }
    }

    pub fn base(&self, p_s: T) -> T {
        self.base_intercept + self.base_slope * p_s
    }

    pub fn preceded(&self, p_s: T) -> T {
        self.preceded_intercept + self.preceded_slope * p_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveguideGeometry<T: Real> {
    /// Waveguide length (m).
    pub length: T,
    /// Group velocity (m/s).
    pub group_velocity: T,
}

impl<T: Real> WaveguideGeometry<T> {
    pub fn new(length: T, group_velocity: T) -> Result<Self> {
        if !length.finite() || length <= T::zero() || group_velocity <= T::zero() {
            return Err(Error::InvalidParameter("length and group velocity must be positive".into()));
        }
        Ok(Self { length, group_velocity })
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self { length: self.length * factor, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceModel<T: Real> {
    pub optics: OpticalCavityParams<T>,
    pub mech: MechanicalCavityMode<T>,
    pub comb: WaveguideModeComb<T>,
    pub detection: DetectionChain<T>,
    pub heating: HeatingModel<T>,
    pub geometry: Option<WaveguideGeometry<T>>,
}

impl<T: Real> DeviceModel<T> {
    pub fn validate(&self) -> Result<()> {
        OpticalCavityParams::new(self.optics.omega_c, self.optics.kappa_e, self.optics.kappa_i)?;
        MechanicalCavityMode::new(self.mech.omega_m, self.mech.gamma_m, self.mech.g0)?;
        WaveguideModeComb::new(self.comb.modes.clone())?;
        self.detection.validate()?;
        let h = self.heating;
        HeatingModel::new(h.base_intercept, h.base_slope, h.preceded_intercept, h.preceded_slope)?;
        if let Some(g) = self.geometry {
            WaveguideGeometry::new(g.length, g.group_velocity)?;
        }
        Ok(())
    }

    /// Overall detection efficiency, the measured value when configured.
    pub fn eta_det(&self) -> T {
        self.detection
            .eta_det_measured
            .unwrap_or_else(|| eta_det(&self.detection, self.optics.eta_dev()))
    }
}

/// Product of the efficiency chain `eta_c eta_dev eta_F eta_SNSPD eta_loss`.
pub fn eta_det<T: Real>(chain: &DetectionChain<T>, eta_dev: T) -> T {
    chain.eta_c * eta_dev * chain.eta_f * chain.eta_snspd * chain.eta_loss
}

/// Exponent `x = 4 eta_dev g0^2 E_p / (hbar omega_c (omega_m^2 + (kappa_t/2)^2))`.
pub fn scattering_exponent<T: Real>(
    energy: T,
    optics: &OpticalCavityParams<T>,
    mech: &MechanicalCavityMode<T>,
) -> Result<T> {
    let half = optics.kappa_t() / T::lit(2.0);
    // hbar is below f32 range once squared with anything, so combine in f64
    let denom = HBAR * optics.omega_c.to_f64_lossy();
    let num = T::lit(4.0) * optics.eta_dev() * mech.g0 * mech.g0 * energy
        / (mech.omega_m * mech.omega_m + half * half);
    let x = T::lit(num.to_f64_lossy() / denom);
    if !x.finite() {
        return Err(Error::NonFinite("scattering exponent"));
    }
    Ok(x)
}

/// Scattering probability of one pulse: `1 - exp(-x)` for read, `exp(x) - 1` for write.
pub fn scattering_probability<T: Real>(
    pulse: &PulseSpec<T>,
    optics: &OpticalCavityParams<T>,
    mech: &MechanicalCavityMode<T>,
) -> Result<T> {
    let x = scattering_exponent(pulse.energy, optics, mech)?;
    let p = match pulse.kind {
        PulseKind::Read => T::one() - (-x).exp(),
        PulseKind::Write => x.exp() - T::one(),
    };
    if !p.finite() {
        return Err(Error::NonFinite("scattering probability"));
    }
    if pulse.kind == PulseKind::Write && p.to_f64_lossy() > P_WRITE_WARN {
        log::warn!("p_write = {:.3} exceeds the weak-coupling regime bound {P_WRITE_WARN}", p.to_f64_lossy());
    }
    Ok(p)
}

/// Pulse energy (J) that yields scattering probability `p`; inverse of
/// [`scattering_probability`].
pub fn pulse_energy_for_probability<T: Real>(
    kind: PulseKind,
    p: T,
    optics: &OpticalCavityParams<T>,
    mech: &MechanicalCavityMode<T>,
) -> Result<T> {
    let valid = match kind {
        PulseKind::Write => p >= T::zero() && p.finite(),
        PulseKind::Read => p >= T::zero() && p < T::one(),
    };
    if !valid {
        return Err(Error::InvalidParameter("scattering probability out of range".into()));
    }
    let x = match kind {
        PulseKind::Write => p.ln_1p(),
        PulseKind::Read => -(-p).ln_1p(),
    };
    let per_joule = scattering_exponent(T::one(), optics, mech)?;
    if !(per_joule > T::zero()) {
        return Err(Error::DegenerateDesign("device has no optomechanical coupling".into()));
    }
    Ok(x / per_joule)
}

/// Expected Stokes and anti-Stokes click probabilities per trial `(gamma_b, gamma_r)`.
pub fn click_rates<T: Real>(p_write: T, p_read: T, n_th: T, eta_det: T) -> (T, T) {
    let gamma_r = p_read * n_th * eta_det;
    let gamma_b = p_write * (T::one() + n_th) * eta_det;
    (gamma_b, gamma_r)
}

/// Sideband-asymmetry thermometry `n = gamma_r / (gamma_b - gamma_r)`.
pub fn n_th_from_asymmetry<T: Real>(gamma_r: T, gamma_b: T) -> Result<T> {
    if !(gamma_r.finite() && gamma_b.finite()) {
        return Err(Error::NonFinite("click rates"));
    }
    if gamma_r < T::zero() || gamma_b <= gamma_r {
        return Err(Error::UnphysicalAsymmetry {
            gamma_r: gamma_r.to_f64_lossy(),
            gamma_b: gamma_b.to_f64_lossy(),
        });
    }
    Ok(gamma_r / (gamma_b - gamma_r))
}

/// Fabry-Perot relations: `(fsr [Hz], round_trip [ns])`.
pub fn comb_from_geometry<T: Real>(geom: &WaveguideGeometry<T>) -> (T, T) {
    let round_trip_s = T::lit(2.0) * geom.length / geom.group_velocity;
    (T::one() / round_trip_s, round_trip_s * T::lit(1e9))
}

/// Amplitude-decay time (ns) to coupling rate (rad/s): `rate = 1 / t_c`.
pub fn coupling_rate_from_decay<T: Real>(t_c_ns: T) -> T {
    T::lit(1e9) / t_c_ns
}

pub fn decay_from_coupling_rate<T: Real>(rate: T) -> T {
    T::lit(1e9) / rate
}

/// Equal per-mode coupling that makes the cavity amplitude decay in `t_c_ns`
/// into a comb of spacing `fsr_hz` (Markov limit `1/T_c = pi gamma^2 / d_omega`).
pub fn comb_coupling_for_decay<T: Real>(fsr_hz: T, t_c_ns: T) -> T {
    let d_omega = T::two_pi() * fsr_hz;
    (d_omega / (T::pi() * t_c_ns * T::lit(1e-9))).sqrt()
}
