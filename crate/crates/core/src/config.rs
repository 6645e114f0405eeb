//! TOML run configuration.
//!
//! Every physical quantity is a string with a unit suffix (`"4.98 GHz"`,
//! `"119 fJ"`, `"170 ns"`); bare numbers are rejected by the schema. Plain
//! numbers are only accepted for dimensionless values (probabilities,
//! efficiencies, occupancies, counts).

use crate::analysis::{ScanSpec, DEFAULT_DN_MAX};
use crate::error::{Error, Result};
use crate::mc::{CwSettings, PulseSequence, PulsedOptions, Scheme, ThermalMode, ThermalSettings};
use crate::model::{
    pulse_energy_for_probability, CombMode, DeviceModel, HeatingModel, MechanicalCavityMode, OpticalCavityParams,
    PulseKind, PulseSpec, WaveguideGeometry, WaveguideModeComb,
};
use crate::presets;
use crate::units::{omega_from_wavelength, parse_quantity, Dimension};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

pub const OUT_DIR_ENV: &str = "GPHONON_OUT_DIR";

fn q(raw: &str, dim: Dimension) -> Result<f64> {
    parse_quantity(raw, dim)
}

fn q_opt(raw: &Option<String>, dim: Dimension) -> Result<Option<f64>> {
    raw.as_deref().map(|r| q(r, dim)).transpose()
}

fn hz_of(raw: &str) -> Result<f64> {
    Ok(q(raw, Dimension::AngularFrequency)? / std::f64::consts::TAU)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Mandatory for stochastic runs.
    pub seed: Option<u64>,
    pub output_dir: Option<String>,
    #[serde(default)]
    pub device: DeviceConfig,
    pub pulsed: Option<PulsedConfig>,
    pub cw: Option<CwConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    pub omit: Option<OmitConfig>,
    pub dynamics: Option<DynamicsConfig>,
    pub calibration: Option<CalibrationConfig>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub wavelength: Option<String>,
    pub kappa_t: Option<String>,
    pub kappa_e: Option<String>,
    pub omega_m: Option<String>,
    pub g0: Option<String>,
    /// Energy decay time of the cavity mode.
    pub t1: Option<String>,
    #[serde(default)]
    pub comb: CombConfig,
    #[serde(default)]
    pub detection: DetectionConfig,
    pub heating: Option<HeatingConfig>,
    pub waveguide: Option<WaveguideConfig>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombConfig {
    pub modes: Option<usize>,
    pub fsr: Option<String>,
    /// Cavity amplitude decay time into the comb.
    pub decay: Option<String>,
    pub linewidth: Option<String>,
    /// Explicit mode list; replaces the uniform comb.
    pub mode: Option<Vec<CombModeConfig>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombModeConfig {
    pub frequency: String,
    pub coupling: String,
    pub linewidth: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    pub eta_det: Option<f64>,
    pub dark_per_trial: Option<f64>,
    pub dead_time: Option<String>,
    pub n_detectors: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatingConfig {
    pub base_intercept: f64,
    pub base_slope: f64,
    pub preceded_intercept: f64,
    pub preceded_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveguideConfig {
    /// `false` drops the geometry; the round trip then follows the comb FSR.
    #[serde(default = "yes")]
    pub enabled: bool,
    pub length: Option<String>,
    pub round_trip: Option<String>,
    /// Multiplies the length and divides the FSR of a uniform comb.
    pub length_scale: Option<f64>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub kind: PulseKind,
    pub center: String,
    pub fwhm: String,
    pub energy: Option<String>,
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulsedConfig {
    pub scheme: Scheme,
    pub trials: u64,
    pub repetition: String,
    pub pulse: Vec<PulseConfig>,
    #[serde(default)]
    pub thermal_mode: ThermalMode,
    pub n_write: Option<f64>,
    pub n_read: Option<f64>,
    #[serde(default = "yes")]
    pub correlated: bool,
    pub round_trip_efficiency: Option<f64>,
    /// Binary unless the click file name ends in `.csv`.
    pub click_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CwConfig {
    pub duration: String,
    pub segment: String,
    pub step: String,
    pub mean_occupation: f64,
    /// Photon emission rate per cavity quantum.
    pub rate: String,
    pub histogram_bin: Option<String>,
    pub histogram_max: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub width: String,
    /// `[lo, hi]` of the write area.
    pub write_area: Option<[String; 2]>,
    pub fixed_tau: Option<String>,
    pub delay_from: Option<String>,
    pub delay_to: Option<String>,
    pub delay_step: Option<String>,
    pub dn_max: u64,
    pub sweep_widths: Option<Vec<String>>,
    pub timebin_width: Option<String>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            width: "6 ns".into(),
            write_area: None,
            fixed_tau: None,
            delay_from: None,
            delay_to: None,
            delay_step: None,
            dn_max: DEFAULT_DN_MAX,
            sweep_widths: None,
            timebin_width: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmitConfig {
    /// Half-width of the probe sweep around the cavity mode.
    pub span: String,
    pub points: usize,
    pub drive_g: String,
    #[serde(default = "one")]
    pub e0: f64,
    #[serde(default = "tenth")]
    pub e1: f64,
    pub min_prominence: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn tenth() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub duration: String,
    pub step: String,
    pub tau_max: Option<String>,
    pub horizon: Option<String>,
    pub readout_bandwidth: Option<String>,
    #[serde(default = "revivals")]
    pub revivals: usize,
    /// Waveguide length multipliers compared by the coherent-readout recipe.
    pub length_scales: Option<Vec<f64>>,
}

fn revivals() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub heating: Option<HeatingGenerator>,
    pub decay: Option<Vec<DecayGenerator>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatingGenerator {
    pub base: [f64; 2],
    pub preceded: [f64; 2],
    pub p_s: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayGenerator {
    pub name: String,
    pub amplitude: f64,
    pub t_rise: String,
    pub t1: String,
    pub t_max: String,
    pub points: usize,
    /// Relative Gaussian noise.
    pub noise: f64,
}

/// A parsed config and the SHA-256 of its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub hash: String,
}

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl LoadedConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(Self { config, hash: config_hash(text) })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

impl RunConfig {
    /// Resolves every quantity once so schema errors surface before any work.
    pub fn validate(&self) -> Result<()> {
        let dev = self.device()?;
        if let Some(p) = &self.pulsed {
            self.require_seed()?;
            self.pulse_setup(&dev)?;
            if p.trials == 0 {
                return Err(Error::Config("pulsed.trials must be positive".into()));
            }
        }
        if self.cw.is_some() {
            self.require_seed()?;
            self.cw_settings()?;
            self.histogram()?;
        }
        if self.pulsed.is_some() {
            self.scan_spec()?;
        }
        self.analysis_widths()?;
        if let Some(o) = &self.omit {
            self.omit_setup(&dev, o)?;
        }
        if let Some(d) = &self.dynamics {
            q(&d.duration, Dimension::TimeNs)?;
            q(&d.step, Dimension::TimeNs)?;
            q_opt(&d.tau_max, Dimension::TimeNs)?;
            q_opt(&d.horizon, Dimension::TimeNs)?;
            q_opt(&d.readout_bandwidth, Dimension::AngularFrequency)?;
        }
        if let Some(c) = &self.calibration {
            if c.heating.is_some() || c.decay.is_some() {
                self.require_seed()?;
            }
            for d in c.decay.iter().flatten() {
                q(&d.t_rise, Dimension::TimeUs)?;
                q(&d.t1, Dimension::TimeUs)?;
                q(&d.t_max, Dimension::TimeUs)?;
            }
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("a seed is required for stochastic runs".into()))
    }

    /// Output directory: `$GPHONON_OUT_DIR` overrides the config value.
    pub fn output_dir(&self, default: &str) -> PathBuf {
        std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .or_else(|| self.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(default))
    }

    /// Preset device with the configured overrides applied.
    pub fn device(&self) -> Result<DeviceModel<f64>> {
        let d = &self.device;
        let mut dev = presets::device::<f64>();
        let omega_c = match &d.wavelength {
            Some(w) => omega_from_wavelength(q(w, Dimension::Length)?),
            None => dev.optics.omega_c,
        };
        let kappa_t = q_opt(&d.kappa_t, Dimension::AngularFrequency)?.unwrap_or(dev.optics.kappa_t());
        let kappa_e = q_opt(&d.kappa_e, Dimension::AngularFrequency)?.unwrap_or(dev.optics.kappa_e);
        dev.optics = OpticalCavityParams::from_total(omega_c, kappa_t, kappa_e)?;
        let omega_m = q_opt(&d.omega_m, Dimension::AngularFrequency)?.unwrap_or(dev.mech.omega_m);
        let g0 = q_opt(&d.g0, Dimension::AngularFrequency)?.unwrap_or(dev.mech.g0);
        let gamma_m = match &d.t1 {
            Some(t) => 1e9 / q(t, Dimension::TimeNs)?,
            None => dev.mech.gamma_m,
        };
        dev.mech = MechanicalCavityMode::new(omega_m, gamma_m, g0)?;

        let det = &d.detection;
        if let Some(e) = det.eta_det {
            dev.detection.eta_det_measured = Some(e);
        }
        if let Some(x) = det.dark_per_trial {
            dev.detection.dark_rate_per_trial = x;
        }
        if let Some(t) = &det.dead_time {
            dev.detection.dead_time = q(t, Dimension::TimeNs)?;
        }
        if let Some(n) = det.n_detectors {
            dev.detection.n_detectors = n;
        }
        if let Some(h) = d.heating {
            dev.heating = HeatingModel::new(h.base_intercept, h.base_slope, h.preceded_intercept, h.preceded_slope)?;
        }

        let mut scale = 1.0;
        if let Some(w) = &d.waveguide {
            scale = w.length_scale.unwrap_or(1.0);
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::Config("waveguide.length_scale must be positive".into()));
            }
            if w.enabled {
                let base = dev.geometry.unwrap_or_else(presets::geometry);
                let length = q_opt(&w.length, Dimension::Length)?.unwrap_or(base.length);
                let vg = match &w.round_trip {
                    Some(rt) => 2.0 * length / (q(rt, Dimension::TimeNs)? * 1e-9),
                    None => base.group_velocity,
                };
                dev.geometry = Some(WaveguideGeometry::new(length, vg)?.scaled(scale));
            } else {
                dev.geometry = None;
            }
        }

        let c = &d.comb;
        dev.comb = match &c.mode {
            Some(list) => {
                if c.modes.is_some() || c.fsr.is_some() || c.decay.is_some() {
                    return Err(Error::Config("explicit comb modes exclude modes/fsr/decay".into()));
                }
                let modes = list
                    .iter()
                    .map(|m| {
                        Ok(CombMode {
                            omega: q(&m.frequency, Dimension::AngularFrequency)?,
                            coupling: q(&m.coupling, Dimension::AngularFrequency)?,
                            linewidth: q(&m.linewidth, Dimension::AngularFrequency)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                WaveguideModeComb::new(modes)?
            }
            None => {
                let n = c.modes.unwrap_or(presets::COMB_MODES);
                let fsr = match &c.fsr {
                    Some(f) => hz_of(f)?,
                    None => presets::FSR_HZ,
                } / scale;
                let t_c = q_opt(&c.decay, Dimension::TimeNs)?.unwrap_or(presets::T_C_NS);
                let lw = q_opt(&c.linewidth, Dimension::AngularFrequency)?
                    .unwrap_or(std::f64::consts::TAU * presets::LINEWIDTH_FLOOR_HZ);
                if n == 0 {
                    WaveguideModeComb::empty()
                } else {
                    let g = crate::model::comb_coupling_for_decay(fsr, t_c);
                    WaveguideModeComb::uniform(n, omega_m, fsr, g, lw)?
                }
            }
        };
        dev.validate()?;
        Ok(dev)
    }

    /// Pulse sequence, options and trial count of the `[pulsed]` section.
    pub fn pulse_setup(&self, device: &DeviceModel<f64>) -> Result<(PulseSequence, PulsedOptions, u64)> {
        let p = self.pulsed.as_ref().ok_or_else(|| Error::Config("missing [pulsed] section".into()))?;
        let given = p.pulse.iter().filter(|x| x.probability.is_some()).count();
        if given != 0 && given != p.pulse.len() {
            return Err(Error::Config("set probability on every pulse or on none".into()));
        }
        let mut pulses = Vec::with_capacity(p.pulse.len());
        for x in &p.pulse {
            let energy = match (&x.energy, x.probability) {
                (Some(e), None) => q(e, Dimension::Energy)?,
                (None, Some(prob)) => pulse_energy_for_probability(x.kind, prob, &device.optics, &device.mech)?,
                (Some(_), Some(_)) => return Err(Error::Config("pulse has both energy and probability".into())),
                (None, None) => return Err(Error::Config("pulse needs an energy or a probability".into())),
            };
            pulses.push(PulseSpec::new(x.kind, energy, q(&x.fwhm, Dimension::TimeNs)?, q(&x.center, Dimension::TimeNs)?)?);
        }
        let sequence = PulseSequence::new(pulses, q(&p.repetition, Dimension::TimeUs)?, p.scheme)?;
        let thermal = match (p.n_write, p.n_read) {
            (None, None) => None,
            (Some(w), Some(r)) => Some(ThermalSettings { n_write: w, n_read: r }),
            _ => return Err(Error::Config("set both n_write and n_read or neither".into())),
        };
        let options = PulsedOptions {
            thermal_mode: p.thermal_mode,
            thermal,
            correlated: p.correlated,
            round_trip_efficiency: p.round_trip_efficiency.unwrap_or(1.0),
            probabilities: if given > 0 { Some(p.pulse.iter().filter_map(|x| x.probability).collect()) } else { None },
        };
        Ok((sequence, options, p.trials))
    }

    pub fn cw_settings(&self) -> Result<CwSettings> {
        let c = self.cw.as_ref().ok_or_else(|| Error::Config("missing [cw] section".into()))?;
        Ok(CwSettings {
            duration_ns: q(&c.duration, Dimension::TimeNs)?,
            segment_ns: q(&c.segment, Dimension::TimeNs)?,
            dt_ns: q(&c.step, Dimension::TimeNs)?,
            mean_occupation: c.mean_occupation,
            rate_scale: q(&c.rate, Dimension::EventRate)?,
        })
    }

    /// `(bin_width, max_tau)` of the CW histogram (ns).
    pub fn histogram(&self) -> Result<(f64, f64)> {
        let c = self.cw.as_ref().ok_or_else(|| Error::Config("missing [cw] section".into()))?;
        Ok((
            q_opt(&c.histogram_bin, Dimension::TimeNs)?.unwrap_or(1.0),
            q_opt(&c.histogram_max, Dimension::TimeNs)?.unwrap_or(200.0),
        ))
    }

    pub fn width(&self) -> Result<f64> {
        q(&self.analysis.width, Dimension::TimeNs)
    }

    pub fn analysis_widths(&self) -> Result<Vec<f64>> {
        self.width()?;
        self.analysis.sweep_widths.iter().flatten().map(|w| q(w, Dimension::TimeNs)).collect()
    }

    /// Delay scan around the first write/read pair of the pulsed section.
    /// Defaults: write area = write pulse +/- 1 FWHM, fixed tau from the pulse
    /// centers, delays within half the write area of it in 2 ns steps.
    pub fn scan_spec(&self) -> Result<ScanSpec> {
        let a = &self.analysis;
        let p = self.pulsed.as_ref().ok_or_else(|| Error::Config("missing [pulsed] section".into()))?;
        let write = p.pulse.iter().find(|x| x.kind == PulseKind::Write).ok_or_else(|| Error::Config("no write pulse".into()))?;
        let read = p.pulse.iter().find(|x| x.kind == PulseKind::Read).ok_or_else(|| Error::Config("no read pulse".into()))?;
        let (cw, cr) = (q(&write.center, Dimension::TimeNs)?, q(&read.center, Dimension::TimeNs)?);
        let fwhm = q(&write.fwhm, Dimension::TimeNs)?;
        let write_area = match &a.write_area {
            Some([lo, hi]) => (q(lo, Dimension::TimeNs)?, q(hi, Dimension::TimeNs)?),
            None => (cw - fwhm, cw + fwhm),
        };
        let fixed_tau = q_opt(&a.fixed_tau, Dimension::TimeNs)?.unwrap_or(cr - cw);
        let half = 0.5 * (write_area.1 - write_area.0);
        let from = q_opt(&a.delay_from, Dimension::TimeNs)?.unwrap_or(fixed_tau - half);
        let to = q_opt(&a.delay_to, Dimension::TimeNs)?.unwrap_or(fixed_tau + half);
        let step = q_opt(&a.delay_step, Dimension::TimeNs)?.unwrap_or(2.0);
        if !(write_area.1 > write_area.0) || !(to >= from) || !(step > 0.0) {
            return Err(Error::Config("invalid analysis ranges".into()));
        }
        Ok(ScanSpec {
            write_area,
            fixed_tau,
            width: self.width()?,
            delays: ScanSpec::delay_grid(from, to, step),
            dn_max: a.dn_max,
        })
    }

    pub fn timebin_width(&self) -> Result<f64> {
        Ok(q_opt(&self.analysis.timebin_width, Dimension::TimeNs)?.unwrap_or(40.0))
    }

    /// `(range in rad/s, points, drive, min_prominence)` for the OMIT sweep.
    pub fn omit_setup(
        &self,
        device: &DeviceModel<f64>,
        o: &OmitConfig,
    ) -> Result<((f64, f64), usize, crate::omit::OmitDriveParams<f64>, Option<f64>)> {
        let span = q(&o.span, Dimension::AngularFrequency)?;
        let g = q(&o.drive_g, Dimension::AngularFrequency)?;
        let drive = crate::omit::OmitDriveParams::new(device.mech.omega_m, g, o.e0, o.e1)?;
        let w = device.mech.omega_m;
        Ok(((w - span, w + span), o.points, drive, o.min_prominence))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unitless_frequency_rejected() {
        let e = LoadedConfig::parse("[device]\nomega_m = \"4.98\"\n").unwrap_err();
        assert!(e.to_string().contains("unit"), "{e}");
        assert!(LoadedConfig::parse("[device]\nomega_m = 4.98\n").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(LoadedConfig::parse("sed = 3\n").is_err());
    }

    #[test]
    fn seed_required_for_pulsed() {
        let text = r#"
[pulsed]
scheme = "single_write_read"
trials = 10
repetition = "200 us"
pulse = [
  { kind = "write", center = "300 ns", fwhm = "40 ns", probability = 0.014 },
  { kind = "read", center = "470 ns", fwhm = "40 ns", probability = 0.014 },
]
"#;
        assert!(LoadedConfig::parse(text).is_err());
        let ok = LoadedConfig::parse(&format!("seed = 1\n{text}")).unwrap();
        assert_eq!(ok.hash.len(), 64);
    }
}
