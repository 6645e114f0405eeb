//! Pulsed write/read heralding experiment.
//!
//! Per trial: a thermal seed `m ~ BE(n_write)` stimulates Stokes pairs
//! `k ~ NegBin(m + 1, p / (1 + p))` for each write pulse. Every pair leaves a
//! phonon born at its Stokes photon time `t_i`; the phonon is found in the
//! cavity with probability `pop(t - t_i)` (the unit-excitation population from
//! [`crate::dynamics`]) and converts during read pulse `j` with probability
//! `1 - (1 - p_j)^O_j`, `O_j = int f_j(t) pop(t - t_i) dt`. Its anti-Stokes
//! photon time follows `f_j(t) pop(t - t_i)`. Thermal quanta (surviving seed
//! plus read heating `h ~ BE(n_heated)`) sit in the cavity and convert with
//! `p_j`, timed by the read envelope alone.

use super::{
    bose_einstein, binomial, negative_binomial, pair_ratio, streams, substream, ClickRecord, ClickStream, Detectors,
    Envelope, TrialRng,
};
use crate::dynamics::{CoupledModes, ModeState};
use crate::error::{Error, Result};
use crate::model::{comb_from_geometry, scattering_probability, DeviceModel, HeatingModel, PulseKind, PulseSpec};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    SingleWriteRead,
    DoubleWriteRead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    pub pulses: Vec<PulseSpec<f64>>,
    /// Repetition period (µs).
    pub repetition_period_us: f64,
    pub scheme: Scheme,
}

impl PulseSequence {
    pub fn new(pulses: Vec<PulseSpec<f64>>, repetition_period_us: f64, scheme: Scheme) -> Result<Self> {
        let s = Self { pulses, repetition_period_us, scheme };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        use PulseKind::{Read, Write};
        let kinds: Vec<PulseKind> = self.pulses.iter().map(|p| p.kind).collect();
        let expected: &[PulseKind] = match self.scheme {
            Scheme::SingleWriteRead => &[Write, Read],
            Scheme::DoubleWriteRead => &[Write, Write, Read, Read],
        };
        if kinds != expected {
            return Err(Error::InvalidScheme(format!("{:?} expects pulses {expected:?}, got {kinds:?}", self.scheme)));
        }
        if self.pulses.windows(2).any(|w| w[1].center_time <= w[0].center_time) {
            return Err(Error::InvalidScheme("pulse centers must increase".into()));
        }
        let first = self.envelope(0);
        let last = self.envelope(self.pulses.len() - 1);
        if first.lo() < 0.0 {
            return Err(Error::InvalidScheme("first pulse starts before the trial".into()));
        }
        if !(self.period_ns() > last.hi()) {
            return Err(Error::InvalidScheme("repetition period shorter than the pulse sequence".into()));
        }
        Ok(())
    }

    pub fn period_ns(&self) -> f64 {
        self.repetition_period_us * 1e3
    }

    pub fn envelope(&self, i: usize) -> Envelope {
        Envelope::from_fwhm(self.pulses[i].center_time, self.pulses[i].fwhm)
    }

    pub fn centers(&self, kind: PulseKind) -> Vec<f64> {
        self.pulses.iter().filter(|p| p.kind == kind).map(|p| p.center_time).collect()
    }
}

/// How the write-pulse thermal occupancy relates to the heating fits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThermalMode {
    /// Write pulse sees the isolated-pulse occupancy, read pulse the
    /// preceded-pulse occupancy.
    #[default]
    Calibrated,
    /// Both pulses see the preceded-pulse occupancy (steady operating point).
    Operating,
}

/// Mean thermal occupancies at the write and read pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalSettings {
    pub n_write: f64,
    pub n_read: f64,
}

impl ThermalSettings {
    pub fn from_heating(heating: &HeatingModel<f64>, p_write: f64, mode: ThermalMode) -> Self {
        let n_read = heating.preceded(p_write).max(0.0);
        let n_write = match mode {
            ThermalMode::Calibrated => heating.base(p_write).max(0.0),
            ThermalMode::Operating => n_read,
        };
        Self { n_write, n_read }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulsedOptions {
    pub thermal_mode: ThermalMode,
    /// Explicit occupancies; overrides `thermal_mode`.
    pub thermal: Option<ThermalSettings>,
    /// When false, Stokes photons are independent Bernoulli draws and no pair
    /// phonons are created.
    pub correlated: bool,
    /// Transmission per waveguide round trip for traveling pair phonons.
    pub round_trip_efficiency: f64,
    /// Overrides the pulse-energy derived scattering probabilities.
    pub probabilities: Option<Vec<f64>>,
}

impl Default for PulsedOptions {
    fn default() -> Self {
        Self {
            thermal_mode: ThermalMode::Calibrated,
            thermal: None,
            correlated: true,
            round_trip_efficiency: 1.0,
            probabilities: None,
        }
    }
}

/// Linear-interpolation table on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Table {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
}

impl Table {
    fn build(t0: f64, t1: f64, dt: f64, f: impl Fn(f64) -> f64) -> Self {
        let n = ((t1 - t0) / dt).ceil() as usize + 2;
        Self { t0, dt, values: (0..n).map(|i| f(t0 + i as f64 * dt)).collect() }
    }

    pub(crate) fn at(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.dt;
        if x <= 0.0 {
            return self.values[0];
        }
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return *self.values.last().expect("non-empty table");
        }
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    fn max(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &b| a.max(b))
    }
}

const POP_STEP: f64 = 0.05;
const QUAD_STEP: f64 = 0.1;

fn trapezoid(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = ((b - a) / QUAD_STEP).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}

/// Pulsed experiment with every per-trial constant precomputed.
#[derive(Debug, Clone)]
pub struct PulsedModel {
    pub sequence: PulseSequence,
    /// Scattering probability of each pulse, in sequence order.
    pub probabilities: Vec<f64>,
    pub thermal: ThermalSettings,
    /// Occupancy added by read heating on top of the surviving seed.
    pub n_heated: f64,
    /// Survival of seed quanta from the first write to the first read.
    pub thermal_survival: f64,
    pub detectors: Detectors,
    pub correlated: bool,
    pub t1_ns: f64,
    pub round_trip_ns: f64,
    pub round_trip_efficiency: f64,
    writes: Vec<(Envelope, f64)>,
    reads: Vec<(Envelope, f64)>,
    pop: Table,
    pop_max: f64,
    /// Per read pulse: `(O_j(t_i), Q_j(t_i))`.
    conv: Vec<(Table, Table)>,
}

impl PulsedModel {
    pub fn new(device: &DeviceModel<f64>, sequence: &PulseSequence, options: &PulsedOptions) -> Result<Self> {
        device.validate()?;
        sequence.validate()?;
        let probabilities = match &options.probabilities {
            Some(p) if p.len() != sequence.pulses.len() => {
                return Err(Error::InvalidParameter("one probability per pulse required".into()))
            }
            Some(p) => {
                if p.iter().any(|&x| !(0.0..1.0).contains(&x)) {
                    return Err(Error::InvalidParameter("probabilities must lie in [0, 1)".into()));
                }
                p.clone()
            }
            None => sequence
                .pulses
                .iter()
                .map(|p| scattering_probability(p, &device.optics, &device.mech))
                .collect::<Result<_>>()?,
        };
        if !(options.round_trip_efficiency >= 0.0 && options.round_trip_efficiency <= 1.0) {
            return Err(Error::InvalidParameter("round-trip efficiency must lie in [0, 1]".into()));
        }
        let mut writes = Vec::new();
        let mut reads = Vec::new();
        for (i, p) in sequence.pulses.iter().enumerate() {
            let e = (sequence.envelope(i), probabilities[i]);
            match p.kind {
                PulseKind::Write => writes.push(e),
                PulseKind::Read => reads.push(e),
            }
        }
        let p_w = writes[0].1;
        let thermal = options
            .thermal
            .unwrap_or_else(|| ThermalSettings::from_heating(&device.heating, p_w, options.thermal_mode));
        if !(thermal.n_write >= 0.0 && thermal.n_read >= 0.0) {
            return Err(Error::InvalidParameter("thermal occupancies must be non-negative".into()));
        }
        let t1_ns = if device.mech.gamma_m > 0.0 { 1e9 / device.mech.gamma_m } else { f64::INFINITY };
        let gap = reads[0].0.center - writes[0].0.center;
        let thermal_survival = (-gap / t1_ns).exp();
        let n_heated = (thermal.n_read - thermal.n_write * thermal_survival).max(0.0);
        let round_trip_ns = match (&device.geometry, device.comb.mean_fsr_hz()) {
            (Some(g), _) => comb_from_geometry(g).1,
            (None, Some(fsr)) => 1e9 / fsr,
            (None, None) => f64::INFINITY,
        };

        let t_lo = writes[0].0.lo();
        let t_hi = reads.last().expect("read pulse").0.hi();
        let modes = CoupledModes::new(&device.mech, &device.comb)?;
        let comps = modes.cavity_components(&ModeState::cavity_excited(device.comb.len()))?;
        let pop = Table::build(0.0, t_hi - t_lo + 1.0, POP_STEP, |t| {
            crate::dynamics::eval_components(&comps, t).norm_sqr()
        });
        let pop_max = pop.max();

        let born_lo = t_lo;
        let born_hi = writes.last().expect("write pulse").0.hi();
        let eta_rt = options.round_trip_efficiency;
        let conv = reads
            .iter()
            .map(|&(env, p)| {
                let overlap = Table::build(born_lo, born_hi, QUAD_STEP, |ti| {
                    trapezoid(env.lo().max(ti), env.hi(), |t| env.density(t) * pop.at(t - ti))
                });
                let q = Table::build(born_lo, born_hi, QUAD_STEP, |ti| {
                    let o = overlap.at(ti);
                    let dt = env.center - ti;
                    let mut surv = (-dt / t1_ns).exp();
                    if eta_rt < 1.0 && round_trip_ns.is_finite() {
                        surv *= eta_rt.powf(dt.max(0.0) / round_trip_ns);
                    }
                    surv * (1.0 - (1.0 - p).powf(o))
                });
                (overlap, q)
            })
            .collect();

        Ok(Self {
            sequence: sequence.clone(),
            probabilities,
            thermal,
            n_heated,
            thermal_survival,
            detectors: Detectors::from_device(device, sequence.period_ns())?,
            correlated: options.correlated,
            t1_ns,
            round_trip_ns,
            round_trip_efficiency: eta_rt,
            writes,
            reads,
            pop,
            pop_max,
            conv,
        })
    }

    pub fn write_pulses(&self) -> &[(Envelope, f64)] {
        &self.writes
    }

    pub fn read_pulses(&self) -> &[(Envelope, f64)] {
        &self.reads
    }

    /// Cavity population a time `dt` (ns) after a unit excitation.
    pub fn population(&self, dt: f64) -> f64 {
        if dt < 0.0 {
            0.0
        } else {
            self.pop.at(dt)
        }
    }

    /// Probability that a pair phonon born at `t_i` converts in read pulse
    /// `j` (given it reached that pulse unconverted).
    pub fn pair_conversion(&self, j: usize, t_i: f64) -> f64 {
        self.conv[j].1.at(t_i)
    }

    /// Probability that a pair phonon born at `t_i` converts in read pulse `j`
    /// with its photon timestamp inside `[a, b]`.
    pub fn pair_conversion_in(&self, j: usize, t_i: f64, a: f64, b: f64) -> f64 {
        let (env, _) = self.reads[j];
        let o = self.conv[j].0.at(t_i);
        if o <= 0.0 {
            return 0.0;
        }
        let part = trapezoid(a.max(env.lo()).max(t_i), b.min(env.hi()), |t| env.density(t) * self.population(t - t_i));
        self.pair_conversion(j, t_i) * part / o
    }

    fn pair_time(&self, j: usize, t_i: f64, rng: &mut TrialRng) -> f64 {
        let env = self.reads[j].0;
        for _ in 0..1_000_000 {
            let t = env.sample(rng);
            if rng.random::<f64>() * self.pop_max < self.population(t - t_i) {
                return t;
            }
        }
        env.center
    }

    /// Simulates one trial, appending its clicks to `out`.
    pub fn run_trial(&self, trial: u32, rng: &mut TrialRng, out: &mut Vec<ClickRecord>) -> super::TrialOutcome {
        let mut arrivals: Vec<f64> = Vec::new();
        let mut phonons: Vec<f64> = Vec::new();
        let m = bose_einstein(self.thermal.n_write, rng);
        let mut pairs = 0;
        for &(env, p) in &self.writes {
            if self.correlated {
                let k = if p > 0.0 { negative_binomial(m + 1, pair_ratio(p), rng) } else { 0 };
                pairs += k;
                for _ in 0..k {
                    let t = env.sample(rng);
                    arrivals.push(t);
                    phonons.push(t);
                }
            } else if rng.random::<f64>() < p * (1.0 + self.thermal.n_write) {
                arrivals.push(env.sample(rng));
            }
        }
        let heated = bose_einstein(self.n_heated, rng);
        let mut thermal = binomial(m, self.thermal_survival, rng) + heated;
        let mut converted = 0;
        for (j, &(env, p)) in self.reads.iter().enumerate() {
            let c = binomial(thermal, p, rng);
            thermal -= c;
            converted += c;
            for _ in 0..c {
                arrivals.push(env.sample(rng));
            }
            let mut i = 0;
            while i < phonons.len() {
                let t_i = phonons[i];
                if rng.random::<f64>() < self.pair_conversion(j, t_i) {
                    let t = self.pair_time(j, t_i, rng);
                    arrivals.push(t);
                    phonons.swap_remove(i);
                    converted += 1;
                } else {
                    i += 1;
                }
            }
        }
        self.detectors.register(trial, &arrivals, rng, out);
        super::TrialOutcome { pairs, thermal_initial: m, thermal_heated: heated, read_converted: converted }
    }

    /// Runs `n_trials` trials; output is sorted by trial then time.
    pub fn simulate(&self, n_trials: u64, seed: u64) -> Result<ClickStream> {
        if n_trials == 0 || n_trials > u32::MAX as u64 + 1 {
            return Err(Error::InvalidParameter("n_trials must be in 1..=2^32".into()));
        }
        const CHUNK: u64 = 1 << 16;
        let n_chunks = n_trials.div_ceil(CHUNK);
        let parts: Vec<Vec<ClickRecord>> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut out = Vec::new();
                for trial in c * CHUNK..((c + 1) * CHUNK).min(n_trials) {
                    let mut rng = substream(seed, streams::PULSED, trial);
                    self.run_trial(trial as u32, &mut rng, &mut out);
                }
                out
            })
            .collect();
        Ok(ClickStream {
            records: parts.concat(),
            n_trials,
            period_ps: self.detectors.period_ps,
            n_detectors: self.detectors.n_detectors,
        })
    }
}

/// Convenience wrapper: build the model and run it.
pub fn simulate_pulsed(
    device: &DeviceModel<f64>,
    sequence: &PulseSequence,
    options: &PulsedOptions,
    n_trials: u64,
    seed: u64,
) -> Result<ClickStream> {
    PulsedModel::new(device, sequence, options)?.simulate(n_trials, seed)
}
