//! Seeded Monte-Carlo simulation of the heralding and thermal experiments.
//!
//! All randomness is derived from a single run seed. Trial `i` of stream `s`
//! draws from a [`Pcg64Mcg`] seeded with
//! `splitmix64(splitmix64(seed ^ splitmix64(s)) + i)`, so trials can be
//! generated in any order and in parallel with identical output.
//!
//! The stochastic layer is `f64` only.

pub mod analytic;
pub mod cw;
pub mod pulsed;

pub use analytic::{g2om_analytic, AnalyticG2, Cutoff};
pub use cw::{mean_intensity, simulate_cw_thermal, CwSettings};
pub use pulsed::{simulate_pulsed, PulseSequence, PulsedModel, PulsedOptions, Scheme, ThermalMode, ThermalSettings};

use crate::error::{Error, Result};
use crate::model::DeviceModel;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, Poisson};
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};

pub type TrialRng = Pcg64Mcg;

/// Stream identifiers for [`substream`].
pub mod streams {
    pub const PULSED: u64 = 1;
    pub const CW: u64 = 2;
    pub const SYNTHETIC: u64 = 3;
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for item `index` of stream `stream`.
pub fn substream(seed: u64, stream: u64, index: u64) -> TrialRng {
    let base = splitmix64(seed ^ splitmix64(stream));
    Pcg64Mcg::seed_from_u64(splitmix64(base.wrapping_add(index)))
}

/// One detector click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClickRecord {
    pub trial: u32,
    pub detector: u8,
    /// Time within the trial (ps).
    pub t_ps: u64,
}

/// Clicks of a whole run plus the bookkeeping needed to normalize them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickStream {
    pub records: Vec<ClickRecord>,
    pub n_trials: u64,
    pub period_ps: u64,
    pub n_detectors: u8,
}

impl ClickStream {
    /// Checks the (trial, time) ordering and range invariants.
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            if r.t_ps >= self.period_ps || r.detector >= self.n_detectors || r.trial as u64 >= self.n_trials {
                return Err(Error::InvalidParameter(format!("record {i} out of range: {r:?}")));
            }
            if i > 0 {
                let p = &self.records[i - 1];
                if (p.trial, p.t_ps) > (r.trial, r.t_ps) {
                    return Err(Error::Unsorted(i));
                }
            }
        }
        Ok(())
    }

    pub fn clicks_per_trial(&self, lo_ps: u64, hi_ps: u64) -> f64 {
        if self.n_trials == 0 {
            return 0.0;
        }
        let n = self.records.iter().filter(|r| r.t_ps >= lo_ps && r.t_ps < hi_ps).count();
        n as f64 / self.n_trials as f64
    }
}

/// Internal per-trial counts, exposed for tests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrialOutcome {
    pub pairs: u32,
    pub thermal_initial: u32,
    pub thermal_heated: u32,
    pub read_converted: u32,
}

/// Bose-Einstein (geometric) count with mean `n`.
pub fn bose_einstein<R: Rng + ?Sized>(n: f64, rng: &mut R) -> u32 {
    if n <= 0.0 {
        return 0;
    }
    geometric(n / (1.0 + n), rng)
}

/// Count `k` with `P(k >= j) = q^j`.
fn geometric<R: Rng + ?Sized>(q: f64, rng: &mut R) -> u32 {
    if q <= 0.0 {
        return 0;
    }
    let u = 1.0 - rng.random::<f64>();
    if u > q {
        return 0;
    }
    (u.ln() / q.ln()).floor().min(u32::MAX as f64) as u32
}

/// Negative-binomial count: sum of `r` geometric draws with ratio `lambda`.
pub fn negative_binomial<R: Rng + ?Sized>(r: u32, lambda: f64, rng: &mut R) -> u32 {
    (0..r).map(|_| geometric(lambda, rng)).fold(0u32, |a, k| a.saturating_add(k))
}

pub fn binomial<R: Rng + ?Sized>(n: u32, p: f64, rng: &mut R) -> u32 {
    if p <= 0.0 {
        return 0;
    }
    (0..n).filter(|_| rng.random::<f64>() < p).count() as u32
}

pub fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    if mean < 10.0 {
        // inversion; almost always a single comparison for the tiny means in play
        let u = rng.random::<f64>();
        let mut p = (-mean).exp();
        let mut cdf = p;
        let mut k = 0u32;
        while u > cdf && k < 1000 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        return k;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    d.sample(rng).min(u32::MAX as f64) as u32
}

/// Ratio of the pair-number distribution: a two-mode squeezed state seeded by
/// `m` thermal quanta emits `k` pairs with `P(k|m) ~ C(k+m, k) lambda^k`, mean
/// `p (1 + m)`.
pub fn pair_ratio(p_write: f64) -> f64 {
    p_write / (1.0 + p_write)
}

/// Write step: thermal seed and Stokes pairs.
pub fn sample_write<R: Rng + ?Sized>(p_write: f64, n_th: f64, rng: &mut R) -> TrialOutcome {
    let thermal_initial = bose_einstein(n_th, rng);
    let pairs = if p_write > 0.0 { negative_binomial(thermal_initial + 1, pair_ratio(p_write), rng) } else { 0 };
    TrialOutcome { pairs, thermal_initial, ..Default::default() }
}

/// Read step: heated quanta join the phonons already present and each one
/// converts independently with `p_read`.
pub fn sample_read<R: Rng + ?Sized>(partial: TrialOutcome, p_read: f64, heating: f64, rng: &mut R) -> TrialOutcome {
    let thermal_heated = bose_einstein(heating, rng);
    let phonons = partial.pairs + partial.thermal_initial + thermal_heated;
    TrialOutcome { thermal_heated, read_converted: binomial(phonons, p_read, rng), ..partial }
}

/// Gaussian photon-arrival envelope truncated at `±6 sigma` (ns).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub center: f64,
    pub sigma: f64,
}

pub const ENVELOPE_HALF_WIDTH: f64 = 6.0;

impl Envelope {
    pub fn from_fwhm(center: f64, fwhm: f64) -> Self {
        Self { center, sigma: fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt()) }
    }

    pub fn lo(&self) -> f64 {
        self.center - ENVELOPE_HALF_WIDTH * self.sigma
    }

    pub fn hi(&self) -> f64 {
        self.center + ENVELOPE_HALF_WIDTH * self.sigma
    }

    pub fn density(&self, t: f64) -> f64 {
        let z = (t - self.center) / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * (2.0 * std::f64::consts::PI).sqrt())
    }

    /// Probability mass in `[a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let cdf = |t: f64| 0.5 * statrs::function::erf::erfc(-(t - self.center) / (self.sigma * std::f64::consts::SQRT_2));
        (cdf(b) - cdf(a)).max(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let d = Normal::new(self.center, self.sigma).expect("positive sigma");
        loop {
            let t = d.sample(rng);
            if t >= self.lo() && t <= self.hi() {
                return t;
            }
        }
    }
}

/// Detection chain reduced to what the click generator needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detectors {
    pub eta: f64,
    pub n_detectors: u8,
    pub dead_ps: u64,
    pub dark_per_trial: f64,
    pub period_ps: u64,
}

impl Detectors {
    pub fn from_device(device: &DeviceModel<f64>, period_ns: f64) -> Result<Self> {
        let d = &device.detection;
        if d.n_detectors == 0 || d.n_detectors > u8::MAX as usize {
            return Err(Error::InvalidParameter("n_detectors must be in 1..=255".into()));
        }
        if !(period_ns > 0.0 && period_ns.is_finite()) {
            return Err(Error::InvalidParameter("repetition period must be positive".into()));
        }
        Ok(Self {
            eta: device.eta_det(),
            n_detectors: d.n_detectors as u8,
            dead_ps: ns_to_ps(d.dead_time),
            dark_per_trial: d.dark_rate_per_trial,
            period_ps: ns_to_ps(period_ns),
        })
    }

    /// Turns photon arrival times (ns) into clicks: loss, routing, dark
    /// counts and per-detector dead time. Output is sorted by time.
    pub fn register<R: Rng + ?Sized>(&self, trial: u32, arrivals: &[f64], rng: &mut R, out: &mut Vec<ClickRecord>) {
        let mut hits: Vec<(u64, u8)> = Vec::new();
        for &t in arrivals {
            if self.eta > 0.0 && rng.random::<f64>() < self.eta {
                let det = rng.random_range(0..self.n_detectors);
                hits.push((self.clamp(t), det));
            }
        }
        let darks = poisson(self.dark_per_trial, rng);
        for _ in 0..darks {
            let t = rng.random_range(0..self.period_ps);
            let det = rng.random_range(0..self.n_detectors);
            hits.push((t, det));
        }
        if hits.is_empty() {
            return;
        }
        hits.sort_unstable();
        let mut free_at: Vec<Option<u64>> = vec![None; self.n_detectors as usize];
        for (t, det) in hits {
            let slot = &mut free_at[det as usize];
            if slot.is_some_and(|f| t < f) {
                continue;
            }
            *slot = Some(t.saturating_add(self.dead_ps.max(1)));
            out.push(ClickRecord { trial, detector: det, t_ps: t });
        }
    }

    fn clamp(&self, t_ns: f64) -> u64 {
        ns_to_ps(t_ns.max(0.0)).min(self.period_ps - 1)
    }
}

pub fn ns_to_ps(t: f64) -> u64 {
    (t * 1000.0).round().max(0.0) as u64
}

/// Samples `photons` arrival times from `envelope` and detects them.
pub fn detect<R: Rng + ?Sized>(
    trial: u32,
    photons: u32,
    envelope: &Envelope,
    detectors: &Detectors,
    rng: &mut R,
) -> Vec<ClickRecord> {
    let arrivals: Vec<f64> = (0..photons).map(|_| envelope.sample(rng)).collect();
    let mut out = Vec::new();
    detectors.register(trial, &arrivals, rng, &mut out);
    out
}
