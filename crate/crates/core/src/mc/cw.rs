//! Continuous-wave readout of a thermal mode comb.
//!
//! Each segment starts from complex Gaussian amplitudes with covariance
//! `n I` (the equilibrium state when every mode's bath holds `n` quanta) and
//! is propagated on a uniform grid. Over one step the exact update is
//! `x -> U x + xi` with `U = exp(-i M dt)` and `Cov(xi) = n (I - U U^H)`,
//! carried out in the eigenbasis of `M`. Photons are emitted as a Poisson
//! process of rate `rate_scale |b(t)|^2` (per ns) and pass through the
//! detection chain.

use super::{poisson, streams, substream, ClickRecord, ClickStream, Detectors, TrialRng};
use crate::dynamics::CoupledModes;
use crate::error::{Error, Result};
use crate::model::DeviceModel;
use crate::scalar::Complex;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwSettings {
    /// Total simulated time (ns), split into independent segments.
    pub duration_ns: f64,
    /// Segment length (ns); each segment is one trial.
    pub segment_ns: f64,
    pub dt_ns: f64,
    pub mean_occupation: f64,
    /// Emitted photons per ns per quantum in the cavity mode.
    pub rate_scale: f64,
}

impl CwSettings {
    pub fn n_segments(&self) -> u64 {
        (self.duration_ns / self.segment_ns).ceil().max(1.0) as u64
    }

    fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !(pos(self.duration_ns) && pos(self.segment_ns) && pos(self.dt_ns)) {
            return Err(Error::InvalidParameter("CW durations must be positive".into()));
        }
        if self.dt_ns > self.segment_ns {
            return Err(Error::InvalidParameter("time step exceeds segment".into()));
        }
        if !(self.mean_occupation >= 0.0 && self.rate_scale >= 0.0) {
            return Err(Error::InvalidParameter("occupation and rate must be non-negative".into()));
        }
        Ok(())
    }
}

/// Step operator and noise factor in the eigenbasis.
struct Propagator {
    phase: DVector<Complex<f64>>,
    noise: Option<DMatrix<Complex<f64>>>,
    init: DMatrix<Complex<f64>>,
    readout: Vec<Complex<f64>>,
}

/// `A` with `A A^H = c` for a Hermitian positive semidefinite `c`.
fn psd_factor(c: DMatrix<Complex<f64>>) -> DMatrix<Complex<f64>> {
    let h = (&c + c.adjoint()) * Complex::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut a = eig.eigenvectors;
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        a.column_mut(j).scale_mut(s);
    }
    a
}

impl Propagator {
    fn new(modes: &CoupledModes<f64>, dt: f64, n: f64) -> Result<Self> {
        let v = modes.vectors().clone();
        let vinv = v
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::DegenerateDesign("defective coupled-mode generator".into()))?;
        let phase = DVector::from_iterator(
            v.ncols(),
            modes.lambda_ns().iter().map(|&l| (Complex::new(0.0, -dt) * l).exp()),
        );
        let d = DMatrix::from_diagonal(&phase);
        let u = &v * &d * &vinv;
        let dim = v.nrows();
        let cov_x = (DMatrix::identity(dim, dim) - &u * u.adjoint()) * Complex::new(n, 0.0);
        let lossless = cov_x.iter().all(|z| z.norm() < 1e-15 * n.max(1e-300));
        let noise = if lossless { None } else { Some(psd_factor(&vinv * cov_x * vinv.adjoint())) };
        let init = &vinv * Complex::new(n.sqrt(), 0.0);
        let readout = v.row(0).iter().copied().collect();
        Ok(Self { phase, noise, init, readout })
    }
}

fn complex_normal(rng: &mut TrialRng, dim: usize) -> DVector<Complex<f64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DVector::from_iterator(
        dim,
        (0..dim).map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex::new(re * s, im * s)
        }),
    )
}

fn run_segment(p: &Propagator, s: &CwSettings, det: &Detectors, trial: u32, rng: &mut TrialRng) -> Vec<ClickRecord> {
    let dim = p.phase.len();
    let mut y = &p.init * complex_normal(rng, dim);
    let steps = (s.segment_ns / s.dt_ns).floor() as usize;
    let mut arrivals = Vec::new();
    for step in 0..steps {
        let b: Complex<f64> = p.readout.iter().zip(y.iter()).map(|(v, y)| v * y).sum();
        let mu = s.rate_scale * b.norm_sqr() * s.dt_ns;
        let t0 = step as f64 * s.dt_ns;
        for _ in 0..poisson(mu, rng) {
            arrivals.push(t0 + rng.random::<f64>() * s.dt_ns);
        }
        y.component_mul_assign(&p.phase);
        if let Some(l) = &p.noise {
            y += l * complex_normal(rng, dim);
        }
    }
    let mut out = Vec::new();
    det.register(trial, &arrivals, rng, &mut out);
    out
}

/// Thermal CW click stream; one trial per segment.
pub fn simulate_cw_thermal(device: &DeviceModel<f64>, settings: &CwSettings, seed: u64) -> Result<ClickStream> {
    device.validate()?;
    settings.validate()?;
    let n_segments = settings.n_segments();
    if n_segments > u32::MAX as u64 {
        return Err(Error::InvalidParameter("too many segments".into()));
    }
    let modes = CoupledModes::new(&device.mech, &device.comb)?;
    let prop = Propagator::new(&modes, settings.dt_ns, settings.mean_occupation)?;
    let det = Detectors::from_device(device, settings.segment_ns)?;
    let parts: Vec<Vec<ClickRecord>> = (0..n_segments)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, streams::CW, i);
            run_segment(&prop, settings, &det, i as u32, &mut rng)
        })
        .collect();
    Ok(ClickStream {
        records: parts.concat(),
        n_trials: n_segments,
        period_ps: det.period_ps,
        n_detectors: det.n_detectors,
    })
}

/// Time average of `|b|^2` over the sampled fields, without photon emission.
pub fn mean_intensity(device: &DeviceModel<f64>, settings: &CwSettings, seed: u64) -> Result<f64> {
    settings.validate()?;
    let modes = CoupledModes::new(&device.mech, &device.comb)?;
    let p = Propagator::new(&modes, settings.dt_ns, settings.mean_occupation)?;
    let dim = p.phase.len();
    let steps = (settings.segment_ns / settings.dt_ns).floor() as usize;
    let n_seg = settings.n_segments();
    let sums: Vec<f64> = (0..n_seg)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, streams::CW, i);
            let mut y = &p.init * complex_normal(&mut rng, dim);
            let mut acc = 0.0;
            for _ in 0..steps {
                let b: Complex<f64> = p.readout.iter().zip(y.iter()).map(|(v, y)| v * y).sum();
                acc += b.norm_sqr();
                y.component_mul_assign(&p.phase);
                if let Some(l) = &p.noise {
                    y += l * complex_normal(&mut rng, dim);
                }
            }
            acc
        })
        .collect();
    Ok(sums.iter().sum::<f64>() / (n_seg as f64 * steps as f64))
}
