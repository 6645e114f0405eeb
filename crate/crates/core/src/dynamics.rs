//! Linear cavity-waveguide mode dynamics, population traces and correlations.
//!
//! The cavity mode `b` couples to comb modes `c_l` through the complex
//! symmetric generator `M` with `M_00 = omega_m - i Gamma_m/2`,
//! `M_ll = omega_l - i Gamma_l/2` and `M_0l = gamma_l`; amplitudes follow
//! `dx/dt = -i M x`. The generator is diagonalized once (complex Schur form
//! plus triangular back-substitution), after which every amplitude is a sum of
//! damped exponentials and all integrals below are evaluated in closed form.
//!
//! Internally the system runs in a frame rotating at `omega_m` with time in ns.

use crate::error::{Error, Result};
use crate::model::{MechanicalCavityMode, WaveguideModeComb};
use crate::omit::{extract_mode_comb, ExtractedComb, ExtractionConfig, Spectrum};
use crate::scalar::{cabs, cexp, Complex, Real};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct ModeState<T: Real> {
    pub b: Complex<T>,
    pub c: Vec<Complex<T>>,
}

impl<T: Real> ModeState<T> {
    /// Unit cavity excitation `b = 1`, empty comb.
    pub fn cavity_excited(n_comb: usize) -> Self {
        Self {
            b: Complex::new(T::one(), T::zero()),
            c: vec![Complex::new(T::zero(), T::zero()); n_comb],
        }
    }

    pub fn total_population(&self) -> T {
        self.c.iter().fold(self.b.norm_sqr(), |acc, c| acc + c.norm_sqr())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeTrace<T: Real> {
    /// Times (ns).
    pub times: Vec<T>,
    pub states: Vec<ModeState<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTrace<T> {
    /// Lags (ns).
    pub taus: Vec<T>,
    /// `g1(tau)` in the frame rotating at `frame_omega`; `|g1|` is frame independent.
    pub g1: Vec<Complex<T>>,
    pub g2: Vec<T>,
    /// Integration horizon (ns).
    pub horizon: T,
    /// Reference angular frequency of the rotating frame (rad/s).
    pub frame_omega: T,
}

/// Eigen-decomposed coupled-mode generator.
#[derive(Debug, Clone)]
pub struct CoupledModes<T: Real> {
    omega_m: T,
    /// Eigenvalues in rad/ns, rotating frame.
    lambda: Vec<Complex<T>>,
    vecs: DMatrix<Complex<T>>,
    n_comb: usize,
}

fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

/// `int_{t0}^{t1} exp(z t) dt`, stable for small `z (t1 - t0)`.
fn int_exp<T: Real>(z: Complex<T>, t0: T, t1: T) -> Complex<T> {
    let d = t1 - t0;
    let zd = z * d;
    let base = cexp(z * t0);
    if cabs(zd) < T::lit(1e-3) {
        let one = c(T::one(), T::zero());
        let series = one + zd * (one / T::lit(2.0) + zd * (one / T::lit(6.0) + zd / T::lit(24.0)));
        base * series * d
    } else {
        base * (cexp(zd) - c(T::one(), T::zero())) / z
    }
}

impl<T: Real> CoupledModes<T> {
    pub fn new(mech: &MechanicalCavityMode<T>, comb: &WaveguideModeComb<T>) -> Result<Self> {
        let n = comb.len() + 1;
        let ns = T::lit(1e-9);
        let half = T::lit(0.5);
        let mut m = DMatrix::<Complex<T>>::zeros(n, n);
        m[(0, 0)] = c(T::zero(), -half * mech.gamma_m * ns);
        for (l, mode) in comb.modes().iter().enumerate() {
            m[(l + 1, l + 1)] = c((mode.omega - mech.omega_m) * ns, -half * mode.linewidth * ns);
            m[(0, l + 1)] = c(mode.coupling * ns, T::zero());
            m[(l + 1, 0)] = c(mode.coupling * ns, T::zero());
        }
        let (lambda, vecs) = eigen(m)?;
        Ok(Self { omega_m: mech.omega_m, lambda, vecs, n_comb: comb.len() })
    }

    /// Eigenvalues of the generator (rad/s, lab frame).
    pub fn eigenvalues(&self) -> Vec<Complex<T>> {
        self.lambda
            .iter()
            .map(|l| c(l.re * T::lit(1e9) + self.omega_m, l.im * T::lit(1e9)))
            .collect()
    }

    pub fn n_comb(&self) -> usize {
        self.n_comb
    }

    /// Eigenvalues in rad/ns, rotating frame.
    pub(crate) fn lambda_ns(&self) -> &[Complex<T>] {
        &self.lambda
    }

    /// Right eigenvectors as columns.
    pub(crate) fn vectors(&self) -> &DMatrix<Complex<T>> {
        &self.vecs
    }

    fn check_state(&self, s: &ModeState<T>) -> Result<()> {
        if s.c.len() != self.n_comb {
            return Err(Error::InvalidParameter(format!(
                "state has {} comb amplitudes, comb has {} modes",
                s.c.len(),
                self.n_comb
            )));
        }
        Ok(())
    }

    /// Eigenbasis coefficients of `initial`.
    fn coefficients(&self, initial: &ModeState<T>) -> Result<DVector<Complex<T>>> {
        self.check_state(initial)?;
        let x0 = DVector::from_iterator(
            self.n_comb + 1,
            std::iter::once(initial.b).chain(initial.c.iter().copied()),
        );
        self.vecs
            .clone()
            .lu()
            .solve(&x0)
            .ok_or_else(|| Error::DegenerateDesign("defective coupled-mode generator".into()))
    }

    /// Cavity amplitude as `b(t) = sum_j beta_j exp(-i lambda_j t)` (rotating frame, t in ns).
    pub fn cavity_components(&self, initial: &ModeState<T>) -> Result<Vec<(Complex<T>, Complex<T>)>> {
        let a = self.coefficients(initial)?;
        Ok(self
            .lambda
            .iter()
            .enumerate()
            .map(|(j, &l)| (l, self.vecs[(0, j)] * a[j]))
            .collect())
    }

    /// Amplitudes at `t` (ns), frame rotating at `omega_m`.
    pub fn state_rotating(&self, a: &DVector<Complex<T>>, t: T) -> ModeState<T> {
        let n = self.n_comb + 1;
        let phased = DVector::from_iterator(
            n,
            (0..n).map(|j| a[j] * cexp(c(T::zero(), -T::one()) * self.lambda[j] * t)),
        );
        let x = &self.vecs * phased;
        ModeState { b: x[0], c: x.iter().skip(1).copied().collect() }
    }

    /// Propagates `initial` over `t_grid` (ns); amplitudes are in the lab frame.
    pub fn evolve(&self, initial: &ModeState<T>, t_grid: &[T]) -> Result<TimeTrace<T>> {
        check_grid(t_grid)?;
        let a = self.coefficients(initial)?;
        let states = t_grid
            .iter()
            .map(|&t| {
                let mut s = self.state_rotating(&a, t);
                // carrier phase kept in f64, it reaches ~1e4 rad over a microsecond
                let ph = -(self.omega_m.to_f64_lossy() * 1e-9) * t.to_f64_lossy();
                let rot = c(T::lit(ph.cos()), T::lit(ph.sin()));
                s.b *= rot;
                for x in &mut s.c {
                    *x *= rot;
                }
                s
            })
            .collect();
        Ok(TimeTrace { times: t_grid.to_vec(), states })
    }

    /// Cavity population `|b(t)|^2` on `t_grid` (ns).
    pub fn population(&self, initial: &ModeState<T>, t_grid: &[T]) -> Result<Vec<(T, T)>> {
        let comps = self.cavity_components(initial)?;
        Ok(t_grid.iter().map(|&t| (t, eval_components(&comps, t).norm_sqr())).collect())
    }
}

pub(crate) fn eval_components<T: Real>(comps: &[(Complex<T>, Complex<T>)], t: T) -> Complex<T> {
    comps.iter().fold(c(T::zero(), T::zero()), |acc, &(l, beta)| {
        acc + beta * cexp(c(T::zero(), -t) * l)
    })
}

fn check_grid<T: Real>(t_grid: &[T]) -> Result<()> {
    if t_grid.iter().any(|t| !t.finite()) {
        return Err(Error::NonFinite("time grid"));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("time grid must be strictly increasing".into()));
    }
    if t_grid.first().is_some_and(|&t| t < T::zero()) {
        return Err(Error::InvalidParameter("time grid must start at t >= 0".into()));
    }
    Ok(())
}

/// Eigenvalues and right eigenvectors of a general complex matrix.
fn eigen<T: Real>(m: DMatrix<Complex<T>>) -> Result<(Vec<Complex<T>>, DMatrix<Complex<T>>)> {
    let n = m.nrows();
    let scale = m.iter().fold(T::zero(), |a, z| a.max(cabs(*z)));
    let eps = T::default_epsilon();
    let schur = nalgebra::linalg::Schur::try_new(m, eps, 10_000)
        .ok_or_else(|| Error::DegenerateDesign("Schur decomposition did not converge".into()))?;
    let (q, u) = schur.unpack();
    let lambda: Vec<Complex<T>> = (0..n).map(|i| u[(i, i)]).collect();
    let smin = (eps * scale).max(T::lit(f32::MIN_POSITIVE as f64));
    let mut y = DMatrix::<Complex<T>>::zeros(n, n);
    for k in 0..n {
        y[(k, k)] = c(T::one(), T::zero());
        for i in (0..k).rev() {
            let mut s = c(T::zero(), T::zero());
            for j in i + 1..=k {
                s += u[(i, j)] * y[(j, k)];
            }
            let mut d = u[(i, i)] - lambda[k];
            if cabs(d) < smin {
                d = c(smin, T::zero());
            }
            y[(i, k)] = -s / d;
        }
    }
    let mut v = q * y;
    for k in 0..n {
        let norm = v.column(k).norm();
        if norm > T::zero() {
            v.column_mut(k).unscale_mut(norm);
        }
    }
    Ok((lambda, v))
}

/// Convenience wrapper around [`CoupledModes::evolve`].
pub fn evolve<T: Real>(
    initial: &ModeState<T>,
    mech: &MechanicalCavityMode<T>,
    comb: &WaveguideModeComb<T>,
    t_grid: &[T],
) -> Result<TimeTrace<T>> {
    CoupledModes::new(mech, comb)?.evolve(initial, t_grid)
}

/// `(t, |b(t)|^2)` for every sample of a trace.
pub fn cavity_population<T: Real>(trace: &TimeTrace<T>) -> Vec<(T, T)> {
    trace.times.iter().zip(&trace.states).map(|(&t, s)| (t, s.b.norm_sqr())).collect()
}

/// Default correlation horizon (ns): ten round trips of the comb, or ten
/// cavity lifetimes without a comb.
pub fn default_horizon<T: Real>(mech: &MechanicalCavityMode<T>, comb: &WaveguideModeComb<T>) -> T {
    if let Some(fsr) = comb.mean_fsr_hz() {
        return T::lit(10.0) * T::lit(1e9) / fsr;
    }
    let mut rate = mech.gamma_m;
    if let Some(m) = comb.modes().first() {
        rate = rate.max(m.coupling).max(m.linewidth);
    }
    if rate > T::zero() {
        T::lit(10.0) * T::lit(1e9) / rate
    } else {
        T::lit(1000.0)
    }
}

/// `g1(tau) = int b*(t) b(t+tau) dt / int_0^T |b|^2 dt` over the overlap
/// `[max(0,-tau), T - max(0,tau)]`, and the Siegert `g2 = 1 + |g1|^2`.
///
/// The kernel is the free decay of `initial` (a unit cavity excitation for the
/// thermal experiment). Integrals are exact for the exponential-sum amplitude.
pub fn correlations<T: Real>(
    mech: &MechanicalCavityMode<T>,
    comb: &WaveguideModeComb<T>,
    initial: &ModeState<T>,
    tau_grid: &[T],
    horizon: Option<T>,
) -> Result<CorrelationTrace<T>> {
    let modes = CoupledModes::new(mech, comb)?;
    let comps = modes.cavity_components(initial)?;
    let horizon = horizon.unwrap_or_else(|| default_horizon(mech, comb));
    if !(horizon.finite() && horizon > T::zero()) {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    for &tau in tau_grid {
        if !tau.finite() || tau.abs() >= horizon {
            return Err(Error::TauBeyondHorizon { tau: tau.to_f64_lossy(), horizon: horizon.to_f64_lossy() });
        }
    }
    let i = c(T::zero(), T::one());
    let overlap = |tau: T| -> Complex<T> {
        let t0 = (-tau).max(T::zero());
        let t1 = horizon - tau.max(T::zero());
        let mut acc = c(T::zero(), T::zero());
        for &(lj, bj) in &comps {
            for &(lk, bk) in &comps {
                let z = i * (lj.conj() - lk);
                acc += bj.conj() * bk * cexp(-i * lk * tau) * int_exp(z, t0, t1);
            }
        }
        acc
    };
    let norm = overlap(T::zero()).re;
    if !(norm > T::zero()) {
        return Err(Error::DegenerateDesign("initial state has no cavity population".into()));
    }
    let mut g1 = Vec::with_capacity(tau_grid.len());
    let mut g2 = Vec::with_capacity(tau_grid.len());
    for &tau in tau_grid {
        let v = if tau == T::zero() { c(T::one(), T::zero()) } else { overlap(tau) / norm };
        g2.push(T::one() + v.norm_sqr());
        g1.push(v);
    }
    Ok(CorrelationTrace {
        taus: tau_grid.to_vec(),
        g1,
        g2,
        horizon,
        frame_omega: mech.omega_m,
    })
}

/// Extracts a comb from an OMIT spectrum and computes its correlations for a
/// unit cavity excitation. The extracted comb is returned for inspection.
pub fn simulate_from_omit<T: Real>(
    spectrum: &Spectrum<T>,
    config: &ExtractionConfig<T>,
    tau_grid: &[T],
    horizon: Option<T>,
) -> Result<(CorrelationTrace<T>, ExtractedComb<T>)> {
    let extracted = extract_mode_comb(spectrum, config)?;
    let mech = MechanicalCavityMode::new(extracted.omega_m, config.gamma_m, T::zero())?;
    let initial = ModeState::cavity_excited(extracted.comb.len());
    let trace = correlations(&mech, &extracted.comb, &initial, tau_grid, horizon)?;
    Ok((trace, extracted))
}

/// Cavity population seen through a single-pole low-pass readout of angular
/// bandwidth `bandwidth` (rad/s): `y(t) = int_0^t w e^{-w (t-s)} |b(s)|^2 ds`.
///
/// An infinite bandwidth returns the bare population.
pub fn coherent_readout_trace<T: Real>(
    mech: &MechanicalCavityMode<T>,
    comb: &WaveguideModeComb<T>,
    initial: &ModeState<T>,
    t_grid: &[T],
    bandwidth: T,
) -> Result<Vec<(T, T)>> {
    if bandwidth.to_f64_lossy().is_nan() || bandwidth <= T::zero() {
        return Err(Error::InvalidParameter("readout bandwidth must be positive".into()));
    }
    check_grid(t_grid)?;
    let modes = CoupledModes::new(mech, comb)?;
    if !bandwidth.finite() {
        return modes.population(initial, t_grid);
    }
    let comps = modes.cavity_components(initial)?;
    let w = bandwidth * T::lit(1e-9);
    let i = c(T::zero(), T::one());
    Ok(t_grid
        .iter()
        .map(|&t| {
            let mut acc = c(T::zero(), T::zero());
            let decay = c((-w * t).exp(), T::zero());
            for &(lj, bj) in &comps {
                for &(lk, bk) in &comps {
                    let z = i * (lj.conj() - lk);
                    let zw = z + c(w, T::zero());
                    // w int_0^t e^{-w(t-s)} e^{z s} ds = w (e^{zt} - e^{-wt}) / (z + w)
                    let conv = if cabs(zw * t) < T::lit(1e-3) {
                        decay * int_exp(zw, T::zero(), t) * w
                    } else {
                        (cexp(z * t) - decay) * w / zw
                    };
                    acc += bj.conj() * bk * conv;
                }
            }
            (t, acc.re)
        })
        .collect())
}

/// Maximum of a sampled trace inside `[lo, hi]`, refined by a parabola
/// through the neighbouring samples.
pub fn peak_in_window<T: Real>(trace: &[(T, T)], lo: T, hi: T) -> Option<(T, T)> {
    let (idx, _) = trace
        .iter()
        .enumerate()
        .filter(|(_, p)| p.0 >= lo && p.0 <= hi)
        .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap_or(std::cmp::Ordering::Equal))?;
    let (t, y) = trace[idx];
    if idx == 0 || idx + 1 >= trace.len() {
        return Some((t, y));
    }
    let (t0, y0) = trace[idx - 1];
    let (t2, y2) = trace[idx + 1];
    let h = (t2 - t0) / T::lit(2.0);
    let denom = y0 - T::lit(2.0) * y + y2;
    if denom >= T::zero() || (t - t0 - h).abs() > h * T::lit(1e-6) {
        return Some((t, y));
    }
    let shift = h * (y0 - y2) / (T::lit(2.0) * denom);
    let peak = y - (y0 - y2) * (y0 - y2) / (T::lit(8.0) * denom);
    Some((t + shift, peak))
}

/// Revival peaks `k = 1..=count` located in windows `[(k - 1/2), (k + 1/2)] / FSR`.
pub fn revival_peaks<T: Real>(trace: &[(T, T)], fsr_hz: T, count: usize) -> Vec<(T, T)> {
    let period = T::lit(1e9) / fsr_hz;
    (1..=count)
        .filter_map(|k| {
            let k = T::lit(k as f64);
            peak_in_window(trace, (k - T::lit(0.5)) * period, (k + T::lit(0.5)) * period)
        })
        .collect()
}

/// Uniform-comb spacing (Hz) that puts the population maximum inside
/// `target_ns +/- half_window` exactly at `target_ns`, found by bisection over
/// `[fsr_lo, fsr_hi]`. Couplings follow `t_c_ns` for every trial spacing.
pub fn fsr_for_revival(
    mech: &MechanicalCavityMode<f64>,
    n_modes: usize,
    t_c_ns: f64,
    linewidth: f64,
    target_ns: f64,
    half_window: f64,
    (mut lo, mut hi): (f64, f64),
) -> Result<f64> {
    if n_modes == 0 || !(hi > lo && lo > 0.0) || !(target_ns > half_window && half_window > 0.0) {
        return Err(Error::InvalidParameter("invalid revival calibration bracket".into()));
    }
    let peak_at = |fsr: f64| -> Result<f64> {
        let g = crate::model::comb_coupling_for_decay(fsr, t_c_ns);
        let comb = WaveguideModeComb::uniform(n_modes, mech.omega_m, fsr, g, linewidth)?;
        let modes = CoupledModes::new(mech, &comb)?;
        let grid: Vec<f64> = (0..=(40.0 * half_window) as usize)
            .map(|i| target_ns - half_window + i as f64 * 0.05)
            .collect();
        let pop = modes.population(&ModeState::cavity_excited(n_modes), &grid)?;
        Ok(peak_in_window(&pop, grid[0], grid[grid.len() - 1]).map_or(target_ns, |p| p.0))
    };
    // the revival moves earlier as the spacing grows
    if peak_at(lo)? < target_ns || peak_at(hi)? > target_ns {
        return Err(Error::InvalidParameter("target revival not bracketed".into()));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if peak_at(mid)? > target_ns {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-3 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CombMode;

    fn mech(gamma: f64) -> MechanicalCavityMode<f64> {
        MechanicalCavityMode::new(2.0 * std::f64::consts::PI * 4.98e9, gamma, 0.0).unwrap()
    }

    #[test]
    fn isolated_lossless_mode_keeps_magnitude() {
        let tr = evolve(&ModeState::cavity_excited(0), &mech(0.0), &WaveguideModeComb::empty(), &[0.0, 10.0, 500.0]).unwrap();
        for s in &tr.states {
            assert!((s.b.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_mode_decays() {
        let g = 1e7;
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 10.0).collect();
        let tr = evolve(&ModeState::cavity_excited(0), &mech(g), &WaveguideModeComb::empty(), &t).unwrap();
        for (t, p) in cavity_population(&tr) {
            assert!((p - (-g * t * 1e-9).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn resonant_pair_rabi() {
        let m = mech(0.0);
        let gamma = 3e7;
        let comb = WaveguideModeComb::new(vec![CombMode { omega: m.omega_m, coupling: gamma, linewidth: 0.0 }]).unwrap();
        let t: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let tr = evolve(&ModeState::cavity_excited(1), &m, &comb, &t).unwrap();
        for (t, p) in cavity_population(&tr) {
            let want = (gamma * t * 1e-9).cos().powi(2);
            assert!((p - want).abs() < 1e-10, "t={t}: {p} vs {want}");
        }
    }

    #[test]
    fn single_mode_g1_closed_form() {
        let g = 2e7;
        let taus: Vec<f64> = (-20..=20).map(|i| i as f64 * 5.0).collect();
        let ct = correlations(&mech(g), &WaveguideModeComb::empty(), &ModeState::cavity_excited(0), &taus, Some(5000.0)).unwrap();
        for (tau, g1) in ct.taus.iter().zip(&ct.g1) {
            let want = (-g * tau.abs() * 1e-9 / 2.0).exp();
            assert!((g1.norm() - want).abs() < 1e-9, "{tau}: {} vs {want}", g1.norm());
        }
    }

    #[test]
    fn tau_beyond_horizon() {
        let r = correlations(&mech(1e6), &WaveguideModeComb::empty(), &ModeState::cavity_excited(0), &[200.0], Some(100.0));
        assert!(matches!(r, Err(Error::TauBeyondHorizon { .. })));
    }

    #[test]
    fn infinite_bandwidth_is_population() {
        let m = mech(1e6);
        let comb = WaveguideModeComb::uniform(5, m.omega_m, 11e6, 3e7, 1e4).unwrap();
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 3.0).collect();
        let a = coherent_readout_trace(&m, &comb, &ModeState::cavity_excited(5), &t, f64::INFINITY).unwrap();
        let b = CoupledModes::new(&m, &comb).unwrap().population(&ModeState::cavity_excited(5), &t).unwrap();
        assert_eq!(a, b);
        let wide = coherent_readout_trace(&m, &comb, &ModeState::cavity_excited(5), &t, 1e13).unwrap();
        for (x, y) in wide.iter().zip(&b).skip(1) {
            assert!((x.1 - y.1).abs() < 1e-3);
        }
    }
}
