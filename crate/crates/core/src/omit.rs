//! OMIT forward model and mode-comb extraction.

use crate::error::{Error, Result};
use crate::lm::{self, LmOptions};
use crate::model::{CombMode, DeviceModel, MechanicalCavityMode, OpticalCavityParams, WaveguideModeComb};
use crate::scalar::{cabs, Complex, Real};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmitDriveParams<T: Real> {
    /// Cavity minus control-laser frequency (rad/s).
    pub detuning: T,
    /// Linearized coupling `g = g0 alpha` (rad/s).
    pub g: T,
    pub e0: T,
    pub e1: T,
}

impl<T: Real> OmitDriveParams<T> {
    pub fn new(detuning: T, g: T, e0: T, e1: T) -> Result<Self> {
        if !(g.finite() && e0.finite() && e1.finite() && detuning.finite()) {
            return Err(Error::NonFinite("drive parameters"));
        }
        if g < T::zero() || e0 < T::zero() || e1 < T::zero() {
            return Err(Error::InvalidParameter("g, E0 and E1 must be non-negative".into()));
        }
        Ok(Self { detuning, g, e0, e1 })
    }

    /// Intracavity photon number implied by `g` for a given `g0`.
    pub fn alpha(&self, g0: T) -> T {
        self.g / g0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    S21Magnitude,
    Reflection,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumValues<T: Real> {
    Real(Vec<T>),
    Complex(Vec<Complex<T>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T: Real> {
    /// Angular frequencies (rad/s), strictly increasing.
    pub freqs: Vec<T>,
    pub values: SpectrumValues<T>,
    pub kind: SpectrumKind,
}

impl<T: Real> Spectrum<T> {
    pub fn new(freqs: Vec<T>, values: SpectrumValues<T>, kind: SpectrumKind) -> Result<Self> {
        let n = match &values {
            SpectrumValues::Real(v) => v.len(),
            SpectrumValues::Complex(v) => v.len(),
        };
        if n != freqs.len() {
            return Err(Error::InvalidParameter("frequency and value lengths differ".into()));
        }
        if freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("spectrum frequencies must be strictly increasing".into()));
        }
        Ok(Self { freqs, values, kind })
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Real values, or moduli of complex values.
    pub fn magnitudes(&self) -> Vec<T> {
        match &self.values {
            SpectrumValues::Real(v) => v.clone(),
            SpectrumValues::Complex(v) => v.iter().map(|z| cabs(*z)).collect(),
        }
    }
}

fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

/// Denominator of the susceptibility at complex frequency `z` (rad/s):
/// `z - omega_m + i Gamma_m/2 - sum_l gamma_l^2 / (z - omega_l + i Gamma_l/2)`.
///
/// Its zeros are the eigenvalues of the mechanical coupled-mode generator.
pub fn susceptibility_denominator<T: Real>(
    z: Complex<T>,
    mech: &MechanicalCavityMode<T>,
    comb: &WaveguideModeComb<T>,
) -> Result<Complex<T>> {
    let half = T::lit(0.5);
    let mut d = z - c(mech.omega_m, -half * mech.gamma_m);
    for m in comb.modes() {
        let den = z - c(m.omega, -half * m.linewidth);
        if den == c(T::zero(), T::zero()) {
            return Err(Error::SingularEvaluation(z.re.to_f64_lossy()));
        }
        d -= c(m.coupling * m.coupling, T::zero()) / den;
    }
    Ok(d)
}

/// Mechanical susceptibility `chi(omega) = g^2 / D(omega)`.
pub fn susceptibility<T: Real>(
    omega: T,
    mech: &MechanicalCavityMode<T>,
    comb: &WaveguideModeComb<T>,
    drive: &OmitDriveParams<T>,
) -> Result<Complex<T>> {
    let z = c(omega, T::zero());
    let d = susceptibility_denominator(z, mech, comb)?;
    if drive.g == T::zero() {
        return Ok(c(T::zero(), T::zero()));
    }
    if d == c(T::zero(), T::zero()) {
        return Err(Error::SingularEvaluation(omega.to_f64_lossy()));
    }
    Ok(c(drive.g * drive.g, T::zero()) / d)
}

/// Probe-sideband reflection `r+ = 1 - i kappa_e / (omega - Delta + i kappa_t/2 - chi)`.
pub fn reflection_coefficient<T: Real>(
    omega: T,
    optics: &OpticalCavityParams<T>,
    mech: &MechanicalCavityMode<T>,
    comb: &WaveguideModeComb<T>,
    drive: &OmitDriveParams<T>,
) -> Result<Complex<T>> {
    let chi = susceptibility(omega, mech, comb, drive)?;
    let den = c(omega - drive.detuning, optics.kappa_t() * T::lit(0.5)) - chi;
    Ok(c(T::one(), T::zero()) - c(T::zero(), optics.kappa_e) / den)
}

/// Photodiode power components of the reflected field: the DC level
/// `|E0|^2 + |E1|^2 + |r+ E1|^2`, and the complex amplitudes multiplying
/// `e^{-i omega t}` and `e^{-2 i omega t}` (their conjugates complete the signal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotodiodeSignal<T: Real> {
    pub dc: T,
    pub first_harmonic: Complex<T>,
    pub second_harmonic: Complex<T>,
}

pub fn photodiode_signal<T: Real>(
    omega: T,
    optics: &OpticalCavityParams<T>,
    mech: &MechanicalCavityMode<T>,
    comb: &WaveguideModeComb<T>,
    drive: &OmitDriveParams<T>,
) -> Result<PhotodiodeSignal<T>> {
    let r = reflection_coefficient(omega, optics, mech, comb, drive)?;
    let (e0, e1) = (drive.e0, drive.e1);
    let one = c(T::one(), T::zero());
    Ok(PhotodiodeSignal {
        dc: e0 * e0 + e1 * e1 + (r * e1).norm_sqr(),
        first_harmonic: (one + r) * (e0 * e1),
        second_harmonic: r * (e1 * e1),
    })
}

/// `|S21| = (1 + Re r+) / 2`.
pub fn s21_magnitude<T: Real>(r: Complex<T>) -> T {
    (T::one() + r.re) * T::lit(0.5)
}

/// Uniform grid of `n_points` over `[lo, hi]` (rad/s).
pub fn uniform_grid<T: Real>(lo: T, hi: T, n_points: usize) -> Result<Vec<T>> {
    if n_points < 2 {
        return Err(Error::InvalidParameter("n_points must be at least 2".into()));
    }
    if !(lo.finite() && hi.finite()) || hi <= lo {
        return Err(Error::InvalidParameter("frequency range must be increasing".into()));
    }
    let step = (hi - lo) / T::lit((n_points - 1) as f64);
    Ok((0..n_points).map(|i| lo + step * T::lit(i as f64)).collect())
}

/// `|S21|` sampled uniformly over `range` (rad/s).
pub fn s21_spectrum<T: Real>(
    range: (T, T),
    n_points: usize,
    device: &DeviceModel<T>,
    drive: &OmitDriveParams<T>,
) -> Result<Spectrum<T>> {
    let freqs = uniform_grid(range.0, range.1, n_points)?;
    let values = freqs
        .iter()
        .map(|&w| reflection_coefficient(w, &device.optics, &device.mech, &device.comb, drive).map(s21_magnitude))
        .collect::<Result<Vec<T>>>()?;
    Spectrum::new(freqs, SpectrumValues::Real(values), SpectrumKind::S21Magnitude)
}

/// Complex reflection spectrum over `range` (rad/s).
pub fn reflection_spectrum<T: Real>(
    range: (T, T),
    n_points: usize,
    device: &DeviceModel<T>,
    drive: &OmitDriveParams<T>,
) -> Result<Spectrum<T>> {
    let freqs = uniform_grid(range.0, range.1, n_points)?;
    let values = freqs
        .iter()
        .map(|&w| reflection_coefficient(w, &device.optics, &device.mech, &device.comb, drive))
        .collect::<Result<Vec<_>>>()?;
    Spectrum::new(freqs, SpectrumValues::Complex(values), SpectrumKind::Reflection)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionConfig<T: Real> {
    /// Minimum peak prominence as a fraction of the spectrum's full scale.
    pub min_prominence: T,
    /// Intrinsic linewidth assigned to every extracted comb mode (rad/s).
    pub linewidth_floor: T,
    /// Intrinsic cavity-mode damping `Gamma_m` (rad/s).
    pub gamma_m: T,
    /// Optomechanical drive of the measurement, `(g, kappa_t, detuning)` in rad/s.
    pub g: T,
    pub kappa_t: T,
    pub detuning: T,
}

impl<T: Real> ExtractionConfig<T> {
    pub fn for_device(device: &DeviceModel<T>, drive: &OmitDriveParams<T>) -> Self {
        Self {
            min_prominence: T::lit(0.05),
            linewidth_floor: T::lit(std::f64::consts::TAU * 10e3),
            gamma_m: device.mech.gamma_m,
            g: drive.g,
            kappa_t: device.optics.kappa_t(),
            detuning: drive.detuning,
        }
    }

    /// Optical damping of the cavity mode at frequency `w`.
    fn optical_damping(&self, w: T) -> T {
        let d = w - self.detuning;
        let h = self.kappa_t * T::lit(0.5);
        self.g * self.g * self.kappa_t / (d * d + h * h)
    }
}

/// Local fit of one transparency peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakFit<T: Real> {
    /// Center (rad/s).
    pub center: T,
    /// FWHM (rad/s).
    pub fwhm: T,
    pub height: T,
    pub prominence: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedComb<T: Real> {
    pub comb: WaveguideModeComb<T>,
    /// Estimated bare cavity-mode frequency (rad/s).
    pub omega_m: T,
    /// Cavity weight of each normal mode, summing to one.
    pub weights: Vec<T>,
    pub peaks: Vec<PeakFit<T>>,
    pub warnings: Vec<String>,
}

/// Indices and prominences of local maxima.
pub fn find_peaks<T: Real>(y: &[T], min_prominence: T) -> Vec<(usize, T)> {
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            // plateau handling: take the middle of equal runs
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                let peak = (i + j) / 2;
                let h = y[peak];
                let mut left_min = h;
                let mut k = i;
                while k > 0 {
                    k -= 1;
                    if y[k] > h {
                        break;
                    }
                    left_min = left_min.min(y[k]);
                }
                let mut right_min = h;
                let mut k = j;
                while k + 1 < n {
                    k += 1;
                    if y[k] > h {
                        break;
                    }
                    right_min = right_min.min(y[k]);
                }
                let prom = h - left_min.max(right_min);
                if prom >= min_prominence {
                    out.push((peak, prom));
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Fits `A + B L(u) + C D(u)` with Lorentzian `L` and dispersive `D` around a peak.
fn fit_peak<T: Real>(x: &[T], y: &[T], guess_center: T, guess_fwhm: T) -> Result<(T, T, T)> {
    // work in units of the guessed width around the guessed center
    let scale = guess_fwhm;
    let u: Vec<T> = x.iter().map(|&v| (v - guess_center) / scale).collect();
    let n = u.len();
    let model = |p: &DVector<T>| {
        let (a, b, cc, u0, lw) = (p[0], p[1], p[2], p[3], p[4].exp());
        let h = lw * T::lit(0.5);
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, 5);
        for i in 0..n {
            let d = u[i] - u0;
            let den = d * d + h * h;
            let l = h * h / den;
            let dd = d * h / den;
            r[i] = a + b * l + cc * dd - y[i];
            j[(i, 0)] = T::one();
            j[(i, 1)] = l;
            j[(i, 2)] = dd;
            // derivatives with respect to u0 and log-width
            let dl_dd = -T::lit(2.0) * d * h * h / (den * den);
            let ddd_dd = h * (h * h - d * d) / (den * den);
            j[(i, 3)] = -(b * dl_dd + cc * ddd_dd);
            let dl_dh = T::lit(2.0) * h * d * d / (den * den);
            let ddd_dh = d * (d * d - h * h) / (den * den);
            j[(i, 4)] = (b * dl_dh + cc * ddd_dh) * h;
        }
        (r, j)
    };
    let base = y.iter().fold(y[0], |a, &b| a.min(b));
    let top = y.iter().fold(y[0], |a, &b| a.max(b));
    let p0 = DVector::from_vec(vec![base, top - base, T::zero(), T::zero(), T::zero()]);
    let rep = lm::minimize(model, p0, LmOptions { max_iter: 300, ..LmOptions::default() })?;
    let center = guess_center + rep.params[3] * scale;
    let fwhm = rep.params[4].exp() * scale;
    let height = rep.params[0] + rep.params[1];
    if !(center.finite() && fwhm.finite()) {
        return Err(Error::NoConvergence { iterations: rep.iterations, residual: rep.cost.to_f64_lossy() });
    }
    Ok((center, fwhm, height))
}

/// Half-prominence width estimate around a peak index.
fn half_width_guess<T: Real>(x: &[T], y: &[T], idx: usize, prom: T) -> T {
    let level = y[idx] - prom * T::lit(0.5);
    let mut l = idx;
    while l > 0 && y[l] > level {
        l -= 1;
    }
    let mut r = idx;
    while r + 1 < y.len() && y[r] > level {
        r += 1;
    }
    let dx = x[1] - x[0];
    (x[r] - x[l]).max(dx * T::lit(2.0))
}

/// Detects transparency peaks, fits each, and inverts the normal-mode
/// structure to a comb.
///
/// The peaks are the normal modes of the cavity mode hybridized with the comb,
/// so `N + 1` peaks yield `N` comb modes. Each peak's excess width over the
/// intrinsic floor measures its cavity weight `R_k`; the comb frequencies are
/// then the zeros of `sum_k R_k / (z - lambda_k)` between adjacent peaks, the
/// couplings follow from its slope there, and `omega_m = sum_k R_k lambda_k`.
pub fn extract_mode_comb<T: Real>(spectrum: &Spectrum<T>, config: &ExtractionConfig<T>) -> Result<ExtractedComb<T>> {
    if spectrum.kind != SpectrumKind::S21Magnitude {
        return Err(Error::InvalidParameter("comb extraction needs an |S21| spectrum".into()));
    }
    if spectrum.len() < 5 {
        return Err(Error::NoPeaks);
    }
    let x = &spectrum.freqs;
    let y = spectrum.magnitudes();
    let lo = y.iter().fold(y[0], |a, &b| a.min(b));
    let hi = y.iter().fold(y[0], |a, &b| a.max(b));
    let full = hi - lo;
    if !(full > T::zero()) {
        return Err(Error::NoPeaks);
    }
    let detected = find_peaks(&y, config.min_prominence * full);
    if detected.is_empty() {
        return Err(Error::NoPeaks);
    }
    let mut warnings = Vec::new();
    let mut peaks = Vec::with_capacity(detected.len());
    for (k, &(idx, prom)) in detected.iter().enumerate() {
        let width = half_width_guess(x, &y, idx, prom);
        // fit window bounded by the neighbouring peaks
        let left_bound = if k > 0 { (x[detected[k - 1].0] + x[idx]) * T::lit(0.5) } else { x[0] };
        let right_bound = if k + 1 < detected.len() {
            (x[detected[k + 1].0] + x[idx]) * T::lit(0.5)
        } else {
            x[x.len() - 1]
        };
        let lo_w = (x[idx] - width * T::lit(4.0)).max(left_bound);
        let hi_w = (x[idx] + width * T::lit(4.0)).min(right_bound);
        let sel: Vec<usize> = (0..x.len()).filter(|&i| x[i] >= lo_w && x[i] <= hi_w).collect();
        let (center, fwhm, height) = if sel.len() >= 7 {
            let xs: Vec<T> = sel.iter().map(|&i| x[i]).collect();
            let ys: Vec<T> = sel.iter().map(|&i| y[i]).collect();
            match fit_peak(&xs, &ys, x[idx], width) {
                Ok(v) if v.1 > T::zero() && v.0 >= xs[0] && v.0 <= xs[xs.len() - 1] => v,
                _ => {
                    warnings.push(format!("peak {k}: Lorentzian fit failed, using half-prominence width"));
                    (x[idx], width, y[idx])
                }
            }
        } else {
            warnings.push(format!("peak {k}: under-resolved, using half-prominence width"));
            (x[idx], width, y[idx])
        };
        peaks.push(PeakFit { center, fwhm, height, prominence: prom });
    }
    for k in 1..peaks.len() {
        let gap = peaks[k].center - peaks[k - 1].center;
        if (peaks[k].fwhm + peaks[k - 1].fwhm) > gap {
            let msg = format!(
                "peaks {} and {} overlap (gap {:.4e} rad/s); estimates are merged",
                k - 1,
                k,
                gap.to_f64_lossy()
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    let floor = config.linewidth_floor;
    let raw: Vec<T> = peaks
        .iter()
        .map(|p| {
            let cavity_width = config.gamma_m + config.optical_damping(p.center) - floor;
            let r = (p.fwhm - floor) / cavity_width;
            r.max(T::lit(1e-9))
        })
        .collect();
    let total = raw.iter().fold(T::zero(), |a, &b| a + b);
    let weights: Vec<T> = raw.iter().map(|&r| r / total).collect();
    let lambdas: Vec<T> = peaks.iter().map(|p| p.center).collect();
    let omega_m = lambdas.iter().zip(&weights).fold(T::zero(), |a, (&l, &w)| a + l * w);

    let green = |z: T| lambdas.iter().zip(&weights).fold(T::zero(), |a, (&l, &w)| a + w / (z - l));
    let mut modes = Vec::with_capacity(peaks.len().saturating_sub(1));
    for k in 1..lambdas.len() {
        // G decreases from +inf to -inf between consecutive poles
        let (mut a, mut b) = (lambdas[k - 1], lambdas[k]);
        let span = b - a;
        a += span * T::lit(1e-12);
        b -= span * T::lit(1e-12);
        for _ in 0..200 {
            let mid = (a + b) * T::lit(0.5);
            if green(mid) > T::zero() {
                a = mid;
            } else {
                b = mid;
            }
            if b - a <= span * T::default_epsilon() {
                break;
            }
        }
        let w = (a + b) * T::lit(0.5);
        let slope = lambdas
            .iter()
            .zip(&weights)
            .fold(T::zero(), |acc, (&l, &r)| acc + r / ((w - l) * (w - l)));
        modes.push(CombMode { omega: w, coupling: (T::one() / slope).sqrt(), linewidth: floor });
    }
    let comb = WaveguideModeComb::new(modes)?;
    Ok(ExtractedComb { comb, omega_m, weights, peaks, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn drive(g: f64) -> OmitDriveParams<f64> {
        OmitDriveParams::new(presets::mech::<f64>().omega_m, g, 1.0, 0.1).unwrap()
    }

    #[test]
    fn zero_coupling_gives_zero_chi() {
        let m = presets::mech::<f64>();
        let chi = susceptibility(m.omega_m + 1e6, &m, &presets::comb(), &drive(0.0)).unwrap();
        assert_eq!(chi, c(0.0, 0.0));
    }

    #[test]
    fn on_resonance_single_mode_is_imaginary() {
        let m = presets::mech::<f64>();
        let g = 1e6;
        let chi = susceptibility(m.omega_m, &m, &WaveguideModeComb::empty(), &drive(g)).unwrap();
        let want = c(0.0, -2.0 * g * g / m.gamma_m);
        assert!((chi - want).norm() / want.norm() < 1e-12);
    }

    #[test]
    fn singular_on_lossless_pole() {
        let m = MechanicalCavityMode::new(1e10, 0.0, 1.0).unwrap();
        let r = susceptibility(1e10, &m, &WaveguideModeComb::empty(), &drive(1e6));
        assert!(matches!(r, Err(Error::SingularEvaluation(_))));
    }

    #[test]
    fn bare_cavity_reflection_limits() {
        let optics = OpticalCavityParams::new(1e15, 1e9, 1e-30).unwrap();
        let m = presets::mech::<f64>();
        let d = OmitDriveParams::new(2e9, 0.0, 1.0, 1.0).unwrap();
        let r = reflection_coefficient(2e9, &optics, &m, &WaveguideModeComb::empty(), &d).unwrap();
        assert!((r - c(-1.0, 0.0)).norm() < 1e-12);
        let far = reflection_coefficient(2e9 + 1e15, &optics, &m, &WaveguideModeComb::empty(), &d).unwrap();
        assert!((far - c(1.0, 0.0)).norm() < 1e-5);
    }

    #[test]
    fn peak_finder_prominence() {
        let y = [0.0, 1.0, 0.0, 0.2, 0.1, 3.0, 0.0];
        let p = find_peaks(&y, 0.5);
        assert_eq!(p.iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 5]);
        assert!(find_peaks(&[1.0; 10], 0.0).is_empty());
    }
}
