//! Calibration fits: linear heating and double-exponential thermal traces.

use crate::error::{Error, Result};
use crate::lm::{self, LmOptions};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

/// Value with its 1-standard-deviation error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Estimate<T> {
    pub value: T,
    pub err: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatingSample<T> {
    pub p_s: T,
    pub n_th: T,
    pub sigma: T,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LinearFit<T> {
    pub intercept: Estimate<T>,
    pub slope: Estimate<T>,
    pub chi2: T,
}

/// Weighted least-squares line through `(p_s, n_th)` with weights `1/sigma^2`.
///
/// Parameter errors come from the covariance `(X^T W X)^-1`, i.e. they take
/// the supplied sigmas as absolute.
pub fn fit_linear_heating<T: Real>(samples: &[HeatingSample<T>]) -> Result<LinearFit<T>> {
    if samples.len() < 2 {
        return Err(Error::DegenerateDesign(format!("need at least 2 samples, got {}", samples.len())));
    }
    let mut normal = Matrix2::<T>::zeros();
    let mut rhs = Vector2::<T>::zeros();
    for s in samples {
        if !(s.sigma.finite() && s.sigma > T::zero()) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        if !(s.p_s.finite() && s.n_th.finite()) {
            return Err(Error::NonFinite("heating sample"));
        }
        let w = T::one() / (s.sigma * s.sigma);
        normal[(0, 0)] += w;
        normal[(0, 1)] += w * s.p_s;
        normal[(1, 1)] += w * s.p_s * s.p_s;
        rhs[0] += w * s.n_th;
        rhs[1] += w * s.n_th * s.p_s;
    }
    normal[(1, 0)] = normal[(0, 1)];
    let first = samples[0].p_s;
    if samples.iter().all(|s| s.p_s == first) {
        return Err(Error::DegenerateDesign("all p_s values are equal".into()));
    }
    let cov = normal
        .try_inverse()
        .ok_or_else(|| Error::DegenerateDesign("singular normal matrix".into()))?;
    let beta = cov * rhs;
    let chi2 = samples.iter().fold(T::zero(), |acc, s| {
        let r = (s.n_th - beta[0] - beta[1] * s.p_s) / s.sigma;
        acc + r * r
    });
    Ok(LinearFit {
        intercept: Estimate { value: beta[0], err: cov[(0, 0)].sqrt() },
        slope: Estimate { value: beta[1], err: cov[(1, 1)].sqrt() },
        chi2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DoubleExpFit<T> {
    pub amplitude: Estimate<T>,
    /// Rise time, same unit as the input times; `err` is NaN when unresolved.
    pub t_rise: Estimate<T>,
    /// Decay time, same unit as the input times.
    pub t_1: Estimate<T>,
    pub residual: T,
}

/// `A (1 - exp(-t/T_rise)) exp(-t/T_1)`.
pub fn double_exponential<T: Real>(t: T, amplitude: T, t_rise: T, t_1: T) -> T {
    amplitude * (T::one() - (-t / t_rise).exp()) * (-t / t_1).exp()
}

fn solve_rise_from_peak<T: Real>(t_peak: T, t_1: T) -> T {
    // peak of the model: t_peak = T_r ln(1 + T_1/T_r), increasing in T_r towards T_1
    if t_peak >= t_1 * T::lit(0.999) {
        return t_1 * T::lit(0.5);
    }
    let f = |tr: T| tr * (T::one() + t_1 / tr).ln() - t_peak;
    let mut lo = t_peak * T::lit(1e-9);
    let mut hi = t_1 * T::lit(1e6);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if f(mid) > T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo * hi).sqrt()
}

/// Least-squares fit of [`double_exponential`] to `(t, rate)` samples.
///
/// Parameters are fitted in log space so all three stay positive. The rise
/// time starts below the decay time (peak-time initialization).
pub fn fit_double_exponential<T: Real>(trace: &[(T, T)]) -> Result<DoubleExpFit<T>> {
    if trace.len() < 4 {
        return Err(Error::DegenerateDesign("double-exponential fit needs at least 4 samples".into()));
    }
    for w in trace.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::InvalidParameter("trace times must be strictly increasing".into()));
        }
    }
    if trace.iter().any(|&(t, y)| !(t.finite() && y.finite()) || t < T::zero()) {
        return Err(Error::NonFinite("trace"));
    }
    let (i_peak, &(t_peak, y_peak)) = trace
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap_or(std::cmp::Ordering::Equal))
        .expect("non-empty");
    if y_peak <= T::zero() {
        return Err(Error::DegenerateDesign("trace has no positive samples".into()));
    }

    // tail slope from a log-linear fit past the peak
    let tail: Vec<(T, T)> = trace[i_peak..]
        .iter()
        .filter(|&&(_, y)| y > y_peak * T::lit(0.02))
        .map(|&(t, y)| (t, y.ln()))
        .collect();
    let t_span = trace[trace.len() - 1].0 - trace[0].0;
    let t_1_0 = if tail.len() >= 2 {
        let n = T::lit(tail.len() as f64);
        let mt = tail.iter().fold(T::zero(), |a, p| a + p.0) / n;
        let my = tail.iter().fold(T::zero(), |a, p| a + p.1) / n;
        let sxy = tail.iter().fold(T::zero(), |a, p| a + (p.0 - mt) * (p.1 - my));
        let sxx = tail.iter().fold(T::zero(), |a, p| a + (p.0 - mt) * (p.0 - mt));
        let slope = sxy / sxx;
        if slope < T::zero() {
            -T::one() / slope
        } else {
            t_span
        }
    } else {
        t_span
    };
    let dt_min = trace
        .windows(2)
        .map(|w| w[1].0 - w[0].0)
        .fold(t_span, |a, b| a.min(b));
    let t_rise_0 = if i_peak == 0 {
        dt_min * T::lit(0.1)
    } else {
        solve_rise_from_peak(t_peak, t_1_0).min(t_1_0 * T::lit(0.5))
    };
    let shape_peak = double_exponential(t_peak.max(dt_min), T::one(), t_rise_0, t_1_0);
    let a_0 = y_peak / shape_peak.max(T::lit(1e-6));
    let log_floor = (dt_min * T::lit(1e-4)).ln();

    let n = trace.len();
    let model = |p: &DVector<T>| {
        let a = p[0].exp();
        let lr = p[1].max(log_floor);
        let tr = lr.exp();
        let t1 = p[2].exp();
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, 3);
        for (i, &(t, y)) in trace.iter().enumerate() {
            let er = (-t / tr).exp();
            let e1 = (-t / t1).exp();
            let f = a * (T::one() - er) * e1;
            r[i] = f - y;
            j[(i, 0)] = f;
            j[(i, 1)] = if p[1] > log_floor { -a * er * e1 * t / tr } else { T::zero() };
            j[(i, 2)] = f * t / t1;
        }
        (r, j)
    };
    let p0 = DVector::from_vec(vec![a_0.ln(), t_rise_0.ln(), t_1_0.ln()]);
    let rep = lm::minimize(model, p0, LmOptions::default())?;
    let pinned = rep.params[1] <= log_floor;
    let errs = match rep.std_errors() {
        Some(e) if !pinned => e,
        _ => {
            // rise unresolved: errors of (A, T1) from the reduced Jacobian
            let (r, j) = model(&rep.params);
            let jr = DMatrix::from_columns(&[j.column(0).into_owned(), j.column(2).into_owned()]);
            let s2 = r.norm_squared() / T::lit(n.saturating_sub(2).max(1) as f64);
            let nan = T::lit(f64::NAN);
            match (jr.transpose() * &jr).try_inverse() {
                Some(c) => DVector::from_vec(vec![(c[(0, 0)] * s2).sqrt(), nan, (c[(1, 1)] * s2).sqrt()]),
                None => DVector::from_element(3, nan),
            }
        }
    };
    let a = rep.params[0].exp();
    let tr = rep.params[1].max(log_floor).exp();
    let t1 = rep.params[2].exp();
    if !(a.finite() && tr.finite() && t1.finite()) {
        return Err(Error::NoConvergence { iterations: rep.iterations, residual: rep.cost.to_f64_lossy() });
    }
    let (err_r, err_1) = (errs[1], errs[2]);
    Ok(DoubleExpFit {
        amplitude: Estimate { value: a, err: a * errs[0] },
        t_rise: Estimate { value: tr, err: tr * err_r },
        t_1: Estimate { value: t1, err: t1 * err_1 },
        residual: rep.cost,
    })
}
