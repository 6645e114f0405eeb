//! Small dense Levenberg-Marquardt solver.

use crate::error::{Error, Result};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop once the relative cost decrease falls below this.
    pub ftol: f64,
    /// Stop once the relative step falls below this.
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 500, ftol: 1e-14, xtol: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport<T: Real> {
    pub params: DVector<T>,
    /// Sum of squared residuals at the solution.
    pub cost: T,
    pub n_residuals: usize,
    /// `(J^T J)^-1` at the solution, `None` when singular.
    pub inv_normal: Option<DMatrix<T>>,
    pub iterations: usize,
}

impl<T: Real> LmReport<T> {
    /// Parameter covariance scaled by the reduced chi-square.
    pub fn covariance(&self) -> Option<DMatrix<T>> {
        let dof = self.n_residuals.saturating_sub(self.params.len()).max(1);
        let s2 = self.cost / T::lit(dof as f64);
        self.inv_normal.as_ref().map(|m| m * s2)
    }

    pub fn std_errors(&self) -> Option<DVector<T>> {
        self.covariance()
            .map(|c| DVector::from_iterator(c.nrows(), (0..c.nrows()).map(|i| c[(i, i)].max(T::zero()).sqrt())))
    }
}

/// Minimizes `|r(p)|^2`; `model` returns residuals and their Jacobian.
pub fn minimize<T, F>(mut model: F, p0: DVector<T>, opts: LmOptions) -> Result<LmReport<T>>
where
    T: Real,
    F: FnMut(&DVector<T>) -> (DVector<T>, DMatrix<T>),
{
    let mut p = p0;
    let (mut r, mut j) = model(&p);
    let mut cost = r.norm_squared();
    if !cost.finite() {
        return Err(Error::NonFinite("initial residuals"));
    }
    let mut lambda = T::lit(1e-3);
    let ftol = T::lit(opts.ftol.max(T::default_epsilon().to_f64_lossy() * 4.0));
    let xtol = T::lit(opts.xtol.max(T::default_epsilon().to_f64_lossy() * 4.0));
    let mut iterations = 0;
    let mut converged = cost == T::zero();
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                let d = jtj[(i, i)];
                a[(i, i)] += lambda * if d > T::zero() { d } else { T::one() };
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= T::lit(10.0);
                continue;
            };
            let trial = &p + &step;
            let (rt, jt) = model(&trial);
            let ct = rt.norm_squared();
            if ct.finite() && ct <= cost {
                let rel_f = (cost - ct) / cost.max(T::lit(1e-300_f64.max(f32::MIN_POSITIVE as f64)));
                let rel_x = step.norm() / (p.norm() + xtol);
                p = trial;
                r = rt;
                j = jt;
                cost = ct;
                lambda = (lambda / T::lit(3.0)).max(T::lit(1e-12));
                accepted = true;
                if rel_f < ftol || rel_x < xtol || cost == T::zero() {
                    converged = true;
                }
                break;
            }
            lambda *= T::lit(4.0);
            if lambda > T::lit(1e16) {
                break;
            }
        }
        if !accepted {
            // no downhill step at any damping: a stationary point to working precision
            converged = true;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations, residual: cost.to_f64_lossy() });
    }
    let jtj = j.transpose() * &j;
    let inv_normal = jtj.try_inverse();
    Ok(LmReport { params: p, cost, n_residuals: r.len(), inv_normal, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_exactly() {
        let ts: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 3.0 * (-t / 1.7f64).exp()).collect();
        let model = |p: &DVector<f64>| {
            let n = ts.len();
            let mut r = DVector::zeros(n);
            let mut j = DMatrix::zeros(n, 2);
            for i in 0..n {
                let e = (-ts[i] / p[1]).exp();
                r[i] = p[0] * e - ys[i];
                j[(i, 0)] = e;
                j[(i, 1)] = p[0] * e * ts[i] / (p[1] * p[1]);
            }
            (r, j)
        };
        let rep = minimize(model, DVector::from_vec(vec![1.0, 1.0]), LmOptions::default()).unwrap();
        assert!((rep.params[0] - 3.0).abs() < 1e-9);
        assert!((rep.params[1] - 1.7).abs() < 1e-9);
    }
}
