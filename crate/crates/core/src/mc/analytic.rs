//! Exact expectation of the write/read cross-correlation.
//!
//! For detector pair `(d, d')` the probability of no click in either window
//! factorizes over independent sources: each Stokes pair contributes a factor
//! `G = E[(1 - a(t_i))(1 - b(t_i))]` where `a`, `b` are the chances that its
//! Stokes and anti-Stokes photons click `d` and `d'` inside the windows. With
//! `k | m ~ NegBin(m + 1, lambda)`, `m ~ BE(n_write)` and heated quanta
//! `h ~ BE(n_heated)`, the expectation over `(m, k, h)` is enumerated up to a
//! cutoff with an explicit tail bound.

use super::pulsed::PulsedModel;
use super::pair_ratio;
use crate::error::{Error, Result};
use crate::model::HeatingModel;
use serde::{Deserialize, Serialize};

pub const TAIL_BOUND: f64 = 1e-10;
pub const DEFAULT_CUTOFF: u32 = 12;
const MAX_CUTOFF: u32 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cutoff {
    /// Start at 12 quanta and double until the tail is below the bound.
    Adaptive,
    /// Error if the tail exceeds the bound.
    Fixed(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticG2 {
    pub g2: f64,
    /// Expected clicks per trial in the write window(s).
    pub write_clicks: f64,
    pub read_clicks: f64,
    /// Expected same-trial write/read click pairs per trial.
    pub coincidences: f64,
    pub cutoff: u32,
    pub tail: f64,
}

/// Per-detector, per-source click chances for one window pair.
#[derive(Debug, Clone, Copy)]
struct Factors {
    n_write: f64,
    n_heated: f64,
    lambda: f64,
    /// Per-pair no-click factor.
    pair: f64,
    /// Click chance of one surviving seed quantum.
    seed: f64,
    /// Click chance of one heated quantum.
    heated: f64,
    dark: f64,
}

/// `E[(1 - seed)^m pair^k] E[(1 - heated)^h] exp(-dark)` and its tail mass.
fn no_click(f: &Factors, cutoff: u32) -> (f64, f64) {
    let qm = f.n_write / (1.0 + f.n_write);
    let qh = f.n_heated / (1.0 + f.n_heated);
    let mut total = 0.0;
    let mut mass = 0.0;
    let mut pm = 1.0 - qm;
    let mut seed_pow = 1.0;
    for m in 0..=cutoff {
        let mut pk = (1.0 - f.lambda).powi(m as i32 + 1);
        let mut pair_pow = 1.0;
        for k in 0..=cutoff {
            total += pm * pk * seed_pow * pair_pow;
            mass += pm * pk;
            pk *= f.lambda * (k + m + 1) as f64 / (k + 1) as f64;
            pair_pow *= f.pair;
        }
        pm *= qm;
        seed_pow *= 1.0 - f.seed;
    }
    let mut heat = 0.0;
    let mut ph = 1.0 - qh;
    let mut heat_pow = 1.0;
    for _ in 0..=cutoff {
        heat += ph * heat_pow;
        ph *= qh;
        heat_pow *= 1.0 - f.heated;
    }
    let tail = (1.0 - mass).max(0.0) + qh.powi(cutoff as i32 + 1);
    (total * heat * (-f.dark).exp(), tail)
}

fn evaluate(all: &[Factors], cutoff: Cutoff) -> Result<(Vec<f64>, u32, f64)> {
    let mut n = match cutoff {
        Cutoff::Adaptive => DEFAULT_CUTOFF,
        Cutoff::Fixed(n) => n,
    };
    loop {
        let mut tail = 0.0f64;
        let vals = all
            .iter()
            .map(|f| {
                let (v, t) = no_click(f, n);
                tail = tail.max(t);
                v
            })
            .collect();
        if tail < TAIL_BOUND {
            return Ok((vals, n, tail));
        }
        match cutoff {
            Cutoff::Adaptive if n < MAX_CUTOFF => n *= 2,
            _ => return Err(Error::CutoffTail { tail, bound: TAIL_BOUND, cutoff: n as usize }),
        }
    }
}

/// Assembles the click moments of one window pair from its three no-click
/// probabilities.
fn moments(n_det: f64, p_w: f64, p_r: f64, p_wr: f64) -> (f64, f64, f64) {
    let cw = n_det * (1.0 - p_w);
    let cr = n_det * (1.0 - p_r);
    let cwr = n_det * n_det * (1.0 - p_w - p_r + p_wr);
    (cw, cr, cwr)
}

/// Whole-pulse cross-correlation of a single write/read pair with the phonon
/// fully in the cavity at the read. `n_th` is the write occupancy; the read
/// occupancy is `max(n_th, heating.preceded(p_write))`.
pub fn g2om_analytic(
    p_write: f64,
    p_read: f64,
    n_th: f64,
    heating: &HeatingModel<f64>,
    eta_det: f64,
    n_detectors: u8,
    cutoff: Cutoff,
) -> Result<AnalyticG2> {
    let valid = |p: f64| (0.0..1.0).contains(&p);
    if !(valid(p_write) && (0.0..=1.0).contains(&p_read) && (0.0..=1.0).contains(&eta_det)) || !(n_th >= 0.0) {
        return Err(Error::InvalidParameter("probabilities must lie in [0, 1], n_th >= 0".into()));
    }
    if n_detectors == 0 {
        return Err(Error::InvalidParameter("need at least one detector".into()));
    }
    let n = n_detectors as f64;
    let e = eta_det / n;
    let n_heated = (heating.preceded(p_write) - n_th).max(0.0);
    let base = Factors {
        n_write: n_th,
        n_heated,
        lambda: pair_ratio(p_write),
        pair: 1.0,
        seed: 0.0,
        heated: 0.0,
        dark: 0.0,
    };
    let a = e;
    let b = e * p_read;
    let write = Factors { pair: 1.0 - a, ..base };
    let read = Factors { pair: 1.0 - b, seed: b, heated: b, ..base };
    let joint = Factors { pair: (1.0 - a) * (1.0 - b), seed: b, heated: b, ..base };
    let (v, cutoff, tail) = evaluate(&[write, read, joint], cutoff)?;
    let (cw, cr, cwr) = moments(n, v[0], v[1], v[2]);
    Ok(AnalyticG2 { g2: cwr / (cw * cr), write_clicks: cw, read_clicks: cr, coincidences: cwr, cutoff, tail })
}

/// Windowed oracle for a single-scheme [`PulsedModel`]: windows of `width`
/// (ns) starting at `(write_lo, read_lo)` for each tile; returns
/// `sum E[C_w C_r] / sum E[C_w] E[C_r]`.
pub fn g2om_windowed(model: &PulsedModel, tiles: &[(f64, f64)], width: f64, cutoff: Cutoff) -> Result<AnalyticG2> {
    if model.write_pulses().len() != 1 || model.read_pulses().len() != 1 {
        return Err(Error::InvalidScheme("windowed oracle needs a single write/read pair".into()));
    }
    if !model.correlated {
        return Err(Error::InvalidScheme("windowed oracle models the correlated source".into()));
    }
    let (wenv, p_w) = model.write_pulses()[0];
    let (renv, p_r) = model.read_pulses()[0];
    let det = &model.detectors;
    let n = det.n_detectors as f64;
    let e = det.eta / n;
    let dark = det.dark_per_trial * width * 1e3 / det.period_ps as f64 / n;
    let base = Factors {
        n_write: model.thermal.n_write,
        n_heated: model.n_heated,
        lambda: pair_ratio(p_w),
        pair: 1.0,
        seed: 0.0,
        heated: 0.0,
        dark,
    };
    let step = 0.1;
    let born: Vec<f64> = {
        let k = ((wenv.hi() - wenv.lo()) / step).ceil() as usize;
        (0..=k).map(|i| wenv.lo() + i as f64 * step).collect()
    };
    let mut num = 0.0;
    let mut den = 0.0;
    let mut sums = (0.0, 0.0, 0.0);
    let mut used = 0;
    let mut worst = 0.0f64;
    for &(wl, rl) in tiles {
        let fw = wenv.mass(wl, wl + width);
        let fr = renv.mass(rl, rl + width);
        let mut b_bar = 0.0;
        let mut ab_bar = 0.0;
        for (i, &ti) in born.iter().enumerate() {
            let wgt = if i == 0 || i + 1 == born.len() { 0.5 } else { 1.0 } * step * wenv.density(ti);
            let conv = model.pair_conversion_in(0, ti, rl, rl + width);
            b_bar += wgt * conv;
            if ti >= wl && ti < wl + width {
                ab_bar += wgt * conv;
            }
        }
        let a_bar = e * fw;
        let b_bar = e * b_bar;
        let ab_bar = e * e * ab_bar;
        let seed = e * model.thermal_survival * p_r * fr;
        let heated = e * p_r * fr;
        let write = Factors { pair: 1.0 - a_bar, ..base };
        let read = Factors { pair: 1.0 - b_bar, seed, heated, ..base };
        let joint = Factors { pair: 1.0 - a_bar - b_bar + ab_bar, seed, heated, dark: 2.0 * dark, ..base };
        let (v, c, t) = evaluate(&[write, read, joint], cutoff)?;
        used = used.max(c);
        worst = worst.max(t);
        let (cw, cr, cwr) = moments(n, v[0], v[1], v[2]);
        num += cwr;
        den += cw * cr;
        sums.0 += cw;
        sums.1 += cr;
        sums.2 += cwr;
    }
    if den <= 0.0 {
        return Err(Error::InsufficientBaseline("windowed oracle has zero baseline".into()));
    }
    Ok(AnalyticG2 { g2: num / den, write_clicks: sums.0, read_clicks: sums.1, coincidences: sums.2, cutoff: used, tail: worst })
}
