//! Coincidence analysis of click streams.
//!
//! Cross-correlations are `g2 = N_same / N_diff`, with `N_same` the number of
//! write/read click pairs inside one trial and `N_diff` the mean number of
//! pairs between trials `n` and `n + dn`, averaged over `dn = 1..=dn_max`.
//! Offset `dn` sees only `N - dn` trial pairs, so its count is scaled by
//! `N / (N - dn)`.
//! Delay scans tile the write area with adjacent windows; the read window
//! sits at write window + delay and only tiles whose read window stays inside
//! the read area (write area shifted by `fixed_tau`) are counted.
//!
//! Times are handled in integer picoseconds.

use crate::error::{Error, Result};
use crate::mc::{ClickRecord, ClickStream};
use serde::{Deserialize, Serialize};

pub const DEFAULT_DN_MAX: u64 = 100;
/// Central coverage of the reported error bars.
pub const COVERAGE: f64 = 0.682_689_492_137_086;

fn ps(ns: f64) -> i64 {
    (ns * 1000.0).round() as i64
}

fn to_ns(ps: i64) -> f64 {
    ps as f64 / 1000.0
}

/// A fixed pair of windows (ns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub center_write: f64,
    pub center_read: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coincidences {
    pub n_same: u64,
    pub n_diff_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    /// Delay (ns).
    pub delay: f64,
    pub n_same: u64,
    pub n_diff_mean: f64,
    /// `None` when the baseline is empty.
    pub g2: Option<f64>,
    pub err_lo: Option<f64>,
    pub err_hi: Option<f64>,
}

impl CorrelationResult {
    pub fn new(delay: f64, c: Coincidences, n_trials: u64) -> Self {
        let (g2, err_lo, err_hi) = if c.n_diff_mean > 0.0 {
            let (lo, hi) = binomial_error(c.n_same, n_trials, c.n_diff_mean);
            (Some(c.n_same as f64 / c.n_diff_mean), Some(lo), Some(hi))
        } else {
            (None, None, None)
        };
        Self { delay, n_same: c.n_same, n_diff_mean: c.n_diff_mean, g2, err_lo, err_hi }
    }

    /// Symmetrized one-sigma error.
    pub fn sigma(&self) -> Option<f64> {
        Some(0.5 * (self.err_lo? + self.err_hi?))
    }
}

/// Regularized incomplete beta `I_x(a, b)`; `a = 0` or `b = 0` are the
/// degenerate point masses.
fn beta_cdf(x: f64, a: f64, b: f64) -> f64 {
    if a <= 0.0 {
        return 1.0;
    }
    if b <= 0.0 {
        return 0.0;
    }
    statrs::function::beta::beta_reg(a, b, x)
}

fn beta_quantile(q: f64, a: f64, b: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    if b <= 0.0 {
        return 1.0;
    }
    // bisection in log space; the interesting quantiles sit near 0 for rare events
    let (mut lo, mut hi) = (-745.0f64, 0.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_cdf(mid.exp(), a, b) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Clopper-Pearson central interval on the same-trial coincidence
/// probability, converted to `(err_lo, err_hi)` on `g2 = n_same / n_diff_mean`.
pub fn binomial_error(n_same: u64, n_trials: u64, n_diff_mean: f64) -> (f64, f64) {
    let n = n_trials.max(n_same) as f64;
    let k = n_same as f64;
    let alpha = 1.0 - COVERAGE;
    let p_lo = if n_same == 0 { 0.0 } else { beta_quantile(alpha / 2.0, k, n - k + 1.0) };
    let p_hi = if n_same as f64 >= n { 1.0 } else { beta_quantile(1.0 - alpha / 2.0, k + 1.0, n - k) };
    ((k - n * p_lo).max(0.0) / n_diff_mean, (n * p_hi - k).max(0.0) / n_diff_mean)
}

/// Clicks of one trial, restricted to a time range.
struct TrialClicks {
    trial: u64,
    times: Vec<i64>,
}

fn collect(records: &[ClickRecord], lo: i64, hi: i64) -> Vec<TrialClicks> {
    let mut out: Vec<TrialClicks> = Vec::new();
    for r in records {
        let t = r.t_ps as i64;
        if t < lo || t >= hi {
            continue;
        }
        match out.last_mut() {
            Some(tc) if tc.trial == r.trial as u64 => tc.times.push(t),
            _ => out.push(TrialClicks { trial: r.trial as u64, times: vec![t] }),
        }
    }
    out
}

/// Candidate write/read click pairs with their weight in `N_same` or
/// `N_diff`.
struct Pairs {
    same: Vec<(i64, i64)>,
    diff: Vec<(i64, i64, f64)>,
}

fn pairs(stream: &ClickStream, write: (i64, i64), read: (i64, i64), dn_max: u64) -> Result<Pairs> {
    stream.validate()?;
    let w = collect(&stream.records, write.0, write.1);
    let r = collect(&stream.records, read.0, read.1);
    let offsets = dn_max.min(stream.n_trials.saturating_sub(1));
    // offset dn has only n - dn trial pairs
    let n = stream.n_trials as f64;
    let mut same = Vec::new();
    let mut diff = Vec::new();
    let mut j0 = 0;
    for wc in &w {
        while j0 < r.len() && r[j0].trial < wc.trial {
            j0 += 1;
        }
        let mut j = j0;
        while j < r.len() && r[j].trial <= wc.trial + offsets {
            let rc = &r[j];
            for &tw in &wc.times {
                for &tr in &rc.times {
                    if rc.trial == wc.trial {
                        same.push((tw, tr));
                    } else {
                        let dn = (rc.trial - wc.trial) as f64;
                        diff.push((tw, tr, n / ((n - dn) * offsets as f64)));
                    }
                }
            }
            j += 1;
        }
    }
    Ok(Pairs { same, diff })
}

/// Same-trial and mean cross-trial pair counts for one window pair.
pub fn count_coincidences(stream: &ClickStream, window: &WindowSpec, dn_max: u64) -> Result<Coincidences> {
    if !(window.width > 0.0) {
        return Err(Error::InvalidParameter("window width must be positive".into()));
    }
    if (window.center_read - window.center_write).abs() < window.width {
        return Err(Error::AmbiguousClickAssignment("write and read windows overlap".into()));
    }
    let half = window.width / 2.0;
    let wr = (ps(window.center_write - half), ps(window.center_write + half));
    let rr = (ps(window.center_read - half), ps(window.center_read + half));
    let p = pairs(stream, wr, rr, dn_max)?;
    Ok(Coincidences { n_same: p.same.len() as u64, n_diff_mean: p.diff.iter().map(|d| d.2).sum() })
}

/// Moving-window delay scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    /// Write area `[lo, hi)` (ns).
    pub write_area: (f64, f64),
    /// Offset of the read area from the write area (ns).
    pub fixed_tau: f64,
    /// Window width (ns).
    pub width: f64,
    /// Delays between write and read windows (ns).
    pub delays: Vec<f64>,
    pub dn_max: u64,
}

impl ScanSpec {
    /// Delays `from..=to` in steps of `step` (ns).
    pub fn delay_grid(from: f64, to: f64, step: f64) -> Vec<f64> {
        let n = ((to - from) / step + 1e-9).floor().max(0.0) as usize;
        (0..=n).map(|i| from + i as f64 * step).collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.width * 1000.0 >= 1.0) {
            return Err(Error::InvalidParameter("window width below the 1 ps timestamp resolution".into()));
        }
        if !(self.write_area.1 > self.write_area.0) {
            return Err(Error::InvalidParameter("empty write area".into()));
        }
        if self.fixed_tau < self.write_area.1 - self.write_area.0 {
            return Err(Error::AmbiguousClickAssignment("write and read areas overlap".into()));
        }
        if self.dn_max == 0 {
            return Err(Error::InvalidParameter("dn_max must be at least 1".into()));
        }
        Ok(())
    }

    fn n_tiles(&self) -> i64 {
        (ps(self.write_area.1 - self.write_area.0) / ps(self.width)).max(0)
    }

    /// `(write_lo, read_lo)` (ns) of every tile counted at `delay`.
    pub fn tiles(&self, delay: f64) -> Vec<(f64, f64)> {
        let (lo, w, d, tau) = (ps(self.write_area.0), ps(self.width), ps(delay), ps(self.fixed_tau));
        let hi = ps(self.write_area.1);
        (0..self.n_tiles())
            .filter_map(|j| {
                let wl = lo + j * w;
                let rl = wl + d;
                (rl >= lo + tau && rl + w <= hi + tau).then(|| (to_ns(wl), to_ns(rl)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub results: Vec<CorrelationResult>,
    /// Defined result with the largest lower bound `g2 - err_lo`.
    pub peak: Option<CorrelationResult>,
    /// Defined result with the largest `g2`.
    pub max: Option<CorrelationResult>,
}

fn count_tiled(p: &[(i64, i64)], lo: i64, w: i64, n_tiles: i64, d: i64, valid: &dyn Fn(i64) -> bool) -> usize {
    p.iter()
        .filter(|&&(tw, tr)| {
            let j = (tw - lo).div_euclid(w);
            if j < 0 || j >= n_tiles || !valid(j) {
                return false;
            }
            let rl = lo + j * w + d;
            tr >= rl && tr < rl + w
        })
        .count()
}

pub fn g2om_scan(stream: &ClickStream, spec: &ScanSpec) -> Result<ScanResult> {
    spec.validate()?;
    let (lo, hi, w, tau) = (ps(spec.write_area.0), ps(spec.write_area.1), ps(spec.width), ps(spec.fixed_tau));
    let n_tiles = spec.n_tiles();
    for &d in &spec.delays {
        if ps(d) < w {
            return Err(Error::AmbiguousClickAssignment(format!("delay {d} ns shorter than the window")));
        }
    }
    let p = pairs(stream, (lo, hi), (lo + tau, hi + tau), spec.dn_max)?;
    let results: Vec<CorrelationResult> = spec
        .delays
        .iter()
        .map(|&delay| {
            let d = ps(delay);
            let valid = |j: i64| {
                let rl = lo + j * w + d;
                rl >= lo + tau && rl + w <= hi + tau
            };
            let n_same = count_tiled(&p.same, lo, w, n_tiles, d, &valid) as u64;
            let n_diff_mean = p
                .diff
                .iter()
                .filter(|&&(tw, tr, _)| count_tiled(&[(tw, tr)], lo, w, n_tiles, d, &valid) == 1)
                .map(|x| x.2)
                .sum();
            CorrelationResult::new(delay, Coincidences { n_same, n_diff_mean }, stream.n_trials)
        })
        .collect();
    let peak = best_by(&results, |r| r.g2.zip(r.err_lo).map(|(g, e)| g - e));
    let max = best_by(&results, |r| r.g2);
    Ok(ScanResult { results, peak, max })
}

/// First result maximizing `key` among those where it is defined.
fn best_by(results: &[CorrelationResult], key: impl Fn(&CorrelationResult) -> Option<f64>) -> Option<CorrelationResult> {
    results
        .iter()
        .filter_map(|r| key(r).map(|k| (k, r)))
        .fold(None, |best: Option<(f64, &CorrelationResult)>, (k, r)| match best {
            Some((b, _)) if b >= k => best,
            _ => Some((k, r)),
        })
        .map(|(_, r)| *r)
}

/// Peak of the delay scan for each window width.
pub fn window_sweep(stream: &ClickStream, widths: &[f64], spec: &ScanSpec) -> Result<Vec<(f64, Option<CorrelationResult>)>> {
    widths
        .iter()
        .map(|&w| {
            if !(w > 0.0) {
                return Err(Error::InvalidParameter("window widths must be positive".into()));
            }
            let s = ScanSpec { width: w, ..spec.clone() };
            Ok((w, g2om_scan(stream, &s)?.peak))
        })
        .collect()
}

/// Early/late bins (ns) and the delay of each write/read combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBinSpec {
    pub write_bins: [(f64, f64); 2],
    pub read_bins: [(f64, f64); 2],
    /// `delays[write][read]` (ns).
    pub delays: [[f64; 2]; 2],
    /// Half-range of the fine scan around each delay (ns).
    pub scan_range: f64,
    pub step: f64,
    pub width: f64,
    pub dn_max: u64,
}

impl TimeBinSpec {
    /// Bins of width `bin` centered on the pulses; delays from the pulse centers.
    pub fn around(write_centers: [f64; 2], read_centers: [f64; 2], bin: f64) -> Self {
        let b = |c: f64| (c - bin / 2.0, c + bin / 2.0);
        let delays = [
            [read_centers[0] - write_centers[0], read_centers[1] - write_centers[0]],
            [read_centers[0] - write_centers[1], read_centers[1] - write_centers[1]],
        ];
        Self {
            write_bins: [b(write_centers[0]), b(write_centers[1])],
            read_bins: [b(read_centers[0]), b(read_centers[1])],
            delays,
            scan_range: 10.0,
            step: 1.0,
            width: 6.0,
            dn_max: DEFAULT_DN_MAX,
        }
    }
}

/// `cells[write][read]`; index 0 is early, 1 is late.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBinMatrix {
    pub cells: [[CorrelationResult; 2]; 2],
}

pub fn timebin_matrix(stream: &ClickStream, spec: &TimeBinSpec) -> Result<TimeBinMatrix> {
    let mut bins: Vec<(f64, f64)> = spec.write_bins.iter().chain(&spec.read_bins).copied().collect();
    if bins.iter().any(|b| !(b.1 > b.0)) {
        return Err(Error::InvalidParameter("empty time bin".into()));
    }
    bins.sort_by(|a, b| a.0.total_cmp(&b.0));
    if bins.windows(2).any(|w| w[1].0 < w[0].1) {
        return Err(Error::AmbiguousClickAssignment("time bins overlap".into()));
    }
    let cell = |wi: usize, ri: usize| -> Result<CorrelationResult> {
        let tau = spec.delays[wi][ri];
        let (wb, rb) = (spec.write_bins[wi], spec.read_bins[ri]);
        if ((rb.0 - wb.0) - tau).abs() > 1e-6 || ((rb.1 - rb.0) - (wb.1 - wb.0)).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!("read bin {ri} is not write bin {wi} shifted by {tau} ns")));
        }
        let scan = ScanSpec {
            write_area: wb,
            fixed_tau: tau,
            width: spec.width,
            delays: ScanSpec::delay_grid(tau - spec.scan_range, tau + spec.scan_range, spec.step),
            dn_max: spec.dn_max,
        };
        let r = g2om_scan(stream, &scan)?;
        Ok(r.peak.unwrap_or_else(|| {
            CorrelationResult::new(tau, Coincidences { n_same: 0, n_diff_mean: 0.0 }, stream.n_trials)
        }))
    };
    Ok(TimeBinMatrix { cells: [[cell(0, 0)?, cell(0, 1)?], [cell(1, 0)?, cell(1, 1)?]] })
}

/// Sums per-dataset counts; each dataset keeps its own baseline.
pub fn pool(results: &[(CorrelationResult, u64)]) -> CorrelationResult {
    let n_same = results.iter().map(|r| r.0.n_same).sum();
    let n_diff_mean = results.iter().map(|r| r.0.n_diff_mean).sum();
    let n_trials = results.iter().map(|r| r.1).sum();
    let delay = results.first().map_or(0.0, |r| r.0.delay);
    CorrelationResult::new(delay, Coincidences { n_same, n_diff_mean }, n_trials)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Bin center (ns).
    pub tau: f64,
    pub count: u64,
    pub baseline: f64,
    pub g2: f64,
    pub err: f64,
}

/// `int_a^b (D - |t|) / D^2 dt` for `|a|, |b| <= D`.
fn triangle_mass(a: f64, b: f64, d: f64) -> f64 {
    let prim = |t: f64| (t * d - t * t.abs() / 2.0) / (d * d);
    prim(b.clamp(-d, d)) - prim(a.clamp(-d, d))
}

/// Cross-detector (0 then 1) delay histogram `tau = t_1 - t_0` within each
/// trial, normalized by the uncorrelated expectation `N_0 N_1 / N_trials`
/// times the chance that two independent uniform times in one trial differ by
/// a value inside the bin.
pub fn g2_tau_histogram(stream: &ClickStream, bin_width: f64, max_tau: f64) -> Result<Vec<HistogramBin>> {
    stream.validate()?;
    if stream.n_detectors < 2 {
        return Err(Error::InvalidParameter("HBT histogram needs two detectors".into()));
    }
    if !(bin_width > 0.0 && max_tau >= 0.0) {
        return Err(Error::InvalidParameter("bin width must be positive".into()));
    }
    let period = stream.period_ps as f64 / 1000.0;
    if max_tau + bin_width / 2.0 > period {
        return Err(Error::InvalidParameter("max_tau exceeds the trial length".into()));
    }
    let k_max = (max_tau / bin_width + 1e-9).floor() as i64;
    let n_bins = (2 * k_max + 1) as usize;
    let mut counts = vec![0u64; n_bins];
    let (mut n0, mut n1) = (0u64, 0u64);
    let bw = ps(bin_width);
    let reach = ps(k_max as f64 * bin_width) + bw / 2;
    let mut start = 0;
    while start < stream.records.len() {
        let trial = stream.records[start].trial;
        let end = start + stream.records[start..].iter().take_while(|r| r.trial == trial).count();
        let chunk = &stream.records[start..end];
        let a: Vec<i64> = chunk.iter().filter(|r| r.detector == 0).map(|r| r.t_ps as i64).collect();
        let b: Vec<i64> = chunk.iter().filter(|r| r.detector == 1).map(|r| r.t_ps as i64).collect();
        n0 += a.len() as u64;
        n1 += b.len() as u64;
        let mut j0 = 0;
        for &ta in &a {
            while j0 < b.len() && b[j0] < ta - reach {
                j0 += 1;
            }
            for &tb in b[j0..].iter().take_while(|&&tb| tb < ta + reach) {
                let k = (tb - ta + bw / 2).div_euclid(bw);
                if k.abs() <= k_max {
                    counts[(k + k_max) as usize] += 1;
                }
            }
        }
        start = end;
    }
    if n0 == 0 || n1 == 0 {
        return Err(Error::InsufficientBaseline("a detector has no clicks".into()));
    }
    let scale = n0 as f64 * n1 as f64 / stream.n_trials as f64;
    (0..n_bins)
        .map(|i| {
            let k = i as i64 - k_max;
            let tau = k as f64 * bin_width;
            let a = to_ns(k * bw - bw / 2);
            let baseline = scale * triangle_mass(a, a + to_ns(bw), period);
            if !(baseline > 0.0) {
                return Err(Error::InsufficientBaseline(format!("no baseline at tau = {tau} ns")));
            }
            let count = counts[i];
            Ok(HistogramBin { tau, count, baseline, g2: count as f64 / baseline, err: (count as f64).sqrt() / baseline })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(trial: u32, detector: u8, t_ns: f64) -> ClickRecord {
        ClickRecord { trial, detector, t_ps: (t_ns * 1000.0) as u64 }
    }

    #[test]
    fn zero_counts_have_one_sided_error() {
        let (lo, hi) = binomial_error(0, 1000, 2.0);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0);
    }

    #[test]
    fn large_counts_are_nearly_symmetric() {
        let (lo, hi) = binomial_error(500, 10_000_000, 100.0);
        let g = 500f64.sqrt() / 100.0;
        assert!((lo / g - 1.0).abs() < 0.05 && (hi / g - 1.0).abs() < 0.05, "{lo} {hi}");
    }

    #[test]
    fn hand_counted_stream() {
        // trial 0 has 2 write and 2 read clicks (4 same-trial pairs); trial 1 one read click,
        // seen at offset 1 of 2 with 99 trial pairs
        let records = vec![rec(0, 0, 10.0), rec(0, 1, 11.0), rec(0, 0, 50.0), rec(0, 1, 51.0), rec(1, 0, 50.0)];
        let s = ClickStream { records, n_trials: 100, period_ps: 1_000_000, n_detectors: 2 };
        let w = WindowSpec { center_write: 10.5, center_read: 50.5, width: 3.0 };
        let c = count_coincidences(&s, &w, 2).unwrap();
        assert_eq!(c.n_same, 4);
        assert!((c.n_diff_mean - 100.0 / 99.0).abs() < 1e-12);
    }

    #[test]
    fn overlapping_windows_are_rejected() {
        let s = ClickStream { records: vec![], n_trials: 1, period_ps: 1000, n_detectors: 2 };
        let w = WindowSpec { center_write: 10.0, center_read: 12.0, width: 6.0 };
        assert!(matches!(count_coincidences(&s, &w, 1), Err(Error::AmbiguousClickAssignment(_))));
    }

    #[test]
    fn triangle_mass_is_normalized() {
        assert!((triangle_mass(-5.0, 5.0, 5.0) - 1.0).abs() < 1e-12);
        assert!((triangle_mass(0.0, 5.0, 5.0) - 0.5).abs() < 1e-12);
    }
}
