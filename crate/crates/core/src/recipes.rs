//! End-to-end reproduction recipes.
//!
//! Each recipe reads a [`RunConfig`], writes its data files into an output
//! directory and returns a JSON summary (also written as `summary.json`).
//! Summaries contain no timing information and are byte-identical for a given
//! config.

use crate::analysis::{g2_tau_histogram, g2om_scan, timebin_matrix, window_sweep, CorrelationResult, ScanSpec, TimeBinSpec};
use crate::config::{LoadedConfig, RunConfig, WaveguideConfig};
use crate::dynamics::{
    coherent_readout_trace, correlations, revival_peaks, CoupledModes, ModeState,
};
use crate::error::{Error, Result};
use crate::io::{self, ClickFile, ClickFormat};
use crate::mc::analytic::g2om_windowed;
use crate::mc::{g2om_analytic, simulate_cw_thermal, streams, substream, ClickStream, Cutoff, PulsedModel};
use crate::model::fit::{double_exponential, fit_double_exponential, fit_linear_heating, HeatingSample};
use crate::model::PulseKind;
use crate::omit::{extract_mode_comb, s21_spectrum, ExtractionConfig, SpectrumValues};
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};
use std::f64::consts::TAU;
use std::path::Path;

pub const RECIPES: [&str; 7] = ["fig2b", "fig2c", "fig3", "fig4", "figS3", "figS4", "cohdrive"];

/// Built-in config of a recipe.
pub fn default_config(id: &str) -> Option<&'static str> {
    Some(match id {
        "fig2b" => include_str!("../configs/fig2b.toml"),
        "fig2c" => include_str!("../configs/fig2c.toml"),
        "fig3" => include_str!("../configs/fig3.toml"),
        "fig4" => include_str!("../configs/fig4.toml"),
        "figS3" => include_str!("../configs/figS3.toml"),
        "figS4" => include_str!("../configs/figS4.toml"),
        "cohdrive" => include_str!("../configs/cohdrive.toml"),
        _ => return None,
    })
}

/// Runs recipe `id` and writes `summary.json` into `out`.
pub fn run(id: &str, loaded: &LoadedConfig, out: &Path) -> Result<Value> {
    std::fs::create_dir_all(out)?;
    let cfg = &loaded.config;
    let mut summary = match id {
        "fig2b" => fig2b(cfg, out)?,
        "fig2c" => fig2c(cfg, out)?,
        "fig3" => fig3(cfg, out, &loaded.hash)?,
        "fig4" => fig4(cfg, out, &loaded.hash)?,
        "figS3" => fig_s3(cfg, out)?,
        "figS4" => fig_s4(cfg, out)?,
        "cohdrive" => cohdrive(cfg, out)?,
        _ => return Err(Error::Config(format!("unknown recipe '{id}'"))),
    };
    summary["recipe"] = json!(id);
    summary["config_hash"] = json!(loaded.hash);
    io::write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref().ok_or_else(|| Error::Config(format!("missing [{name}] section")))
}

fn time_grid(duration: f64, step: f64) -> Vec<f64> {
    let n = (duration / step).round() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

fn peaks_json(peaks: &[(f64, f64)]) -> Value {
    json!(peaks.iter().map(|&(t, y)| json!({ "t_ns": t, "value": y })).collect::<Vec<_>>())
}

/// OMIT spectrum of the device and closed-loop comb extraction.
pub fn fig2b(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let dev = cfg.device()?;
    let o = section(&cfg.omit, "omit")?;
    let (range, points, drive, prominence) = cfg.omit_setup(&dev, o)?;
    let spectrum = s21_spectrum(range, points, &dev, &drive)?;
    io::write_spectrum_csv(&out.join("s21.csv"), &spectrum)?;
    let mut ec = ExtractionConfig::for_device(&dev, &drive);
    if let Some(p) = prominence {
        ec.min_prominence = p;
    }
    let extracted = extract_mode_comb(&spectrum, &ec)?;
    let freqs: Vec<f64> = extracted.comb.modes().iter().map(|m| m.omega / TAU).collect();
    let spacings: Vec<f64> = freqs.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = spacings.iter().sum::<f64>() / spacings.len().max(1) as f64;
    let (min, max) = spacings.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &s| (a.0.min(s), a.1.max(s)));
    let (lo, hi) = match &spectrum.values {
        SpectrumValues::Real(v) => v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &x| (a.0.min(x), a.1.max(x))),
        SpectrumValues::Complex(_) => (f64::NAN, f64::NAN),
    };
    let extracted_rows: Vec<(f64, f64)> = freqs.iter().copied().zip(extracted.weights.iter().copied()).collect();
    io::write_xy_csv(&out.join("extracted_comb.csv"), "frequency_hz,weight", &extracted_rows)?;
    Ok(json!({
        "comb_modes": dev.comb.len(),
        "peaks": extracted.peaks.len(),
        "extracted_modes": freqs.len(),
        "extracted_omega_m_hz": extracted.omega_m / TAU,
        "spacing_hz": { "mean": mean, "min": min, "max": max },
        "device_fsr_hz": dev.comb.mean_fsr_hz(),
        "s21_range": [lo, hi],
        "warnings": extracted.warnings,
    }))
}

/// Population and thermal correlation traces of a unit cavity excitation,
/// plus an optional CW Monte-Carlo check of `g2(tau)`.
pub fn fig2c(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let dev = cfg.device()?;
    let d = section(&cfg.dynamics, "dynamics")?;
    let q = |s: &str| crate::units::parse_quantity(s, crate::units::Dimension::TimeNs);
    let step = q(&d.step)?;
    let grid = time_grid(q(&d.duration)?, step);
    let n = dev.comb.len();
    let init = ModeState::cavity_excited(n);
    let pop = CoupledModes::new(&dev.mech, &dev.comb)?.population(&init, &grid)?;
    io::write_population_csv(&out.join("population.csv"), &pop)?;
    let tau_max = d.tau_max.as_deref().map(q).transpose()?.unwrap_or(300.0);
    let horizon = d.horizon.as_deref().map(q).transpose()?;
    let taus = time_grid(tau_max, step);
    let corr = correlations(&dev.mech, &dev.comb, &init, &taus, horizon)?;
    io::write_correlation_csv(&out.join("correlations.csv"), &corr.taus, &corr.g1, &corr.g2)?;
    let fsr = dev.comb.mean_fsr_hz();
    let g2_trace: Vec<(f64, f64)> = corr.taus.iter().copied().zip(corr.g2.iter().copied()).collect();
    let (pop_rev, g2_rev) = match fsr {
        Some(f) => (revival_peaks(&pop, f, d.revivals), revival_peaks(&g2_trace, f, d.revivals)),
        None => (Vec::new(), Vec::new()),
    };
    let mut summary = json!({
        "comb_modes": n,
        "fsr_hz": fsr,
        "g2_zero": corr.g2[0],
        "horizon_ns": corr.horizon,
        "population_revivals": peaks_json(&pop_rev),
        "g2_revivals": peaks_json(&g2_rev),
    });
    if cfg.cw.is_some() {
        let seed = cfg.require_seed()?;
        let settings = cfg.cw_settings()?;
        let (bin, max_tau) = cfg.histogram()?;
        let stream = simulate_cw_thermal(&dev, &settings, seed)?;
        let hist = g2_tau_histogram(&stream, bin, max_tau)?;
        io::write_histogram_csv(&out.join("cw_histogram.csv"), &hist)?;
        let zero = hist.iter().min_by(|a, b| a.tau.abs().total_cmp(&b.tau.abs()));
        summary["cw"] = json!({
            "seed": seed,
            "segments": stream.n_trials,
            "clicks": stream.records.len(),
            "g2_zero_bin": zero,
        });
    }
    Ok(summary)
}

/// Coherent-readout traces for several waveguide lengths and the ratio of
/// their first revival times.
pub fn cohdrive(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let d = section(&cfg.dynamics, "dynamics")?;
    let q = |s: &str| crate::units::parse_quantity(s, crate::units::Dimension::TimeNs);
    let step = q(&d.step)?;
    let bandwidth = match &d.readout_bandwidth {
        Some(b) => crate::units::parse_quantity(b, crate::units::Dimension::AngularFrequency)?,
        None => f64::INFINITY,
    };
    let scales = d.length_scales.clone().unwrap_or_else(|| vec![1.0]);
    let mut rows = Vec::new();
    for &s in &scales {
        let mut c = cfg.clone();
        let wg = c.device.waveguide.get_or_insert(WaveguideConfig {
            enabled: true,
            length: None,
            round_trip: None,
            length_scale: None,
        });
        wg.length_scale = Some(s * wg.length_scale.unwrap_or(1.0));
        let dev = c.device()?;
        let fsr = dev.comb.mean_fsr_hz().ok_or_else(|| Error::Config("cohdrive needs a comb".into()))?;
        let grid = time_grid(q(&d.duration)? * s, step);
        let init = ModeState::cavity_excited(dev.comb.len());
        let trace = coherent_readout_trace(&dev.mech, &dev.comb, &init, &grid, bandwidth)?;
        io::write_xy_csv(&out.join(format!("readout_x{s}.csv")), "t_ns,signal", &trace)?;
        let peaks = revival_peaks(&trace, fsr, d.revivals);
        rows.push(json!({
            "length_scale": s,
            "fsr_hz": fsr,
            "round_trip_ns": dev.geometry.map(|g| crate::model::comb_from_geometry(&g).1),
            "revivals": peaks_json(&peaks),
            "first_revival_ns": peaks.first().map(|p| p.0),
        }));
    }
    let first = |i: usize| rows.get(i).and_then(|r| r["first_revival_ns"].as_f64());
    let ratio = match (first(0), first(1)) {
        (Some(a), Some(b)) => Some(b / a),
        _ => None,
    };
    Ok(json!({ "readout_bandwidth_rad_s": bandwidth.is_finite().then_some(bandwidth), "scales": rows, "first_revival_ratio": ratio }))
}

fn simulate_and_store(cfg: &RunConfig, out: &Path, hash: &str, default_name: &str) -> Result<(PulsedModel, ClickStream, u64)> {
    let dev = cfg.device()?;
    let seed = cfg.require_seed()?;
    let (seq, opts, trials) = cfg.pulse_setup(&dev)?;
    let model = PulsedModel::new(&dev, &seq, &opts)?;
    log::info!("simulating {trials} trials (seed {seed})");
    let stream = model.simulate(trials, seed)?;
    let name = section(&cfg.pulsed, "pulsed")?.click_file.clone().unwrap_or_else(|| default_name.to_string());
    let path = out.join(name);
    let file = ClickFile::from_stream(stream, Some(seed), Some(hash.to_string()));
    io::write_clicks(&path, &file, ClickFormat::from_path(&path))?;
    Ok((model, file.into_stream(), seed))
}

fn rates_json(model: &PulsedModel, stream: &ClickStream) -> Value {
    let window = |kind: PulseKind| -> Vec<f64> {
        let pulses = match kind {
            PulseKind::Write => model.write_pulses(),
            PulseKind::Read => model.read_pulses(),
        };
        pulses
            .iter()
            .map(|(e, _)| stream.clicks_per_trial((e.lo().max(0.0) * 1e3) as u64, (e.hi() * 1e3) as u64))
            .collect()
    };
    json!({
        "stokes_per_trial": window(PulseKind::Write),
        "anti_stokes_per_trial": window(PulseKind::Read),
        "dark_per_trial": model.detectors.dark_per_trial,
        "total_per_trial": stream.records.len() as f64 / stream.n_trials as f64,
    })
}

fn model_json(model: &PulsedModel, seed: u64, trials: u64) -> Value {
    json!({
        "seed": seed,
        "trials": trials,
        "probabilities": model.probabilities,
        "n_write": model.thermal.n_write,
        "n_read": model.thermal.n_read,
        "n_heated": model.n_heated,
        "eta_det": model.detectors.eta,
        "correlated": model.correlated,
    })
}

/// Windowed oracle at `delay` for the tiles of `spec`.
pub fn oracle_at(model: &PulsedModel, spec: &ScanSpec, delay: f64) -> Result<f64> {
    Ok(g2om_windowed(model, &spec.tiles(delay), spec.width, Cutoff::Adaptive)?.g2)
}

/// Single write/read heralding run: click file, delay scan, window sweep and
/// the analytic references.
pub fn fig3(cfg: &RunConfig, out: &Path, hash: &str) -> Result<Value> {
    let (model, stream, seed) = simulate_and_store(cfg, out, hash, "clicks.bin")?;
    let spec = cfg.scan_spec()?;
    let scan = g2om_scan(&stream, &spec)?;
    io::write_scan_csv(&out.join("scan.csv"), &scan.results)?;
    io::write_json(&out.join("scan.json"), &scan)?;
    let at_tau = scan
        .results
        .iter()
        .min_by(|a, b| (a.delay - spec.fixed_tau).abs().total_cmp(&(b.delay - spec.fixed_tau).abs()))
        .copied();
    let widths = cfg.analysis_widths()?;
    let sweep = if widths.is_empty() { Vec::new() } else { window_sweep(&stream, &widths, &spec)? };
    if !sweep.is_empty() {
        let rows: Vec<CorrelationResult> = sweep.iter().filter_map(|(_, r)| *r).collect();
        io::write_json(&out.join("window_sweep.json"), &sweep)?;
        io::write_scan_csv(&out.join("window_sweep.csv"), &rows)?;
    }
    let mut oracle = Value::Null;
    if model.correlated {
        let peak_delay = scan.peak.map(|p| p.delay).unwrap_or(spec.fixed_tau);
        let whole = g2om_analytic(
            model.probabilities[0],
            model.probabilities[1],
            model.thermal.n_write,
            &cfg.device()?.heating,
            model.detectors.eta,
            model.detectors.n_detectors,
            Cutoff::Adaptive,
        )?;
        oracle = json!({
            "at_peak": { "delay": peak_delay, "g2": oracle_at(&model, &spec, peak_delay)? },
            "at_fixed_tau": { "delay": spec.fixed_tau, "g2": oracle_at(&model, &spec, spec.fixed_tau)? },
            "whole_pulse": whole,
        });
    }
    Ok(json!({
        "model": model_json(&model, seed, stream.n_trials),
        "rates": rates_json(&model, &stream),
        "clicks": stream.records.len(),
        "scan": { "width": spec.width, "fixed_tau": spec.fixed_tau, "write_area": spec.write_area, "dn_max": spec.dn_max },
        "peak": scan.peak,
        "at_fixed_tau": at_tau,
        "oracle": oracle,
        "window_sweep": sweep,
    }))
}

/// Double write/read time-bin run and its 2x2 correlation matrix.
pub fn fig4(cfg: &RunConfig, out: &Path, hash: &str) -> Result<Value> {
    let (model, stream, seed) = simulate_and_store(cfg, out, hash, "clicks.bin")?;
    let centers = |p: &[(crate::mc::Envelope, f64)]| -> Result<[f64; 2]> {
        match p {
            [a, b] => Ok([a.0.center, b.0.center]),
            _ => Err(Error::InvalidScheme("time-bin analysis needs two writes and two reads".into())),
        }
    };
    let mut spec = TimeBinSpec::around(centers(model.write_pulses())?, centers(model.read_pulses())?, cfg.timebin_width()?);
    spec.width = cfg.width()?;
    spec.dn_max = cfg.analysis.dn_max;
    let m = timebin_matrix(&stream, &spec)?;
    io::write_json(&out.join("timebin.json"), &m)?;
    let label = ["E", "L"];
    let mut cells = serde_json::Map::new();
    for w in 0..2 {
        for r in 0..2 {
            cells.insert(format!("{}{}", label[w], label[r]), json!(m.cells[w][r]));
        }
    }
    Ok(json!({
        "model": model_json(&model, seed, stream.n_trials),
        "rates": rates_json(&model, &stream),
        "clicks": stream.records.len(),
        "spec": spec,
        "cells": cells,
    }))
}

fn gaussian(seed: u64, index: u64) -> f64 {
    StandardNormal.sample(&mut substream(seed, streams::SYNTHETIC, index))
}

/// Double-exponential fits of synthetic ringdown-style traces.
pub fn fig_s3(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let seed = cfg.require_seed()?;
    let gens = section(&section(&cfg.calibration, "calibration")?.decay, "calibration.decay")?;
    let us = |s: &str| crate::units::parse_quantity(s, crate::units::Dimension::TimeUs);
    let mut rows = Vec::new();
    for (g_idx, g) in gens.iter().enumerate() {
        let (tr, t1, tmax) = (us(&g.t_rise)?, us(&g.t1)?, us(&g.t_max)?);
        if g.points < 4 {
            return Err(Error::Config("decay generator needs at least 4 points".into()));
        }
        let trace: Vec<(f64, f64)> = (0..g.points)
            .map(|i| {
                let t = tmax * (i + 1) as f64 / g.points as f64;
                let noise = g.noise * g.amplitude * gaussian(seed, ((g_idx as u64) << 32) + i as u64);
                (t, double_exponential(t, g.amplitude, tr, t1) + noise)
            })
            .collect();
        io::write_xy_csv(&out.join(format!("decay_{}.csv", g.name)), "t_us,n", &trace)?;
        let fit = fit_double_exponential(&trace)?;
        rows.push(json!({
            "name": g.name,
            "truth": { "amplitude": g.amplitude, "t_rise_us": tr, "t1_us": t1 },
            "fit": fit,
            "t1_relative_error": (fit.t_1.value - t1) / t1,
        }));
    }
    Ok(json!({ "seed": seed, "generators": rows }))
}

/// Linear heating fits of synthetic thermometry points.
pub fn fig_s4(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let seed = cfg.require_seed()?;
    let g = section(&section(&cfg.calibration, "calibration")?.heating, "calibration.heating")?;
    let mut lines = serde_json::Map::new();
    for (k, (name, [a, b])) in [("base", g.base), ("preceded", g.preceded)].into_iter().enumerate() {
        let samples: Vec<HeatingSample<f64>> = g
            .p_s
            .iter()
            .enumerate()
            .map(|(i, &p)| HeatingSample {
                p_s: p,
                n_th: a + b * p + g.sigma * gaussian(seed, ((k as u64) << 32) + i as u64),
                sigma: g.sigma,
            })
            .collect();
        let rows: Vec<(f64, f64)> = samples.iter().map(|s| (s.p_s, s.n_th)).collect();
        io::write_xy_csv(&out.join(format!("heating_{name}.csv")), "p_s,n_th", &rows)?;
        let fit = fit_linear_heating(&samples)?;
        lines.insert(
            name.to_string(),
            json!({
                "truth": { "intercept": a, "slope": b },
                "fit": fit,
                "intercept_pull": (fit.intercept.value - a) / fit.intercept.err,
                "slope_pull": (fit.slope.value - b) / fit.slope.err,
            }),
        );
    }
    Ok(json!({ "seed": seed, "lines": lines }))
}
