//! Acceptance criteria, one line each. Runs the full-size recipes (about
//! ten minutes on one core); exits non-zero if any criterion fails.

mod common;

use guided_phonon::analysis::g2om_scan;
use guided_phonon::config::LoadedConfig;
use guided_phonon::dynamics::{correlations, evolve, revival_peaks, CoupledModes, ModeState};
use guided_phonon::mc::PulsedModel;
use guided_phonon::model::{
    comb_coupling_for_decay, scattering_probability, CombMode, MechanicalCavityMode, OpticalCavityParams, PulseKind,
    PulseSpec, WaveguideModeComb,
};
use guided_phonon::omit::{extract_mode_comb, s21_spectrum, ExtractionConfig, OmitDriveParams};
use guided_phonon::{presets, recipes};
use serde_json::Value;
use std::f64::consts::TAU;
use std::path::Path;
use std::time::Instant;

type Outcome = (bool, String);

fn config(id: &str) -> LoadedConfig {
    LoadedConfig::parse(recipes::default_config(id).unwrap()).unwrap()
}

fn run(id: &str, loaded: &LoadedConfig, out: &Path) -> Value {
    recipes::run(id, loaded, out).unwrap_or_else(|e| panic!("{id}: {e}"))
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn scattering() -> Outcome {
    let optics = OpticalCavityParams::from_total(TAU * 299_792_458.0 / 1541e-9, TAU * 1021e6, TAU * 364e6).unwrap();
    let mech = MechanicalCavityMode::new(TAU * 4.98e9, 1e6 / 78.0, TAU * 460e3).unwrap();
    let pulse = PulseSpec::new(PulseKind::Write, 119e-15, 40.0, 0.0).unwrap();
    let p = scattering_probability(&pulse, &optics, &mech).unwrap();
    ((0.009..=0.016).contains(&p), format!("p_s = {:.3}% (band 0.9%..1.6%, measured 1.4%)", 100.0 * p))
}

fn revival_timing() -> Outcome {
    let mech = presets::mech::<f64>();
    let comb = presets::comb_with::<f64>(21, 11e6, presets::T_C_NS);
    let init = ModeState::cavity_excited(21);
    let taus: Vec<f64> = (0..=3000).map(|i| i as f64 * 0.1).collect();
    let corr = correlations(&mech, &comb, &init, &taus, None).unwrap();
    let trace: Vec<(f64, f64)> = taus.iter().copied().zip(corr.g2.iter().copied()).collect();
    let pop = CoupledModes::new(&mech, &comb).unwrap().population(&init, &taus).unwrap();
    let g2_rev = revival_peaks(&trace, 11e6, 1).first().map_or(f64::NAN, |p| p.0);
    let pop_rev = revival_peaks(&pop, 11e6, 1).first().map_or(f64::NAN, |p| p.0);
    let ok = corr.g2[0] == 2.0 && (g2_rev - 91.0).abs() <= 2.0;
    (ok, format!("g2(0) = {}, first g2 revival {g2_rev:.2} ns, population revival {pop_rev:.2} ns (want 91 +/- 2)", corr.g2[0]))
}

fn conservation() -> Outcome {
    let lossless = MechanicalCavityMode::new(TAU * 4.98e9, 0.0, 0.0).unwrap();
    let mut worst_pop: f64 = 0.0;
    for n in 1..=10 {
        let g = comb_coupling_for_decay(11e6, 10.0);
        let comb = WaveguideModeComb::uniform(n, lossless.omega_m, 11e6, g, 0.0).unwrap();
        let times: Vec<f64> = (0..=1000).map(|i| i as f64).collect();
        let tr = evolve(&ModeState::cavity_excited(n), &lossless, &comb, &times).unwrap();
        for s in &tr.states {
            worst_pop = worst_pop.max((s.total_population() - 1.0).abs());
        }
    }
    let mech = MechanicalCavityMode::new(TAU * 4.98e9, 2e5, 0.0).unwrap();
    let modes = (0..8)
        .map(|l| CombMode {
            omega: mech.omega_m + TAU * 11e6 * (l as f64 - 3.5) * (1.0 - 0.02 * l as f64),
            coupling: 2e7 + 3e6 * l as f64,
            linewidth: 5e4 * (1.0 + l as f64),
        })
        .collect();
    let comb = WaveguideModeComb::new(modes).unwrap();
    let init = ModeState::cavity_excited(8);
    let tr = evolve(&init, &mech, &comb, &[0.0, 1000.0]).unwrap();
    let x = common::rk4(&mech, &comb, common::as_vec(&init), 0.002, 500_000);
    let y = common::as_vec(&tr.states[1]);
    let scale = y.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let rel = x.iter().zip(&y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
    (
        worst_pop <= 1e-9 && rel <= 1e-8,
        format!("max |P - 1| = {worst_pop:.1e} over 1 us, N = 1..10 (tol 1e-9); RK4 relative deviation {rel:.1e} (tol 1e-8)"),
    )
}

fn heralding(fig3: &Value) -> Outcome {
    let peak = &fig3["peak"];
    let (g, lo, hi) = (f(&peak["g2"]), f(&peak["err_lo"]), f(&peak["err_hi"]));
    let oracle_peak = f(&fig3["oracle"]["at_peak"]["g2"]);
    let oracle_tau = f(&fig3["oracle"]["at_fixed_tau"]["g2"]);
    let sigma = if g > oracle_peak { lo } else { hi };
    let z = (g - oracle_peak) / sigma;
    let agree = z.abs() <= 3.0;
    let classical = oracle_tau > 2.0;
    let band = (oracle_tau / 1.5..=oracle_tau * 1.5).contains(&4.4);
    (
        agree && classical && band,
        format!(
            "peak {g:.2} (-{lo:.2}/+{hi:.2}) at {:.0} ns vs oracle {oracle_peak:.2} ({z:+.2} sigma, tol 3); oracle at 170 ns {oracle_tau:.2} > 2; 4.4 in [{:.2}, {:.2}]; {} trials",
            f(&peak["delay"]),
            oracle_tau / 1.5,
            oracle_tau * 1.5,
            fig3["model"]["trials"]
        ),
    )
}

fn classical_bound() -> Outcome {
    let base = config("fig3");
    let mut cfg = base.config.clone();
    cfg.pulsed.as_mut().unwrap().correlated = false;
    let dev = cfg.device().unwrap();
    let (seq, opts, _) = cfg.pulse_setup(&dev).unwrap();
    let model = PulsedModel::new(&dev, &seq, &opts).unwrap();
    let spec = cfg.scan_spec().unwrap();
    let mut worst = f64::NEG_INFINITY;
    let mut peaks = Vec::new();
    for seed in 1..=10 {
        let stream = model.simulate(100_000_000, seed).unwrap();
        let p = g2om_scan(&stream, &spec).unwrap().peak.unwrap();
        let (g, lo) = (p.g2.unwrap(), p.err_lo.unwrap());
        worst = worst.max((g - 2.0) / lo);
        peaks.push(format!("{g:.2} (n={})", p.n_same));
    }
    (worst <= 3.0, format!("10 seeds x 1e8 trials, peaks [{}]; max (g2 - 2)/sigma = {worst:+.2} (tol 3)", peaks.join(", ")))
}

fn timebin(fig4: &Value) -> Outcome {
    let cell = |k: &str| {
        let c = &fig4["cells"][k];
        (f(&c["g2"]), f(&c["err_lo"]), f(&c["err_hi"]), f(&c["delay"]))
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for k in ["EE", "LL"] {
        let (g, lo, _, d) = cell(k);
        let z = (g - 2.0) / lo;
        ok &= z > 3.0 && (d - 170.0).abs() <= 10.0;
        parts.push(format!("{k} {g:.2} at {d:.0} ns ({z:+.2} sigma above 2)"));
    }
    for k in ["EL", "LE"] {
        let (g, lo, _, d) = cell(k);
        ok &= g >= 1.0 && g <= 2.0 + 3.0 * lo;
        parts.push(format!("{k} {g:.2} at {d:.0} ns (in [1, {:.2}])", 2.0 + 3.0 * lo));
    }
    (ok, format!("{}; {} trials", parts.join("; "), fig4["model"]["trials"]))
}

fn window_sweep(fig3: &Value) -> Outcome {
    let rows: Vec<(f64, f64, f64)> = fig3["window_sweep"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            let c = &r[1];
            (f(&r[0]), f(&c["g2"]), 0.5 * (f(&c["err_lo"]) + f(&c["err_hi"])))
        })
        .collect();
    let wide: Vec<&(f64, f64, f64)> = rows.iter().filter(|r| r.0 > 2.0 * presets::T_C_NS).collect();
    let non_increasing = wide.windows(2).all(|w| w[1].1 <= w[0].1);
    let err = |w: f64| rows.iter().find(|r| r.0 == w).map_or(f64::NAN, |r| r.2);
    let grows = err(3.0) > err(4.0) && err(4.0) > err(5.0);
    let table: Vec<String> = rows.iter().map(|r| format!("{:.0}:{:.2}+/-{:.2}", r.0, r.1, r.2)).collect();
    (non_increasing && grows, format!("width(ns):g2 {}", table.join(" ")))
}

fn length_scaling(cohdrive: &Value) -> Outcome {
    let r = f(&cohdrive["first_revival_ratio"]);
    let t: Vec<f64> = cohdrive["scales"].as_array().unwrap().iter().map(|s| f(&s["first_revival_ns"])).collect();
    ((r - 2.5).abs() <= 0.05, format!("first revivals {:.2} ns and {:.2} ns, ratio {r:.3} (want 2.5 +/- 2%)", t[0], t[1]))
}

fn calibration(s3: &Value, s4: &Value) -> Outcome {
    let errs: Vec<f64> = s3["generators"].as_array().unwrap().iter().map(|g| f(&g["t1_relative_error"])).collect();
    let mut pulls = Vec::new();
    for line in ["base", "preceded"] {
        pulls.push(f(&s4["lines"][line]["intercept_pull"]));
        pulls.push(f(&s4["lines"][line]["slope_pull"]));
    }
    let ok = errs.iter().all(|e| e.abs() <= 0.05) && pulls.iter().all(|p| p.abs() <= 2.0);
    let e: Vec<String> = errs.iter().map(|e| format!("{:+.2}%", 100.0 * e)).collect();
    let p: Vec<String> = pulls.iter().map(|p| format!("{p:+.2}")).collect();
    (ok, format!("T1 errors [{}] (tol 5%); heating pulls [{}] (tol 2 sigma)", e.join(", "), p.join(", ")))
}

fn rates(fig3: &Value) -> Outcome {
    let r = &fig3["rates"];
    let s = f(&r["stokes_per_trial"][0]);
    let a = f(&r["anti_stokes_per_trial"][0]);
    let d = f(&r["dark_per_trial"]);
    let ok = (s / 8e-4 - 1.0).abs() <= 0.2 && (a / 1.7e-4 - 1.0).abs() <= 0.2 && d == 1e-5;
    (ok, format!("Stokes {s:.3e} (8e-4), anti-Stokes {a:.3e} (1.7e-4), tol 20%; dark {d:e}/trial"))
}

fn omit(fig2b: &Value) -> Outcome {
    let n = fig2b["comb_modes"].as_u64().unwrap();
    let peaks = fig2b["peaks"].as_u64().unwrap();
    let fsr = f(&fig2b["device_fsr_hz"]);
    let sp = &fig2b["spacing_hz"];
    let spread = (f(&sp["max"]) - f(&sp["min"])) / fsr;
    let device_ok = peaks == n + 1 && fig2b["extracted_modes"].as_u64() == Some(n) && spread <= 0.1;

    let mut worst: f64 = 0.0;
    let mut dev = presets::device::<f64>();
    let fsr_s = 11e6;
    for jitter in [[0.0, 0.0, 0.0, 0.0, 0.0], [0.1, -0.15, 0.05, 0.12, -0.08], [-0.2, 0.1, -0.1, 0.2, 0.0]] {
        let modes = jitter
            .iter()
            .enumerate()
            .map(|(l, j)| CombMode {
                omega: dev.mech.omega_m + TAU * fsr_s * (l as f64 - 2.0 + j),
                coupling: comb_coupling_for_decay(fsr_s, 10.0) * (1.0 + j),
                linewidth: TAU * 10e3,
            })
            .collect();
        dev.comb = WaveguideModeComb::new(modes).unwrap();
        let drive = OmitDriveParams::new(dev.mech.omega_m, TAU * 10e6, 1.0, 0.1).unwrap();
        let w = dev.mech.omega_m;
        let s = s21_spectrum((w - TAU * 40e6, w + TAU * 40e6), 40001, &dev, &drive).unwrap();
        let ex = extract_mode_comb(&s, &ExtractionConfig::for_device(&dev, &drive)).unwrap();
        if ex.comb.len() != dev.comb.len() {
            worst = f64::INFINITY;
            continue;
        }
        for (a, b) in ex.comb.modes().iter().zip(dev.comb.modes()) {
            worst = worst.max((a.omega - b.omega).abs() / (TAU * fsr_s));
        }
    }
    (
        device_ok && worst <= 0.05,
        format!(
            "device: {n} comb modes -> {peaks} peaks, {} extracted, spacing spread {:.1}% of FSR (tol 10%); closed loop worst {:.2}% of FSR (tol 5%)",
            fig2b["extracted_modes"],
            100.0 * spread,
            100.0 * worst
        ),
    )
}

fn determinism(root: &Path) -> Outcome {
    let mut checked = Vec::new();
    let mut ok = true;
    for id in ["fig2c", "fig3", "fig4", "figS3", "figS4"] {
        let mut loaded = config(id);
        if let Some(p) = loaded.config.pulsed.as_mut() {
            p.trials = 10_000_000;
        }
        let dirs = [root.join(format!("{id}_a")), root.join(format!("{id}_b"))];
        for d in &dirs {
            run(id, &loaded, d);
        }
        let mut names: Vec<_> = std::fs::read_dir(&dirs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for name in &names {
            let a = std::fs::read(dirs[0].join(name)).unwrap();
            let b = std::fs::read(dirs[1].join(name)).unwrap_or_default();
            ok &= a == b;
        }
        checked.push(format!("{id} ({} files)", names.len()));
    }
    (ok, format!("byte-identical reruns: {}", checked.join(", ")))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut failed = Vec::new();
    let mut report = |n: usize, name: &str, (ok, detail): Outcome, t: Instant| {
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("[{tag}] {n:>2} {name}: {detail} ({:.1} s)", t.elapsed().as_secs_f64());
        if !ok {
            failed.push(n);
        }
    };

    let t = Instant::now();
    report(1, "scattering probability", scattering(), t);
    let t = Instant::now();
    report(2, "revival timing", revival_timing(), t);
    let t = Instant::now();
    report(3, "lossless conservation", conservation(), t);

    let t = Instant::now();
    let fig3 = run("fig3", &config("fig3"), &root.join("fig3"));
    report(4, "heralding correlation", heralding(&fig3), t);
    let t = Instant::now();
    report(5, "classical bound", classical_bound(), t);
    let t = Instant::now();
    let fig4 = run("fig4", &config("fig4"), &root.join("fig4"));
    report(6, "time-bin matrix", timebin(&fig4), t);
    let t = Instant::now();
    report(7, "window-width sweep", window_sweep(&fig3), t);
    let t = Instant::now();
    let coh = run("cohdrive", &config("cohdrive"), &root.join("cohdrive"));
    report(8, "length scaling", length_scaling(&coh), t);
    let t = Instant::now();
    let s3 = run("figS3", &config("figS3"), &root.join("figS3"));
    let s4 = run("figS4", &config("figS4"), &root.join("figS4"));
    report(9, "calibration fits", calibration(&s3, &s4), t);
    let t = Instant::now();
    report(10, "click-rate budget", rates(&fig3), t);
    let t = Instant::now();
    let fig2b = run("fig2b", &config("fig2b"), &root.join("fig2b"));
    report(11, "OMIT spectrum", omit(&fig2b), t);
    let t = Instant::now();
    report(12, "determinism", determinism(&root.join("determinism")), t);

    if failed.is_empty() {
        println!("acceptance: all 12 criteria pass");
    } else {
        println!("acceptance: {} of 12 criteria fail: {failed:?}", failed.len());
        std::process::exit(1);
    }
}
