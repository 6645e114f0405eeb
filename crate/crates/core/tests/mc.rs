use guided_phonon::analysis::{count_coincidences, g2_tau_histogram, CorrelationResult, WindowSpec, DEFAULT_DN_MAX};
use guided_phonon::mc::analytic::{g2om_windowed, Cutoff};
use guided_phonon::mc::{
    detect, mean_intensity, sample_read, sample_write, simulate_cw_thermal, substream, streams, ClickStream, CwSettings,
    Detectors, Envelope, PulseSequence, PulsedModel, PulsedOptions, Scheme, ThermalSettings,
};
use guided_phonon::model::{DetectionChain, PulseKind, PulseSpec, WaveguideModeComb};
use guided_phonon::{presets, DeviceModelF64};
use proptest::prelude::*;
use rand::Rng;

fn rng(i: u64) -> guided_phonon::mc::TrialRng {
    substream(77, streams::SYNTHETIC, i)
}

fn mean_sd(xs: impl Iterator<Item = f64>) -> (f64, f64, f64) {
    let v: Vec<f64> = xs.collect();
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt(), n)
}

#[test]
fn zero_write_probability_creates_no_pairs() {
    let mut r = rng(0);
    for _ in 0..10_000 {
        assert_eq!(sample_write(0.0, 0.5, &mut r).pairs, 0);
    }
}

#[test]
fn pair_statistics_without_seed() {
    let p = 0.014;
    let mut r = rng(1);
    let draws: Vec<u32> = (0..1_000_000).map(|_| sample_write(p, 0.0, &mut r).pairs).collect();
    let (mean, sd, n) = mean_sd(draws.iter().map(|&k| k as f64));
    assert!((mean - p).abs() < 3.0 * sd / n.sqrt(), "mean pairs {mean}");
    let lambda = p / (1.0 + p);
    let tail = draws.iter().filter(|&&k| k >= 1).count() as f64 / n;
    let sigma = (lambda * (1.0 - lambda) / n).sqrt();
    assert!((tail - lambda).abs() < 3.0 * sigma, "P(k>=1) = {tail}");
    assert!((lambda - 0.0138).abs() < 5e-5);
}

#[test]
fn thermal_seed_stimulates_pairs() {
    let (p, n_th) = (0.02, 0.5);
    let mut r = rng(2);
    let (mean, sd, n) = mean_sd((0..1_000_000).map(|_| sample_write(p, n_th, &mut r).pairs as f64));
    assert!((mean - p * (1.0 + n_th)).abs() < 3.0 * sd / n.sqrt(), "mean pairs {mean}");
}

#[test]
fn read_conversion_is_linear() {
    let mut r = rng(3);
    let empty = guided_phonon::mc::TrialOutcome::default();
    for _ in 0..10_000 {
        assert_eq!(sample_read(empty, 0.3, 0.0, &mut r).read_converted, 0);
    }
    let (p_read, heating) = (0.2, 0.4);
    let start = guided_phonon::mc::TrialOutcome { pairs: 2, thermal_initial: 1, ..Default::default() };
    let (mean, sd, n) = mean_sd((0..500_000).map(|_| sample_read(start, p_read, heating, &mut r).read_converted as f64));
    let want = p_read * (3.0 + heating);
    assert!((mean - want).abs() < 3.0 * sd / n.sqrt(), "mean converted {mean} vs {want}");
}

#[test]
fn heralded_subensemble_reads_more() {
    let mut r = rng(4);
    let (mut her, mut all) = ((0.0, 0u64), (0.0, 0u64));
    for _ in 0..2_000_000 {
        let w = sample_write(0.05, 0.3, &mut r);
        let o = sample_read(w, 0.1, 0.2, &mut r);
        all.0 += o.read_converted as f64;
        all.1 += 1;
        if o.pairs >= 1 {
            her.0 += o.read_converted as f64;
            her.1 += 1;
        }
    }
    assert!(her.0 / her.1 as f64 > all.0 / all.1 as f64 + 0.05);
}

proptest! {
    #[test]
    fn read_never_exceeds_available_phonons(p_w in 0.0f64..0.3, n in 0.0f64..2.0, p_r in 0.0f64..=1.0, h in 0.0f64..2.0, seed in 0u64..1000) {
        let mut r = substream(seed, streams::SYNTHETIC, 9);
        let o = sample_read(sample_write(p_w, n, &mut r), p_r, h, &mut r);
        prop_assert!(o.read_converted <= o.pairs + o.thermal_initial + o.thermal_heated);
    }
}

fn detectors(eta: f64, dead_ns: f64, dark: f64) -> Detectors {
    Detectors { eta, n_detectors: 2, dead_ps: (dead_ns * 1000.0) as u64, dark_per_trial: dark, period_ps: 200_000_000 }
}

#[test]
fn detection_limits() {
    let env = Envelope::from_fwhm(300.0, 40.0);
    let mut r = rng(5);
    for t in 0..1000 {
        assert!(detect(t, 5, &env, &detectors(0.0, 100.0, 0.0), &mut r).is_empty());
    }
    let d = detectors(1.0, 100.0, 0.0);
    for t in 0..1000 {
        let mut out = Vec::new();
        d.register(t, &[250.0, 250.0, 250.0], &mut r, &mut out);
        for det in 0..2 {
            assert!(out.iter().filter(|c| c.detector == det).count() <= 1);
        }
        assert!(!out.is_empty());
    }
}

#[test]
fn dark_counts_match_device_rate() {
    let d = detectors(0.038, 100.0, 1e-5);
    let mut r = rng(6);
    let mut out = Vec::new();
    for t in 0..10_000_000u32 {
        d.register(t, &[], &mut r, &mut out);
    }
    assert!((70..=130).contains(&out.len()), "{} dark clicks", out.len());
}

#[test]
fn longer_dead_time_never_adds_clicks() {
    let arrivals: Vec<Vec<f64>> = (0..2000)
        .map(|i| {
            let mut r = rng(1000 + i);
            (0..r.random_range(0..12)).map(|_| r.random_range(0.0..600.0)).collect()
        })
        .collect();
    let total = |dead: f64| -> usize {
        let d = detectors(0.7, dead, 0.01);
        arrivals
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let mut out = Vec::new();
                d.register(i as u32, a, &mut rng(5000 + i as u64), &mut out);
                out.len()
            })
            .sum()
    };
    let counts: Vec<usize> = [0.0, 1.0, 10.0, 50.0, 100.0, 300.0].iter().map(|&d| total(d)).collect();
    for w in counts.windows(2) {
        assert!(w[1] <= w[0], "{counts:?}");
    }
}

fn pulsed_device(eta: f64, dark: f64) -> DeviceModelF64 {
    let mut dev = presets::device::<f64>();
    dev.comb = presets::comb_with(21, 13.632767587e6, 10.0);
    dev.geometry = None;
    dev.detection.eta_det_measured = Some(eta);
    dev.detection.dark_rate_per_trial = dark;
    dev
}

fn single_sequence() -> PulseSequence {
    let w = PulseSpec::new(PulseKind::Write, 0.0, 40.0, 300.0).unwrap();
    let r = PulseSpec::new(PulseKind::Read, 0.0, 40.0, 470.0).unwrap();
    PulseSequence::new(vec![w, r], 200.0, Scheme::SingleWriteRead).unwrap()
}

fn options(p_w: f64, p_r: f64, n_write: f64, n_read: f64, correlated: bool) -> PulsedOptions {
    PulsedOptions {
        thermal: Some(ThermalSettings { n_write, n_read }),
        probabilities: Some(vec![p_w, p_r]),
        correlated,
        ..Default::default()
    }
}

fn wide_window(stream: &ClickStream) -> CorrelationResult {
    let w = WindowSpec { center_write: 300.0, center_read: 470.0, width: 100.0 };
    CorrelationResult::new(170.0, count_coincidences(stream, &w, DEFAULT_DN_MAX).unwrap(), stream.n_trials)
}

#[test]
fn monte_carlo_agrees_with_oracle_over_random_parameters() {
    let mut draw = substream(2025, streams::SYNTHETIC, 0);
    for k in 0..10u64 {
        let p_w = draw.random_range(0.01..0.08);
        let p_r = draw.random_range(0.05..0.3);
        let eta = draw.random_range(0.2..0.6);
        let n_write = draw.random_range(0.0..0.5);
        let n_read = n_write + draw.random_range(0.0..0.3);
        let dev = pulsed_device(eta, 1e-5);
        let model = PulsedModel::new(&dev, &single_sequence(), &options(p_w, p_r, n_write, n_read, true)).unwrap();
        let stream = model.simulate(1_000_000, 100 + k).unwrap();
        let mc = wide_window(&stream);
        let oracle = g2om_windowed(&model, &[(250.0, 420.0)], 100.0, Cutoff::Adaptive).unwrap().g2;
        let (g2, sigma) = (mc.g2.unwrap(), mc.sigma().unwrap());
        assert!((g2 - oracle).abs() < 3.0 * sigma, "draw {k}: MC {g2} +/- {sigma}, oracle {oracle}");
    }
}

#[test]
fn uncorrelated_source_gives_unit_correlation() {
    let dev = pulsed_device(0.5, 0.0);
    let model = PulsedModel::new(&dev, &single_sequence(), &options(0.05, 0.2, 0.3, 0.5, false)).unwrap();
    let r = wide_window(&model.simulate(2_000_000, 11).unwrap());
    let (g2, sigma) = (r.g2.unwrap(), r.sigma().unwrap());
    assert!((g2 - 1.0).abs() < 3.0 * sigma, "{g2} +/- {sigma}");
}

#[test]
fn pulsed_output_is_independent_of_thread_count() {
    let dev = pulsed_device(0.3, 1e-3);
    let model = PulsedModel::new(&dev, &single_sequence(), &options(0.05, 0.2, 0.3, 0.4, true)).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| model.simulate(300_000, 5).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(3));
    assert_eq!(a, model.simulate(300_000, 5).unwrap());
    assert_ne!(a.records, model.simulate(300_000, 6).unwrap().records);
    a.validate().unwrap();
}

fn cw_device(comb: WaveguideModeComb<f64>, gamma_m: f64) -> DeviceModelF64 {
    let mut dev = presets::device::<f64>();
    dev.comb = comb;
    dev.mech.gamma_m = gamma_m;
    dev.detection = DetectionChain { dead_time: 0.0, ..DetectionChain::ideal() };
    dev
}

#[test]
fn cw_sampler_reproduces_mean_occupation() {
    let dev = cw_device(presets::comb(), presets::mech::<f64>().gamma_m);
    let s = CwSettings { duration_ns: 2e6, segment_ns: 1000.0, dt_ns: 0.5, mean_occupation: 1.0, rate_scale: 1.0 };
    let n = mean_intensity(&dev, &s, 8).unwrap();
    assert!((n - 1.0).abs() < 0.01, "time-averaged intensity {n}");
}

#[test]
fn isolated_mode_hbt_matches_lorentzian_thermal_light() {
    let gamma = 5e7;
    let dev = cw_device(WaveguideModeComb::empty(), gamma);
    let s = CwSettings { duration_ns: 4e5, segment_ns: 2000.0, dt_ns: 0.1, mean_occupation: 1.0, rate_scale: 0.5 };
    let stream = simulate_cw_thermal(&dev, &s, 12).unwrap();
    let bw = 2.0;
    let hist = g2_tau_histogram(&stream, bw, 60.0).unwrap();
    let rate = gamma * 1e-9;
    for b in &hist {
        let (a, c) = (b.tau - bw / 2.0, b.tau + bw / 2.0);
        let prim = |t: f64| if t >= 0.0 { -(-rate * t).exp() / rate } else { (rate * t).exp() / rate };
        let want = 1.0 + (prim(c) - prim(a) + if a < 0.0 && c > 0.0 { 2.0 / rate } else { 0.0 }) / bw;
        assert!((b.g2 - want).abs() < 4.0 * b.err, "tau {}: {} +/- {} vs {want}", b.tau, b.g2, b.err);
    }
}
