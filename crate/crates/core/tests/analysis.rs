use guided_phonon::analysis::{
    binomial_error, count_coincidences, g2_tau_histogram, g2om_scan, timebin_matrix, window_sweep, CorrelationResult,
    ScanSpec, TimeBinSpec, WindowSpec, DEFAULT_DN_MAX,
};
use guided_phonon::mc::analytic::{g2om_windowed, Cutoff};
use guided_phonon::mc::{
    poisson, substream, streams, ClickRecord, ClickStream, PulseSequence, PulsedModel, PulsedOptions, Scheme,
    ThermalSettings,
};
use guided_phonon::model::{PulseKind, PulseSpec};
use guided_phonon::{presets, Error};
use proptest::prelude::*;
use rand::Rng;

const PERIOD_PS: u64 = 1_000_000;

/// Independent Poisson clicks, uniform over `[lo, hi)` ns, on two detectors.
fn poisson_stream(n_trials: u32, mean: f64, lo: f64, hi: f64, seed: u64) -> ClickStream {
    let mut records = Vec::new();
    for trial in 0..n_trials {
        let mut r = substream(seed, streams::SYNTHETIC, trial as u64);
        let mut tr: Vec<ClickRecord> = (0..poisson(mean, &mut r))
            .map(|_| ClickRecord {
                trial,
                detector: r.random_range(0..2),
                t_ps: (r.random_range(lo..hi) * 1000.0) as u64,
            })
            .collect();
        tr.sort_by_key(|c| c.t_ps);
        records.extend(tr);
    }
    ClickStream { records, n_trials: n_trials as u64, period_ps: PERIOD_PS, n_detectors: 2 }
}

fn scan_spec() -> ScanSpec {
    ScanSpec {
        write_area: (100.0, 160.0),
        fixed_tau: 200.0,
        width: 6.0,
        delays: ScanSpec::delay_grid(180.0, 220.0, 2.0),
        dn_max: DEFAULT_DN_MAX,
    }
}

#[test]
fn empty_stream_has_undefined_correlation() {
    let s = ClickStream { records: vec![], n_trials: 10, period_ps: PERIOD_PS, n_detectors: 2 };
    let w = WindowSpec { center_write: 100.0, center_read: 300.0, width: 6.0 };
    let c = count_coincidences(&s, &w, DEFAULT_DN_MAX).unwrap();
    assert_eq!((c.n_same, c.n_diff_mean), (0, 0.0));
    let r = CorrelationResult::new(200.0, c, s.n_trials);
    assert!(r.g2.is_none() && r.err_lo.is_none() && r.err_hi.is_none());
    let scan = g2om_scan(&s, &scan_spec()).unwrap();
    assert!(scan.peak.is_none() && scan.results.iter().all(|r| r.g2.is_none()));
}

#[test]
fn independent_clicks_balance_same_and_cross_trial_pairs() {
    let s = poisson_stream(200_000, 0.5, 0.0, 600.0, 1);
    let w = WindowSpec { center_write: 150.0, center_read: 400.0, width: 100.0 };
    let c = count_coincidences(&s, &w, DEFAULT_DN_MAX).unwrap();
    let sigma = (c.n_same as f64).sqrt();
    assert!((c.n_same as f64 - c.n_diff_mean).abs() < 3.0 * sigma, "{c:?}");
}

#[test]
fn uncorrelated_scans_rarely_exceed_three_sigma() {
    let (mut outliers, mut total) = (0, 0);
    for seed in 0..40 {
        let s = poisson_stream(40_000, 2.0, 0.0, 500.0, 100 + seed);
        for r in g2om_scan(&s, &scan_spec()).unwrap().results {
            let g2 = r.g2.unwrap();
            let err = if g2 > 1.0 { r.err_lo.unwrap() } else { r.err_hi.unwrap() };
            total += 1;
            if (g2 - 1.0).abs() > 3.0 * err {
                outliers += 1;
            }
        }
    }
    assert!(outliers as f64 <= 0.01 * total as f64, "{outliers} of {total}");
}

#[test]
fn scan_is_invariant_under_global_translation() {
    let s = poisson_stream(20_000, 3.0, 50.0, 450.0, 2);
    let shift = 123.456;
    let moved = ClickStream {
        records: s.records.iter().map(|r| ClickRecord { t_ps: r.t_ps + 123_456, ..*r }).collect(),
        ..s.clone()
    };
    let spec = scan_spec();
    let spec2 = ScanSpec { write_area: (spec.write_area.0 + shift, spec.write_area.1 + shift), ..spec.clone() };
    let a = g2om_scan(&s, &spec).unwrap();
    let b = g2om_scan(&moved, &spec2).unwrap();
    for (x, y) in a.results.iter().zip(&b.results) {
        assert_eq!((x.n_same, x.g2), (y.n_same, y.g2));
    }
    assert_eq!(a, g2om_scan(&s, &spec).unwrap());
}

#[test]
fn doubling_dn_max_stays_within_baseline_error() {
    let s = poisson_stream(100_000, 1.0, 0.0, 600.0, 3);
    let w = WindowSpec { center_write: 150.0, center_read: 400.0, width: 60.0 };
    let a = count_coincidences(&s, &w, 100).unwrap().n_diff_mean;
    let b = count_coincidences(&s, &w, 200).unwrap().n_diff_mean;
    let se = (a / 100.0).sqrt();
    assert!((a - b).abs() < se, "{a} vs {b}, standard error {se}");
}

#[test]
fn coincidences_add_over_window_partitions() {
    let s = poisson_stream(50_000, 4.0, 0.0, 600.0, 4);
    let whole = count_coincidences(&s, &WindowSpec { center_write: 150.0, center_read: 400.0, width: 12.0 }, 50).unwrap();
    let (mut same, mut diff) = (0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            let w = WindowSpec { center_write: 146.0 + 4.0 * i as f64, center_read: 396.0 + 4.0 * j as f64, width: 4.0 };
            let c = count_coincidences(&s, &w, 50).unwrap();
            same += c.n_same;
            diff += c.n_diff_mean;
        }
    }
    assert_eq!(same, whole.n_same);
    assert!((diff - whole.n_diff_mean).abs() < 1e-9 * diff.max(1.0));
}

proptest! {
    #[test]
    fn binomial_bars_reach_gaussian_limit(k in 450u64..20_000, scale in 0.5f64..5.0) {
        let n_diff = k as f64 / scale;
        let (lo, hi) = binomial_error(k, 1_000_000_000, n_diff);
        let g = (k as f64).sqrt() / n_diff;
        prop_assert!(lo <= hi);
        prop_assert!((lo / g - 1.0).abs() < 0.05 && (hi / g - 1.0).abs() < 0.05, "{} {} vs {}", lo, hi, g);
    }
}

#[test]
fn clicks_below_timestamp_resolution_rejected() {
    let s = poisson_stream(10, 1.0, 0.0, 500.0, 5);
    let spec = ScanSpec { width: 0.0004, ..scan_spec() };
    assert!(matches!(g2om_scan(&s, &spec), Err(Error::InvalidParameter(_))));
    assert!(window_sweep(&s, &[6.0, -1.0], &scan_spec()).is_err());
}

#[test]
fn full_area_window_matches_fixed_windows() {
    let s = poisson_stream(30_000, 3.0, 0.0, 500.0, 6);
    let spec = ScanSpec { width: 60.0, delays: vec![200.0], ..scan_spec() };
    let r = g2om_scan(&s, &spec).unwrap().results[0];
    let c = count_coincidences(&s, &WindowSpec { center_write: 130.0, center_read: 330.0, width: 60.0 }, DEFAULT_DN_MAX).unwrap();
    assert_eq!(r.n_same, c.n_same);
    assert!((r.n_diff_mean - c.n_diff_mean).abs() < 1e-9);
}

#[test]
fn poissonian_histogram_is_flat() {
    let s = poisson_stream(100_000, 3.0, 0.0, 1000.0, 7);
    let hist = g2_tau_histogram(&s, 10.0, 200.0).unwrap();
    for b in &hist {
        assert!((b.g2 - 1.0).abs() < 4.0 * b.err, "tau {}: {} +/- {}", b.tau, b.g2, b.err);
    }
}

fn model(pulses: &[(PulseKind, f64)], probabilities: Vec<f64>, eta: f64, scheme: Scheme) -> PulsedModel {
    let mut dev = presets::device::<f64>();
    dev.comb = presets::comb_with(21, 13.632767587e6, 10.0);
    dev.geometry = None;
    dev.detection.eta_det_measured = Some(eta);
    let pulses = pulses.iter().map(|&(k, c)| PulseSpec::new(k, 0.0, 40.0, c).unwrap()).collect();
    let seq = PulseSequence::new(pulses, 200.0, scheme).unwrap();
    let opts = PulsedOptions {
        thermal: Some(ThermalSettings { n_write: 0.2, n_read: 0.4 }),
        probabilities: Some(probabilities),
        ..Default::default()
    };
    PulsedModel::new(&dev, &seq, &opts).unwrap()
}

#[test]
fn binomial_intervals_cover_oracle() {
    let m = model(&[(PulseKind::Write, 300.0), (PulseKind::Read, 470.0)], vec![0.05, 0.2], 0.5, Scheme::SingleWriteRead);
    let w = WindowSpec { center_write: 300.0, center_read: 470.0, width: 40.0 };
    let oracle = g2om_windowed(&m, &[(280.0, 450.0)], 40.0, Cutoff::Adaptive).unwrap().g2;
    let runs = 400;
    let covered = (0..runs)
        .filter(|&i| {
            let s = m.simulate(50_000, 10_000 + i).unwrap();
            let r = CorrelationResult::new(170.0, count_coincidences(&s, &w, DEFAULT_DN_MAX).unwrap(), s.n_trials);
            let g = r.g2.unwrap();
            g - r.err_lo.unwrap() <= oracle && oracle <= g + r.err_hi.unwrap()
        })
        .count();
    let frac = covered as f64 / runs as f64;
    assert!((frac - 0.68).abs() <= 0.05, "coverage {frac}");
}

fn double_model(eta: f64) -> PulsedModel {
    use PulseKind::{Read, Write};
    model(
        &[(Write, 300.0), (Write, 345.0), (Read, 470.0), (Read, 515.0)],
        vec![0.04, 0.04, 0.2, 0.2],
        eta,
        Scheme::DoubleWriteRead,
    )
}

#[test]
fn symmetric_time_bins_are_indistinguishable() {
    let s = double_model(0.5).simulate(1_000_000, 21).unwrap();
    let m = timebin_matrix(&s, &TimeBinSpec::around([300.0, 345.0], [470.0, 515.0], 40.0)).unwrap();
    let (ee, ll) = (m.cells[0][0], m.cells[1][1]);
    let d = ee.g2.unwrap() - ll.g2.unwrap();
    let s2 = (ee.sigma().unwrap().powi(2) + ll.sigma().unwrap().powi(2)).sqrt();
    assert!(d.abs() < 3.0 * s2, "EE {:?} LL {:?}", ee.g2, ll.g2);
    assert!(ee.g2.unwrap() > 2.0 && m.cells[0][1].g2.unwrap() < ee.g2.unwrap());
}

#[test]
fn missing_late_write_leaves_cells_undefined() {
    let s = model(&[(PulseKind::Write, 300.0), (PulseKind::Read, 470.0)], vec![0.05, 0.2], 0.5, Scheme::SingleWriteRead)
        .simulate(100_000, 22)
        .unwrap();
    let mut spec = TimeBinSpec::around([300.0, 345.0], [470.0, 515.0], 40.0);
    let s = ClickStream { records: s.records.into_iter().filter(|r| r.t_ps < 320_000 || r.t_ps > 420_000).collect(), ..s };
    let m = timebin_matrix(&s, &spec).unwrap();
    assert!(m.cells[1][0].g2.is_none() && m.cells[1][1].g2.is_none());
    assert!(m.cells[0][0].g2.is_some());
    spec.write_bins[1] = (310.0, 350.0);
    spec.read_bins[1] = (480.0, 520.0);
    spec.delays[1] = [160.0, 170.0];
    assert!(matches!(timebin_matrix(&s, &spec), Err(Error::AmbiguousClickAssignment(_))));
}
