use guided_phonon::analysis::{g2om_scan, ScanSpec};
use guided_phonon::config::{config_hash, LoadedConfig, RunConfig};
use guided_phonon::io::{self, ClickFile, ClickFormat, CLICK_MAGIC, CSV_HEADER};
use guided_phonon::mc::{substream, streams, ClickRecord, ClickStream};
use guided_phonon::{recipes, Error};
use rand::Rng;

fn random_stream(n: usize, seed: u64) -> ClickStream {
    let mut r = substream(seed, streams::SYNTHETIC, 0);
    let mut records: Vec<ClickRecord> = (0..n)
        .map(|_| ClickRecord {
            trial: r.random_range(0..4_000_000),
            detector: r.random_range(0..2),
            t_ps: r.random_range(0..200_000_000),
        })
        .collect();
    records.sort_by_key(|c| (c.trial, c.t_ps));
    ClickStream { records, n_trials: 4_000_000, period_ps: 200_000_000, n_detectors: 2 }
}

#[test]
fn million_records_round_trip_in_both_encodings() {
    let dir = tempfile::tempdir().unwrap();
    let stream = random_stream(1_000_000, 1);
    let file = ClickFile::from_stream(stream, Some(9), Some("abc".into()));
    for (name, fmt) in [("c.bin", ClickFormat::Binary), ("c.csv", ClickFormat::Csv)] {
        let p = dir.path().join(name);
        io::write_clicks(&p, &file, fmt).unwrap();
        assert_eq!(io::read_clicks(&p).unwrap(), file);
    }
    let bin = std::fs::read(dir.path().join("c.bin")).unwrap();
    assert_eq!(&bin[..4], &CLICK_MAGIC);
    assert_eq!(u16::from_le_bytes([bin[4], bin[5]]), 1);
    assert_eq!(bin.len(), 6 + 13 * 1_000_000);
    let r0 = &file.records[0];
    assert_eq!(u32::from_le_bytes(bin[6..10].try_into().unwrap()), r0.trial);
    assert_eq!(bin[10], r0.detector);
    assert_eq!(u64::from_le_bytes(bin[11..19].try_into().unwrap()), r0.t_ps);
    let csv = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
}

#[test]
fn encodings_give_identical_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = substream(3, streams::SYNTHETIC, 1);
    let mut records = Vec::new();
    for trial in 0..200_000u32 {
        let mut tr: Vec<ClickRecord> = (0..r.random_range(0..3))
            .map(|_| ClickRecord { trial, detector: r.random_range(0..2), t_ps: r.random_range(250_000..550_000) })
            .collect();
        tr.sort_by_key(|c| c.t_ps);
        records.extend(tr);
    }
    let stream = ClickStream { records, n_trials: 200_000, period_ps: 1_000_000, n_detectors: 2 };
    let file = ClickFile::from_stream(stream, None, None);
    let spec = ScanSpec {
        write_area: (260.0, 340.0),
        fixed_tau: 170.0,
        width: 6.0,
        delays: ScanSpec::delay_grid(140.0, 200.0, 2.0),
        dn_max: 100,
    };
    let analyze = |name: &str, fmt| {
        let p = dir.path().join(name);
        io::write_clicks(&p, &file, fmt).unwrap();
        g2om_scan(&io::read_clicks(&p).unwrap().into_stream(), &spec).unwrap()
    };
    assert_eq!(analyze("a.csv", ClickFormat::Csv), analyze("a.bin", ClickFormat::Binary));
}

#[test]
fn malformed_click_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("junk.bin");
    std::fs::write(&p, [0x50, 0x48, 0x43, 0x4b, 1, 0, 0, 0]).unwrap();
    assert!(io::read_clicks(&p).is_err());
    std::fs::write(&p, [0xff, 0xfe, 0x00, 0x01]).unwrap();
    assert!(matches!(io::read_clicks(&p), Err(Error::NotAClickFile)));
    let p = dir.path().join("unsorted.csv");
    std::fs::write(&p, format!("{CSV_HEADER}\n1,0,5\n0,1,7\n")).unwrap();
    assert!(matches!(io::read_clicks(&p), Err(Error::Unsorted(_))));
    let p = dir.path().join("missing.bin");
    assert!(io::read_clicks(&p).is_err());
}

#[test]
fn missing_sidecar_infers_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bare.csv");
    std::fs::write(&p, format!("{CSV_HEADER}\n0,0,5\n3,1,70\n")).unwrap();
    let f = io::read_clicks(&p).unwrap();
    assert_eq!((f.meta.n_trials, f.meta.period_ps, f.meta.n_detectors), (4, 71, 2));
    assert_eq!(f.meta.seed, None);
}

#[test]
fn builtin_recipe_configs_validate() {
    for id in recipes::RECIPES {
        let text = recipes::default_config(id).unwrap();
        let l = LoadedConfig::parse(text).unwrap_or_else(|e| panic!("{id}: {e}"));
        assert_eq!(l.hash, config_hash(text));
        assert_eq!(l.hash.len(), 64);
    }
    assert!(recipes::default_config("fig9").is_none());
}

#[test]
fn hash_tracks_source_text() {
    let a = "seed = 1\n";
    let b = "seed = 1\n\n";
    assert_eq!(LoadedConfig::parse(a).unwrap().config, LoadedConfig::parse(b).unwrap().config);
    assert_ne!(config_hash(a), config_hash(b));
}

#[test]
fn schema_violations_are_rejected() {
    let bad = [
        "[device]\nomega_m = 4.98e9\n",
        "[device]\nomega_m = \"4.98 ns\"\n",
        "[device.comb]\nfsr = \"11\"\n",
        "[pulsed]\ntrials = 10\n",
        "[device]\nunknown = 1\n",
        "seed = 1\n[pulsed]\ntrials = 0\n",
        "[analysis]\nwidth = \"6\"\n",
    ];
    for text in bad {
        assert!(LoadedConfig::parse(text).is_err(), "accepted: {text:?}");
    }
}

#[test]
fn output_dir_env_override() {
    let cfg = RunConfig { output_dir: Some("from-config".into()), ..Default::default() };
    std::env::remove_var("GPHONON_OUT_DIR");
    assert_eq!(cfg.output_dir("dflt"), std::path::PathBuf::from("from-config"));
    assert_eq!(RunConfig::default().output_dir("dflt"), std::path::PathBuf::from("dflt"));
    std::env::set_var("GPHONON_OUT_DIR", "/tmp/elsewhere");
    assert_eq!(cfg.output_dir("dflt"), std::path::PathBuf::from("/tmp/elsewhere"));
    std::env::remove_var("GPHONON_OUT_DIR");
}

#[test]
fn units_resolve_into_device() {
    let l = LoadedConfig::parse("[device]\nomega_m = \"5 GHz\"\ng0 = \"460 kHz\"\n[device.comb]\nmodes = 0\n").unwrap();
    let dev = l.config.device().unwrap();
    assert!((dev.mech.omega_m - std::f64::consts::TAU * 5e9).abs() < 1.0);
    assert!(dev.comb.is_empty());
}
