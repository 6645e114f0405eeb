use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use guided_phonon::analysis::{g2_tau_histogram, g2om_scan, timebin_matrix, window_sweep, TimeBinSpec};
use guided_phonon::config::{LoadedConfig, RunConfig};
use guided_phonon::dynamics::fsr_for_revival;
use guided_phonon::io::{self, ClickFile, ClickFormat};
use guided_phonon::mc::{simulate_cw_thermal, PulsedModel};
use guided_phonon::model::fit::{fit_double_exponential, fit_linear_heating, HeatingSample};
use guided_phonon::model::{n_th_from_asymmetry, scattering_probability, PulseKind, PulseSpec};
use guided_phonon::recipes;
use guided_phonon::units::{parse_quantity, Dimension};
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "gphonon", version, about = "Guided-phonon cavity simulation and analysis")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// OMIT spectrum and comb extraction.
    Omit {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Population and correlation traces.
    Dynamics {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Pulsed or CW click generation.
    Simulate {
        #[arg(short, long)]
        config: PathBuf,
        /// Click file to write; `.csv` selects CSV, anything else binary.
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        cw: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Correlation analysis of a click file.
    Analyze {
        clicks: PathBuf,
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long, value_enum, default_value_t = Mode::Scan)]
        mode: Mode,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Fits and thermometry.
    Calibrate {
        #[command(subcommand)]
        what: Calibration,
    },
    /// End-to-end recipe: fig2b, fig2c, fig3, fig4, figS3, figS4, cohdrive.
    Reproduce {
        id: String,
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Scan,
    Sweep,
    Timebin,
    Histogram,
}

#[derive(Subcommand)]
enum Calibration {
    /// Linear heating fit of a `p_s,n_th,sigma` CSV.
    Heating { csv: PathBuf },
    /// Double-exponential fit of a `t,n` CSV.
    Decay { csv: PathBuf },
    /// Thermal occupancy from red/blue sideband click rates.
    Thermometry {
        #[arg(long)]
        gamma_r: f64,
        #[arg(long)]
        gamma_b: f64,
    },
    /// Comb spacing that places a population revival at `target`.
    Fsr {
        #[arg(long, default_value = "170 ns")]
        target: String,
        #[arg(long, default_value_t = 21)]
        modes: usize,
        #[arg(long, default_value = "10 ns")]
        decay: String,
        #[arg(long, default_value = "15 ns")]
        window: String,
        #[arg(long, default_value = "10 MHz")]
        lo: String,
        #[arg(long, default_value = "16 MHz")]
        hi: String,
    },
    /// Scattering probability of a write or read pulse.
    Probability {
        #[arg(long, default_value = "119 fJ")]
        energy: String,
        #[arg(long)]
        read: bool,
        #[arg(short, long)]
        config: Option<PathBuf>,
    },
}

fn load(path: Option<&Path>, fallback: &str) -> Result<LoadedConfig> {
    let loaded = match path {
        Some(p) => LoadedConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => LoadedConfig::parse(recipes::default_config(fallback).expect("built-in config"))?,
    };
    log::info!("config sha256 {}", loaded.hash);
    Ok(loaded)
}

fn out_dir(cfg: &RunConfig, flag: Option<PathBuf>, default: &str) -> PathBuf {
    flag.unwrap_or_else(|| cfg.output_dir(default))
}

fn print(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Omit { config, out } => {
            let l = load(config.as_deref(), "fig2b")?;
            let dir = out_dir(&l.config, out, "out/omit");
            std::fs::create_dir_all(&dir)?;
            print(&recipes::fig2b(&l.config, &dir)?)?;
        }
        Command::Dynamics { config, out } => {
            let mut l = load(config.as_deref(), "fig2c")?;
            l.config.cw = None;
            let dir = out_dir(&l.config, out, "out/dynamics");
            std::fs::create_dir_all(&dir)?;
            print(&recipes::fig2c(&l.config, &dir)?)?;
        }
        Command::Simulate { config, output, cw, seed, trials } => {
            let mut l = load(Some(&config), "")?;
            if seed.is_some() {
                l.config.seed = seed;
            }
            let cfg = &l.config;
            let dev = cfg.device()?;
            let seed = cfg.require_seed()?;
            let stream = if cw || cfg.pulsed.is_none() {
                simulate_cw_thermal(&dev, &cfg.cw_settings()?, seed)?
            } else {
                let (seq, opts, n) = cfg.pulse_setup(&dev)?;
                PulsedModel::new(&dev, &seq, &opts)?.simulate(trials.unwrap_or(n), seed)?
            };
            log::info!("{} clicks in {} trials", stream.records.len(), stream.n_trials);
            let file = ClickFile::from_stream(stream, Some(seed), Some(l.hash.clone()));
            io::write_clicks(&output, &file, ClickFormat::from_path(&output))?;
        }
        Command::Analyze { clicks, config, mode, out } => {
            if std::fs::metadata(&clicks).with_context(|| format!("reading {}", clicks.display()))?.len() == 0 {
                log::warn!("no data: {} is empty", clicks.display());
                println!("no data");
                return Ok(());
            }
            let file = io::read_clicks(&clicks)?;
            if file.records.is_empty() {
                log::warn!("no data: {} contains no clicks", clicks.display());
                println!("no data");
                return Ok(());
            }
            let stream = file.into_stream();
            let needs_config = mode != Mode::Histogram;
            let l = match (&config, needs_config) {
                (Some(p), _) => Some(load(Some(p), "")?),
                (None, true) => bail!("--config is required for this analysis mode"),
                (None, false) => None,
            };
            let cfg = l.map(|l| l.config).unwrap_or_default();
            let dir = out_dir(&cfg, out, "out/analyze");
            std::fs::create_dir_all(&dir)?;
            match mode {
                Mode::Scan => {
                    let scan = g2om_scan(&stream, &cfg.scan_spec()?)?;
                    io::write_scan_csv(&dir.join("scan.csv"), &scan.results)?;
                    io::write_json(&dir.join("scan.json"), &scan)?;
                    print(&json!({ "peak": scan.peak }))?;
                }
                Mode::Sweep => {
                    let sweep = window_sweep(&stream, &cfg.analysis_widths()?, &cfg.scan_spec()?)?;
                    io::write_json(&dir.join("window_sweep.json"), &sweep)?;
                    print(&json!(sweep))?;
                }
                Mode::Timebin => {
                    let dev = cfg.device()?;
                    let (seq, _, _) = cfg.pulse_setup(&dev)?;
                    let w = seq.centers(PulseKind::Write);
                    let r = seq.centers(PulseKind::Read);
                    if w.len() != 2 || r.len() != 2 {
                        bail!("time-bin analysis needs two write and two read pulses");
                    }
                    let mut spec = TimeBinSpec::around([w[0], w[1]], [r[0], r[1]], cfg.timebin_width()?);
                    spec.width = cfg.width()?;
                    spec.dn_max = cfg.analysis.dn_max;
                    let m = timebin_matrix(&stream, &spec)?;
                    io::write_json(&dir.join("timebin.json"), &m)?;
                    print(&json!(m))?;
                }
                Mode::Histogram => {
                    let (bin, max_tau) = if cfg.cw.is_some() { cfg.histogram()? } else { (1.0, 200.0) };
                    let hist = g2_tau_histogram(&stream, bin, max_tau)?;
                    io::write_histogram_csv(&dir.join("histogram.csv"), &hist)?;
                    log::info!("histogram written to {}", dir.display());
                }
            }
        }
        Command::Calibrate { what } => calibrate(what)?,
        Command::Reproduce { id, config, out } => {
            if recipes::default_config(&id).is_none() {
                bail!("unknown recipe '{id}' (expected one of {})", recipes::RECIPES.join(", "));
            }
            let l = load(config.as_deref(), &id)?;
            let dir = out_dir(&l.config, out, &format!("out/{id}"));
            let summary = recipes::run(&id, &l, &dir)?;
            log::info!("wrote {}", dir.join("summary.json").display());
            print(&summary)?;
        }
    }
    Ok(())
}

fn calibrate(what: Calibration) -> Result<()> {
    match what {
        Calibration::Heating { csv } => {
            let rows = io::read_numeric_csv(&csv)?;
            let samples = rows
                .iter()
                .map(|r| match r.as_slice() {
                    [p, n, s] => Ok(HeatingSample { p_s: *p, n_th: *n, sigma: *s }),
                    _ => bail!("expected p_s,n_th,sigma rows"),
                })
                .collect::<Result<Vec<_>>>()?;
            print(&json!(fit_linear_heating(&samples)?))
        }
        Calibration::Decay { csv } => {
            let rows = io::read_numeric_csv(&csv)?;
            let trace = rows
                .iter()
                .map(|r| match r.as_slice() {
                    [t, n] => Ok((*t, *n)),
                    _ => bail!("expected t,n rows"),
                })
                .collect::<Result<Vec<_>>>()?;
            print(&json!(fit_double_exponential(&trace)?))
        }
        Calibration::Thermometry { gamma_r, gamma_b } => {
            print(&json!({ "n_th": n_th_from_asymmetry(gamma_r, gamma_b)? }))
        }
        Calibration::Fsr { target, modes, decay, window, lo, hi } => {
            let dev = RunConfig::default().device()?;
            let hz = |s: &str| -> Result<f64> { Ok(parse_quantity(s, Dimension::AngularFrequency)? / std::f64::consts::TAU) };
            let ns = |s: &str| parse_quantity(s, Dimension::TimeNs);
            let fsr = fsr_for_revival(
                &dev.mech,
                modes,
                ns(&decay)?,
                std::f64::consts::TAU * guided_phonon::presets::LINEWIDTH_FLOOR_HZ,
                ns(&target)?,
                ns(&window)?,
                (hz(&lo)?, hz(&hi)?),
            )?;
            print(&json!({ "fsr_hz": fsr }))
        }
        Calibration::Probability { energy, read, config } => {
            let cfg = match config {
                Some(p) => load(Some(&p), "")?.config,
                None => RunConfig::default(),
            };
            let dev = cfg.device()?;
            let kind = if read { PulseKind::Read } else { PulseKind::Write };
            let pulse = PulseSpec::new(kind, parse_quantity(&energy, Dimension::Energy)?, 40.0, 0.0)?;
            print(&json!({ "p": scattering_probability(&pulse, &dev.optics, &dev.mech)? }))
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        log::error!("{e:#}");
        std::process::exit(1);
    }
}
