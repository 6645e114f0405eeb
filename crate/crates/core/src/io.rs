//! Click files, spectra, traces and result tables.
//!
//! Click payloads come in two encodings: CSV with header `trial,detector,t_ps`
//! and a binary form (`PHCL`, u16 LE version, then 13-byte LE records
//! `u32 trial, u8 detector, u64 t_ps`). Run metadata lives in a JSON sidecar
//! `<file>.meta.json`.

use crate::analysis::{CorrelationResult, HistogramBin};
use crate::error::{Error, Result};
use crate::mc::{ClickRecord, ClickStream};
use crate::omit::{Spectrum, SpectrumKind, SpectrumValues};
use crate::scalar::Complex;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const CLICK_MAGIC: [u8; 4] = *b"PHCL";
pub const CLICK_VERSION: u16 = 1;
pub const CSV_HEADER: &str = "trial,detector,t_ps";
const RECORD_BYTES: usize = 13;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickMeta {
    pub version: u16,
    pub period_ps: u64,
    pub n_detectors: u8,
    pub n_trials: u64,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickFile {
    pub meta: ClickMeta,
    pub records: Vec<ClickRecord>,
}

impl ClickFile {
    pub fn from_stream(stream: ClickStream, seed: Option<u64>, config_hash: Option<String>) -> Self {
        Self {
            meta: ClickMeta {
                version: CLICK_VERSION,
                period_ps: stream.period_ps,
                n_detectors: stream.n_detectors,
                n_trials: stream.n_trials,
                seed,
                config_hash,
            },
            records: stream.records,
        }
    }

    pub fn into_stream(self) -> ClickStream {
        ClickStream {
            records: self.records,
            n_trials: self.meta.n_trials,
            period_ps: self.meta.period_ps,
            n_detectors: self.meta.n_detectors,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClickFormat {
    Csv,
    Binary,
}

impl ClickFormat {
    /// `.csv` is CSV, anything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Binary,
        }
    }
}

fn check_sorted(records: &[ClickRecord]) -> Result<()> {
    match records.windows(2).position(|w| (w[0].trial, w[0].t_ps) > (w[1].trial, w[1].t_ps)) {
        Some(i) => Err(Error::Unsorted(i + 1)),
        None => Ok(()),
    }
}

pub fn encode_binary(records: &[ClickRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + RECORD_BYTES * records.len());
    out.extend_from_slice(&CLICK_MAGIC);
    out.extend_from_slice(&CLICK_VERSION.to_le_bytes());
    for r in records {
        out.extend_from_slice(&r.trial.to_le_bytes());
        out.push(r.detector);
        out.extend_from_slice(&r.t_ps.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<Vec<ClickRecord>> {
    if bytes.len() < 4 || bytes[..4] != CLICK_MAGIC {
        return Err(Error::NotAClickFile);
    }
    if bytes.len() < 6 {
        return Err(Error::Truncated("missing version".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CLICK_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let payload = &bytes[6..];
    if payload.len() % RECORD_BYTES != 0 {
        return Err(Error::Truncated(format!("{} trailing bytes", payload.len() % RECORD_BYTES)));
    }
    let records: Vec<ClickRecord> = payload
        .chunks_exact(RECORD_BYTES)
        .map(|c| ClickRecord {
            trial: u32::from_le_bytes(c[0..4].try_into().expect("4 bytes")),
            detector: c[4],
            t_ps: u64::from_le_bytes(c[5..13].try_into().expect("8 bytes")),
        })
        .collect();
    check_sorted(&records)?;
    Ok(records)
}

pub fn encode_csv(records: &[ClickRecord]) -> String {
    let mut s = String::with_capacity(24 * (records.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(s, "{},{},{}", r.trial, r.detector, r.t_ps);
    }
    s
}

pub fn decode_csv(text: &str) -> Result<Vec<ClickRecord>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::NotAClickFile);
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse { line: i + 2, msg: msg.to_string() };
        let mut f = line.split(',');
        let mut next = || f.next().map(str::trim).ok_or_else(|| bad("expected 3 fields"));
        let trial = next()?.parse().map_err(|_| bad("bad trial"))?;
        let detector = next()?.parse().map_err(|_| bad("bad detector"))?;
        let t_ps = next()?.parse().map_err(|_| bad("bad t_ps"))?;
        if f.next().is_some() {
            return Err(bad("expected 3 fields"));
        }
        records.push(ClickRecord { trial, detector, t_ps });
    }
    check_sorted(&records)?;
    Ok(records)
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the payload in `format` plus the metadata sidecar.
pub fn write_clicks(path: &Path, file: &ClickFile, format: ClickFormat) -> Result<()> {
    check_sorted(&file.records)?;
    match format {
        ClickFormat::Csv => std::fs::write(path, encode_csv(&file.records))?,
        ClickFormat::Binary => std::fs::write(path, encode_binary(&file.records))?,
    }
    write_json(&meta_path(path), &file.meta)
}

/// Reads a click file in either encoding. Without a sidecar the metadata is
/// inferred from the records (trial count and period from the maxima).
pub fn read_clicks(path: &Path) -> Result<ClickFile> {
    let bytes = std::fs::read(path)?;
    let records = if bytes.starts_with(&CLICK_MAGIC) {
        decode_binary(&bytes)?
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::NotAClickFile)?;
        decode_csv(text)?
    };
    let mp = meta_path(path);
    let meta = if mp.exists() {
        let meta: ClickMeta = serde_json::from_slice(&std::fs::read(&mp)?)?;
        if meta.version != CLICK_VERSION {
            return Err(Error::UnsupportedVersion(meta.version));
        }
        meta
    } else {
        log::warn!("{}: no metadata sidecar, inferring trial count and period", path.display());
        ClickMeta {
            version: CLICK_VERSION,
            period_ps: records.iter().map(|r| r.t_ps + 1).max().unwrap_or(1),
            n_detectors: records.iter().map(|r| r.detector + 1).max().unwrap_or(2).max(2),
            n_trials: records.iter().map(|r| r.trial as u64 + 1).max().unwrap_or(0),
            seed: None,
            config_hash: None,
        }
    };
    let file = ClickFile { meta, records };
    file.clone().into_stream().validate()?;
    Ok(file)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v}")).unwrap_or_default()
}

/// `delay,g2,err_lo,err_hi`; undefined values are empty fields.
pub fn write_scan_csv(path: &Path, results: &[CorrelationResult]) -> Result<()> {
    let mut s = String::from("delay,g2,err_lo,err_hi\n");
    for r in results {
        let _ = writeln!(s, "{},{},{},{}", r.delay, opt(r.g2), opt(r.err_lo), opt(r.err_hi));
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn write_histogram_csv(path: &Path, bins: &[HistogramBin]) -> Result<()> {
    let mut s = String::from("tau_ns,g2,err,count,baseline\n");
    for b in bins {
        let _ = writeln!(s, "{},{},{},{},{}", b.tau, b.g2, b.err, b.count, b.baseline);
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Two-column CSV with the given header.
pub fn write_xy_csv(path: &Path, header: &str, rows: &[(f64, f64)]) -> Result<()> {
    let mut s = format!("{header}\n");
    for (x, y) in rows {
        let _ = writeln!(s, "{x},{y}");
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn write_population_csv(path: &Path, rows: &[(f64, f64)]) -> Result<()> {
    write_xy_csv(path, "t_ns,population", rows)
}

pub fn write_correlation_csv(path: &Path, taus: &[f64], g1: &[Complex<f64>], g2: &[f64]) -> Result<()> {
    let mut s = String::from("tau_ns,g1_re,g1_im,g2\n");
    for ((t, g), h) in taus.iter().zip(g1).zip(g2) {
        let _ = writeln!(s, "{t},{},{},{h}", g.re, g.im);
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Spectrum as `frequency_hz,value` (real) or `frequency_hz,re,im` (complex);
/// frequencies are ordinary (Hz).
pub fn write_spectrum_csv(path: &Path, spectrum: &Spectrum<f64>) -> Result<()> {
    let tau = std::f64::consts::TAU;
    let mut s = String::new();
    match &spectrum.values {
        SpectrumValues::Real(v) => {
            s.push_str("frequency_hz,value\n");
            for (f, y) in spectrum.freqs.iter().zip(v) {
                let _ = writeln!(s, "{},{y}", f / tau);
            }
        }
        SpectrumValues::Complex(v) => {
            s.push_str("frequency_hz,re,im\n");
            for (f, y) in spectrum.freqs.iter().zip(v) {
                let _ = writeln!(s, "{},{},{}", f / tau, y.re, y.im);
            }
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_spectrum_csv(path: &Path, kind: SpectrumKind) -> Result<Spectrum<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().trim().to_string();
    let complex = match header.as_str() {
        "frequency_hz,value" => false,
        "frequency_hz,re,im" => true,
        _ => return Err(Error::Parse { line: 1, msg: format!("unexpected header '{header}'") }),
    };
    let mut freqs = Vec::new();
    let mut real = Vec::new();
    let mut cplx = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let nums: Vec<f64> = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { line: i + 2, msg: e.to_string() })?;
        let want = if complex { 3 } else { 2 };
        if nums.len() != want {
            return Err(Error::Parse { line: i + 2, msg: format!("expected {want} fields") });
        }
        freqs.push(nums[0] * std::f64::consts::TAU);
        if complex {
            cplx.push(Complex::new(nums[1], nums[2]));
        } else {
            real.push(nums[1]);
        }
    }
    let values = if complex { SpectrumValues::Complex(cplx) } else { SpectrumValues::Real(real) };
    Spectrum::new(freqs, values, kind)
}

/// Two-or-more-column numeric CSV with a header line.
pub fn read_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() }))
                .collect()
        })
        .collect()
}
