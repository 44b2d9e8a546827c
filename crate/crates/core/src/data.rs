//! Operating time series: CSV ingestion, mean imputation, and a synthetic
//! generator with the field-data schema.

use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::{defaults, BoundarySeries, Normalization};

pub const HEADER: [&str; 4] = ["timestamp", "load_pu", "ambient_c", "topoil_c"];
const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("header must be `timestamp,load_pu,ambient_c,topoil_c`, got `{0}`")]
    Header(String),
    #[error("line {line}: {msg}")]
    Row { line: u64, msg: String },
    #[error("line {line}: timestamp {time} is earlier than the previous row")]
    NonMonotone { line: u64, time: String },
    #[error("channel {0} has no present values")]
    AllMissing(&'static str),
    #[error("channel {channel} has a missing value at row {row}")]
    Missing { channel: &'static str, row: usize },
    #[error("normalization has a zero or non-finite scale")]
    Scale,
    #[error("series is empty")]
    Empty,
}

/// Minute-resolution operating data. Missing values are NaN until imputed.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatingSeries {
    pub start: NaiveDateTime,
    /// Seconds from `start`.
    pub seconds: Vec<f64>,
    pub load_pu: Vec<f64>,
    pub ambient_c: Vec<f64>,
    pub topoil_c: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows: usize,
    pub duplicates: usize,
    pub missing: usize,
}

impl OperatingSeries {
    pub fn len(&self) -> usize {
        self.seconds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seconds.is_empty()
    }

    fn channels(&self) -> [(&'static str, &Vec<f64>); 3] {
        [("load_pu", &self.load_pu), ("ambient_c", &self.ambient_c), ("topoil_c", &self.topoil_c)]
    }

    fn channels_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 3] {
        [
            ("load_pu", &mut self.load_pu),
            ("ambient_c", &mut self.ambient_c),
            ("topoil_c", &mut self.topoil_c),
        ]
    }

    pub fn missing_count(&self) -> usize {
        self.channels().iter().map(|(_, c)| c.iter().filter(|v| !v.is_finite()).count()).sum()
    }

    pub fn timestamp(&self, i: usize) -> NaiveDateTime {
        self.start + chrono::Duration::milliseconds((self.seconds[i] * 1000.0).round() as i64)
    }

    /// Boundary driving series for the PDE; every channel must be present.
    pub fn to_boundary(&self) -> Result<BoundarySeries, DataError> {
        if self.is_empty() {
            return Err(DataError::Empty);
        }
        for (channel, c) in self.channels() {
            if let Some(row) = c.iter().position(|v| !v.is_finite()) {
                return Err(DataError::Missing { channel, row });
            }
        }
        Ok(BoundarySeries {
            times: self.seconds.clone(),
            load: self.load_pu.clone(),
            ambient: self.ambient_c.clone(),
            topoil: self.topoil_c.clone(),
        })
    }

    /// Leading window of `n` rows.
    pub fn truncate(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            start: self.start,
            seconds: self.seconds[..n].to_vec(),
            load_pu: self.load_pu[..n].to_vec(),
            ambient_c: self.ambient_c[..n].to_vec(),
            topoil_c: self.topoil_c[..n].to_vec(),
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        let fmt = |v: f64| if v.is_finite() { v.to_string() } else { String::new() };
        for i in 0..self.len() {
            w.write_record([
                self.timestamp(i).format(TIME_FORMAT).to_string(),
                fmt(self.load_pu[i]),
                fmt(self.ambient_c[i]),
                fmt(self.topoil_c[i]),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_csv_string()).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn parse_time(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, TIME_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .ok()
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_utc()))
}

fn parse_value(s: &str, line: u64, column: &str) -> Result<f64, DataError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    let v: f64 = s.parse().map_err(|_| DataError::Row {
        line,
        msg: format!("cannot parse {column} value `{s}`"),
    })?;
    Ok(if v.is_finite() { v } else { f64::NAN })
}

/// Parses CSV text with the `timestamp,load_pu,ambient_c,topoil_c` schema.
///
/// Rows repeating an earlier timestamp are dropped (first kept); empty or
/// non-finite cells become missing values.
pub fn parse_series(text: &str) -> Result<(OperatingSeries, IngestReport), DataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| DataError::Header(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(DataError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut report = IngestReport::default();
    let mut start = None;
    let mut out = OperatingSeries {
        start: NaiveDate::from_ymd_opt(1970, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
        seconds: Vec::new(),
        load_pu: Vec::new(),
        ambient_c: Vec::new(),
        topoil_c: Vec::new(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Row {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        report.rows += 1;
        let time = parse_time(&record[0]).ok_or_else(|| DataError::Row {
            line,
            msg: format!("cannot parse timestamp `{}`", &record[0]),
        })?;
        let t0 = *start.get_or_insert(time);
        let sec = (time - t0).num_milliseconds() as f64 / 1000.0;
        if let Some(&last) = out.seconds.last() {
            if sec == last {
                report.duplicates += 1;
                log::warn!("line {line}: duplicate timestamp {} dropped", &record[0]);
                continue;
            }
            if sec < last {
                return Err(DataError::NonMonotone { line, time: record[0].to_string() });
            }
        }
        out.seconds.push(sec);
        out.load_pu.push(parse_value(&record[1], line, HEADER[1])?);
        out.ambient_c.push(parse_value(&record[2], line, HEADER[2])?);
        out.topoil_c.push(parse_value(&record[3], line, HEADER[3])?);
    }
    if let Some(s) = start {
        out.start = s;
    }
    if out.seconds.windows(2).any(|w| w[1] - w[0] != 60.0) {
        log::warn!("series spacing is not a uniform 60 s");
    }
    report.missing = out.missing_count();
    Ok((out, report))
}

pub fn load_series(path: &Path) -> Result<(OperatingSeries, IngestReport), DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_series(&text)
}

/// Replaces missing entries by the mean of the channel's present values.
pub fn impute(series: &OperatingSeries) -> Result<OperatingSeries, DataError> {
    let mut out = series.clone();
    for (name, channel) in out.channels_mut() {
        let present: Vec<f64> = channel.iter().copied().filter(|v| v.is_finite()).collect();
        if present.is_empty() {
            return Err(DataError::AllMissing(name));
        }
        if present.len() == channel.len() {
            continue;
        }
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        for v in channel.iter_mut().filter(|v| !v.is_finite()) {
            *v = mean;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    #[default]
    SinusoidalDefault,
}

/// Shape of the synthetic operating profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthProfile {
    pub kind: ProfileKind,
    /// Peak of the daytime half-sine load [p.u.].
    pub load_peak: f64,
    /// Hours of the load window (sunrise, sunset).
    pub daylight: (f64, f64),
    pub load_noise: f64,
    pub ambient_mean: f64,
    pub ambient_amplitude: f64,
    /// Hour of the ambient maximum.
    pub ambient_peak_hour: f64,
    pub ambient_noise: f64,
}

impl Default for SynthProfile {
    fn default() -> Self {
        Self {
            kind: ProfileKind::SinusoidalDefault,
            load_peak: 0.6,
            daylight: (6.0, 18.0),
            load_noise: 0.02,
            ambient_mean: 20.0,
            ambient_amplitude: 5.0,
            ambient_peak_hour: 15.0,
            ambient_noise: 0.1,
        }
    }
}

impl SynthProfile {
    pub fn noiseless() -> Self {
        Self { load_noise: 0.0, ambient_noise: 0.0, ..Self::default() }
    }
}

/// Synthetic minute series of `days` days.
///
/// Top oil follows the lumped balance `ρc_p·dΘ/dt = P₀ + K²μ − h(Θ − Θ_A)`
/// with the default physical constants, started at the steady state of the
/// mean load and advanced with the exact exponential update per minute.
pub fn synthesize(days: u32, seed: u64, profile: &SynthProfile) -> OperatingSeries {
    let n = days.max(1) as usize * 1440;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let load_noise = Normal::new(0.0, profile.load_noise.max(0.0)).expect("finite noise");
    let ambient_noise = Normal::new(0.0, profile.ambient_noise.max(0.0)).expect("finite noise");
    let (rise, set) = profile.daylight;
    let pi = std::f64::consts::PI;

    let mut seconds = Vec::with_capacity(n);
    let mut load = Vec::with_capacity(n);
    let mut ambient = Vec::with_capacity(n);
    for i in 0..n {
        let hour = (i % 1440) as f64 / 60.0;
        let base = if hour > rise && hour < set { profile.load_peak * (pi * (hour - rise) / (set - rise)).sin() } else { 0.0 };
        let k = (base + load_noise.sample(&mut rng)).max(0.0);
        let amb = profile.ambient_mean
            + profile.ambient_amplitude * (2.0 * pi * (hour - profile.ambient_peak_hour) / 24.0).cos()
            + ambient_noise.sample(&mut rng);
        seconds.push(60.0 * i as f64);
        load.push(k);
        ambient.push(amb);
    }

    let (p0, mu, h, c) = (defaults::P0, defaults::MU_RATED, defaults::H, defaults::RHO_CP);
    let mean_k2 = load.iter().map(|k| k * k).sum::<f64>() / n as f64;
    let decay = (-60.0 * h / c).exp();
    let mut theta = ambient[0] + (p0 + mean_k2 * mu) / h;
    let mut topoil = Vec::with_capacity(n);
    topoil.push(theta);
    for i in 1..n {
        let target = ambient[i] + (p0 + load[i] * load[i] * mu) / h;
        theta = target + (theta - target) * decay;
        topoil.push(theta);
    }

    OperatingSeries {
        start: NaiveDate::from_ymd_opt(2024, 6, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
        seconds,
        load_pu: load,
        ambient_c: ambient,
        topoil_c: topoil,
    }
}

fn check_norm(norm: &Normalization) -> Result<(), DataError> {
    if norm.temp_scale == 0.0 || !norm.temp_scale.is_finite() || !norm.temp_shift.is_finite() {
        return Err(DataError::Scale);
    }
    Ok(())
}

/// Maps both temperature channels to normalized units; load and time are unchanged.
pub fn normalize_series(series: &OperatingSeries, norm: &Normalization) -> Result<OperatingSeries, DataError> {
    check_norm(norm)?;
    let mut out = series.clone();
    for v in out.ambient_c.iter_mut().chain(out.topoil_c.iter_mut()) {
        *v = norm.normalize_temp(*v);
    }
    Ok(out)
}

pub fn denormalize_series(series: &OperatingSeries, norm: &Normalization) -> Result<OperatingSeries, DataError> {
    check_norm(norm)?;
    let mut out = series.clone();
    for v in out.ambient_c.iter_mut().chain(out.topoil_c.iter_mut()) {
        *v = norm.denormalize_temp(*v);
    }
    Ok(out)
}
