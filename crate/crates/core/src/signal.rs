//! EEG windows, dataset ingestion, the low-pass prefilter and band powers.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::knn::Label;

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 178.0;
pub const DEFAULT_WINDOW_LEN: usize = 178;
pub const DEFAULT_CUTOFF_HZ: f64 = 40.0;
pub const DEFAULT_FILTER_ORDER: usize = 4;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("unknown class {0} (expected 1..=5)")]
    UnknownClass(i64),
    #[error("invalid filter spec: {0}")]
    InvalidSpec(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("window too short for a spectrum: {0} samples")]
    WindowTooShort(usize),
}

/// One fixed-length window of single-channel EEG, in microvolts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegWindow {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    channel_id: u8,
    timestamp_ms: u64,
}

impl EegWindow {
    pub fn new(
        samples: Vec<f64>,
        sample_rate_hz: f64,
        channel_id: u8,
        timestamp_ms: u64,
    ) -> Result<Self, SignalError> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(SignalError::InvalidWindow(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(SignalError::InvalidWindow(format!(
                "sample {i} is not finite"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            channel_id,
            timestamp_ms,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel_id(&self) -> u8 {
        self.channel_id
    }

    pub fn timestamp_ms(&self) -> u64 {
        self.timestamp_ms
    }

    /// Same metadata, new samples. Used by the filter.
    fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            ..self.clone()
        }
    }
}

/// A window with its binary label. `source_class` is the original 1..=5 set
/// for rows loaded from the five-class dataset, `None` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub window: EegWindow,
    pub label: Label,
    pub source_class: Option<u8>,
}

impl LabeledWindow {
    /// Class 1 (ictal) is Seizure, classes 2..=5 are NonSeizure.
    pub fn from_class(window: EegWindow, class: i64) -> Result<Self, SignalError> {
        if !(1..=5).contains(&class) {
            return Err(SignalError::UnknownClass(class));
        }
        let label = if class == 1 {
            Label::Seizure
        } else {
            Label::NonSeizure
        };
        Ok(Self {
            window,
            label,
            source_class: Some(class as u8),
        })
    }

    pub fn with_label(window: EegWindow, label: Label) -> Self {
        Self {
            window,
            label,
            source_class: None,
        }
    }
}

fn window_start_ms(index: usize, window_len: usize, sample_rate_hz: f64) -> u64 {
    ((index * window_len) as f64 * 1000.0 / sample_rate_hz).round() as u64
}

fn parse_row(
    row: usize,
    fields: &[String],
    window_len: usize,
    sample_rate_hz: f64,
) -> Result<LabeledWindow, SignalError> {
    // Rows are `n samples, class`, optionally preceded by a segment id.
    let samples_start = match fields.len() {
        l if l == window_len + 1 => 0,
        l if l == window_len + 2 => 1,
        l => {
            return Err(SignalError::MalformedRow {
                row,
                reason: format!("expected {} sample columns plus class, got {l} fields", window_len),
            })
        }
    };
    let mut samples = Vec::with_capacity(window_len);
    for (col, cell) in fields[samples_start..samples_start + window_len].iter().enumerate() {
        let v: f64 = cell.trim().parse().map_err(|_| SignalError::MalformedRow {
            row,
            reason: format!("non-numeric sample {cell:?} in column {col}"),
        })?;
        if !v.is_finite() {
            return Err(SignalError::MalformedRow {
                row,
                reason: format!("non-finite sample in column {col}"),
            });
        }
        samples.push(v);
    }
    let class_cell = fields[fields.len() - 1].trim();
    let class: i64 = class_cell.parse().map_err(|_| SignalError::MalformedRow {
        row,
        reason: format!("non-integer class {class_cell:?}"),
    })?;
    let window = EegWindow::new(
        samples,
        sample_rate_hz,
        0,
        window_start_ms(row, window_len, sample_rate_hz),
    )?;
    LabeledWindow::from_class(window, class)
}

/// Loads the per-row-window CSV: each row holds `window_len` samples and an
/// integer class in 1..=5, optionally with a leading segment-id column. A
/// first row whose last cell is not numeric is treated as a header.
pub fn load_dataset(
    path: &Path,
    window_len: usize,
    sample_rate_hz: f64,
) -> Result<Vec<LabeledWindow>, SignalError> {
    let file = open(path)?;
    read_dataset(file, window_len, sample_rate_hz, Execution::default())
}

pub fn read_dataset<R: Read>(
    reader: R,
    window_len: usize,
    sample_rate_hz: f64,
    exec: Execution,
) -> Result<Vec<LabeledWindow>, SignalError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (i, rec) in csv.records().enumerate() {
        let rec = rec.map_err(|e| SignalError::MalformedRow {
            row: i,
            reason: e.to_string(),
        })?;
        let fields: Vec<String> = rec.iter().map(str::to_owned).collect();
        if i == 0 {
            let last = fields.last().map(|s| s.trim()).unwrap_or("");
            if last.parse::<f64>().is_err() {
                continue;
            }
        }
        if fields.len() == 1 && fields[0].trim().is_empty() {
            continue;
        }
        rows.push(fields);
    }
    let indexed: Vec<(usize, Vec<String>)> = rows.into_iter().enumerate().collect();
    exec.try_map(&indexed, |(row, fields)| {
        parse_row(*row, fields, window_len, sample_rate_hz)
    })
}

/// Reads whitespace-separated samples, one or more per line.
pub fn read_raw_samples<R: BufRead>(reader: R) -> Result<Vec<f64>, SignalError> {
    let mut out = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        for tok in line.split(|c: char| c.is_whitespace() || c == ',') {
            if tok.is_empty() {
                continue;
            }
            let v: f64 = tok.parse().map_err(|_| SignalError::MalformedRow {
                row: line_no,
                reason: format!("non-numeric sample {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(SignalError::MalformedRow {
                    row: line_no,
                    reason: "non-finite sample".into(),
                });
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// Segments a raw sample stream into consecutive non-overlapping windows.
/// A trailing partial window is dropped.
pub fn segment(
    samples: &[f64],
    window_len: usize,
    sample_rate_hz: f64,
    label: Label,
) -> Result<Vec<LabeledWindow>, SignalError> {
    samples
        .chunks_exact(window_len)
        .enumerate()
        .map(|(i, chunk)| {
            let w = EegWindow::new(
                chunk.to_vec(),
                sample_rate_hz,
                0,
                window_start_ms(i, window_len, sample_rate_hz),
            )?;
            Ok(LabeledWindow::with_label(w, label))
        })
        .collect()
}

/// Loads a single-column raw text file and segments it with a caller label.
pub fn load_raw(
    path: &Path,
    window_len: usize,
    sample_rate_hz: f64,
    label: Label,
) -> Result<Vec<LabeledWindow>, SignalError> {
    let samples = read_raw_samples(BufReader::new(open(path)?))?;
    segment(&samples, window_len, sample_rate_hz, label)
}

fn open(path: &Path) -> Result<File, SignalError> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => SignalError::MissingFile(path.to_path_buf()),
        _ => SignalError::Io(e),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub cutoff_hz: f64,
    pub order: usize,
    pub sample_rate_hz: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            cutoff_hz: DEFAULT_CUTOFF_HZ,
            order: DEFAULT_FILTER_ORDER,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(SignalError::InvalidSpec(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        let nyquist = self.sample_rate_hz / 2.0;
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < nyquist) {
            return Err(SignalError::InvalidSpec(format!(
                "cutoff {} Hz must lie in (0, {nyquist}) Hz",
                self.cutoff_hz
            )));
        }
        if self.order == 0 || !self.order.is_multiple_of(2) {
            return Err(SignalError::InvalidSpec(format!(
                "order must be a positive even integer, got {}",
                self.order
            )));
        }
        Ok(())
    }
}

/// Normalised second-order section, `a0 == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCoefficients {
    pub sections: Vec<Biquad>,
}

/// Designs a Butterworth low-pass as a cascade of `order / 2` biquads via the
/// bilinear transform with cutoff prewarping.
pub fn design_lowpass(spec: &FilterSpec) -> Result<FilterCoefficients, SignalError> {
    spec.validate()?;
    let k = (PI * spec.cutoff_hz / spec.sample_rate_hz).tan();
    let k2 = k * k;
    let n = spec.order as f64;
    let sections = (1..=spec.order / 2)
        .map(|i| {
            // Q of the i-th conjugate pole pair of the analog prototype.
            let q = 1.0 / (2.0 * (PI * (2 * i - 1) as f64 / (2.0 * n)).sin());
            let norm = 1.0 / (1.0 + k / q + k2);
            let b0 = k2 * norm;
            Biquad {
                b0,
                b1: 2.0 * b0,
                b2: b0,
                a1: 2.0 * (k2 - 1.0) * norm,
                a2: (1.0 - k / q + k2) * norm,
            }
        })
        .collect();
    Ok(FilterCoefficients { sections })
}

impl FilterCoefficients {
    /// Runs the cascade over `input` from zero state (transposed direct form II).
    pub fn filter_samples(&self, input: &[f64]) -> Vec<f64> {
        let mut buf = input.to_vec();
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for x in buf.iter_mut() {
                let y = s.b0 * *x + z1;
                z1 = s.b1 * *x - s.a1 * y + z2;
                z2 = s.b2 * *x - s.a2 * y;
                *x = y;
            }
        }
        buf
    }
}

/// Filters one window independently; no state carries across windows.
pub fn apply_filter(coeffs: &FilterCoefficients, window: &EegWindow) -> EegWindow {
    window.with_samples(coeffs.filter_samples(window.samples()))
}

/// Mean-square amplitude per EEG band.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BandPowers {
    pub delta: f64,
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl BandPowers {
    pub fn as_array(&self) -> [f64; 5] {
        [self.delta, self.theta, self.alpha, self.beta, self.gamma]
    }

    pub fn total(&self) -> f64 {
        self.as_array().iter().sum()
    }
}

/// Lower band edges in Hz; gamma runs up to (excluding) Nyquist.
pub const BAND_EDGES_HZ: [f64; 5] = [0.5, 4.0, 8.0, 13.0, 30.0];

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

/// Per-band power from the rectangular-window DFT. Each bin is assigned by
/// its centre frequency; both positive- and negative-frequency bins count, so
/// the five bands together never exceed the mean-square of the window.
pub fn band_powers(window: &EegWindow) -> Result<BandPowers, SignalError> {
    let n = window.len();
    if n < 2 {
        return Err(SignalError::WindowTooShort(n));
    }
    let fs = window.sample_rate_hz();
    let nyquist = fs / 2.0;
    let mut spectrum: Vec<Complex<f64>> = window
        .samples()
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .collect();
    plan(n).process(&mut spectrum);

    let scale = 1.0 / (n as f64 * n as f64);
    let mut bands = [0.0f64; 5];
    for (k, c) in spectrum.iter().enumerate() {
        let f = k.min(n - k) as f64 * fs / n as f64;
        if f < BAND_EDGES_HZ[0] || f >= nyquist {
            continue;
        }
        let band = BAND_EDGES_HZ.iter().rposition(|&lo| f >= lo).unwrap();
        bands[band] += c.norm_sqr() * scale;
    }
    Ok(BandPowers {
        delta: bands[0],
        theta: bands[1],
        alpha: bands[2],
        beta: bands[3],
        gamma: bands[4],
    })
}
