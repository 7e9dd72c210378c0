//! Streaming detector: windowing, filter -> quantise -> select -> vote, and
//! the 10-byte output frame.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, FeatureExtractor, FeatureMode};
use crate::knn::{vote, FixedVector, KnnError, Label, QFormat};
use crate::signal::{EegWindow, FilterSpec, SignalError, DEFAULT_SAMPLE_RATE_HZ, DEFAULT_WINDOW_LEN};
use crate::store::TrainingStore;

pub const DEFAULT_K: usize = 3;
pub const DEFAULT_ALPHA: usize = 30;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("detector has no training data")]
    NotTrained,
    #[error("store holds {store_len}-long {store_q} vectors, detector produces {want_len}-long {want_q}")]
    ShapeMismatch {
        store_len: usize,
        store_q: QFormat,
        want_len: usize,
        want_q: QFormat,
    },
    #[error("non-finite sample at stream offset {0}")]
    InvalidSample(u64),
    #[error("window {seq}: {source}")]
    Window { seq: u64, source: FeatureError },
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub k: usize,
    pub alpha: usize,
    pub window_len: usize,
    pub sample_rate_hz: f64,
    pub filter: FilterSpec,
    pub q_format: QFormat,
    /// Minimum vote fraction required to report Seizure.
    pub threshold: f64,
    pub features: FeatureMode,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            alpha: DEFAULT_ALPHA,
            window_len: DEFAULT_WINDOW_LEN,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            filter: FilterSpec::default(),
            q_format: QFormat::default(),
            threshold: 0.5,
            features: FeatureMode::Raw,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        let bad = |m: String| Err(DetectError::InvalidConfig(m));
        if self.k == 0 || self.k.is_multiple_of(2) {
            return bad(format!("k must be a positive odd integer, got {}", self.k));
        }
        if self.alpha == 0 {
            return bad("alpha must be positive".into());
        }
        if self.k > 2 * self.alpha {
            return bad(format!("k = {} exceeds 2 * alpha = {}", self.k, 2 * self.alpha));
        }
        if !(0.5..=1.0).contains(&self.threshold) {
            return bad(format!("threshold must lie in [0.5, 1], got {}", self.threshold));
        }
        if self.window_len == 0 {
            return bad("window_len must be positive".into());
        }
        if self.filter.sample_rate_hz != self.sample_rate_hz {
            return bad(format!(
                "filter sample rate {} differs from sample_rate_hz {}",
                self.filter.sample_rate_hz, self.sample_rate_hz
            ));
        }
        self.filter.validate()?;
        Ok(())
    }

    pub fn extractor(&self) -> Result<FeatureExtractor, DetectError> {
        self.validate()?;
        Ok(FeatureExtractor::new(&self.filter, self.q_format, self.features, self.window_len)?)
    }

    pub fn feature_len(&self) -> usize {
        self.features.feature_len(self.window_len)
    }

    pub fn window_period_s(&self) -> f64 {
        self.window_len as f64 / self.sample_rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub label: Label,
    /// Neighbours agreeing with `label`.
    pub votes: u32,
    pub total: u32,
}

impl Classification {
    pub fn confidence(&self) -> f64 {
        self.votes as f64 / self.total as f64
    }
}

/// Votes over the `k` nearest stored vectors. A Seizure majority below
/// `threshold` is reported as NonSeizure.
pub fn classify_features(
    features: &FixedVector,
    store: &TrainingStore,
    k: usize,
    threshold: f64,
) -> Result<Classification, KnnError> {
    let v = vote(&store.nearest(features, k)?)?;
    if v.label == Label::Seizure && v.confidence() < threshold {
        return Ok(Classification {
            label: Label::NonSeizure,
            votes: v.total - v.votes,
            total: v.total,
        });
    }
    Ok(Classification {
        label: v.label,
        votes: v.votes,
        total: v.total,
    })
}

pub fn classify_with(
    extractor: &FeatureExtractor,
    store: &TrainingStore,
    k: usize,
    threshold: f64,
    window: &EegWindow,
) -> Result<Classification, DetectError> {
    if store.is_empty() {
        return Err(DetectError::NotTrained);
    }
    let features = extractor
        .extract(window)
        .map_err(|source| DetectError::Window { seq: 0, source })?;
    Ok(classify_features(&features, store, k, threshold)?)
}

/// One-shot classification of a single window.
pub fn classify_window(
    window: &EegWindow,
    store: &TrainingStore,
    config: &DetectorConfig,
) -> Result<Classification, DetectError> {
    classify_with(&config.extractor()?, store, config.k, config.threshold, window)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub window_seq: u64,
    pub timestamp_ms: u64,
    pub label: Label,
    pub confidence: f64,
    pub latency_us: u64,
}

/// Assembles a sample stream into non-overlapping windows and classifies
/// each one. Not `Sync`: calls to [`Detector::push_samples`] must be
/// serialised, but any number of detectors may share one store.
#[derive(Debug)]
pub struct Detector {
    config: DetectorConfig,
    extractor: FeatureExtractor,
    store: Arc<TrainingStore>,
    buffer: Vec<f64>,
    next_seq: u64,
    samples_seen: u64,
    start_ms: u64,
    pending: Vec<DetectionEvent>,
}

impl Detector {
    pub fn new(config: DetectorConfig, store: Arc<TrainingStore>) -> Result<Self, DetectError> {
        let extractor = config.extractor()?;
        if store.feature_len() != extractor.feature_len() || store.q_format() != extractor.q_format() {
            return Err(DetectError::ShapeMismatch {
                store_len: store.feature_len(),
                store_q: store.q_format(),
                want_len: extractor.feature_len(),
                want_q: extractor.q_format(),
            });
        }
        Ok(Self {
            buffer: Vec::with_capacity(2 * config.window_len),
            config,
            extractor,
            store,
            next_seq: 0,
            samples_seen: 0,
            start_ms: 0,
            pending: Vec::new(),
        })
    }

    /// Offsets every event timestamp by `ms`.
    pub fn with_start_time(mut self, ms: u64) -> Self {
        self.start_ms = ms;
        self
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    fn window_timestamp(&self, seq: u64) -> u64 {
        let offset = (seq * self.config.window_len as u64) as f64 * 1000.0 / self.config.sample_rate_hz;
        self.start_ms + offset.round() as u64
    }

    /// Feeds samples and returns one event per completed window.
    ///
    /// If a window fails (e.g. a sample out of quantiser range) that window is
    /// dropped, its sequence number is consumed, and the error is returned.
    /// Events completed earlier in the same call are held back and returned
    /// first by the next successful call; later complete windows stay
    /// buffered.
    pub fn push_samples(&mut self, samples: &[f64]) -> Result<Vec<DetectionEvent>, DetectError> {
        if self.store.is_empty() {
            return Err(DetectError::NotTrained);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DetectError::InvalidSample(self.samples_seen + i as u64));
        }
        self.samples_seen += samples.len() as u64;
        self.buffer.extend_from_slice(samples);

        let n = self.config.window_len;
        let mut events = std::mem::take(&mut self.pending);
        let mut consumed = 0;
        let mut failure = None;
        while self.buffer.len() - consumed >= n {
            let seq = self.next_seq;
            self.next_seq += 1;
            let chunk = self.buffer[consumed..consumed + n].to_vec();
            consumed += n;
            match self.process(seq, chunk) {
                Ok(ev) => events.push(ev),
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        self.buffer.drain(..consumed);
        match failure {
            Some(e) => {
                self.pending = events;
                Err(e)
            }
            None => Ok(events),
        }
    }

    fn process(&self, seq: u64, samples: Vec<f64>) -> Result<DetectionEvent, DetectError> {
        let start = Instant::now();
        let timestamp_ms = self.window_timestamp(seq);
        let window = EegWindow::new(samples, self.config.sample_rate_hz, 0, timestamp_ms)?;
        let features = self
            .extractor
            .extract(&window)
            .map_err(|source| DetectError::Window { seq, source })?;
        let c = classify_features(&features, &self.store, self.config.k, self.config.threshold)?;
        Ok(DetectionEvent {
            window_seq: seq,
            timestamp_ms,
            label: c.label,
            confidence: c.confidence(),
            latency_us: start.elapsed().as_micros() as u64,
        })
    }
}

pub const FRAME_LEN: usize = 10;
pub const FRAME_SYNC: u8 = 0xA5;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame shorter than {FRAME_LEN} bytes: {0}")]
    ShortFrame(usize),
    #[error("bad sync byte {0:#04x}")]
    BadSync(u8),
    #[error("crc mismatch: stored {stored:#04x}, computed {computed:#04x}")]
    BadCrc { stored: u8, computed: u8 },
    #[error("bad label byte {0:#04x}")]
    BadLabel(u8),
}

/// CRC-8, polynomial 0x07, init 0, no reflection, no final xor.
pub fn crc8(bytes: &[u8]) -> u8 {
    let mut crc = 0u8;
    for &b in bytes {
        crc ^= b;
        for _ in 0..8 {
            crc = if crc & 0x80 != 0 { (crc << 1) ^ 0x07 } else { crc << 1 };
        }
    }
    crc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedFrame {
    pub window_seq: u16,
    pub timestamp_ms: u32,
    pub label: Label,
    pub confidence_q8: u8,
}

pub fn confidence_q8(confidence: f64) -> u8 {
    (confidence.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `A5 | seq u16 | timestamp u32 | label u8 | confidence u8 | crc8`, little-endian.
pub fn encode_frame(event: &DetectionEvent) -> [u8; FRAME_LEN] {
    let mut f = [0u8; FRAME_LEN];
    f[0] = FRAME_SYNC;
    f[1..3].copy_from_slice(&(event.window_seq as u16).to_le_bytes());
    f[3..7].copy_from_slice(&(event.timestamp_ms as u32).to_le_bytes());
    f[7] = event.label.as_byte();
    f[8] = confidence_q8(event.confidence);
    f[9] = crc8(&f[..9]);
    f
}

/// Decodes the first frame in `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<DecodedFrame, FrameError> {
    if bytes.len() < FRAME_LEN {
        return Err(FrameError::ShortFrame(bytes.len()));
    }
    let f = &bytes[..FRAME_LEN];
    if f[0] != FRAME_SYNC {
        return Err(FrameError::BadSync(f[0]));
    }
    let computed = crc8(&f[..9]);
    if computed != f[9] {
        return Err(FrameError::BadCrc {
            stored: f[9],
            computed,
        });
    }
    Ok(DecodedFrame {
        window_seq: u16::from_le_bytes([f[1], f[2]]),
        timestamp_ms: u32::from_le_bytes([f[3], f[4], f[5], f[6]]),
        label: Label::from_byte(f[7]).ok_or(FrameError::BadLabel(f[7]))?,
        confidence_q8: f[8],
    })
}
