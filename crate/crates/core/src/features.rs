//! Window -> fixed-point feature vector: low-pass filter, optional band
//! reduction, quantisation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knn::{quantize_samples, FixedVector, KnnError, QFormat};
use crate::signal::{apply_filter, band_powers, design_lowpass, EegWindow, FilterCoefficients, FilterSpec, SignalError};

pub const MAX_CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// The filtered samples themselves.
    #[default]
    Raw,
    /// RMS amplitude (uV) in each of the five EEG bands.
    Bands,
}

impl FeatureMode {
    pub fn feature_len(self, window_len: usize) -> usize {
        match self {
            FeatureMode::Raw => window_len,
            FeatureMode::Bands => 5,
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Raw => "raw",
            FeatureMode::Bands => "bands",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(FeatureMode::Raw),
            "bands" => Ok(FeatureMode::Bands),
            _ => Err(format!("unknown feature mode {s:?} (expected raw or bands)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("window has {got} samples, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("expected 1..={MAX_CHANNELS} channels, got {0}")]
    ChannelCount(usize),
    #[error(transparent)]
    Quantize(#[from] KnnError),
    #[error("{0}")]
    Signal(String),
}

impl From<SignalError> for FeatureError {
    fn from(e: SignalError) -> Self {
        FeatureError::Signal(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    coeffs: FilterCoefficients,
    q: QFormat,
    mode: FeatureMode,
    window_len: usize,
}

impl FeatureExtractor {
    pub fn new(filter: &FilterSpec, q: QFormat, mode: FeatureMode, window_len: usize) -> Result<Self, SignalError> {
        Ok(Self {
            coeffs: design_lowpass(filter)?,
            q,
            mode,
            window_len,
        })
    }

    pub fn coefficients(&self) -> &FilterCoefficients {
        &self.coeffs
    }

    pub fn q_format(&self) -> QFormat {
        self.q
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// Length of one channel's feature vector.
    pub fn feature_len(&self) -> usize {
        self.mode.feature_len(self.window_len)
    }

    fn real_features(&self, window: &EegWindow) -> Result<Vec<f64>, FeatureError> {
        if window.len() != self.window_len {
            return Err(FeatureError::WrongLength {
                expected: self.window_len,
                got: window.len(),
            });
        }
        let filtered = apply_filter(&self.coeffs, window);
        Ok(match self.mode {
            FeatureMode::Raw => filtered.samples().to_vec(),
            FeatureMode::Bands => band_powers(&filtered)?
                .as_array()
                .iter()
                .map(|p| p.sqrt())
                .collect(),
        })
    }

    pub fn extract(&self, window: &EegWindow) -> Result<FixedVector, FeatureError> {
        Ok(quantize_samples(&self.real_features(window)?, self.q)?)
    }

    /// Concatenates per-channel features in channel order.
    pub fn extract_channels(&self, windows: &[EegWindow]) -> Result<FixedVector, FeatureError> {
        if windows.is_empty() || windows.len() > MAX_CHANNELS {
            return Err(FeatureError::ChannelCount(windows.len()));
        }
        let mut all = Vec::with_capacity(self.feature_len() * windows.len());
        for w in windows {
            all.extend(self.real_features(w)?);
        }
        Ok(quantize_samples(&all, self.q)?)
    }
}
