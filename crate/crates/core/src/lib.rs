//! Streaming EEG seizure detection built around a small k-nearest-neighbour
//! datapath.
//!
//! The crate is organised the way the detector hardware is:
//!
//! - [`signal`]: dataset ingestion, the Butterworth low-pass prefilter and
//!   optional EEG band-power features.
//! - [`knn`]: the fixed-point distance / compare / select / vote datapath.
//! - [`store`]: the capacity-bounded per-class exemplar memory, per-user
//!   adaptation, persistence and memory accounting.
//! - [`detector`]: the streaming runtime and the output frame codec.
//! - [`sim`]: a cycle-approximate cost model of the five-stage pipeline.
//! - [`eval`]: stratified Monte Carlo evaluation and parameter sweeps.
//!
//! Data-parallel loops (dataset parsing, per-window classification, sweep
//! trials) go through [`exec`], which uses rayon when the `parallel` feature
//! is enabled and plain iterators otherwise.

pub mod cli;
pub mod config;
pub mod detector;
pub mod eval;
pub mod exec;
pub mod features;
pub mod knn;
pub mod signal;
pub mod sim;
pub mod store;
pub mod synth;

pub use detector::{classify_window, Classification, DetectionEvent, Detector, DetectorConfig};
pub use features::{FeatureExtractor, FeatureMode};
pub use knn::{FixedVector, Label, NeighborSet, QFormat, SquaredDistance, Vote};
pub use signal::{EegWindow, FilterSpec, LabeledWindow};
pub use store::{MemoryReport, TrainingStore};
