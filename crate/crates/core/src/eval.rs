//! Monte Carlo cross-validation: stratified train/test splits repeated over
//! seeds, confusion-matrix metrics, and the k x alpha sweep.

use std::io::Write;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{classify_features, DetectError, DetectorConfig};
use crate::exec::Execution;
use crate::features::{FeatureError, FeatureExtractor, FeatureMode};
use crate::knn::{FixedVector, KnnError, Label};
use crate::signal::{FilterSpec, LabeledWindow};
use crate::store::{StoreError, TrainingStore};

/// Mixed into the trial seed for the label-permutation control.
const SHUFFLE_STREAM: u64 = 0x5eed_5eed_5eed_5eed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("class {label} has {have} windows, need {need}")]
    InsufficientClass { label: Label, have: usize, need: usize },
    #[error("invalid sweep grid: {0}")]
    InvalidGrid(String),
    #[error("window {index}: {source}")]
    Feature { index: usize, source: FeatureError },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Knn(#[from] KnnError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Draws `alpha` windows per class uniformly without replacement; every
/// other window goes to the test set. Both index lists are ascending.
pub fn stratified_split(dataset: &[LabeledWindow], alpha: usize, seed: u64) -> Result<Split, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; dataset.len()];
    for label in [Label::Seizure, Label::NonSeizure] {
        let members: Vec<usize> = dataset
            .iter()
            .enumerate()
            .filter(|(_, w)| w.label == label)
            .map(|(i, _)| i)
            .collect();
        if members.len() < alpha {
            return Err(EvalError::InsufficientClass {
                label,
                have: members.len(),
                need: alpha,
            });
        }
        for pick in index::sample(&mut rng, members.len(), alpha) {
            in_train[members[pick]] = true;
        }
    }
    let (train, test): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| in_train[i]);
    Ok(Split { train, test })
}

/// Counts with Seizure as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Seizure, Label::Seizure) => self.tp += 1,
            (Label::NonSeizure, Label::Seizure) => self.fp += 1,
            (Label::Seizure, Label::NonSeizure) => self.fn_ += 1,
            (Label::NonSeizure, Label::NonSeizure) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn sensitivity(&self) -> Option<f64> {
        let pos = self.tp + self.fn_;
        (pos > 0).then(|| self.tp as f64 / pos as f64)
    }

    pub fn specificity(&self) -> Option<f64> {
        let neg = self.tn + self.fp;
        (neg > 0).then(|| self.tn as f64 / neg as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub confusion: Confusion,
    pub n_test: usize,
    pub seed: u64,
    pub k: usize,
    pub alpha: usize,
    pub filter: FilterSpec,
    pub q_format: String,
    pub features: FeatureMode,
}

/// Dataset with every window's feature vector computed once up front.
#[derive(Debug)]
pub struct Evaluator<'a> {
    dataset: &'a [LabeledWindow],
    config: DetectorConfig,
    extractor: FeatureExtractor,
    features: Arc<[FixedVector]>,
    exec: Execution,
}

impl<'a> Evaluator<'a> {
    pub fn new(dataset: &'a [LabeledWindow], config: DetectorConfig, exec: Execution) -> Result<Self, EvalError> {
        let extractor = config.extractor()?;
        let indexed: Vec<usize> = (0..dataset.len()).collect();
        let features = exec.try_map(&indexed, |&index| {
            extractor
                .extract(&dataset[index].window)
                .map_err(|source| EvalError::Feature { index, source })
        })?;
        Ok(Self {
            dataset,
            config,
            extractor,
            features: features.into(),
            exec,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn with_params(&self, k: usize, alpha: usize) -> Result<Evaluator<'a>, EvalError> {
        let config = DetectorConfig {
            k,
            alpha,
            ..self.config.clone()
        };
        config.validate()?;
        Ok(Evaluator {
            dataset: self.dataset,
            config,
            extractor: self.extractor.clone(),
            features: Arc::clone(&self.features),
            exec: self.exec,
        })
    }

    fn run(&self, train: &[LabeledWindow], test: &[usize], seed: u64) -> Result<EvalReport, EvalError> {
        let cfg = &self.config;
        let mut store = TrainingStore::new(cfg.alpha, self.extractor.feature_len(), cfg.q_format)?;
        store.adapt(train, &self.extractor)?;
        let predictions = self.exec.try_map(test, |&i| {
            classify_features(&self.features[i], &store, cfg.k, cfg.threshold).map(|c| c.label)
        })?;
        let mut confusion = Confusion::default();
        for (&i, &p) in test.iter().zip(&predictions) {
            confusion.record(self.dataset[i].label, p);
        }
        Ok(EvalReport {
            accuracy: confusion.accuracy(),
            sensitivity: confusion.sensitivity(),
            specificity: confusion.specificity(),
            confusion,
            n_test: test.len(),
            seed,
            k: cfg.k,
            alpha: cfg.alpha,
            filter: cfg.filter,
            q_format: cfg.q_format.to_string(),
            features: cfg.features,
        })
    }

    pub fn evaluate_split(&self, split: &Split, seed: u64) -> Result<EvalReport, EvalError> {
        let train: Vec<LabeledWindow> = split.train.iter().map(|&i| self.dataset[i].clone()).collect();
        self.run(&train, &split.test, seed)
    }

    pub fn evaluate(&self, seed: u64) -> Result<EvalReport, EvalError> {
        let split = stratified_split(self.dataset, self.config.alpha, seed)?;
        self.evaluate_split(&split, seed)
    }

    /// Control run: the training labels are randomly permuted among the
    /// training windows before adaptation; test labels stay true.
    pub fn evaluate_shuffled(&self, seed: u64) -> Result<EvalReport, EvalError> {
        let split = stratified_split(self.dataset, self.config.alpha, seed)?;
        let mut labels: Vec<Label> = split.train.iter().map(|&i| self.dataset[i].label).collect();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ SHUFFLE_STREAM));
        let train: Vec<LabeledWindow> = split
            .train
            .iter()
            .zip(labels)
            .map(|(&i, label)| LabeledWindow::with_label(self.dataset[i].window.clone(), label))
            .collect();
        self.run(&train, &split.test, seed)
    }

    /// Seeds `base_seed..base_seed + n`. Trials run through the evaluator's
    /// execution strategy and come back in seed order.
    pub fn trials(&self, base_seed: u64, n: usize) -> Result<Vec<EvalReport>, EvalError> {
        let seeds: Vec<u64> = (0..n as u64).map(|i| base_seed + i).collect();
        self.exec.try_map(&seeds, |&s| self.evaluate(s))
    }

    pub fn shuffled_trials(&self, base_seed: u64, n: usize) -> Result<Vec<EvalReport>, EvalError> {
        let seeds: Vec<u64> = (0..n as u64).map(|i| base_seed + i).collect();
        self.exec.try_map(&seeds, |&s| self.evaluate_shuffled(s))
    }
}

pub fn evaluate(dataset: &[LabeledWindow], config: &DetectorConfig, seed: u64) -> Result<EvalReport, EvalError> {
    Evaluator::new(dataset, config.clone(), Execution::default())?.evaluate(seed)
}

/// Mean and sample standard deviation (`n - 1`; zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub n_trials: usize,
    pub base_seed: u64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_sensitivity: Option<f64>,
    pub mean_specificity: Option<f64>,
    pub k: usize,
    pub alpha: usize,
}

pub fn summarize(reports: &[EvalReport], base_seed: u64) -> TrialSummary {
    let acc: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&acc);
    let mean_of = |f: fn(&EvalReport) -> Option<f64>| {
        let v: Vec<f64> = reports.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| mean_std(&v).0)
    };
    TrialSummary {
        n_trials: reports.len(),
        base_seed,
        mean_accuracy,
        std_accuracy,
        mean_sensitivity: mean_of(|r| r.sensitivity),
        mean_specificity: mean_of(|r| r.specificity),
        k: reports.first().map_or(0, |r| r.k),
        alpha: reports.first().map_or(0, |r| r.alpha),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub k: usize,
    pub alpha: usize,
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub k: usize,
    pub alpha: usize,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepGrid {
    pub trials: Vec<TrialRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl SweepGrid {
    pub fn cell(&self, k: usize, alpha: usize) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.k == k && a.alpha == alpha)
    }

    /// Highest mean accuracy; the first such cell in grid order on ties.
    pub fn best(&self) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .fold(None, |best: Option<&AggregateRow>, a| match best {
                Some(b) if b.mean >= a.mean => Some(b),
                _ => Some(a),
            })
    }

    pub fn write_trials_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        write_rows(&self.trials, out)
    }

    pub fn write_aggregates_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        write_rows(&self.aggregates, out)
    }
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `n_trials` seeded evaluations for every `(k, alpha)` cell. Rows are
/// ordered by k, then alpha, then seed, whatever the execution strategy.
pub fn sweep(
    evaluator: &Evaluator<'_>,
    k_values: &[usize],
    alpha_values: &[usize],
    n_trials: usize,
    base_seed: u64,
) -> Result<SweepGrid, EvalError> {
    if k_values.is_empty() || alpha_values.is_empty() || n_trials == 0 {
        return Err(EvalError::InvalidGrid("k, alpha and trial counts must be non-empty".into()));
    }
    if let Some(k) = k_values.iter().find(|&&k| k == 0 || k % 2 == 0) {
        return Err(EvalError::InvalidGrid(format!("k = {k} is not a positive odd integer")));
    }
    let cells: Vec<Evaluator<'_>> = k_values
        .iter()
        .flat_map(|&k| alpha_values.iter().map(move |&a| (k, a)))
        .map(|(k, a)| evaluator.with_params(k, a))
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..n_trials as u64).map(move |t| (c, base_seed + t)))
        .collect();
    let reports = evaluator.exec.try_map(&jobs, |&(c, seed)| cells[c].evaluate(seed))?;

    let trials: Vec<TrialRow> = reports
        .iter()
        .map(|r| TrialRow {
            k: r.k,
            alpha: r.alpha,
            seed: r.seed,
            accuracy: r.accuracy,
        })
        .collect();
    let aggregates = trials
        .chunks(n_trials)
        .map(|rows| {
            let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
            let (mean, std) = mean_std(&acc);
            AggregateRow {
                k: rows[0].k,
                alpha: rows[0].alpha,
                mean,
                std,
                n: rows.len(),
            }
        })
        .collect();
    Ok(SweepGrid { trials, aggregates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn data(per_class: usize) -> Vec<LabeledWindow> {
        generate(&SynthConfig {
            per_class,
            ..Default::default()
        })
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let d = data(40);
        let s = stratified_split(&d, 30, 7).unwrap();
        assert_eq!(s.train.len(), 60);
        assert_eq!(s.test.len(), d.len() - 60);
        assert!(s.train.iter().all(|i| !s.test.contains(i)));
        let seizures = s.train.iter().filter(|&&i| d[i].label == Label::Seizure).count();
        assert_eq!(seizures, 30);
        assert_eq!(s, stratified_split(&d, 30, 7).unwrap());
        assert_ne!(s, stratified_split(&d, 30, 8).unwrap());
    }

    #[test]
    fn split_needs_enough_of_each_class() {
        let d = data(10);
        let err = stratified_split(&d, 11, 0).unwrap_err();
        assert!(matches!(
            err,
            EvalError::InsufficientClass {
                label: Label::Seizure,
                have: 10,
                need: 11
            }
        ));
    }

    #[test]
    fn confusion_identities() {
        let mut c = Confusion::default();
        c.record(Label::Seizure, Label::Seizure);
        c.record(Label::Seizure, Label::NonSeizure);
        c.record(Label::NonSeizure, Label::NonSeizure);
        c.record(Label::NonSeizure, Label::NonSeizure);
        c.record(Label::NonSeizure, Label::Seizure);
        assert_eq!(c.total(), 5);
        assert_eq!(c.accuracy(), 3.0 / 5.0);
        assert_eq!(c.sensitivity(), Some(0.5));
        assert_eq!(c.specificity(), Some(2.0 / 3.0));
        assert_eq!(Confusion::default().sensitivity(), None);
    }

    #[test]
    fn evaluating_on_the_training_set_with_k1_is_perfect() {
        let d = data(20);
        let cfg = DetectorConfig {
            k: 1,
            alpha: 20,
            ..Default::default()
        };
        let ev = Evaluator::new(&d, cfg, Execution::default()).unwrap();
        let split = stratified_split(&d, 20, 3).unwrap();
        let on_train = Split {
            train: split.train.clone(),
            test: split.train,
        };
        let r = ev.evaluate_split(&on_train, 3).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.n_test, 40);
    }

    #[test]
    fn report_metrics_recompute_from_counts() {
        let d = data(40);
        let r = evaluate(&d, &DetectorConfig::default(), 11).unwrap();
        let c = r.confusion;
        assert_eq!(c.total(), r.n_test);
        assert_eq!(r.accuracy, (c.tp + c.tn) as f64 / r.n_test as f64);
        assert_eq!(r.sensitivity, Some(c.tp as f64 / (c.tp + c.fn_) as f64));
        assert_eq!(r.specificity, Some(c.tn as f64 / (c.tn + c.fp) as f64));
        assert_eq!(r, evaluate(&d, &DetectorConfig::default(), 11).unwrap());
    }

    #[test]
    fn mean_std_known_values() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let d = data(12);
        let ev = Evaluator::new(&d, DetectorConfig::default(), Execution::Sequential).unwrap();
        assert!(matches!(sweep(&ev, &[2], &[5], 1, 0), Err(EvalError::InvalidGrid(_))));
        assert!(sweep(&ev, &[], &[5], 1, 0).is_err());
        assert!(matches!(
            sweep(&ev, &[1], &[50], 1, 0),
            Err(EvalError::InsufficientClass { .. })
        ));
    }
}
