#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seizknn::exec::Execution;
use seizknn::knn::{FixedVector, Label, Neighbor, QFormat, SquaredDistance};
use seizknn::signal::{self, LabeledWindow};
use seizknn::synth::{generate, SynthConfig};

pub const DATASET_ENV: &str = "SEIZKNN_DATASET_CSV";

/// Location of the public seizure-recognition CSV, if present.
pub fn real_dataset_path() -> Option<PathBuf> {
    if let Ok(p) = std::env::var(DATASET_ENV) {
        let p = PathBuf::from(p);
        return p.is_file().then_some(p);
    }
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    ["data/Epileptic Seizure Recognition.csv", "data/epileptic_seizure_recognition.csv", "data/data.csv"]
        .iter()
        .map(|rel| root.join(rel))
        .find(|p| p.is_file())
}

pub fn real_dataset() -> Option<(PathBuf, Vec<LabeledWindow>)> {
    let path = real_dataset_path()?;
    let windows = signal::load_dataset(&path, 178, 178.0).expect("dataset present but unreadable");
    Some((path, windows))
}

pub fn synthetic(per_class: usize, seed: u64) -> Vec<LabeledWindow> {
    generate(&SynthConfig {
        per_class,
        seed,
        ..Default::default()
    })
}

/// The real dataset when available, otherwise the synthetic surrogate.
pub fn dataset_or_synthetic(per_class: usize) -> (String, Vec<LabeledWindow>) {
    match real_dataset() {
        Some((p, w)) => (p.display().to_string(), w),
        None => ("synthetic surrogate".to_owned(), synthetic(per_class, 7)),
    }
}

pub fn exec() -> Execution {
    Execution::default()
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, q: QFormat, span: i16) -> FixedVector {
    FixedVector::from_codes((0..n).map(|_| rng.random_range(-span..=span)).collect(), q)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Term-by-term sum of squared differences in 128-bit arithmetic.
pub fn wide_distance(a: &FixedVector, b: &FixedVector) -> u128 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| {
            let d = x as i128 - y as i128;
            (d * d) as u128
        })
        .sum()
}

/// Computes every distance, sorts by (distance, index) and truncates.
pub fn brute_force_knn(query: &FixedVector, store: &[(FixedVector, Label)], k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = store
        .iter()
        .enumerate()
        .map(|(i, (v, l))| Neighbor {
            distance: SquaredDistance(wide_distance(query, v) as u64),
            label: *l,
            store_index: i,
        })
        .collect();
    all.sort_by_key(|n| (n.distance.0, n.store_index));
    all.truncate(k);
    all
}

/// k nearest by root distance on dequantised values, ties by index.
pub fn root_distance_knn(query: &FixedVector, store: &[(FixedVector, Label)], k: usize) -> Vec<usize> {
    let q = query.dequantize();
    let mut all: Vec<(f64, usize)> = store
        .iter()
        .enumerate()
        .map(|(i, (v, _))| {
            let d: f64 = q.iter().zip(v.dequantize()).map(|(a, b)| (a - b) * (a - b)).sum();
            (d.sqrt(), i)
        })
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}
