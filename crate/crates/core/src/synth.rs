//! Seeded generator for five-class, single-channel EEG-like windows laid out
//! like the public seizure-recognition CSV (178 samples at 178 Hz, class
//! column 1..=5, class 1 ictal).
//!
//! The signals are crude stand-ins for the real recordings: AR(1) background
//! activity with class-specific rhythms, interictal spikes for classes 2 and 3,
//! and large rhythmic spike-wave discharges for class 1. Intended for tests,
//! benchmarks and demos when the real dataset is unavailable.

use std::f64::consts::PI;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::signal::{EegWindow, LabeledWindow};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub per_class: usize,
    pub window_len: usize,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            per_class: 200,
            window_len: 178,
            sample_rate_hz: 178.0,
            seed: 0,
        }
    }
}

fn background(rng: &mut ChaCha8Rng, n: usize, rms: f64, ar: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut x = 0.0;
    // Burn in so the window starts in steady state.
    for _ in 0..32 {
        x = ar * x + normal.sample(rng);
    }
    let raw: Vec<f64> = (0..n)
        .map(|_| {
            x = ar * x + normal.sample(rng);
            x
        })
        .collect();
    let stationary_rms = (1.0 / (1.0 - ar * ar)).sqrt();
    raw.into_iter().map(|v| v * rms / stationary_rms).collect()
}

fn add_tone(out: &mut [f64], rng: &mut ChaCha8Rng, fs: f64, freq: f64, amp: f64) {
    let phase = rng.random_range(0.0..2.0 * PI);
    for (i, v) in out.iter_mut().enumerate() {
        *v += amp * (2.0 * PI * freq * i as f64 / fs + phase).sin();
    }
}

fn add_spike(out: &mut [f64], centre: f64, width: f64, amp: f64) {
    for (i, v) in out.iter_mut().enumerate() {
        let t = (i as f64 - centre) / width;
        *v += amp * (-0.5 * t * t).exp();
    }
}

fn class_window(class: u8, rng: &mut ChaCha8Rng, n: usize, fs: f64) -> Vec<f64> {
    match class {
        // Ictal: rhythmic spike-and-wave, hundreds of microvolts.
        1 => {
            let mut x = background(rng, n, 60.0, 0.9);
            let f0 = rng.random_range(3.0..6.0);
            let amp = rng.random_range(250.0..700.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            for (i, v) in x.iter_mut().enumerate() {
                let th = 2.0 * PI * f0 * i as f64 / fs + phase;
                *v += amp * (th.sin() + 0.5 * (2.0 * th).sin() + 0.25 * (3.0 * th).sin());
            }
            x.iter_mut().for_each(|v| *v = v.clamp(-2000.0, 2000.0));
            x
        }
        // Interictal: background plus theta and a few sharp transients.
        2 | 3 => {
            let mut x = background(rng, n, if class == 2 { 55.0 } else { 45.0 }, 0.92);
            let f = rng.random_range(4.5..7.5);
            add_tone(&mut x, rng, fs, f, 20.0);
            for _ in 0..rng.random_range(0..3) {
                let c = rng.random_range(0.0..n as f64);
                let a = rng.random_range(80.0..180.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                add_spike(&mut x, c, 3.0, a);
            }
            x
        }
        // Healthy, eyes closed: strong alpha.
        4 => {
            let mut x = background(rng, n, 30.0, 0.9);
            let f = rng.random_range(8.5..11.5);
            let amp = rng.random_range(25.0..50.0);
            add_tone(&mut x, rng, fs, f, amp);
            x
        }
        // Healthy, eyes open: low-amplitude, some beta.
        _ => {
            let mut x = background(rng, n, 35.0, 0.85);
            let f = rng.random_range(15.0..25.0);
            add_tone(&mut x, rng, fs, f, 8.0);
            x
        }
    }
}

/// `5 * per_class` windows in shuffled order; deterministic in `seed`.
pub fn generate(cfg: &SynthConfig) -> Vec<LabeledWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut classes: Vec<u8> = (1..=5u8)
        .flat_map(|c| std::iter::repeat_n(c, cfg.per_class))
        .collect();
    classes.shuffle(&mut rng);
    let period_ms = cfg.window_len as f64 * 1000.0 / cfg.sample_rate_hz;
    classes
        .into_iter()
        .enumerate()
        .map(|(i, class)| {
            let samples = class_window(class, &mut rng, cfg.window_len, cfg.sample_rate_hz);
            // Round to 0.1 uV like a typical text export.
            let samples = samples.into_iter().map(|v| (v * 10.0).round() / 10.0).collect();
            let w = EegWindow::new(samples, cfg.sample_rate_hz, 0, (i as f64 * period_ms).round() as u64)
                .expect("generator emits finite samples");
            LabeledWindow::from_class(w, class as i64).expect("class in 1..=5")
        })
        .collect()
}

/// Writes windows as `id,X1..Xn,y` with a header row. Windows without a
/// source class are written as class 1 (Seizure) or 2 (NonSeizure).
pub fn write_csv<W: Write>(windows: &[LabeledWindow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = windows.first().map_or(0, |w| w.window.len());
    let mut header = vec![String::new()];
    header.extend((1..=n).map(|i| format!("X{i}")));
    header.push("y".into());
    w.write_record(&header)?;
    for (i, lw) in windows.iter().enumerate() {
        let class = lw
            .source_class
            .unwrap_or(if lw.label == crate::knn::Label::Seizure { 1 } else { 2 });
        let mut rec = vec![format!("S{i}")];
        rec.extend(lw.window.samples().iter().map(|v| v.to_string()));
        rec.push(class.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
