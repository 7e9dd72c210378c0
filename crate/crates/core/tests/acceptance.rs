//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use common::{brute_force_knn, dataset_or_synthetic, random_vector, real_dataset, rng, root_distance_knn, wide_distance};
use rand::Rng;
use seizknn::detector::{classify_window, decode_frame, encode_frame, DecodedFrame, DetectionEvent, Detector, DetectorConfig, FrameError, FRAME_LEN};
use seizknn::eval::{mean_std, stratified_split, summarize, sweep, Evaluator};
use seizknn::knn::{select_k_nearest, squared_distance, FixedVector, Label, QFormat};
use seizknn::signal::LabeledWindow;
use seizknn::sim::{simulate_classification, SimParams, StageCostModel, DEFAULT_CLOCK_HZ};
use seizknn::store::{footprint_for, TrainingStore, USER_DATA_BUDGET_BYTES};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn accuracy_reproduction() -> Outcome {
    const CLAIM: f64 = 0.945;
    let Some((path, windows)) = real_dataset() else {
        let (_, surrogate) = dataset_or_synthetic(2300);
        let ev = Evaluator::new(&surrogate, DetectorConfig::default(), common::exec()).map_err(|e| e.to_string())?;
        let s = summarize(&ev.trials(0, 100).map_err(|e| e.to_string())?, 0);
        return Err(format!(
            "BLOCKED: public seizure-recognition CSV not found (set {} or place it under data/); \
             synthetic surrogate for reference only: mean {:.2}% std {:.2}",
            common::DATASET_ENV,
            100.0 * s.mean_accuracy,
            100.0 * s.std_accuracy
        ));
    };
    let start = Instant::now();
    let ev = Evaluator::new(&windows, DetectorConfig::default(), common::exec()).map_err(|e| e.to_string())?;
    let s = summarize(&ev.trials(0, 100).map_err(|e| e.to_string())?, 0);
    let pct = |v: Option<f64>| v.map_or("n/a".into(), |x| format!("{:.2}%", 100.0 * x));
    let msg = format!(
        "{}: mean {:.2}% std {:.2} sens {} spec {} (target {:.1}%) in {:.1}s",
        path.display(),
        100.0 * s.mean_accuracy,
        100.0 * s.std_accuracy,
        pct(s.mean_sensitivity),
        pct(s.mean_specificity),
        100.0 * CLAIM,
        start.elapsed().as_secs_f64()
    );
    check((0.905..=0.985).contains(&s.mean_accuracy), msg.clone())?;
    Ok(msg)
}

fn random_instance(r: &mut rand_chacha::ChaCha8Rng, span: i16) -> (FixedVector, Vec<(FixedVector, Label)>) {
    let q = QFormat::default();
    let query = random_vector(r, 178, q, span);
    let store = (0..60)
        .map(|_| {
            let l = if r.random_bool(0.5) { Label::Seizure } else { Label::NonSeizure };
            (random_vector(r, 178, q, span), l)
        })
        .collect();
    (query, store)
}

fn knn_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut mismatches = 0;
    for i in 0..1000 {
        let k = [1, 3, 5][i % 3];
        // Every fourth instance uses a tiny code range so exact ties occur.
        let span = if i % 4 == 0 { 1 } else { 4000 };
        let (query, store) = random_instance(&mut r, span);
        let got = select_k_nearest(&query, store.iter().map(|(v, l)| (v, *l)), k).map_err(|e| e.to_string())?;
        if got.entries() != brute_force_knn(&query, &store, k).as_slice() {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(mismatches == 0 && secs < 10.0, format!("{mismatches} mismatches in {secs:.2}s"))?;
    Ok(format!("1000 instances, 0 mismatches, {secs:.2}s"))
}

fn distance_exactness() -> Outcome {
    let mut r = rng(3);
    let q = QFormat::default();
    let mut errors = 0;
    for _ in 0..1000 {
        let a = random_vector(&mut r, 178, q, i16::MAX);
        let b = random_vector(&mut r, 178, q, i16::MAX);
        if squared_distance(&a, &b).map_err(|e| e.to_string())?.0 as u128 != wide_distance(&a, &b) {
            errors += 1;
        }
    }
    let mut set_diff = 0;
    for i in 0..1000 {
        let k = [1, 3, 5][i % 3];
        let (query, store) = random_instance(&mut r, 4000);
        let got = select_k_nearest(&query, store.iter().map(|(v, l)| (v, *l)), k).map_err(|e| e.to_string())?;
        let mut a: Vec<usize> = got.entries().iter().map(|n| n.store_index).collect();
        let mut b = root_distance_knn(&query, &store, k);
        a.sort_unstable();
        b.sort_unstable();
        if a != b {
            set_diff += 1;
        }
    }
    check(errors == 0 && set_diff == 0, format!("{errors} distance errors, {set_diff} set differences"))?;
    Ok("1000 pairs exact; k-nearest sets identical under sqrt on 1000 instances".into())
}

fn adaptation_time() -> Outcome {
    let cfg = DetectorConfig::default();
    let extractor = cfg.extractor().map_err(|e| e.to_string())?;
    let windows = common::synthetic(1000, 11);
    let seizure: Vec<LabeledWindow> = windows.iter().filter(|w| w.label == Label::Seizure).cloned().collect();
    let non: Vec<LabeledWindow> = windows.iter().filter(|w| w.label == Label::NonSeizure).take(1000).cloned().collect();
    let big: Vec<LabeledWindow> = seizure.iter().chain(&non).cloned().collect();
    let mut store = TrainingStore::new(1000, 178, cfg.q_format).map_err(|e| e.to_string())?;
    let t_big = store.adapt(&big, &extractor).map_err(|e| e.to_string())?.duration;
    check(store.len() == 2000, "store not full after alpha=1000 adaptation")?;

    let small: Vec<LabeledWindow> = seizure.iter().take(30).chain(non.iter().take(30)).cloned().collect();
    let mut store = TrainingStore::new(30, 178, cfg.q_format).map_err(|e| e.to_string())?;
    let t_small = store.adapt(&small, &extractor).map_err(|e| e.to_string())?.duration;
    let msg = format!("alpha=1000/class {:.1} ms, alpha=30/class {:.3} ms", t_big.as_secs_f64() * 1e3, t_small.as_secs_f64() * 1e3);
    check(t_big.as_secs_f64() < 4.0 && t_small.as_secs_f64() < 0.05, msg.clone())?;
    Ok(msg)
}

fn memory_budget() -> Outcome {
    let cfg = DetectorConfig::default();
    let (_, windows) = dataset_or_synthetic(100);
    let split = stratified_split(&windows, 30, 0).map_err(|e| e.to_string())?;
    let train: Vec<LabeledWindow> = split.train.iter().map(|&i| windows[i].clone()).collect();
    let mut store = TrainingStore::new(30, 178, cfg.q_format).map_err(|e| e.to_string())?;
    store.adapt(&train, &cfg.extractor().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let m = store.memory_footprint();
    let sim = simulate_classification(
        &SimParams { m: 60, n: 178, k: 3, clock_hz: DEFAULT_CLOCK_HZ, sample_rate_hz: 178.0 },
        &StageCostModel::default(),
    )
    .map_err(|e| e.to_string())?;
    check(store.len() == 60, "default store does not hold 60 entries")?;
    check(m.vector_bytes == 21_360, format!("vector bytes {}", m.vector_bytes))?;
    check(m == footprint_for(60, 178), "store and formula disagree")?;
    check(m.total_bytes <= USER_DATA_BUDGET_BYTES, format!("total {} over budget", m.total_bytes))?;
    check(sim.store_bytes == m.total_bytes && sim.fits_budget == m.fits(USER_DATA_BUDGET_BYTES), "sim and store disagree")?;
    Ok(format!("vector {} B, total {} B of {} B; store and sim agree", m.vector_bytes, m.total_bytes, USER_DATA_BUDGET_BYTES))
}

fn realtime_contract() -> Outcome {
    let sim = simulate_classification(
        &SimParams { m: 60, n: 178, k: 3, clock_hz: DEFAULT_CLOCK_HZ, sample_rate_hz: 178.0 },
        &StageCostModel::default(),
    )
    .map_err(|e| e.to_string())?;
    let oracle_us = (60.0 * 178.0 + 60.0 * 4.0 + 3.0 + 50.0) / 80.0;
    check((sim.latency_us - oracle_us).abs() < 1e-9, format!("sim {} us vs closed form {oracle_us} us", sim.latency_us))?;
    check(sim.latency_us <= 200.0 && sim.realtime_ok, format!("sim latency {} us", sim.latency_us))?;

    let cfg = DetectorConfig::default();
    let (_, windows) = dataset_or_synthetic(100);
    let split = stratified_split(&windows, 30, 1).map_err(|e| e.to_string())?;
    let train: Vec<LabeledWindow> = split.train.iter().map(|&i| windows[i].clone()).collect();
    let mut store = TrainingStore::new(30, 178, cfg.q_format).map_err(|e| e.to_string())?;
    store.adapt(&train, &cfg.extractor().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut d = Detector::new(cfg, Arc::new(store)).map_err(|e| e.to_string())?;
    let samples: Vec<f64> = split.test.iter().take(200).flat_map(|&i| windows[i].window.samples().to_vec()).collect();
    let events = d.push_samples(&samples).map_err(|e| e.to_string())?;
    let mean = events.iter().map(|e| e.latency_us as f64).sum::<f64>() / events.len() as f64;
    check(mean < 10_000.0, format!("software mean latency {mean:.1} us"))?;
    Ok(format!("sim {:.4} us (closed form {oracle_us:.4}), software mean {mean:.1} us over {} windows", sim.latency_us, events.len()))
}

fn stream_batch_equivalence() -> Outcome {
    let cfg = DetectorConfig::default();
    let (source, windows) = dataset_or_synthetic(100);
    let split = stratified_split(&windows, 30, 5).map_err(|e| e.to_string())?;
    let train: Vec<LabeledWindow> = split.train.iter().map(|&i| windows[i].clone()).collect();
    let mut store = TrainingStore::new(30, 178, cfg.q_format).map_err(|e| e.to_string())?;
    store.adapt(&train, &cfg.extractor().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let store = Arc::new(store);
    let slice: Vec<&LabeledWindow> = split.test.iter().take(100).map(|&i| &windows[i]).collect();
    let samples: Vec<f64> = slice.iter().flat_map(|w| w.window.samples().iter().copied()).collect();
    let batch: Vec<(Label, f64)> = slice
        .iter()
        .map(|w| classify_window(&w.window, &store, &cfg).map(|c| (c.label, c.confidence())))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for chunk in [1, 7, 178, 1000] {
        let mut d = Detector::new(cfg.clone(), Arc::clone(&store)).map_err(|e| e.to_string())?;
        let mut events = Vec::new();
        for c in samples.chunks(chunk) {
            events.extend(d.push_samples(c).map_err(|e| e.to_string())?);
        }
        let got: Vec<(u64, u64, Label, f64)> =
            events.iter().map(|e| (e.window_seq, e.timestamp_ms, e.label, e.confidence)).collect();
        let stream_view: Vec<(Label, f64)> = got.iter().map(|e| (e.2, e.3)).collect();
        check(stream_view == batch, format!("chunk {chunk}: stream differs from batch"))?;
        runs.push(got);
    }
    check(runs.windows(2).all(|w| w[0] == w[1]), "chunked runs differ")?;
    Ok(format!("100 windows from {source}; chunk sizes 1, 7, 178, 1000 identical to batch"))
}

fn frame_integrity() -> Outcome {
    let mut r = rng(8);
    for _ in 0..1000 {
        let ev = DetectionEvent {
            window_seq: r.random(),
            timestamp_ms: r.random(),
            label: if r.random_bool(0.5) { Label::Seizure } else { Label::NonSeizure },
            confidence: r.random_range(0.0..=1.0),
            latency_us: r.random_range(0..100_000),
        };
        let want = DecodedFrame {
            window_seq: ev.window_seq as u16,
            timestamp_ms: ev.timestamp_ms as u32,
            label: ev.label,
            confidence_q8: (ev.confidence * 255.0).round() as u8,
        };
        check(decode_frame(&encode_frame(&ev)) == Ok(want), format!("round trip failed for {ev:?}"))?;
    }
    let frame = encode_frame(&DetectionEvent {
        window_seq: 42,
        timestamp_ms: 123_456,
        label: Label::Seizure,
        confidence: 2.0 / 3.0,
        latency_us: 0,
    });
    let mut detected = 0;
    for pos in 0..FRAME_LEN {
        for x in 1..=255u8 {
            let mut f = frame;
            f[pos] ^= x;
            if matches!(decode_frame(&f), Err(FrameError::BadSync(_) | FrameError::BadCrc { .. })) {
                detected += 1;
            }
        }
    }
    check(detected == 2550, format!("{detected}/2550 corruptions detected"))?;
    Ok("1000 round trips; 2550/2550 single-byte corruptions detected".into())
}

fn label_permutation_control() -> Outcome {
    let (source, windows) = dataset_or_synthetic(2300);
    let ev = Evaluator::new(&windows, DetectorConfig::default(), common::exec()).map_err(|e| e.to_string())?;
    let reports = ev.shuffled_trials(0, 50).map_err(|e| e.to_string())?;
    let acc: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
    let (mean, std) = mean_std(&acc);
    let msg = format!("{source}: shuffled-label mean accuracy {mean:.4} (std {std:.4}) over 50 trials");
    check((0.45..=0.55).contains(&mean), msg.clone())?;
    Ok(msg)
}

fn sweep_structure() -> Outcome {
    let (source, windows) = dataset_or_synthetic(500);
    let ev = Evaluator::new(&windows, DetectorConfig::default(), common::exec()).map_err(|e| e.to_string())?;
    let grid = sweep(&ev, &[1, 3, 5, 7], &[10, 20, 30, 50], 20, 0).map_err(|e| e.to_string())?;
    check(grid.trials.len() == 320, format!("{} trial rows", grid.trials.len()))?;
    check(grid.aggregates.len() == 16, format!("{} aggregates", grid.aggregates.len()))?;
    for a in &grid.aggregates {
        let acc: Vec<f64> = grid.trials.iter().filter(|t| t.k == a.k && t.alpha == a.alpha).map(|t| t.accuracy).collect();
        let mean = acc.iter().sum::<f64>() / acc.len() as f64;
        let var = acc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (acc.len() - 1) as f64;
        check(acc.len() == 20 && a.n == 20, format!("cell ({}, {}) has {} rows", a.k, a.alpha, acc.len()))?;
        check((a.mean - mean).abs() <= 1e-12 && (a.std - var.sqrt()).abs() <= 1e-12, format!("cell ({}, {}) not recomputable", a.k, a.alpha))?;
    }
    let op = grid.cell(3, 30).ok_or("missing (3, 30) cell")?;
    let best = grid.best().ok_or("no best cell")?;
    Ok(format!(
        "{source}: 320 rows, 16 aggregates; (k=3, alpha=30) mean {:.4} vs best (k={}, alpha={}) {:.4}",
        op.mean, best.k, best.alpha, best.mean
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("accuracy reproduction", accuracy_reproduction),
        ("kNN oracle equivalence", knn_oracle_equivalence),
        ("distance exactness", distance_exactness),
        ("adaptation time", adaptation_time),
        ("memory budget", memory_budget),
        ("real-time contract", realtime_contract),
        ("stream/batch equivalence", stream_batch_equivalence),
        ("frame integrity", frame_integrity),
        ("label-permutation control", label_permutation_control),
        ("sweep structure", sweep_structure),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
