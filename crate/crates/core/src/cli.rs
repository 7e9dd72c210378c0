//! The `seizknn` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
//! violation. Diagnostics go to stderr; data goes to stdout or files.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{ConfigError, ResolvedConfig};
use crate::detector::{encode_frame, Detector, DetectorConfig};
use crate::eval::{stratified_split, summarize, sweep, Evaluator};
use crate::exec::{self, Execution};
use crate::knn::Label;
use crate::signal::{self, LabeledWindow};
use crate::sim::{self, SimParams, StageCostModel};
use crate::store::TrainingStore;
use crate::synth::{self, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(_) => Failure::Data(e.into()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

trait DataErr<T> {
    fn data(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> DataErr<T> for Result<T, E> {
    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "seizknn", version, about = "Streaming kNN EEG seizure detection")]
pub struct Cli {
    /// Line-based key=value config file [default: none].
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration as JSON (with value sources) and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Worker threads for data-parallel loops [default: sequential, except sweep which uses all cores].
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a dataset and print a summary.
    Ingest(IngestArgs),
    /// Build a per-user model from labelled windows and snapshot it.
    Adapt(AdaptArgs),
    /// Stream samples through a model and emit detection events.
    Detect(DetectArgs),
    /// Stratified Monte Carlo evaluation.
    Eval(EvalArgs),
    /// k x alpha accuracy sweep.
    Sweep(SweepArgs),
    /// Cycle-approximate pipeline cost model.
    Sim(SimArgs),
    /// Write a synthetic five-class dataset in the per-row CSV layout.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Default)]
struct SignalFlags {
    /// Samples per window [default: 178].
    #[arg(long)]
    window_len: Option<usize>,
    /// Sampling rate in Hz [default: 178].
    #[arg(long)]
    sample_rate_hz: Option<f64>,
    /// Low-pass cutoff in Hz [default: 40].
    #[arg(long)]
    cutoff_hz: Option<f64>,
    /// Butterworth order, positive and even [default: 4].
    #[arg(long)]
    filter_order: Option<usize>,
    /// Feature mode, raw or bands [default: raw].
    #[arg(long)]
    features: Option<String>,
    /// Fixed-point format integer.fraction, 16 bits total [default: 13.3].
    #[arg(long)]
    q_format: Option<String>,
    /// Minimum vote fraction to report Seizure, in [0.5, 1] [default: 0.5].
    #[arg(long)]
    threshold: Option<f64>,
}

impl SignalFlags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut push = |k: &'static str, val: Option<String>| {
            if let Some(s) = val {
                v.push((k, s));
            }
        };
        push("window_len", self.window_len.map(|x| x.to_string()));
        push("sample_rate_hz", self.sample_rate_hz.map(|x| x.to_string()));
        push("filter.cutoff_hz", self.cutoff_hz.map(|x| x.to_string()));
        push("filter.order", self.filter_order.map(|x| x.to_string()));
        push("features", self.features.clone());
        push("q_format", self.q_format.clone());
        push("threshold", self.threshold.map(|x| x.to_string()));
        v
    }
}

#[derive(Debug, Args, Default)]
struct ModelFlags {
    /// Neighbours consulted per window, positive and odd [default: 3].
    #[arg(long)]
    k: Option<usize>,
    /// Exemplars kept per class [default: 30].
    #[arg(long)]
    alpha: Option<usize>,
}

impl ModelFlags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if let Some(k) = self.k {
            v.push(("k", k.to_string()));
        }
        if let Some(a) = self.alpha {
            v.push(("alpha", a.to_string()));
        }
        v
    }
}

#[derive(Debug, Args)]
struct InputFlags {
    /// Dataset path (per-row CSV, or single-column raw text with --raw).
    #[arg(long)]
    data: PathBuf,
    /// Treat --data as one sample per line, segmented into windows.
    #[arg(long)]
    raw: bool,
    /// Label for raw input windows, seizure or nonseizure [default: nonseizure].
    #[arg(long)]
    label: Option<String>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    input: InputFlags,
    #[command(flatten)]
    signal: SignalFlags,
}

#[derive(Debug, Args)]
struct AdaptArgs {
    #[command(flatten)]
    input: InputFlags,
    /// Snapshot output path [default: model_path from config].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Insert every window in file order instead of a seeded alpha-per-class draw.
    #[arg(long)]
    all: bool,
    /// Seed for the alpha-per-class draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    signal: SignalFlags,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Model snapshot [default: model_path from config].
    #[arg(long)]
    model: Option<PathBuf>,
    /// Sample source: a .csv dataset, a raw text file, or - for raw stdin.
    #[arg(long, default_value = "-")]
    input: String,
    /// Output: *.jsonl for events, *.bin for 10-byte frames, - for JSON lines on stdout.
    #[arg(long, default_value = "-")]
    emit: String,
    /// Samples per push into the detector.
    #[arg(long, default_value_t = 178)]
    chunk: usize,
    /// Neighbours consulted per window [default: 3].
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    signal: SignalFlags,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    input: InputFlags,
    /// Seeded trials.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// First trial seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit the summary and every per-trial report as JSON.
    #[arg(long)]
    json: bool,
    /// Train on randomly permuted labels (leakage control).
    #[arg(long)]
    shuffle_labels: bool,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    signal: SignalFlags,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputFlags,
    /// Comma-separated k values.
    #[arg(long, default_value = "1,3,5,7")]
    k: String,
    /// Comma-separated alpha values.
    #[arg(long, default_value = "10,20,30,50")]
    alpha: String,
    /// Trials per cell.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// First trial seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trial rows CSV (k,alpha,seed,accuracy) [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Aggregate rows CSV (k,alpha,mean,std,n) [default: sweep_aggregates.csv next to --out, or stderr summary only].
    #[arg(long)]
    agg_out: Option<PathBuf>,
    #[command(flatten)]
    signal: SignalFlags,
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Stored exemplars; comma-separated list with --sweep.
    #[arg(long, default_value = "60")]
    m: String,
    /// Neighbours; comma-separated list with --sweep.
    #[arg(long, default_value = "3")]
    k: String,
    /// Feature length.
    #[arg(long, default_value_t = 178)]
    n: usize,
    /// Datapath clock.
    #[arg(long, default_value_t = sim::DEFAULT_CLOCK_HZ)]
    clock_hz: f64,
    /// Sampling rate used for the real-time check.
    #[arg(long, default_value_t = signal::DEFAULT_SAMPLE_RATE_HZ)]
    sample_rate_hz: f64,
    /// Cost overrides, e.g. mac=2,compare=1,insert=1,vote=1,overhead=10 [default: unit costs, overhead 10].
    #[arg(long, default_value = "", hide_default_value = true)]
    costs: String,
    /// Evaluate every (m, k) pair and emit CSV.
    #[arg(long)]
    sweep: bool,
    /// CSV output path for --sweep [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Windows per source class.
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Runs the CLI with the process environment.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with_env(args, |k| std::env::var(k).ok(), stdout, stderr)
}

pub fn run_with_env<I, T>(
    args: I,
    env: impl Fn(&str) -> Option<String>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli, &env, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = match &f {
                Failure::Usage(m) => writeln!(stderr, "usage error: {m}"),
                Failure::Data(e) => writeln!(stderr, "data error: {e:#}"),
                Failure::Internal(e) => writeln!(stderr, "internal error: {e:#}"),
            };
            f.exit_code()
        }
    }
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| Failure::Internal(e.into()))?;
    writeln!(out).data()
}

fn parse_list(s: &str, what: &str) -> Result<Vec<usize>, Failure> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| Failure::Usage(format!("--{what} expects comma-separated integers, got {s:?}")))
}

fn raw_label(input: &InputFlags) -> Result<Label, Failure> {
    input
        .label
        .as_deref()
        .map_or(Ok(Label::NonSeizure), str::parse)
        .map_err(Failure::Usage)
}

fn load_input(input: &InputFlags, cfg: &DetectorConfig) -> Result<Vec<LabeledWindow>, Failure> {
    if input.raw {
        signal::load_raw(&input.data, cfg.window_len, cfg.sample_rate_hz, raw_label(input)?).data()
    } else {
        signal::load_dataset(&input.data, cfg.window_len, cfg.sample_rate_hz).data()
    }
}

struct Ctx<'a> {
    resolved: ResolvedConfig,
    exec: Execution,
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn detector_config(&self) -> Result<DetectorConfig, Failure> {
        let cfg = self.resolved.detector_config()?;
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

fn dispatch(
    cli: Cli,
    env: &dyn Fn(&str) -> Option<String>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), Failure> {
    let flags: Vec<(&str, String)> = match &cli.command {
        Command::Ingest(a) => a.signal.pairs(),
        Command::Adapt(a) => [a.model.pairs(), a.signal.pairs()].concat(),
        Command::Detect(a) => {
            let mut v = a.signal.pairs();
            if let Some(k) = a.k {
                v.push(("k", k.to_string()));
            }
            if let Some(m) = &a.model {
                v.push(("model_path", m.display().to_string()));
            }
            v
        }
        Command::Eval(a) => [a.model.pairs(), a.signal.pairs()].concat(),
        Command::Sweep(a) => a.signal.pairs(),
        Command::Sim(_) | Command::Synth(_) => Vec::new(),
    };
    let resolved = ResolvedConfig::resolve(cli.config.as_deref(), env, &flags)?;
    if cli.print_config {
        return write_json(stdout, &resolved);
    }
    let _ = write!(stderr, "effective configuration:\n{}", resolved.describe());

    let exec = match (cli.threads, &cli.command) {
        (Some(t), _) => {
            if t == 0 {
                return Err(Failure::Usage("--threads must be at least 1".into()));
            }
            if let Err(e) = exec::set_threads(t) {
                let _ = writeln!(stderr, "warning: thread pool already configured: {e}");
            }
            if t == 1 {
                Execution::Sequential
            } else {
                Execution::default()
            }
        }
        (None, Command::Sweep(_)) => Execution::default(),
        (None, _) => Execution::Sequential,
    };
    let mut ctx = Ctx {
        resolved,
        exec,
        stdout,
        stderr,
    };
    match cli.command {
        Command::Ingest(a) => ingest(&mut ctx, a),
        Command::Adapt(a) => adapt(&mut ctx, a),
        Command::Detect(a) => detect(&mut ctx, a),
        Command::Eval(a) => eval(&mut ctx, a),
        Command::Sweep(a) => run_sweep(&mut ctx, a),
        Command::Sim(a) => run_sim(&mut ctx, a),
        Command::Synth(a) => run_synth(&mut ctx, a),
    }
}

#[derive(Serialize)]
struct IngestSummary {
    windows: usize,
    seizure: usize,
    non_seizure: usize,
    per_source_class: [usize; 5],
    window_len: usize,
    min_sample: f64,
    max_sample: f64,
}

fn ingest(ctx: &mut Ctx<'_>, a: IngestArgs) -> Result<(), Failure> {
    let cfg = ctx.detector_config()?;
    let windows = load_input(&a.input, &cfg)?;
    let mut per_class = [0usize; 5];
    for w in &windows {
        if let Some(c) = w.source_class {
            per_class[c as usize - 1] += 1;
        }
    }
    let samples = windows.iter().flat_map(|w| w.window.samples().iter().copied());
    let (min, max) = samples.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let seizure = windows.iter().filter(|w| w.label == Label::Seizure).count();
    write_json(
        ctx.stdout,
        &IngestSummary {
            windows: windows.len(),
            seizure,
            non_seizure: windows.len() - seizure,
            per_source_class: per_class,
            window_len: cfg.window_len,
            min_sample: if windows.is_empty() { 0.0 } else { min },
            max_sample: if windows.is_empty() { 0.0 } else { max },
        },
    )
}

#[derive(Serialize)]
struct AdaptSummary {
    model_path: String,
    windows: usize,
    evicted: usize,
    duration_us: u64,
    entries: usize,
    seizure_entries: usize,
    memory: crate::store::MemoryReport,
}

fn adapt(ctx: &mut Ctx<'_>, a: AdaptArgs) -> Result<(), Failure> {
    let cfg = ctx.detector_config()?;
    let out = a
        .out
        .or_else(|| ctx.resolved.model_path().map(PathBuf::from))
        .ok_or_else(|| Failure::Usage("adapt needs --out or model_path".into()))?;
    let windows = load_input(&a.input, &cfg)?;
    let chosen: Vec<LabeledWindow> = if a.all {
        windows
    } else {
        let split = stratified_split(&windows, cfg.alpha, a.seed).data()?;
        split.train.iter().map(|&i| windows[i].clone()).collect()
    };
    let extractor = cfg.extractor().data()?;
    let mut store = TrainingStore::new(cfg.alpha, extractor.feature_len(), cfg.q_format).data()?;
    let report = store.adapt(&chosen, &extractor).data()?;
    store.snapshot(&out).data()?;
    write_json(
        ctx.stdout,
        &AdaptSummary {
            model_path: out.display().to_string(),
            windows: report.windows,
            evicted: report.evicted,
            duration_us: report.duration.as_micros() as u64,
            entries: store.len(),
            seizure_entries: store.count(Label::Seizure),
            memory: store.memory_footprint(),
        },
    )
}

enum Sink {
    Jsonl(Box<dyn Write>),
    Frames(Box<dyn Write>),
    Stdout,
}

fn detect(ctx: &mut Ctx<'_>, a: DetectArgs) -> Result<(), Failure> {
    let cfg = ctx.detector_config()?;
    let model_path = ctx
        .resolved
        .model_path()
        .ok_or_else(|| Failure::Usage("detect needs --model or model_path".into()))?;
    if a.chunk == 0 {
        return Err(Failure::Usage("--chunk must be at least 1".into()));
    }
    let store = TrainingStore::restore(Path::new(&model_path)).data()?;
    let mut detector = Detector::new(cfg.clone(), Arc::new(store)).data()?;

    let samples: Vec<f64> = if a.input == "-" {
        signal::read_raw_samples(io::stdin().lock()).data()?
    } else if a.input.ends_with(".csv") {
        signal::load_dataset(Path::new(&a.input), cfg.window_len, cfg.sample_rate_hz)
            .data()?
            .into_iter()
            .flat_map(|w| w.window.samples().to_vec())
            .collect()
    } else {
        let f = File::open(&a.input).data()?;
        signal::read_raw_samples(BufReader::new(f)).data()?
    };

    let mut sink = match a.emit.as_str() {
        "-" => Sink::Stdout,
        p if p.ends_with(".bin") => Sink::Frames(Box::new(BufWriter::new(File::create(p).data()?))),
        p => Sink::Jsonl(Box::new(BufWriter::new(File::create(p).data()?))),
    };
    let mut count = 0usize;
    let mut seizures = 0usize;
    let mut latency_total = 0u64;
    for chunk in samples.chunks(a.chunk) {
        for ev in detector.push_samples(chunk).data()? {
            count += 1;
            seizures += (ev.label == Label::Seizure) as usize;
            latency_total += ev.latency_us;
            match &mut sink {
                Sink::Stdout => {
                    serde_json::to_writer(&mut *ctx.stdout, &ev).map_err(|e| Failure::Internal(e.into()))?;
                    writeln!(ctx.stdout).data()?;
                }
                Sink::Jsonl(w) => {
                    serde_json::to_writer(&mut *w, &ev).map_err(|e| Failure::Internal(e.into()))?;
                    writeln!(w).data()?;
                }
                Sink::Frames(w) => w.write_all(&encode_frame(&ev)).data()?,
            }
        }
    }
    match &mut sink {
        Sink::Jsonl(w) | Sink::Frames(w) => w.flush().data()?,
        Sink::Stdout => ctx.stdout.flush().data()?,
    }
    let mean = if count > 0 { latency_total as f64 / count as f64 } else { 0.0 };
    let _ = writeln!(
        ctx.stderr,
        "{count} windows, {seizures} seizure, {} samples left in buffer, mean latency {mean:.1} us",
        detector.buffered()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    summary: crate::eval::TrialSummary,
    reports: Vec<crate::eval::EvalReport>,
}

fn eval(ctx: &mut Ctx<'_>, a: EvalArgs) -> Result<(), Failure> {
    let cfg = ctx.detector_config()?;
    if a.trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    let windows = load_input(&a.input, &cfg)?;
    let evaluator = Evaluator::new(&windows, cfg, ctx.exec).data()?;
    let reports = if a.shuffle_labels {
        evaluator.shuffled_trials(a.seed, a.trials)
    } else {
        evaluator.trials(a.seed, a.trials)
    }
    .data()?;
    let summary = summarize(&reports, a.seed);
    if a.json {
        return write_json(ctx.stdout, &EvalOutput { summary, reports });
    }
    let pct = |v: Option<f64>| v.map_or("n/a".to_owned(), |x| format!("{:.2}%", 100.0 * x));
    let out = &mut ctx.stdout;
    writeln!(out, "trials       {}", summary.n_trials).data()?;
    writeln!(out, "k / alpha    {} / {}", summary.k, summary.alpha).data()?;
    writeln!(out, "accuracy     {:.2}% (std {:.2})", 100.0 * summary.mean_accuracy, 100.0 * summary.std_accuracy).data()?;
    writeln!(out, "sensitivity  {}", pct(summary.mean_sensitivity)).data()?;
    writeln!(out, "specificity  {}", pct(summary.mean_specificity)).data()?;
    Ok(())
}

fn run_sweep(ctx: &mut Ctx<'_>, a: SweepArgs) -> Result<(), Failure> {
    let cfg = ctx.detector_config()?;
    let ks = parse_list(&a.k, "k")?;
    let alphas = parse_list(&a.alpha, "alpha")?;
    let windows = load_input(&a.input, &cfg)?;
    let evaluator = Evaluator::new(&windows, cfg, ctx.exec).data()?;
    let grid = sweep(&evaluator, &ks, &alphas, a.trials, a.seed).data()?;
    match &a.out {
        Some(p) => grid.write_trials_csv(File::create(p).data()?).data()?,
        None => grid.write_trials_csv(&mut *ctx.stdout).data()?,
    }
    let agg_path = a.agg_out.clone().or_else(|| {
        a.out
            .as_ref()
            .map(|p| p.with_file_name("sweep_aggregates.csv"))
    });
    if let Some(p) = agg_path {
        grid.write_aggregates_csv(File::create(&p).data()?).data()?;
    }
    for row in &grid.aggregates {
        let _ = writeln!(ctx.stderr, "k={:<2} alpha={:<4} mean={:.4} std={:.4} n={}", row.k, row.alpha, row.mean, row.std, row.n);
    }
    if let Some(best) = grid.best() {
        let _ = writeln!(ctx.stderr, "best cell: k={} alpha={} mean={:.4}", best.k, best.alpha, best.mean);
    }
    Ok(())
}

fn run_sim(ctx: &mut Ctx<'_>, a: SimArgs) -> Result<(), Failure> {
    let model: StageCostModel = a.costs.parse().map_err(|e: sim::SimError| Failure::Usage(e.to_string()))?;
    let ms = parse_list(&a.m, "m")?;
    let ks = parse_list(&a.k, "k")?;
    let usage = |e: sim::SimError| Failure::Usage(e.to_string());
    if a.sweep {
        let rows = sim::sweep_design_space(&ms, &ks, a.n, &model, a.clock_hz, a.sample_rate_hz, ctx.exec).map_err(usage)?;
        match &a.out {
            Some(p) => sim::write_csv(&rows, File::create(p).data()?).data()?,
            None => sim::write_csv(&rows, &mut *ctx.stdout).data()?,
        }
        return Ok(());
    }
    if ms.len() != 1 || ks.len() != 1 {
        return Err(Failure::Usage("lists for --m/--k need --sweep".into()));
    }
    let params = SimParams {
        m: ms[0],
        n: a.n,
        k: ks[0],
        clock_hz: a.clock_hz,
        sample_rate_hz: a.sample_rate_hz,
    };
    let report = sim::simulate_classification(&params, &model).map_err(usage)?;
    if report.cycles_per_window != report.stages.total() {
        return Err(Failure::Internal(anyhow::anyhow!("stage cycles do not sum to the window total")));
    }
    if let Some(p) = &a.out {
        sim::write_csv(&[report], File::create(p).data()?).data()?;
    }
    write_json(ctx.stdout, &report)
}

fn run_synth(ctx: &mut Ctx<'_>, a: SynthArgs) -> Result<(), Failure> {
    let windows = synth::generate(&SynthConfig {
        per_class: a.per_class,
        seed: a.seed,
        ..Default::default()
    });
    synth::write_csv(&windows, BufWriter::new(File::create(&a.out).data()?)).data()?;
    let _ = writeln!(ctx.stderr, "wrote {} windows to {}", windows.len(), a.out.display());
    Ok(())
}
