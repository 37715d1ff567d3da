//! The `renderwait` command line: dataset generation from simulator
//! screencasts, sampling, augmentation, training, evaluation, record,
//! replay, and benchmarking.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error. All randomness
//! flows from `--seed` (falling back to `RENDERWAIT_SEED`, then a config
//! file, then 0); nothing reads the wall clock. Progress goes to standard
//! error, machine-readable output to files or standard output.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::imaging::{frame_filename, read_frame, write_frame};
use crate::nn::{load_checkpoint, ClassifierConfig};
use crate::renderstate::{
    build_dataset, evaluate, predict, read_labeled_screencast, train_classifier, write_labels,
    DatasetManifest, DatasetOptions, RenderLabel, RenderState, Split, TrainOptions,
    DEFAULT_AUGMENT_RATIO,
};
use crate::replay::{
    bench, record, replay, reports_to_csv, BenchConfig, EventScript, StrategySpec, WaitStrategy,
    DEFAULT_MAX_WAIT_MS, DEFAULT_POLL_INTERVAL_MS,
};
use crate::sampling::{hac_sample_indices, SamplerConfig, DEFAULT_EPSILON};
use crate::sim::{
    capture_screencast, export_screencast, generate_dataset_scenario, generate_replay_suite,
    CaptureOptions, DeviceProfile, ScenarioSpec, Simulator,
};

fn parse_epsilon(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("epsilon must lie in (0, 1], got {v}"))
    }
}

#[derive(Parser)]
#[command(
    name = "renderwait",
    version,
    about = "Record-and-replay for GUI scenarios with rendering-aware adaptive waiting"
)]
struct Cli {
    /// Seed for all randomness; RENDERWAIT_SEED and the config file are
    /// fallbacks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Optional key=value config file supplying defaults; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios on the virtual device: export screencasts or generate
    /// synthetic scenarios and suites.
    Simulate(SimulateArgs),
    /// Dataset pipeline stages.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Train the rendering-state classifier from a dataset manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint over a dataset split.
    Eval(EvalArgs),
    /// Classify a single frame file.
    Classify(ClassifyArgs),
    /// Record a scenario into an event script under oracle waiting.
    Record(RecordArgs),
    /// Replay an event script under a waiting strategy.
    Replay(ReplayArgs),
    /// Record and replay a suite across profiles and strategies.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario definition file to run.
    #[arg(long, conflicts_with_all = ["synthetic", "gen_suite"])]
    scenario: Option<PathBuf>,
    /// Generate a synthetic walk scenario with this many screens.
    #[arg(long, conflicts_with = "gen_suite")]
    synthetic: Option<usize>,
    /// Generate a replay suite with this many scenarios into --out.
    #[arg(long)]
    gen_suite: Option<usize>,
    /// Screens per scenario for --gen-suite.
    #[arg(long, default_value_t = 6)]
    screens: usize,
    /// Write the scenario definition here.
    #[arg(long)]
    scenario_out: Option<PathBuf>,
    /// Screencast (or suite) output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "reference")]
    profile: String,
    /// Capture cadence in virtual milliseconds.
    #[arg(long, default_value_t = 120)]
    interval_ms: u64,
    /// Capture in-flight frames on every n-th sequence only.
    #[arg(long, default_value_t = 1)]
    partial_stride: usize,
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Deduplicate one screencast directory per GUI-state group.
    Sample(SampleArgs),
    /// Synthesize partial frames up to the partial:full target ratio.
    Augment(AugmentArgs),
    /// Full pipeline: sample, augment, and split labeled screencasts.
    Build(BuildArgs),
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_parser = parse_epsilon)]
    epsilon: Option<f64>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    /// Target partial:full ratio.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long, value_parser = parse_epsilon)]
    epsilon: Option<f64>,
    #[arg(long)]
    ratio: Option<f64>,
    /// Labeled screencast directories.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    input_width: Option<u32>,
    #[arg(long)]
    input_height: Option<u32>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Frame file (PGM/PPM).
    frame: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct RecordArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "reference")]
    profile: String,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    script: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "reference")]
    profile: String,
    /// adaptive | oracle | fixed:<k>
    #[arg(long)]
    strategy: StrategySpec,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    poll_interval_ms: Option<u64>,
    #[arg(long)]
    max_wait_ms: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of scenario definition files.
    #[arg(long)]
    suite: PathBuf,
    /// Report CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Comma-separated profile names.
    #[arg(long, value_delimiter = ',')]
    profiles: Vec<String>,
    /// Comma-separated strategies.
    #[arg(long, value_delimiter = ',')]
    strategies: Vec<StrategySpec>,
    #[arg(long)]
    poll_interval_ms: Option<u64>,
    #[arg(long)]
    max_wait_ms: Option<u64>,
}

/// Defaults loaded from the optional key=value config file.
#[derive(Default)]
struct FileConfig(BTreeMap<String, String>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path)?;
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("config line {} is not key=value", i + 1)))?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig(map))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::invalid(format!("config key {key} has bad value {raw:?}"))),
        }
    }
}

/// Run the CLI; returns the process exit code.
pub fn run<I, A>(argv: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .is_test(false)
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            // Help and version belong on stdout, usage errors on stderr.
            if code == 0 {
                print!("{e}");
            } else {
                eprint!("{e}");
            }
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file_cfg = FileConfig::load(cli.config.as_deref())?;
    let seed = match cli.seed {
        Some(s) => s,
        None => match std::env::var("RENDERWAIT_SEED").ok().map(|v| v.parse()) {
            Some(Ok(s)) => s,
            Some(Err(_)) => return Err(Error::invalid("RENDERWAIT_SEED is not a number")),
            None => file_cfg.get::<u64>("seed")?.unwrap_or(0),
        },
    };

    match cli.command {
        Command::Simulate(args) => cmd_simulate(args, seed),
        Command::Dataset(DatasetCmd::Sample(args)) => cmd_sample(args, &file_cfg),
        Command::Dataset(DatasetCmd::Augment(args)) => cmd_augment(args, seed, &file_cfg),
        Command::Dataset(DatasetCmd::Build(args)) => cmd_build(args, seed, &file_cfg),
        Command::Train(args) => cmd_train(args, seed, &file_cfg),
        Command::Eval(args) => cmd_eval(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Record(args) => cmd_record(args, seed),
        Command::Replay(args) => cmd_replay(args, seed, &file_cfg),
        Command::Bench(args) => cmd_bench(args, seed, &file_cfg),
    }
}

fn profile_for(scenario: &ScenarioSpec, name: &str) -> Result<DeviceProfile> {
    scenario
        .profiles
        .iter()
        .find(|p| p.name == name)
        .cloned()
        .or_else(|| DeviceProfile::by_name(name))
        .ok_or_else(|| Error::invalid(format!("unknown device profile {name:?}")))
}

fn cmd_simulate(args: SimulateArgs, seed: u64) -> Result<()> {
    if let Some(n) = args.gen_suite {
        let out = args
            .out
            .as_ref()
            .ok_or_else(|| Error::invalid("--gen-suite needs --out"))?;
        fs::create_dir_all(out)?;
        for (i, spec) in generate_replay_suite(seed, n, args.screens).iter().enumerate() {
            spec.save(&out.join(format!("scenario_{i:02}.json")))?;
        }
        log::info!("wrote {n} scenarios to {}", out.display());
        return Ok(());
    }

    let scenario = match (args.scenario.as_ref(), args.synthetic) {
        (Some(path), None) => ScenarioSpec::load(path)?,
        (None, Some(n)) => generate_dataset_scenario(seed, n),
        _ => return Err(Error::invalid("give exactly one of --scenario / --synthetic")),
    };
    if let Some(path) = &args.scenario_out {
        scenario.save(path)?;
    }
    if let Some(out) = &args.out {
        let profile = profile_for(&scenario, &args.profile)?;
        let actions = scenario.actions.clone();
        let mut sim = Simulator::new(scenario, profile, seed)?;
        let frames = capture_screencast(
            &mut sim,
            &actions,
            &CaptureOptions {
                interval_ms: args.interval_ms,
                partial_stride: args.partial_stride,
            },
        )?;
        export_screencast(out, &frames)?;
        log::info!("captured {} frames to {}", frames.len(), out.display());
    }
    Ok(())
}

fn cmd_sample(args: SampleArgs, file_cfg: &FileConfig) -> Result<()> {
    let epsilon = args
        .epsilon
        .or(file_cfg.get("epsilon")?)
        .unwrap_or(DEFAULT_EPSILON);
    let frames = read_labeled_screencast(&args.input)?;
    fs::create_dir_all(&args.out)?;

    let mut kept_names: Vec<String> = Vec::new();
    let mut discarded_names: Vec<String> = Vec::new();
    let mut kept_rows: Vec<(u64, RenderState)> = Vec::new();
    let config = SamplerConfig::with_epsilon(epsilon);
    for state in [
        RenderState::FullyRendered,
        RenderState::Transiting,
        RenderState::Loading,
    ] {
        let group: Vec<_> = frames.iter().filter(|(_, s)| *s == state).collect();
        if group.is_empty() {
            continue;
        }
        let group_frames: Vec<_> = group.iter().map(|(f, _)| f.clone()).collect();
        let kept = hac_sample_indices(&group_frames, &config)?;
        for (i, frame) in group_frames.iter().enumerate() {
            let name = frame_filename(frame);
            if kept.contains(&i) {
                write_frame(frame, &args.out.join(&name))?;
                kept_names.push(name);
                kept_rows.push((frame.timestamp_ms(), state));
            } else {
                discarded_names.push(name);
            }
        }
    }
    kept_names.sort();
    discarded_names.sort();
    kept_rows.sort_by_key(|(ts, _)| *ts);
    write_labels(&args.out.join(crate::renderstate::LABELS_FILE), &kept_rows)?;
    let manifest = serde_json::json!({ "kept": kept_names, "discarded": discarded_names });
    fs::write(
        args.out.join("sample_manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    log::info!(
        "kept {} of {} frames",
        kept_names.len(),
        kept_names.len() + discarded_names.len()
    );
    Ok(())
}

fn cmd_augment(args: AugmentArgs, seed: u64, file_cfg: &FileConfig) -> Result<()> {
    use crate::augment::{AugmentKind, AugmentSpec};
    use rand::{Rng, SeedableRng};

    let ratio = args
        .ratio
        .or(file_cfg.get("ratio")?)
        .unwrap_or(DEFAULT_AUGMENT_RATIO);
    if ratio <= 0.0 {
        return Err(Error::invalid("ratio must be positive"));
    }
    let frames = read_labeled_screencast(&args.input)?;
    fs::create_dir_all(&args.out)?;

    let fulls: Vec<_> = frames
        .iter()
        .filter(|(_, s)| s.is_fully_rendered())
        .map(|(f, _)| f.clone())
        .collect();
    if fulls.is_empty() {
        return Err(Error::invalid("input holds no fully rendered frames"));
    }
    let partials = frames.len() - fulls.len();
    let mut entries: Vec<serde_json::Value> = Vec::new();
    for (frame, state) in &frames {
        let name = frame_filename(frame);
        write_frame(frame, &args.out.join(&name))?;
        entries.push(serde_json::json!({
            "path": name,
            "label": state.label(),
            "origin": "captured",
        }));
    }

    let target = (ratio * fulls.len() as f64).round() as usize;
    let needed = target.saturating_sub(partials);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5_5a5a_0f0f_f0f0);
    for k in 0..needed {
        let kind = if fulls.len() < 2 {
            AugmentKind::LoadingInject
        } else {
            match rng.random_range(0..3u32) {
                0 => AugmentKind::Stitch,
                1 => AugmentKind::Blend,
                _ => AugmentKind::LoadingInject,
            }
        };
        let a = rng.random_range(0..fulls.len());
        let mut b = a;
        if fulls.len() >= 2 {
            b = rng.random_range(0..fulls.len() - 1);
            if b >= a {
                b += 1;
            }
        }
        let spec = AugmentSpec {
            kind,
            seed: rng.random(),
        };
        let frame = spec.apply(&fulls[a], &fulls[b])?;
        let (slug, origin) = match kind {
            AugmentKind::Stitch => ("stitch", "stitched"),
            AugmentKind::Blend => ("blend", "blended"),
            AugmentKind::LoadingInject => ("inject", "injected"),
        };
        let name = format!("aug_{slug}_{k:05}.pgm");
        write_frame(&frame, &args.out.join(&name))?;
        entries.push(serde_json::json!({
            "path": name,
            "label": RenderLabel::Partial,
            "origin": origin,
        }));
    }
    fs::write(
        args.out.join("labels.json"),
        serde_json::to_vec_pretty(&serde_json::Value::Array(entries))?,
    )?;
    log::info!("augmented {needed} partial frames (ratio {ratio})");
    Ok(())
}

fn cmd_build(args: BuildArgs, seed: u64, file_cfg: &FileConfig) -> Result<()> {
    let opts = DatasetOptions {
        epsilon: args
            .epsilon
            .or(file_cfg.get("epsilon")?)
            .unwrap_or(DEFAULT_EPSILON),
        ratio: args
            .ratio
            .or(file_cfg.get("ratio")?)
            .unwrap_or(DEFAULT_AUGMENT_RATIO),
        seed,
        sampler: SamplerConfig::default(),
    };
    let manifest = build_dataset(&args.inputs, &args.out, &opts)?;
    log::info!(
        "dataset with {} entries at {}",
        manifest.entries.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs, seed: u64, file_cfg: &FileConfig) -> Result<()> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let root = args
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut model_cfg = ClassifierConfig::default();
    if let Some(w) = args.input_width.or(file_cfg.get("input_width")?) {
        model_cfg.input_width = w;
    }
    if let Some(h) = args.input_height.or(file_cfg.get("input_height")?) {
        model_cfg.input_height = h;
    }
    let opts = TrainOptions {
        epochs: args.epochs.or(file_cfg.get("epochs")?).unwrap_or(20),
        seed,
        model: model_cfg,
        ..TrainOptions::default()
    };
    let bytes = train_classifier(&manifest, &root, &opts)?;
    fs::write(&args.out, bytes)?;
    log::info!("checkpoint written to {}", args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let root = args
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut model = load_checkpoint(&fs::read(&args.checkpoint)?)?;
    let metrics = evaluate(&mut model, &manifest, args.split, &root)?;
    println!(
        "{}",
        serde_json::json!({
            "split": format!("{:?}", args.split).to_lowercase(),
            "precision": metrics.precision,
            "recall": metrics.recall,
            "f1": metrics.f1,
            "precision_defined": metrics.precision_defined,
        })
    );
    Ok(())
}

fn cmd_classify(args: ClassifyArgs) -> Result<()> {
    let mut model = load_checkpoint(&fs::read(&args.checkpoint)?)?;
    let frame = read_frame(&args.frame)?;
    let (label, confidence) = predict(&mut model, &frame)?;
    println!(
        "{}",
        serde_json::json!({ "label": label, "confidence": confidence })
    );
    Ok(())
}

fn cmd_record(args: RecordArgs, seed: u64) -> Result<()> {
    let scenario = ScenarioSpec::load(&args.scenario)?;
    let profile = profile_for(&scenario, &args.profile)?;
    let actions = scenario.actions.clone();
    let name = scenario.name.clone();
    let mut sim = Simulator::new(scenario, profile, seed)?;
    let script = record(&mut sim, &actions, &name)?;
    script.save(&args.out)?;
    log::info!(
        "recorded {} events to {}",
        script.events.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_replay(args: ReplayArgs, seed: u64, file_cfg: &FileConfig) -> Result<()> {
    let scenario = ScenarioSpec::load(&args.scenario)?;
    let script = EventScript::load(&args.script)?;
    let profile = profile_for(&scenario, &args.profile)?;
    let mut strategy = match args.strategy {
        StrategySpec::Fixed(k) => WaitStrategy::Fixed { multiplier: k },
        StrategySpec::Oracle => WaitStrategy::Oracle,
        StrategySpec::Adaptive => {
            let ckpt = args
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::invalid("adaptive replay needs --checkpoint"))?;
            WaitStrategy::Adaptive {
                poll_interval_ms: args
                    .poll_interval_ms
                    .or(file_cfg.get("poll_interval_ms")?)
                    .unwrap_or(DEFAULT_POLL_INTERVAL_MS),
                max_wait_ms: args
                    .max_wait_ms
                    .or(file_cfg.get("max_wait_ms")?)
                    .unwrap_or(DEFAULT_MAX_WAIT_MS),
                model: load_checkpoint(&fs::read(ckpt)?)?,
            }
        }
    };
    let mut sim = Simulator::new(scenario, profile, seed)?;
    let report = replay(&mut sim, &script, &mut strategy)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_bench(args: BenchArgs, seed: u64, file_cfg: &FileConfig) -> Result<()> {
    let mut paths: Vec<PathBuf> = fs::read_dir(&args.suite)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid(format!(
            "no scenario files under {}",
            args.suite.display()
        )));
    }
    let scenarios: Vec<ScenarioSpec> = paths
        .iter()
        .map(|p| ScenarioSpec::load(p))
        .collect::<Result<_>>()?;

    let mut config = BenchConfig {
        seed,
        poll_interval_ms: args
            .poll_interval_ms
            .or(file_cfg.get("poll_interval_ms")?)
            .unwrap_or(DEFAULT_POLL_INTERVAL_MS),
        max_wait_ms: args
            .max_wait_ms
            .or(file_cfg.get("max_wait_ms")?)
            .unwrap_or(DEFAULT_MAX_WAIT_MS),
        ..BenchConfig::default()
    };
    if !args.profiles.is_empty() {
        config.profiles = args
            .profiles
            .iter()
            .map(|n| {
                DeviceProfile::by_name(n)
                    .ok_or_else(|| Error::invalid(format!("unknown device profile {n:?}")))
            })
            .collect::<Result<_>>()?;
    }
    if !args.strategies.is_empty() {
        config.strategies = args.strategies.clone();
    }
    let checkpoint = match &args.checkpoint {
        Some(path) => Some(fs::read(path)?),
        None => None,
    };
    if checkpoint.is_none() {
        config.strategies.retain(|s| *s != StrategySpec::Adaptive);
        if config.strategies.is_empty() {
            return Err(Error::invalid("adaptive-only bench needs --checkpoint"));
        }
    }

    let result = bench(&scenarios, checkpoint.as_deref(), &config)?;
    fs::write(&args.out, reports_to_csv(&result.reports))?;
    println!("{}", serde_json::to_string_pretty(&result.aggregates)?);
    log::info!("report written to {}", args.out.display());
    Ok(())
}
