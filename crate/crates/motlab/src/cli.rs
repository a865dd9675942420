//! Batch command-line interface: world generation, detector simulation,
//! training, log analytics, evaluation, and mask inspection.
//!
//! Every command is a pure function of its manifest (configuration, seed,
//! inputs); outputs are byte-reproducible. Exit codes: 0 success, 2 usage
//! error (argument parsing), 1 runtime error.

use crate::analytics;
use crate::config::ConfigFile;
use crate::engine::{self, TrainConfig};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::pld;
use crate::rng;
use crate::tgd::{build_attention_mask, build_attention_mask_literal, GroupLayout};
use crate::world::{self, DetectorParams, ScenarioConfig};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "motlab", version, about = "label-assignment laboratory for query-based tracking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scenario: ground-truth file plus description.
    GenWorld(GenWorldArgs),
    /// Simulate a noisy detector over a ground-truth file.
    DetectSim(DetectSimArgs),
    /// Train the toy model over one or more sequences.
    Train(TrainArgs),
    /// Compute assignment and misalignment statistics from a training log.
    Analyze(AnalyzeArgs),
    /// Evaluate tracker output against ground truth.
    Eval(EvalArgs),
    /// Print an attention mask as a 0/1 grid.
    MaskDump(MaskDumpArgs),
}

#[derive(Debug, Args)]
pub struct GenWorldArgs {
    /// Configuration file with a [world] section.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub num_targets: Option<usize>,
    #[arg(long)]
    pub num_frames: Option<usize>,
    #[arg(long)]
    pub speed_min: Option<f64>,
    #[arg(long)]
    pub speed_max: Option<f64>,
    #[arg(long)]
    pub size_min: Option<f64>,
    #[arg(long)]
    pub size_max: Option<f64>,
    #[arg(long)]
    pub birth_prob: Option<f64>,
    #[arg(long)]
    pub death_prob: Option<f64>,
    #[arg(long)]
    pub motion_noise: Option<f64>,
    #[arg(long)]
    pub min_separation: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DetectSimArgs {
    #[arg(long)]
    pub gt: PathBuf,
    /// Gaussian box noise sigma.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// False-negative rate.
    #[arg(long = "fn", default_value_t = 0.05)]
    pub fn_rate: f64,
    /// False positives per object.
    #[arg(long = "fp", default_value_t = 0.1)]
    pub fp_rate: f64,
    /// Confidence decay rate.
    #[arg(long, default_value_t = 5.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output detection CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Configuration file with a [train] section.
    #[arg(long)]
    pub config: PathBuf,
    /// Ground-truth file(s); one sequence each.
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    /// Detection file(s), aligned with --gt; required when pld is enabled.
    #[arg(long)]
    pub det: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub rfs: Option<bool>,
    #[arg(long)]
    pub pld: Option<bool>,
    #[arg(long)]
    pub tgd: Option<bool>,
    #[arg(long)]
    pub mask_literal: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub detect_queries: Option<usize>,
    #[arg(long)]
    pub track_groups: Option<usize>,
    #[arg(long)]
    pub stages: Option<usize>,
    #[arg(long)]
    pub lambda_cls: Option<f64>,
    #[arg(long)]
    pub lambda_l1: Option<f64>,
    #[arg(long)]
    pub lambda_giou: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub clip_len: Option<usize>,
    #[arg(long)]
    pub interval_min: Option<usize>,
    #[arg(long)]
    pub interval_max: Option<usize>,
    #[arg(long)]
    pub spawn_threshold: Option<f64>,
    #[arg(long)]
    pub miss_tolerance: Option<u32>,
    #[arg(long)]
    pub pseudo_threshold: Option<f64>,
    #[arg(long)]
    pub scale_min: Option<f64>,
    #[arg(long)]
    pub scale_max: Option<f64>,
    #[arg(long)]
    pub suppression: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Output report path (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou_threshold: f64,
}

#[derive(Debug, Args)]
pub struct MaskDumpArgs {
    /// Detect query count M.
    #[arg(long = "M")]
    pub m: usize,
    /// Track query count N.
    #[arg(long = "N")]
    pub n: usize,
    /// Group count G (including the original group).
    #[arg(long = "G")]
    pub g: usize,
    /// Use the mask rule exactly as printed.
    #[arg(long)]
    pub literal: bool,
}

/// Dispatch a parsed command.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenWorld(args) => cmd_gen_world(&args),
        Command::DetectSim(args) => cmd_detect_sim(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::MaskDump(args) => {
            print!("{}", mask_grid(&args));
            Ok(())
        }
    }
}

const WORLD_KEYS: &[&str] = &[
    "num_targets",
    "num_frames",
    "speed_min",
    "speed_max",
    "size_min",
    "size_max",
    "birth_prob",
    "death_prob",
    "motion_noise",
    "min_separation",
];

/// Resolve a [world] section over the defaults.
pub fn world_config_from_file(file: &ConfigFile) -> Result<ScenarioConfig> {
    for key in file.keys("world") {
        if !WORLD_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown [world] key: {key}")));
        }
    }
    let mut cfg = ScenarioConfig::default();
    if let Some(v) = file.usize("world", "num_targets")? {
        cfg.num_targets = v;
    }
    if let Some(v) = file.usize("world", "num_frames")? {
        cfg.num_frames = v;
    }
    if let Some(v) = file.f64("world", "speed_min")? {
        cfg.speed_range.0 = v;
    }
    if let Some(v) = file.f64("world", "speed_max")? {
        cfg.speed_range.1 = v;
    }
    if let Some(v) = file.f64("world", "size_min")? {
        cfg.size_range.0 = v;
    }
    if let Some(v) = file.f64("world", "size_max")? {
        cfg.size_range.1 = v;
    }
    if let Some(v) = file.f64("world", "birth_prob")? {
        cfg.birth_prob = v;
    }
    if let Some(v) = file.f64("world", "death_prob")? {
        cfg.death_prob = v;
    }
    if let Some(v) = file.f64("world", "motion_noise")? {
        cfg.motion_noise = v;
    }
    if let Some(v) = file.f64("world", "min_separation")? {
        cfg.min_separation = v;
    }
    Ok(cfg)
}

const TRAIN_KEYS: &[&str] = &[
    "detect_queries",
    "track_groups",
    "stages",
    "lambda_cls",
    "lambda_l1",
    "lambda_giou",
    "learning_rate",
    "epochs",
    "clip_len",
    "interval_min",
    "interval_max",
    "spawn_threshold",
    "miss_tolerance",
    "pseudo_threshold",
    "scale_min",
    "scale_max",
    "suppression",
    "rfs",
    "pld",
    "tgd",
    "mask_literal",
    "seed",
];

/// Resolve a [train] section over the defaults.
pub fn train_config_from_file(file: &ConfigFile) -> Result<TrainConfig> {
    for key in file.keys("train") {
        if !TRAIN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown [train] key: {key}")));
        }
    }
    let mut cfg = TrainConfig::default();
    if let Some(v) = file.usize("train", "detect_queries")? {
        cfg.detect_queries = v;
    }
    if let Some(v) = file.usize("train", "track_groups")? {
        cfg.track_groups = v;
    }
    if let Some(v) = file.usize("train", "stages")? {
        cfg.stages = v;
    }
    if let Some(v) = file.f64("train", "lambda_cls")? {
        cfg.weights.cls = v;
    }
    if let Some(v) = file.f64("train", "lambda_l1")? {
        cfg.weights.l1 = v;
    }
    if let Some(v) = file.f64("train", "lambda_giou")? {
        cfg.weights.giou = v;
    }
    if let Some(v) = file.f64("train", "learning_rate")? {
        cfg.learning_rate = v;
    }
    if let Some(v) = file.usize("train", "epochs")? {
        cfg.epochs = v;
    }
    if let Some(v) = file.usize("train", "clip_len")? {
        cfg.clip_len = v;
    }
    if let Some(v) = file.usize("train", "interval_min")? {
        cfg.interval_min = v;
    }
    if let Some(v) = file.usize("train", "interval_max")? {
        cfg.interval_max = v;
    }
    if let Some(v) = file.f64("train", "spawn_threshold")? {
        cfg.spawn_threshold = v;
    }
    if let Some(v) = file.u64("train", "miss_tolerance")? {
        cfg.miss_tolerance = v as u32;
    }
    if let Some(v) = file.f64("train", "pseudo_threshold")? {
        cfg.pseudo_threshold = v;
    }
    if let Some(v) = file.f64("train", "scale_min")? {
        cfg.scale_range.0 = v;
    }
    if let Some(v) = file.f64("train", "scale_max")? {
        cfg.scale_range.1 = v;
    }
    if let Some(v) = file.f64("train", "suppression")? {
        cfg.suppression = v;
    }
    if let Some(v) = file.bool("train", "rfs")? {
        cfg.enable_rfs = v;
    }
    if let Some(v) = file.bool("train", "pld")? {
        cfg.enable_pld = v;
    }
    if let Some(v) = file.bool("train", "tgd")? {
        cfg.enable_tgd = v;
    }
    if let Some(v) = file.bool("train", "mask_literal")? {
        cfg.mask_literal = v;
    }
    if let Some(v) = file.u64("train", "seed")? {
        cfg.seed = v;
    }
    Ok(cfg)
}

fn apply_train_overrides(cfg: &mut TrainConfig, args: &TrainArgs) {
    macro_rules! set {
        ($field:expr, $opt:expr) => {
            if let Some(v) = $opt {
                $field = v;
            }
        };
    }
    set!(cfg.enable_rfs, args.rfs);
    set!(cfg.enable_pld, args.pld);
    set!(cfg.enable_tgd, args.tgd);
    set!(cfg.mask_literal, args.mask_literal);
    set!(cfg.seed, args.seed);
    set!(cfg.detect_queries, args.detect_queries);
    set!(cfg.track_groups, args.track_groups);
    set!(cfg.stages, args.stages);
    set!(cfg.weights.cls, args.lambda_cls);
    set!(cfg.weights.l1, args.lambda_l1);
    set!(cfg.weights.giou, args.lambda_giou);
    set!(cfg.learning_rate, args.learning_rate);
    set!(cfg.epochs, args.epochs);
    set!(cfg.clip_len, args.clip_len);
    set!(cfg.interval_min, args.interval_min);
    set!(cfg.interval_max, args.interval_max);
    set!(cfg.spawn_threshold, args.spawn_threshold);
    set!(cfg.miss_tolerance, args.miss_tolerance);
    set!(cfg.pseudo_threshold, args.pseudo_threshold);
    set!(cfg.scale_range.0, args.scale_min);
    set!(cfg.scale_range.1, args.scale_max);
    set!(cfg.suppression, args.suppression);
}

fn render_world_config(cfg: &ScenarioConfig, seed: u64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[world]");
    let _ = writeln!(s, "num_targets = {}", cfg.num_targets);
    let _ = writeln!(s, "num_frames = {}", cfg.num_frames);
    let _ = writeln!(s, "speed_min = {}", cfg.speed_range.0);
    let _ = writeln!(s, "speed_max = {}", cfg.speed_range.1);
    let _ = writeln!(s, "size_min = {}", cfg.size_range.0);
    let _ = writeln!(s, "size_max = {}", cfg.size_range.1);
    let _ = writeln!(s, "birth_prob = {}", cfg.birth_prob);
    let _ = writeln!(s, "death_prob = {}", cfg.death_prob);
    let _ = writeln!(s, "motion_noise = {}", cfg.motion_noise);
    let _ = writeln!(s, "min_separation = {}", cfg.min_separation);
    let _ = writeln!(s, "\n[scenario]");
    let _ = writeln!(s, "seed = {seed}");
    s
}

/// Render the resolved training configuration as a [train] section.
pub fn render_train_config(cfg: &TrainConfig) -> String {
    let LossWeights { cls, l1, giou } = cfg.weights;
    let mut s = String::new();
    let _ = writeln!(s, "[train]");
    let _ = writeln!(s, "detect_queries = {}", cfg.detect_queries);
    let _ = writeln!(s, "track_groups = {}", cfg.track_groups);
    let _ = writeln!(s, "stages = {}", cfg.stages);
    let _ = writeln!(s, "lambda_cls = {cls}");
    let _ = writeln!(s, "lambda_l1 = {l1}");
    let _ = writeln!(s, "lambda_giou = {giou}");
    let _ = writeln!(s, "learning_rate = {}", cfg.learning_rate);
    let _ = writeln!(s, "epochs = {}", cfg.epochs);
    let _ = writeln!(s, "clip_len = {}", cfg.clip_len);
    let _ = writeln!(s, "interval_min = {}", cfg.interval_min);
    let _ = writeln!(s, "interval_max = {}", cfg.interval_max);
    let _ = writeln!(s, "spawn_threshold = {}", cfg.spawn_threshold);
    let _ = writeln!(s, "miss_tolerance = {}", cfg.miss_tolerance);
    let _ = writeln!(s, "pseudo_threshold = {}", cfg.pseudo_threshold);
    let _ = writeln!(s, "scale_min = {}", cfg.scale_range.0);
    let _ = writeln!(s, "scale_max = {}", cfg.scale_range.1);
    let _ = writeln!(s, "suppression = {}", cfg.suppression);
    let _ = writeln!(s, "rfs = {}", cfg.enable_rfs);
    let _ = writeln!(s, "pld = {}", cfg.enable_pld);
    let _ = writeln!(s, "tgd = {}", cfg.enable_tgd);
    let _ = writeln!(s, "mask_literal = {}", cfg.mask_literal);
    let _ = writeln!(s, "seed = {}", cfg.seed);
    s
}

fn fnv(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Build the run manifest: enough to reproduce the run byte for byte.
pub fn render_manifest(cfg: &TrainConfig, gt: &[PathBuf], det: &[PathBuf], out: &Path) -> String {
    let mut body = String::new();
    let _ = writeln!(body, "[inputs]");
    for (i, p) in gt.iter().enumerate() {
        let _ = writeln!(body, "gt_{i} = {}", p.display());
    }
    for (i, p) in det.iter().enumerate() {
        let _ = writeln!(body, "det_{i} = {}", p.display());
    }
    let _ = writeln!(body, "out = {}", out.display());
    let _ = writeln!(body);
    body.push_str(&render_train_config(cfg));
    let mut s = String::new();
    let _ = writeln!(s, "[run]");
    let _ = writeln!(s, "id = run-{:016x}", fnv(&body));
    let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s);
    s.push_str(&body);
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn cmd_gen_world(args: &GenWorldArgs) -> Result<()> {
    let file = ConfigFile::load(&args.config)?;
    let mut cfg = world_config_from_file(&file)?;
    macro_rules! set {
        ($field:expr, $opt:expr) => {
            if let Some(v) = $opt {
                $field = v;
            }
        };
    }
    set!(cfg.num_targets, args.num_targets);
    set!(cfg.num_frames, args.num_frames);
    set!(cfg.speed_range.0, args.speed_min);
    set!(cfg.speed_range.1, args.speed_max);
    set!(cfg.size_range.0, args.size_min);
    set!(cfg.size_range.1, args.size_max);
    set!(cfg.birth_prob, args.birth_prob);
    set!(cfg.death_prob, args.death_prob);
    set!(cfg.motion_noise, args.motion_noise);
    set!(cfg.min_separation, args.min_separation);

    let scenario = world::generate_scenario(&cfg, args.seed)?;
    let frames = world::render_all(&scenario);
    ensure_dir(&args.out)?;
    world::write_gt_file(&args.out.join("gt.txt"), &frames)?;
    write_file(
        &args.out.join("scenario.txt"),
        &render_world_config(&cfg, args.seed),
    )?;
    Ok(())
}

pub fn cmd_detect_sim(args: &DetectSimArgs) -> Result<()> {
    let frames = world::read_gt_file(&args.gt)?;
    let params = DetectorParams {
        box_noise: args.noise,
        fn_rate: args.fn_rate,
        fp_rate: args.fp_rate,
        kappa: args.kappa,
    };
    if !(0.0..=1.0).contains(&params.fn_rate) || params.fp_rate < 0.0 {
        return Err(Error::Config("detector rates out of range".into()));
    }
    let mut set = pld::PseudoLabelSet::new();
    for (t, labels) in frames.iter().enumerate() {
        let frame_seed = rng::stream(args.seed, "detector-frame", t as u64).gen::<u64>();
        for det in world::simulate_detector(labels, &params, frame_seed) {
            set.push(t as u64 + 1, det);
        }
    }
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            ensure_dir(dir)?;
        }
    }
    pld::write_detections_file(&args.out, &set)?;
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let file = ConfigFile::load(&args.config)?;
    let mut cfg = train_config_from_file(&file)?;
    apply_train_overrides(&mut cfg, args);
    cfg.validate()?;

    if cfg.enable_pld && args.det.len() != args.gt.len() {
        return Err(Error::Config(format!(
            "pseudo-label training needs one --det per --gt ({} vs {})",
            args.det.len(),
            args.gt.len()
        )));
    }

    let mut sequences = Vec::with_capacity(args.gt.len());
    for path in &args.gt {
        sequences.push(world::read_gt_file(path)?);
    }
    let pseudo: Option<Vec<pld::PseudoLabelSet>> = if cfg.enable_pld {
        let mut sets = Vec::with_capacity(args.det.len());
        for path in &args.det {
            sets.push(pld::load_detections(path)?);
        }
        Some(sets)
    } else {
        None
    };

    ensure_dir(&args.out)?;
    write_file(
        &args.out.join("manifest.txt"),
        &render_manifest(&cfg, &args.gt, &args.det, &args.out),
    )?;

    let out = engine::run_training(&sequences, pseudo.as_deref(), &cfg)?;
    write_file(
        &args.out.join("trainlog.ndjson"),
        &engine::write_log(&out.records),
    )?;
    write_file(
        &args.out.join("params.json"),
        &serde_json::to_string_pretty(&out.params).expect("params serialize"),
    )?;

    for (i, seq) in sequences.iter().enumerate() {
        let outputs = engine::run_inference(&out.params, seq.len(), &cfg)?;
        let frames = engine::outputs_to_frames(&outputs);
        world::write_gt_file(&args.out.join(format!("inference_{i:03}.txt")), &frames)?;
    }
    Ok(())
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let records = engine::read_log_file(&args.log)?;
    let stats = analytics::assignment_stats(&records)?;
    let mis = analytics::misalignment_stats(&records)?;
    ensure_dir(&args.out)?;
    write_file(
        &args.out.join("assignment_stats.csv"),
        &analytics::assignment_csv(&stats, &mis),
    )?;
    write_file(
        &args.out.join("activation_counts.csv"),
        &analytics::activation_csv(&stats),
    )?;
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let mut pred = world::read_gt_file(&args.pred)?;
    let mut gt = world::read_gt_file(&args.gt)?;
    // Trailing empty frames are unrepresentable in the file format; align
    // both timelines to the longer one.
    let frames = pred.len().max(gt.len());
    pred.resize(frames, Vec::new());
    gt.resize(frames, Vec::new());
    let report = analytics::evaluate(&pred, &gt, args.iou_threshold)?;
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            ensure_dir(dir)?;
        }
    }
    write_file(
        &args.out,
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&report).expect("report serialize")
        ),
    )?;
    Ok(())
}

/// Render the requested mask grid.
pub fn mask_grid(args: &MaskDumpArgs) -> String {
    let layout = GroupLayout::new(args.m, args.n, args.g);
    let mask = if args.literal {
        build_attention_mask_literal(&layout)
    } else {
        build_attention_mask(&layout)
    };
    mask.render_grid()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_dump_example() {
        let grid = mask_grid(&MaskDumpArgs {
            m: 1,
            n: 1,
            g: 2,
            literal: false,
        });
        assert_eq!(grid, "001\n001\n000\n");
    }

    #[test]
    fn train_config_parsing_and_overrides() {
        let file = ConfigFile::parse(
            "[train]\nepochs = 3\nrfs = true\nlambda_l1 = 4.5\nseed = 9\n",
            "mem",
        )
        .unwrap();
        let cfg = train_config_from_file(&file).unwrap();
        assert_eq!(cfg.epochs, 3);
        assert!(cfg.enable_rfs);
        assert_eq!(cfg.weights.l1, 4.5);
        assert_eq!(cfg.seed, 9);
        // Untouched keys keep their defaults.
        assert_eq!(cfg.clip_len, 5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let file = ConfigFile::parse("[train]\nepochz = 3\n", "mem").unwrap();
        assert!(matches!(
            train_config_from_file(&file),
            Err(Error::Config(_))
        ));
        let file = ConfigFile::parse("[world]\nnum_tragets = 3\n", "mem").unwrap();
        assert!(matches!(
            world_config_from_file(&file),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn manifest_is_deterministic_and_self_describing() {
        let cfg = TrainConfig::default();
        let a = render_manifest(&cfg, &[PathBuf::from("gt.txt")], &[], Path::new("out"));
        let b = render_manifest(&cfg, &[PathBuf::from("gt.txt")], &[], Path::new("out"));
        assert_eq!(a, b);
        assert!(a.contains("[run]"));
        assert!(a.contains("[train]"));
        assert!(a.contains("gt_0 = gt.txt"));
        // Config echo parses back to the same configuration.
        let parsed = ConfigFile::parse(&a, "mem").unwrap();
        let round = train_config_from_file(&parsed).unwrap();
        assert_eq!(round, cfg);
    }
}
