//! `cloudfuse`: command-line driver for dataset generation, fusion training,
//! cloud detection and evaluation.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use log::info;
use serde::de::DeserializeOwned;
use serde::Serialize;

use cloudfuse::data::{generate_dataset, load_dataset, netpbm, ImageStack, SceneRecipe};
use cloudfuse::detect::{
    calibration_samples, detect_calibrated, detect_finetuned, detect_threshold, finetune, fit_platt,
    labeled_images, CalibrationParams, FinetuneConfig, DEFAULT_THRESHOLD, MAX_CALIBRATION_POINTS,
};
use cloudfuse::eval::{config_digest, curve_csv, run_benchmark, size_sweep, Detector, DetectorEntry};
use cloudfuse::fusion::{export_quality, fuse, train_fusion, TrainConfig, LOSS_LOG_FILE};
use cloudfuse::nn::{load_quality, save_checkpoint};
use cloudfuse::{Error, QualityNet32, Result};

use manifest::{Run, RunManifest};

const CALIBRATION_FILE: &str = "calibration.json";
const FINETUNED_FILE: &str = "finetuned.ftz";

#[derive(Parser)]
#[command(name = "cloudfuse", version, about = "Quality-weighted image fusion and cloud detection")]
struct Cli {
    /// Worker threads for data generation and evaluation
    #[arg(long, global = true, env = "CLOUDFUSE_THREADS", default_value_t = 1)]
    threads: usize,

    /// Log progress to stderr
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-image dataset with labels and cloud masks
    GenData(GenData),
    /// Train the quality and segmentation networks from land-cover labels
    TrainFusion(TrainFusion),
    /// Write the fused image of every stack
    Fuse(Fuse),
    /// Write per-image quality masks and the fused image of every stack
    ExportQuality(Fuse),
    /// Fit the logistic map from quality to cloud probability
    Calibrate(Calibrate),
    /// Fine-tune the quality network's head on cloud masks
    Finetune(Finetune),
    /// Write cloud masks for every image
    Detect(Detect),
    /// Score the threshold, calibrated and fine-tuned detectors
    Evaluate(Evaluate),
    /// Fine-tune on growing training subsets and record the accuracy curve
    Curve(Curve),
}

#[derive(Args)]
struct Common {
    /// Output directory
    #[arg(long)]
    out: PathBuf,

    /// JSON config file; explicit flags take precedence over its values
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenData {
    #[command(flatten)]
    common: Common,
    /// Number of locations
    #[arg(long, default_value_t = 64)]
    locations: usize,
    /// Images per location
    #[arg(long, default_value_t = SceneRecipe::default().k)]
    k: usize,
    /// Image width and height in pixels
    #[arg(long, default_value_t = SceneRecipe::default().width)]
    size: usize,
    /// Land-cover classes
    #[arg(long, default_value_t = SceneRecipe::default().classes)]
    classes: usize,
    /// Target mean cloud coverage
    #[arg(long, default_value_t = SceneRecipe::default().coverage_target)]
    coverage: f64,
    /// Random seed
    #[arg(long, default_value_t = SceneRecipe::default().seed)]
    seed: u64,
}

#[derive(Args)]
struct TrainFusion {
    #[command(flatten)]
    common: Common,
    /// Dataset directory or manifest
    #[arg(long)]
    data: PathBuf,
    /// Random seed
    #[arg(long)]
    seed: u64,
    /// Learning rate
    #[arg(long, default_value_t = TrainConfig::default().lr)]
    lr: f64,
    /// Locations per batch
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    /// Training epochs
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    /// Square crop size (multiple of 4)
    #[arg(long, default_value_t = TrainConfig::default().crop)]
    crop: usize,
    /// Images sampled per location each epoch
    #[arg(long, default_value_t = TrainConfig::default().k)]
    k: usize,
    /// Land-cover classes
    #[arg(long, default_value_t = TrainConfig::default().classes)]
    classes: usize,
    /// Wrap Adam in Lookahead
    #[arg(long)]
    lookahead: bool,
    /// Use rectified Adam
    #[arg(long)]
    rectify: bool,
}

#[derive(Args)]
struct Fuse {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Dataset directory or manifest
    #[arg(long)]
    data: PathBuf,
    /// Quality network checkpoint
    #[arg(long, default_value = "checkpoint_best.ftz")]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct Calibrate {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Dataset with cloud masks
    #[arg(long)]
    data: PathBuf,
    /// Quality network checkpoint
    #[arg(long, default_value = "checkpoint_best.ftz")]
    checkpoint: PathBuf,
    /// Maximum number of pixels used for fitting
    #[arg(long, default_value_t = MAX_CALIBRATION_POINTS)]
    max_points: usize,
    /// Seed for pixel subsampling
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Finetune {
    #[command(flatten)]
    common: Common,
    /// Dataset with cloud masks
    #[arg(long)]
    data: PathBuf,
    /// Quality network checkpoint
    #[arg(long, default_value = "checkpoint_best.ftz")]
    checkpoint: PathBuf,
    /// Random seed
    #[arg(long)]
    seed: u64,
    /// Fine-tuning epochs
    #[arg(long, default_value_t = FinetuneConfig::default().epochs)]
    epochs: usize,
    /// Learning rate
    #[arg(long, default_value_t = FinetuneConfig::default().lr)]
    lr: f64,
    /// Images per batch
    #[arg(long, default_value_t = FinetuneConfig::default().batch_size)]
    batch_size: usize,
    /// Treat the network output as cloud probability instead of quality
    #[arg(long)]
    direct_output: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Threshold,
    Calibrated,
    Finetuned,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Threshold => "threshold",
            Method::Calibrated => "calibrated",
            Method::Finetuned => "finetuned",
        }
    }
}

#[derive(Args)]
struct Detect {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Dataset directory or manifest
    #[arg(long)]
    data: PathBuf,
    /// Detector
    #[arg(long, value_enum, default_value_t = Method::Threshold)]
    method: Method,
    /// Quality network checkpoint (threshold and calibrated)
    #[arg(long, default_value = "checkpoint_best.ftz")]
    checkpoint: PathBuf,
    /// Calibration parameters (calibrated)
    #[arg(long, default_value = CALIBRATION_FILE)]
    calibration: PathBuf,
    /// Fine-tuned checkpoint (finetuned)
    #[arg(long, default_value = FINETUNED_FILE)]
    finetuned: PathBuf,
    /// Quality threshold (threshold)
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    tau: f64,
    /// Treat the fine-tuned output as cloud probability
    #[arg(long)]
    direct_output: bool,
}

#[derive(Args)]
struct Evaluate {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Test dataset with cloud masks
    #[arg(long)]
    data: PathBuf,
    /// Quality network checkpoint
    #[arg(long, default_value = "checkpoint_best.ftz")]
    checkpoint: PathBuf,
    /// Calibration parameters
    #[arg(long, default_value = CALIBRATION_FILE)]
    calibration: PathBuf,
    /// Fine-tuned checkpoint
    #[arg(long, default_value = FINETUNED_FILE)]
    finetuned: PathBuf,
    /// Detectors to score, comma separated
    #[arg(long, value_enum, value_delimiter = ',', default_value = "threshold,calibrated,finetuned")]
    detectors: Vec<Method>,
    /// Quality threshold for the threshold detector
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    tau: f64,
    /// Treat the fine-tuned output as cloud probability
    #[arg(long)]
    direct_output: bool,
}

#[derive(Args)]
struct Curve {
    #[command(flatten)]
    common: Common,
    /// Training pool with cloud masks
    #[arg(long)]
    data: PathBuf,
    /// Test dataset with cloud masks
    #[arg(long)]
    test: PathBuf,
    /// Quality network checkpoint
    #[arg(long, default_value = "checkpoint_best.ftz")]
    checkpoint: PathBuf,
    /// Random seed
    #[arg(long)]
    seed: u64,
    /// Training-set sizes in images, comma separated
    #[arg(long, value_delimiter = ',', default_value = "4,16,64")]
    sizes: Vec<usize>,
    /// Fine-tuning epochs per size
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// Learning rate
    #[arg(long, default_value_t = FinetuneConfig::default().lr)]
    lr: f64,
    /// Images per batch
    #[arg(long, default_value_t = FinetuneConfig::default().batch_size)]
    batch_size: usize,
}

/// Whether a flag was given explicitly rather than left at its default.
fn explicit(m: &ArgMatches, id: &str) -> bool {
    matches!(
        m.value_source(id),
        Some(ValueSource::CommandLine | ValueSource::EnvVariable)
    )
}

/// Start from the config file (or built-in defaults), then apply flags
/// that were set explicitly.
fn layered<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

macro_rules! overlay {
    ($m:expr, $args:expr, $cfg:expr, $($flag:ident => $field:ident),+ $(,)?) => {
        $(if explicit($m, stringify!($flag)) {
            $cfg.$field = $args.$flag.clone();
        })+
    };
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn masks_required(stacks: &[ImageStack], data: &Path) -> Result<()> {
    match stacks.iter().find(|s| s.masks.is_none()) {
        Some(s) => Err(Error::Config(format!(
            "{}: location {} has no cloud masks",
            data.display(),
            s.location
        ))),
        None => Ok(()),
    }
}

fn gen_data(a: &GenData, m: &ArgMatches, threads: usize) -> Result<Run> {
    let mut recipe: SceneRecipe = layered(a.common.config.as_deref())?;
    overlay!(m, a, recipe, k => k, classes => classes, coverage => coverage_target, seed => seed);
    if explicit(m, "size") {
        recipe.width = a.size;
        recipe.height = a.size;
    }
    let manifest = generate_dataset(&recipe, a.locations, &a.common.out, threads)?;
    let mut outputs = vec![a.common.out.join(cloudfuse::data::MANIFEST_FILE)];
    for loc in &manifest.locations {
        outputs.extend(loc.label.iter().map(|l| a.common.out.join(l)));
        for im in &loc.images {
            outputs.push(a.common.out.join(&im.image));
            outputs.extend(im.mask.iter().map(|p| a.common.out.join(p)));
        }
    }
    Ok(Run {
        config_digest: config_digest(&(&recipe, a.locations))?,
        seed: Some(recipe.seed),
        inputs: a.common.config.iter().cloned().collect(),
        outputs,
    })
}

fn train(a: &TrainFusion, m: &ArgMatches) -> Result<Run> {
    let mut cfg: TrainConfig = layered(a.common.config.as_deref())?;
    overlay!(m, a, cfg,
        seed => seed, lr => lr, batch_size => batch_size, epochs => epochs,
        crop => crop, k => k, classes => classes, lookahead => lookahead, rectify => rectify);
    cfg.validate()?;
    let (manifest, stacks) = load_dataset(&a.data)?;
    if manifest.classes != cfg.classes {
        return Err(Error::Config(format!(
            "dataset has {} classes, config {}",
            manifest.classes, cfg.classes
        )));
    }
    let out = &a.common.out;
    let outcome = train_fusion::<f32>(&stacks, &cfg, Some(out))?;
    if let Some(last) = outcome.log.last() {
        info!("final mean loss {:.6}", last.mean_loss);
    }
    let mut outputs = vec![out.join(LOSS_LOG_FILE)];
    for name in ["checkpoint_last", "checkpoint_best"] {
        outputs.push(out.join(format!("{name}.ftz")));
        outputs.push(out.join(format!("{name}.json")));
    }
    let config_path = out.join("train_config.json");
    write_json(&config_path, &cfg)?;
    outputs.push(config_path);
    Ok(Run {
        config_digest: config_digest(&cfg)?,
        seed: Some(cfg.seed),
        inputs: std::iter::once(a.data.clone()).chain(a.common.config.clone()).collect(),
        outputs,
    })
}

fn fuse_all(a: &Fuse, export: bool) -> Result<Run> {
    let net: QualityNet32 = load_quality(&a.checkpoint)?;
    let (_, stacks) = load_dataset(&a.data)?;
    let mut outputs = Vec::new();
    for s in &stacks {
        let dir = a.out.join(&s.location);
        if export {
            outputs.extend(export_quality(s, &net, &dir)?);
        } else {
            let f = fuse(s, &net)?;
            let plane = s.width * s.height;
            let data = f.image.data();
            let rgb = (0..plane)
                .flat_map(|p| (0..3).map(move |c| data[c * plane + p]))
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect();
            let raster = netpbm::Raster {
                width: s.width,
                height: s.height,
                channels: 3,
                data: rgb,
            };
            let path = dir.join("fused.ppm");
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            netpbm::write(&path, &raster)?;
            outputs.push(path);
        }
    }
    Ok(Run {
        config_digest: config_digest(&export)?,
        seed: None,
        inputs: vec![a.data.clone(), a.checkpoint.clone()],
        outputs,
    })
}

fn calibrate(a: &Calibrate) -> Result<Run> {
    let net: QualityNet32 = load_quality(&a.checkpoint)?;
    let (_, stacks) = load_dataset(&a.data)?;
    masks_required(&stacks, &a.data)?;
    let (q, y) = calibration_samples(&net, &stacks, a.max_points, a.seed)?;
    let fit = fit_platt(&q, &y)?;
    info!(
        "calibration: beta0 {:.6} beta1 {:.6} after {} iterations",
        fit.params.beta0, fit.params.beta1, fit.iterations
    );
    let path = a.out.join(CALIBRATION_FILE);
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    fit.params.save(&path)?;
    let history = a.out.join("calibration_log.csv");
    let mut text = String::from("iteration,mean_log_likelihood\n");
    for (i, ll) in fit.history.iter().enumerate() {
        text.push_str(&format!("{i},{ll}\n"));
    }
    write_text(&history, &text)?;
    Ok(Run {
        config_digest: config_digest(&(a.max_points, a.seed))?,
        seed: Some(a.seed),
        inputs: vec![a.data.clone(), a.checkpoint.clone()],
        outputs: vec![path, history],
    })
}

fn finetune_cmd(a: &Finetune, m: &ArgMatches) -> Result<Run> {
    let mut cfg: FinetuneConfig = layered(a.common.config.as_deref())?;
    overlay!(m, a, cfg,
        seed => seed, epochs => epochs, lr => lr, batch_size => batch_size,
        direct_output => direct_output);
    cfg.validate()?;
    let mut net: QualityNet32 = load_quality(&a.checkpoint)?;
    let (_, stacks) = load_dataset(&a.data)?;
    masks_required(&stacks, &a.data)?;
    let outcome = finetune(&mut net, &labeled_images(&stacks)?, &cfg)?;
    net.unfreeze_all();
    let out = &a.common.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let ckpt = out.join(FINETUNED_FILE);
    save_checkpoint(&ckpt, Some(&net), None)?;
    let log = out.join("finetune_log.csv");
    let mut text = String::from("epoch,mean_loss\n");
    for (i, l) in outcome.log.iter().enumerate() {
        text.push_str(&format!("{},{l}\n", i + 1));
    }
    write_text(&log, &text)?;
    Ok(Run {
        config_digest: config_digest(&cfg)?,
        seed: Some(cfg.seed),
        inputs: vec![a.data.clone(), a.checkpoint.clone()],
        outputs: vec![ckpt.clone(), cloudfuse::nn::checkpoint::sidecar_path(&ckpt), log],
    })
}

fn detect(a: &Detect) -> Result<Run> {
    let (_, stacks) = load_dataset(&a.data)?;
    let mut inputs = vec![a.data.clone()];
    let net: QualityNet32 = match a.method {
        Method::Finetuned => {
            inputs.push(a.finetuned.clone());
            load_quality(&a.finetuned)?
        }
        _ => {
            inputs.push(a.checkpoint.clone());
            load_quality(&a.checkpoint)?
        }
    };
    let params = if a.method == Method::Calibrated {
        inputs.push(a.calibration.clone());
        Some(CalibrationParams::load(&a.calibration)?)
    } else {
        None
    };
    let mut outputs = Vec::new();
    for s in &stacks {
        let dir = a.out.join(&s.location);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for j in 0..s.k() {
            let image = s.image_tensor::<f32>(j);
            let mask = match (a.method, &params) {
                (Method::Threshold, _) => detect_threshold(net.quality_forward(&image)?.data(), a.tau),
                (Method::Calibrated, Some(p)) => {
                    detect_calibrated(net.quality_forward(&image)?.data(), p, DEFAULT_THRESHOLD)
                }
                _ => detect_finetuned(&net, &image, a.direct_output)?,
            };
            let raster = netpbm::Raster {
                width: s.width,
                height: s.height,
                channels: 1,
                data: mask.iter().map(|&v| v * 255).collect(),
            };
            let path = dir.join(format!("cloud_{j}.pgm"));
            netpbm::write(&path, &raster)?;
            outputs.push(path);
        }
    }
    Ok(Run {
        config_digest: config_digest(&(a.method.name(), a.tau, a.direct_output))?,
        seed: None,
        inputs,
        outputs,
    })
}

fn evaluate(a: &Evaluate, threads: usize) -> Result<Run> {
    let (_, stacks) = load_dataset(&a.data)?;
    masks_required(&stacks, &a.data)?;
    let quality = load_quality::<f32>(&a.checkpoint);
    let finetuned = load_quality::<f32>(&a.finetuned);
    let calibration = CalibrationParams::load(&a.calibration);

    let runnable = |m: Method| match m {
        Method::Threshold => quality.is_ok(),
        Method::Calibrated => quality.is_ok() && calibration.is_ok(),
        Method::Finetuned => finetuned.is_ok(),
    };
    if !a.detectors.iter().any(|&m| runnable(m)) {
        // Nothing can run: surface the first blocking cause with its exit code.
        let first = a.detectors.first().copied().unwrap_or(Method::Threshold);
        return Err(match first {
            Method::Finetuned => finetuned.err(),
            _ => quality.err().or(calibration.err()),
        }
        .expect("some artifact failed to load"));
    }
    let mut inputs = vec![a.data.clone()];
    let entries: Vec<_> = a
        .detectors
        .iter()
        .map(|&method| {
            let detector = match method {
                Method::Threshold => quality.as_ref().map(|net| Detector::Threshold { net, tau: a.tau }),
                Method::Calibrated => quality.as_ref().and_then(|net| {
                    calibration.as_ref().map(|p| Detector::Calibrated {
                        net,
                        params: *p,
                        p_thresh: DEFAULT_THRESHOLD,
                    })
                }),
                Method::Finetuned => finetuned.as_ref().map(|net| Detector::Finetuned {
                    net,
                    direct: a.direct_output,
                }),
            };
            DetectorEntry {
                name: method.name().to_string(),
                detector: detector.map_err(|e| format!("error[{}]: {e}", e.category())),
            }
        })
        .collect();
    for (path, ok) in [
        (&a.checkpoint, quality.is_ok()),
        (&a.calibration, calibration.is_ok()),
        (&a.finetuned, finetuned.is_ok()),
    ] {
        if ok {
            inputs.push(path.clone());
        }
    }
    let digest = config_digest(&(
        a.detectors.iter().map(|m| m.name()).collect::<Vec<_>>(),
        a.tau,
        a.direct_output,
    ))?;
    let report = run_benchmark(&stacks, &entries, digest.clone(), threads)?;
    print!("{}", report.table());
    let outputs = report.write(&a.out)?.to_vec();
    Ok(Run {
        config_digest: digest,
        seed: None,
        inputs,
        outputs,
    })
}

fn curve(a: &Curve, m: &ArgMatches, threads: usize) -> Result<Run> {
    let mut cfg: FinetuneConfig = layered(a.common.config.as_deref())?;
    cfg.epochs = 30;
    overlay!(m, a, cfg, seed => seed, epochs => epochs, lr => lr, batch_size => batch_size);
    cfg.validate()?;
    let net: QualityNet32 = load_quality(&a.checkpoint)?;
    let (_, pool) = load_dataset(&a.data)?;
    let (_, test) = load_dataset(&a.test)?;
    masks_required(&pool, &a.data)?;
    masks_required(&test, &a.test)?;
    let points = size_sweep(&net, &pool, &test, &a.sizes, &cfg, threads)?;
    let path = a.common.out.join("curve.csv");
    write_text(&path, &curve_csv(&points))?;
    Ok(Run {
        config_digest: config_digest(&(&cfg, &a.sizes))?,
        seed: Some(cfg.seed),
        inputs: vec![a.data.clone(), a.test.clone(), a.checkpoint.clone()],
        outputs: vec![path],
    })
}

fn run(cli: &Cli, matches: &ArgMatches) -> Result<()> {
    let started = Instant::now();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let threads = cli.threads.max(1);
    let (run, out) = match &cli.command {
        Command::GenData(a) => (gen_data(a, sub, threads)?, &a.common.out),
        Command::TrainFusion(a) => (train(a, sub)?, &a.common.out),
        Command::Fuse(a) => (fuse_all(a, false)?, &a.out),
        Command::ExportQuality(a) => (fuse_all(a, true)?, &a.out),
        Command::Calibrate(a) => (calibrate(a)?, &a.out),
        Command::Finetune(a) => (finetune_cmd(a, sub)?, &a.common.out),
        Command::Detect(a) => (detect(a)?, &a.out),
        Command::Evaluate(a) => (evaluate(a, threads)?, &a.out),
        Command::Curve(a) => (curve(a, sub, threads)?, &a.common.out),
    };
    RunManifest::new(name, run, started.elapsed())?.write(out)
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let line = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid usage")
                .trim_start_matches("error: ");
            eprintln!("error[usage]: {line}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::from_arg_matches(&matches).expect("matches were produced by this parser");
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category());
            ExitCode::from(match e {
                Error::NotFound(_) => 3,
                Error::Config(_) => 4,
                _ => 1,
            })
        }
    }
}
