//! Command-line interface: `train`, `eval`, `verify`, `noise-sweep` and
//! `bench-splits`.
//!
//! Exit codes: 0 success, 1 output failure, 2 bad flags or configuration,
//! 3 data or model-file errors, 4 non-finite training loss, 5 failed
//! certification.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bench::{format_summary, run_bench, write_runs_csv, BenchConfig, BenchReport};
use crate::data::{load_libsvm, LabeledDataset, NoiseSpec, Standardizer};
use crate::error::{Error, Result};
use crate::model::LinkModel;
use crate::train::{evaluate, train, Algo, TrainConfig};
use crate::verify::{certify_link, check_cyclic, check_monotone, DEFAULT_RADIUS};

/// Environment variable naming the directory searched for relative
/// `--data` paths that do not exist as given.
pub const DATA_DIR_ENV: &str = "LEGENDRETRON_DATA_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_OUTPUT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NAN: i32 = 4;
pub const EXIT_CERTIFICATION: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "legendretron", version, about = "Learn proper canonical multiclass losses with class probabilities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on a LIBSVM file and write the model and its metrics.
    Train(TrainArgs),
    /// Score a saved model on a LIBSVM file.
    Eval(EvalArgs),
    /// Check that a saved model's inverse link is a monotone gradient map.
    Verify(VerifyArgs),
    /// Test accuracy across label-noise levels.
    NoiseSweep(SweepArgs),
    /// Repeated random train/test splits comparing LT and MLR.
    BenchSplits(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Preset {
    /// B=2, H=2, M=4, lr 0.01, decay 0.95 every 4 epochs, 240 epochs, batch 64.
    Other,
    /// B=1, H=4, M=4, lr 0.001, decay 0.7 every 4 epochs, 200 epochs, batch 128.
    Mnist,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
enum AlgoArg {
    Lt,
    Mlr,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Lt => Algo::Lt,
            AlgoArg::Mlr => Algo::Mlr,
        }
    }
}

/// Hyperparameters; unset flags fall back to the preset.
#[derive(Debug, Clone, Args)]
struct HyperArgs {
    /// Hyperparameter preset.
    #[arg(long = "appendix-l", value_enum, default_value = "other")]
    preset: Preset,
    #[arg(long)]
    epochs: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Learning-rate decay factor.
    #[arg(long)]
    gamma: Option<f64>,
    /// Epochs between learning-rate decays.
    #[arg(long)]
    step: Option<usize>,
    /// Number of convex blocks.
    #[arg(long)]
    blocks: Option<usize>,
    /// Hidden width of each block.
    #[arg(long)]
    hidden: Option<usize>,
    /// Hidden layers of each block.
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Coupled L2 weight decay.
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standardize features with training-set mean and deviation.
    #[arg(long)]
    standardize: bool,
}

impl HyperArgs {
    fn config(&self) -> TrainConfig {
        let base = match self.preset {
            Preset::Other => TrainConfig::default(),
            Preset::Mnist => TrainConfig::mnist(),
        };
        TrainConfig {
            epochs: self.epochs.unwrap_or(base.epochs),
            batch_size: self.batch.unwrap_or(base.batch_size),
            learning_rate: self.lr.unwrap_or(base.learning_rate),
            weight_decay: self.weight_decay.unwrap_or(base.weight_decay),
            lr_decay: self.gamma.unwrap_or(base.lr_decay),
            decay_step: self.step.unwrap_or(base.decay_step),
            blocks: self.blocks.unwrap_or(base.blocks),
            hidden: self.hidden.unwrap_or(base.hidden),
            layers: self.layers.unwrap_or(base.layers),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// LIBSVM training file.
    #[arg(long)]
    data: PathBuf,
    /// Where to write the model file.
    #[arg(long)]
    model_out: PathBuf,
    /// Metrics JSON path (default: next to the model, `.metrics.json`).
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "lt")]
    algo: AlgoArg,
    /// Declared number of classes (at least the number seen).
    #[arg(long)]
    classes: Option<usize>,
    /// Symmetric label-noise rate applied to the training labels.
    #[arg(long, default_value_t = 0.0)]
    noise_eta: f64,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Metrics JSON path (default: stdout).
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Sample points for the Jacobian certification.
    #[arg(long, default_value_t = 100)]
    points: usize,
    /// Point pairs for the monotonicity probe.
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    /// Cycles per length (2, 3 and 4) for the cyclic probe.
    #[arg(long, default_value_t = 200)]
    cycles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report JSON path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    /// Repetitions (default 20 for bench-splits, 1 for noise-sweep).
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    /// Comma-separated noise rates (default 0 for bench-splits,
    /// 0,0.1,…,0.5 for noise-sweep).
    #[arg(long, value_delimiter = ',')]
    etas: Vec<f64>,
    /// Algorithms to run.
    #[arg(long = "algo", value_enum, value_delimiter = ',', default_values = ["lt", "mlr"])]
    algos: Vec<AlgoArg>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Per-run CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON path.
    #[arg(long)]
    summary_out: Option<PathBuf>,
    #[command(flatten)]
    hyper: HyperArgs,
}

/// Provenance attached to every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: u64,
    pub dataset: Option<String>,
    /// SHA-256 of the dataset file.
    pub dataset_digest: Option<String>,
    pub started_unix_s: u64,
    pub wall_clock_s: f64,
    pub git_describe: String,
    pub version: String,
}

impl RunManifest {
    fn new(command: &str, config: Value, seed: u64, dataset: Option<&Path>) -> Result<Self> {
        let dataset_digest = dataset.map(file_digest).transpose()?;
        Ok(Self {
            command: command.to_string(),
            config,
            seed,
            dataset: dataset.map(|p| p.display().to_string()),
            dataset_digest,
            started_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_clock_s: 0.0,
            git_describe: option_env!("LEGENDRETRON_GIT_DESCRIBE").unwrap_or("unknown").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    fn finish(mut self, start: Instant) -> Self {
        self.wall_clock_s = start.elapsed().as_secs_f64();
        self
    }

    fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("manifest serializes")
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Resolves `--data`: as given if it exists, else under
/// [`DATA_DIR_ENV`].
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                candidate
            } else {
                path.to_path_buf()
            }
        }
        None => path.to_path_buf(),
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::NonFiniteLoss { .. } => EXIT_NAN,
        Error::Io(_) => EXIT_OUTPUT,
        _ => EXIT_DATA,
    }
}

/// Failure with an explicit exit code.
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_OUTPUT,
        message: format!("{}: {e}", path.display()),
    }
}

fn write_text(path: &Path, text: &str) -> std::result::Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| output_err(path, e))
}

fn emit_json(value: &Value, path: Option<&Path>) -> std::result::Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("JSON value serializes") + "\n";
    match path {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Verify(a) => cmd_verify(a),
        Command::NoiseSweep(a) => cmd_sweep(a, "noise-sweep"),
        Command::BenchSplits(a) => cmd_sweep(a, "bench-splits"),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load_data(path: &Path) -> Result<(PathBuf, LabeledDataset)> {
    let path = resolve_data_path(path);
    let data = load_libsvm(&path)?;
    Ok((path, data))
}

fn cmd_train(a: TrainArgs) -> std::result::Result<i32, Failure> {
    let start = Instant::now();
    let cfg = a.hyper.config();
    cfg.validate()?;
    let (path, data) = load_data(&a.data)?;
    let data = match a.classes {
        Some(c) => data.with_classes(c)?,
        None => data,
    };
    let noise = NoiseSpec::new(a.noise_eta, a.hyper.seed)?;
    let standardizer = a.hyper.standardize.then(|| Standardizer::fit(&data));
    let data = match &standardizer {
        Some(s) => s.apply(&data)?,
        None => data,
    };
    let data = data.with_symmetric_noise(&noise)?;
    let algo: Algo = a.algo.into();
    let (model, metrics) = train(&data, &cfg, algo)?;

    let config = json!({
        "algo": algo,
        "train": cfg,
        "noise_eta": a.noise_eta,
        "classes": data.n_classes(),
        "standardize": a.hyper.standardize,
    });
    let manifest = RunManifest::new("train", config, cfg.seed, Some(&path))?.finish(start);
    let mut model_manifest = manifest.to_value();
    if let Some(s) = &standardizer {
        model_manifest["standardizer"] = serde_json::to_value(s).expect("standardizer serializes");
    }
    model.save(&a.model_out, Some(model_manifest)).map_err(|e| output_err(&a.model_out, e))?;
    let metrics_path = a.metrics_out.unwrap_or_else(|| a.model_out.with_extension("metrics.json"));
    let out = json!({
        "manifest": manifest,
        "dataset": data.summary(),
        "train": metrics,
    });
    emit_json(&out, Some(&metrics_path))?;
    eprintln!(
        "trained {} on {} rows: accuracy {:.4}, mean NLL {:.4}",
        algo.name(),
        data.len(),
        metrics.accuracy,
        metrics.mean_nll
    );
    Ok(EXIT_OK)
}

fn load_model(path: &Path) -> Result<(LinkModel, Option<Value>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let model = LinkModel::from_json(&text)?;
    Ok((model, LinkModel::manifest_of(&text)?))
}

fn cmd_eval(a: EvalArgs) -> std::result::Result<i32, Failure> {
    let start = Instant::now();
    let (model, saved) = load_model(&a.model)?;
    let (path, data) = load_data(&a.data)?;
    let data = match saved.as_ref().and_then(|m| m.get("standardizer")) {
        Some(v) => {
            let s: Standardizer = serde_json::from_value(v.clone())
                .map_err(|e| Error::CorruptModel(format!("standardizer: {e}")))?;
            s.apply(&data)?
        }
        None => data,
    };
    if data.n_features() > model.n_features() {
        return Err(Error::Dimension {
            expected: model.n_features(),
            found: data.n_features(),
        }
        .into());
    }
    let metrics = evaluate(&model, &data)?;
    let config = json!({ "model": a.model.display().to_string() });
    let manifest = RunManifest::new("eval", config, 0, Some(&path))?.finish(start);
    let out = json!({
        "manifest": manifest,
        "dataset": data.summary(),
        "test": metrics,
    });
    emit_json(&out, a.metrics_out.as_deref())?;
    Ok(EXIT_OK)
}

fn cmd_verify(a: VerifyArgs) -> std::result::Result<i32, Failure> {
    let start = Instant::now();
    let (model, _) = load_model(&a.model)?;
    if a.points == 0 || a.pairs == 0 || a.cycles == 0 {
        return Err(Error::Config("points, pairs and cycles must be positive".into()).into());
    }
    let cert = certify_link(&model, a.points, a.seed)?;
    let link = |z: &[f64]| model.inverse_link(z).expect("point has the link dimension");
    let dim = model.link_dim();
    let mono = check_monotone(link, dim, a.pairs, DEFAULT_RADIUS, a.seed.wrapping_add(1));
    let cyclic = (2..=4)
        .map(|n| check_cyclic(link, dim, n, a.cycles, DEFAULT_RADIUS, a.seed.wrapping_add(n as u64)))
        .collect::<Result<Vec<_>>>()?;
    let passed = cert.passed && mono.strictly_monotone && cyclic.iter().all(|c| c.passed);
    let config = json!({
        "model": a.model.display().to_string(),
        "points": a.points,
        "pairs": a.pairs,
        "cycles": a.cycles,
    });
    let manifest = RunManifest::new("verify", config, a.seed, None)?.finish(start);
    let out = json!({
        "manifest": manifest,
        "passed": passed,
        "certification": cert,
        "monotone": mono,
        "cyclic": cyclic,
    });
    emit_json(&out, a.out.as_deref())?;
    eprintln!(
        "certification {}: max asymmetry {:.3e}, min eigenvalue {:.3e}, monotone min {:.3e}",
        if passed { "passed" } else { "FAILED" },
        cert.max_asymmetry,
        cert.min_eigenvalue,
        mono.min_inner_product
    );
    Ok(if passed { EXIT_OK } else { EXIT_CERTIFICATION })
}

fn cmd_sweep(a: SweepArgs, command: &str) -> std::result::Result<i32, Failure> {
    let start = Instant::now();
    let sweep = command == "noise-sweep";
    let etas = if a.etas.is_empty() {
        if sweep {
            vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
        } else {
            vec![0.0]
        }
    } else {
        a.etas.clone()
    };
    let cfg = BenchConfig {
        runs: a.runs.unwrap_or(if sweep { 1 } else { 20 }),
        train_frac: a.train_frac,
        etas,
        algos: a.algos.iter().map(|&x| x.into()).collect(),
        train: a.hyper.config(),
        seed: a.hyper.seed,
        jobs: a.jobs,
        standardize: a.hyper.standardize,
    };
    cfg.validate()?;
    let (path, data) = load_data(&a.data)?;
    let report = run_bench(&data, &cfg)?;
    let manifest = RunManifest::new(command, serde_json::to_value(&cfg).expect("config serializes"), cfg.seed, Some(&path))?
        .finish(start);
    write_sweep_outputs(&report, &manifest, a.out.as_deref(), a.summary_out.as_deref())?;
    eprint!("{}", format_summary(&report));
    Ok(EXIT_OK)
}

fn write_sweep_outputs(
    report: &BenchReport,
    manifest: &RunManifest,
    csv: Option<&Path>,
    summary: Option<&Path>,
) -> std::result::Result<(), Failure> {
    let mut buf = Vec::new();
    write_runs_csv(&report.records, &mut buf)?;
    match csv {
        Some(p) => {
            std::fs::write(p, &buf).map_err(|e| output_err(p, e))?;
            let sidecar = p.with_extension("manifest.json");
            emit_json(&manifest.to_value(), Some(&sidecar))?;
        }
        None => print!("{}", String::from_utf8_lossy(&buf)),
    }
    if let Some(p) = summary {
        let failures: Vec<_> = report.records.iter().filter(|r| r.error.is_some()).collect();
        let out = json!({
            "manifest": manifest,
            "summary": report.summary,
            "comparisons": report.comparisons,
            "failures": failures,
        });
        emit_json(&out, Some(p))?;
    }
    Ok(())
}
