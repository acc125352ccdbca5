//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::classifier::{self, Metrics};
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::optimizer::StateVector;
use crate::pipeline::{
    self, AlphaGrid, BankRef, ModelArtifact, RunConfig, RunReport, RunSeeds, SplitFeatures,
};
use crate::transform::{init_kernel_bank_with, transform_dataset, KernelBank};

#[derive(Debug, Parser)]
#[command(name = "srocket", version, about = "Random kernel time series classification with evolutionary kernel pruning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a kernel bank and write PPV features of both splits.
    Transform(CommonArgs),
    /// Fit the classifier on all kernels and score it on the test split.
    Train(CommonArgs),
    /// Full pipeline: pre-train, kernel search, post-train, baselines.
    Prune(CommonArgs),
    /// Score a saved model, optionally masked by a state file.
    Eval(EvalArgs),
    /// Random-mask accuracy distributions of the pre-trained model.
    Montecarlo(MonteCarloArgs),
    /// Wall-clock time of every stage of one run.
    Benchmark(CommonArgs),
    /// Summarize a report.json written by `prune`.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Root directory holding `<name>/<name>_TRAIN.tsv` and `_TEST.tsv`
    #[arg(long, env = "SROCKET_DATA")]
    pub data: Option<PathBuf>,
    /// Dataset name
    #[arg(long)]
    pub dataset: Option<String>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed; run i uses seed + i
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of random kernels (D)
    #[arg(long)]
    pub kernels: Option<usize>,
    /// State pool size (S), even and >= 4
    #[arg(long)]
    pub pop: Option<usize>,
    /// Mutation factor (F) in [0, 1]
    #[arg(long)]
    pub mutation: Option<f64>,
    /// Crossover rate (Cr) in [0, 1]
    #[arg(long)]
    pub crossover: Option<f64>,
    /// Maximum number of epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Number of independent runs
    #[arg(long)]
    pub runs: Option<usize>,
    /// Skip per-series z-normalization
    #[arg(long)]
    pub no_normalize: bool,
    /// Keep raw N(0, 1) kernel weights instead of mean-centering them
    #[arg(long)]
    pub no_center: bool,
    /// Worker thread cap (default: all cores)
    #[arg(long)]
    pub threads: Option<usize>,
    /// JSON config file, or a meta.json from a previous run
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Model JSON written by `train` or `prune`
    #[arg(long)]
    pub model: PathBuf,
    /// State file of '0'/'1' characters masking the model's kernels
    #[arg(long)]
    pub state: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated densities in (0, 1]
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    pub densities: Vec<f64>,
    /// Random masks per density
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Directory holding report.json
    #[arg(long)]
    pub out: PathBuf,
}

/// Keys accepted in a config file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(rename = "D", skip_serializing_if = "Option::is_none")]
    pub num_kernels: Option<usize>,
    #[serde(rename = "S", skip_serializing_if = "Option::is_none")]
    pub pop_size: Option<usize>,
    #[serde(rename = "F", skip_serializing_if = "Option::is_none")]
    pub mutation: Option<f64>,
    #[serde(rename = "Cr", skip_serializing_if = "Option::is_none")]
    pub crossover: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalize: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_weights: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<AlphaGrid>,
}

const CONFIG_KEYS: [&str; 13] = [
    "D", "S", "F", "Cr", "epochs", "runs", "seed", "normalize", "center_weights", "dataset",
    "data", "out", "alpha_grid",
];

fn field<T: for<'de> Deserialize<'de>>(obj: &Map<String, Value>, key: &str) -> Result<Option<T>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone()).map(Some).map_err(|e| Error::TypeError {
            field: key.to_string(),
            reason: e.to_string(),
        }),
    }
}

impl ConfigFile {
    /// Strict parse: unknown keys and ill-typed values are rejected per field.
    /// A meta.json is accepted too; its `config` object is used.
    pub fn parse(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let mut obj = match value {
            Value::Object(m) => m,
            _ => {
                return Err(Error::TypeError {
                    field: "<root>".into(),
                    reason: "expected a JSON object".into(),
                })
            }
        };
        if let Some(Value::Object(inner)) = obj.get("config") {
            obj = inner.clone();
        }
        if let Some(k) = obj.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(Error::UnknownKey(k.clone()));
        }
        let cfg = Self {
            num_kernels: field(&obj, "D")?,
            pop_size: field(&obj, "S")?,
            mutation: field(&obj, "F")?,
            crossover: field(&obj, "Cr")?,
            epochs: field(&obj, "epochs")?,
            runs: field(&obj, "runs")?,
            seed: field(&obj, "seed")?,
            normalize: field(&obj, "normalize")?,
            center_weights: field(&obj, "center_weights")?,
            dataset: field(&obj, "dataset")?,
            data: field(&obj, "data")?,
            out: field(&obj, "out")?,
            alpha_grid: field(&obj, "alpha_grid")?,
        };
        cfg.check_ranges()?;
        Ok(cfg)
    }

    fn check_ranges(&self) -> Result<()> {
        for (name, v) in [("F", self.mutation), ("Cr", self.crossover)] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::TypeError {
                        field: name.into(),
                        reason: format!("{v} outside [0, 1]"),
                    });
                }
            }
        }
        if let Some(s) = self.pop_size {
            if s < 4 || !s.is_multiple_of(2) {
                return Err(Error::TypeError {
                    field: "S".into(),
                    reason: format!("{s} must be even and >= 4"),
                });
            }
        }
        for (name, v) in [("D", self.num_kernels), ("runs", self.runs)] {
            if v == Some(0) {
                return Err(Error::TypeError {
                    field: name.into(),
                    reason: "must be >= 1".into(),
                });
            }
        }
        if let Some(g) = self.alpha_grid {
            if g.count == 0 || !g.log10_min.is_finite() || !g.log10_max.is_finite() {
                return Err(Error::TypeError {
                    field: "alpha_grid".into(),
                    reason: "count must be >= 1 with finite bounds".into(),
                });
            }
        }
        Ok(())
    }

    /// Values of `flags` win over values already present.
    pub fn overlay(mut self, flags: &CommonArgs) -> Result<Self> {
        macro_rules! take {
            ($dst:ident, $src:expr) => {
                if let Some(v) = $src.clone() {
                    self.$dst = Some(v);
                }
            };
        }
        take!(num_kernels, flags.kernels);
        take!(pop_size, flags.pop);
        take!(mutation, flags.mutation);
        take!(crossover, flags.crossover);
        take!(epochs, flags.epochs);
        take!(runs, flags.runs);
        take!(seed, flags.seed);
        take!(dataset, flags.dataset);
        take!(data, flags.data);
        take!(out, flags.out);
        if flags.no_normalize {
            self.normalize = Some(false);
        }
        if flags.no_center {
            self.center_weights = Some(false);
        }
        self.check_ranges()?;
        Ok(self)
    }

    pub fn resolve(&self) -> RunConfig {
        let d = RunConfig::default();
        let mut opt = d.opt.clone();
        opt.pop_size = self.pop_size.unwrap_or(opt.pop_size);
        opt.mutation = self.mutation.unwrap_or(opt.mutation);
        opt.crossover = self.crossover.unwrap_or(opt.crossover);
        opt.epochs = self.epochs.unwrap_or(opt.epochs);
        opt.seed = self.seed.unwrap_or(opt.seed);
        RunConfig {
            data_dir: self.data.clone().unwrap_or(d.data_dir),
            dataset: self.dataset.clone().unwrap_or_default(),
            out_dir: self.out.clone(),
            num_kernels: self.num_kernels.unwrap_or(d.num_kernels),
            normalize: self.normalize.unwrap_or(d.normalize),
            center_weights: self.center_weights.unwrap_or(d.center_weights),
            opt,
            alpha_grid: self.alpha_grid.unwrap_or(d.alpha_grid),
            runs: self.runs.unwrap_or(d.runs),
        }
    }

    /// Fully populated file equivalent of `cfg`.
    pub fn from_run_config(cfg: &RunConfig) -> Self {
        Self {
            num_kernels: Some(cfg.num_kernels),
            pop_size: Some(cfg.opt.pop_size),
            mutation: Some(cfg.opt.mutation),
            crossover: Some(cfg.opt.crossover),
            epochs: Some(cfg.opt.epochs),
            runs: Some(cfg.runs),
            seed: Some(cfg.opt.seed),
            normalize: Some(cfg.normalize),
            center_weights: Some(cfg.center_weights),
            dataset: Some(cfg.dataset.clone()),
            data: Some(cfg.data_dir.clone()),
            out: cfg.out_dir.clone(),
            alpha_grid: Some(cfg.alpha_grid),
        }
    }
}

/// Reads a config file and fills the remaining fields with defaults.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(ConfigFile::parse(&fs::read_to_string(path)?)?.resolve())
}

/// Config file (if any) overlaid by flags.
pub fn resolve_config(flags: &CommonArgs) -> Result<RunConfig> {
    let base = match &flags.config {
        Some(p) => {
            if !p.is_file() {
                return Err(Error::MissingFile(p.clone()));
            }
            ConfigFile::parse(&fs::read_to_string(p)?)?
        }
        None => ConfigFile::default(),
    };
    Ok(base.overlay(flags)?.resolve())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ConfigFile,
    pub seeds: Vec<RunSeeds>,
    /// SHA-256 of each dataset file, keyed by file name.
    pub checksums: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn write_meta(cfg: &RunConfig, command: &str, ds: &Dataset, runs: usize) -> Result<()> {
    let Some(dir) = &cfg.out_dir else {
        return Ok(());
    };
    fs::create_dir_all(dir)?;
    let mut checksums = BTreeMap::new();
    for p in [&ds.train_path, &ds.test_path] {
        let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
        checksums.insert(name, sha256_file(p)?);
    }
    let meta = Meta {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config: ConfigFile::from_run_config(cfg),
        seeds: (0..runs).map(|i| RunSeeds::for_run(cfg.opt.seed, i)).collect(),
        checksums,
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

/// Paths and required values are checked before any work starts.
fn prepare(flags: &CommonArgs) -> std::result::Result<RunConfig, Failure> {
    let cfg = resolve_config(flags).map_err(usage)?;
    if cfg.dataset.is_empty() {
        return Err(Failure::Usage("--dataset is required".into()));
    }
    let dir = cfg.data_dir.join(&cfg.dataset);
    if !dir.is_dir() {
        return Err(Failure::Usage(format!("dataset directory not found: {}", dir.display())));
    }
    cfg.validate().map_err(usage)?;
    if let Some(out) = &cfg.out_dir {
        if out.exists() && !out.is_dir() {
            return Err(Failure::Usage(format!("--out is not a directory: {}", out.display())));
        }
    }
    Ok(cfg)
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> std::result::Result<T, Failure> + Send,
) -> std::result::Result<T, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be >= 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Failure::Runtime(Error::InvalidArgument(format!("thread pool: {e}"))))?;
    pool.install(f)
}

/// The bank run 0 of `prune` would draw.
fn first_run_bank(cfg: &RunConfig, ds: &Dataset) -> Result<KernelBank> {
    let seeds = RunSeeds::for_run(cfg.opt.seed, 0);
    init_kernel_bank_with(cfg.num_kernels, ds.series_length(), seeds.bank, cfg.center_weights)
}

fn cmd_transform(cfg: &RunConfig) -> Result<String> {
    let ds = pipeline::load(cfg)?;
    let bank = first_run_bank(cfg, &ds)?;
    let train = transform_dataset(&ds.train, &bank)?;
    let test = transform_dataset(&ds.test, &bank)?;
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
        bank.save(dir.join("bank.json"))?;
        fs::write(dir.join("features_train.csv"), train.to_csv())?;
        fs::write(dir.join("features_test.csv"), test.to_csv())?;
        write_meta(cfg, "transform", &ds, 1)?;
    }
    Ok(format!(
        "{}: {} kernels, train {}x{}, test {}x{}",
        ds.name,
        bank.len(),
        train.rows(),
        train.cols(),
        test.rows(),
        test.cols()
    ))
}

fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let ds = pipeline::load(cfg)?;
    let bank = first_run_bank(cfg, &ds)?;
    let f = SplitFeatures::extract(&ds, &bank)?;
    let model = classifier::fit(&f.train, &f.train_labels, &cfg.alpha_grid.values())?;
    let m = Metrics::compute(&model.predict(&f.test)?, &f.test_labels, f.num_classes)?;
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
        bank.save(dir.join("bank.json"))?;
        ModelArtifact {
            dataset: ds.name.clone(),
            normalize: cfg.normalize,
            bank: BankRef::of(&bank, Some(Path::new("bank.json"))),
            active_kernels: None,
            model,
        }
        .save(dir.join("model.json"))?;
        fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&m)?)?;
        write_meta(cfg, "train", &ds, 1)?;
    }
    Ok(format!("{}: test accuracy {:.4}, MCC {:.4}", ds.name, m.accuracy, m.mcc))
}

fn cmd_prune(cfg: &RunConfig) -> Result<String> {
    let ds = pipeline::load(cfg)?;
    write_meta(cfg, "prune", &ds, cfg.runs)?;
    let report = pipeline::run_srocket_on(&ds, cfg)?;
    let m = &report.mean;
    Ok(format!(
        "{}: full accuracy {:.4}, pruned accuracy {:.4} at density {:.4} over {} run(s)",
        report.dataset,
        m.full_accuracy,
        m.pruned_accuracy,
        m.pruned_density,
        report.runs.len()
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub dataset: String,
    pub accuracy: f64,
    pub mcc: f64,
    pub density: f64,
    pub active_kernels: usize,
}

/// Scores a saved model on the test split. A state masks the model's own
/// feature columns.
pub fn evaluate_artifact(
    artifact: &ModelArtifact,
    artifact_dir: Option<&Path>,
    state: Option<&StateVector>,
    data_dir: &Path,
    dataset: &str,
) -> Result<EvalResult> {
    let ds = data::load_dataset(data_dir, dataset)?;
    let ds = if artifact.normalize { ds.znormalized() } else { ds };
    let mut bank = artifact.bank.resolve(artifact_dir)?;
    if let Some(active) = &artifact.active_kernels {
        bank = bank.subset(active);
    }
    if bank.input_length != ds.series_length() {
        return Err(Error::WidthMismatch {
            expected: bank.input_length,
            got: ds.series_length(),
        });
    }
    let test = transform_dataset(&ds.test, &bank)?;
    let labels = ds.test_labels();
    let (pred, density, active) = match state {
        Some(s) => {
            if s.len() != artifact.model.num_features {
                return Err(Error::WidthMismatch {
                    expected: artifact.model.num_features,
                    got: s.len(),
                });
            }
            (artifact.model.predict_masked(&test, s)?, s.density(), s.count_active())
        }
        None => {
            let n = test.cols();
            let total = artifact.bank.num_kernels;
            (artifact.model.predict(&test)?, n as f64 / total as f64, n)
        }
    };
    let m = Metrics::compute(&pred, &labels, artifact.model.num_classes.max(ds.num_classes))?;
    Ok(EvalResult {
        dataset: ds.name,
        accuracy: m.accuracy,
        mcc: m.mcc,
        density,
        active_kernels: active,
    })
}

fn cmd_eval(args: &EvalArgs) -> std::result::Result<String, Failure> {
    let cfg = resolve_config(&args.common).map_err(usage)?;
    if !args.model.is_file() {
        return Err(usage(Error::MissingFile(args.model.clone())));
    }
    if let Some(s) = &args.state {
        if !s.is_file() {
            return Err(usage(Error::MissingFile(s.clone())));
        }
    }
    let artifact = ModelArtifact::load(&args.model)?;
    let dataset = if cfg.dataset.is_empty() { artifact.dataset.clone() } else { cfg.dataset.clone() };
    let state = match &args.state {
        Some(p) => Some(fs::read_to_string(p).map_err(Error::from)?.trim().parse::<StateVector>()?),
        None => None,
    };
    let r = evaluate_artifact(&artifact, args.model.parent(), state.as_ref(), &cfg.data_dir, &dataset)?;
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir).map_err(Error::from)?;
        fs::write(dir.join("eval.json"), serde_json::to_string_pretty(&r).map_err(Error::from)?)
            .map_err(Error::from)?;
    }
    Ok(format!(
        "{}: test accuracy {:.4}, MCC {:.4}, density {:.4}",
        r.dataset, r.accuracy, r.mcc, r.density
    ))
}

fn cmd_montecarlo(cfg: &RunConfig, densities: &[f64], trials: usize) -> Result<String> {
    let ds = pipeline::load(cfg)?;
    let seeds = RunSeeds::for_run(cfg.opt.seed, 0);
    let bank = first_run_bank(cfg, &ds)?;
    let f = SplitFeatures::extract(&ds, &bank)?;
    let model = classifier::fit(&f.train, &f.train_labels, &cfg.alpha_grid.values())?;
    let summaries =
        pipeline::monte_carlo(densities, trials, &f.test, &f.test_labels, &model, seeds.random_baseline)?;
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("montecarlo.json"), serde_json::to_string_pretty(&summaries)?)?;
        let mut csv = String::from("density,active,trials,mean,median,q1,q3,min,max,outliers\n");
        for s in &summaries {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                s.density, s.active_kernels, s.trials, s.mean, s.median, s.q1, s.q3, s.min, s.max,
                s.outliers.len()
            ));
        }
        fs::write(dir.join("montecarlo.csv"), csv)?;
        write_meta(cfg, "montecarlo", &ds, 1)?;
    }
    let medians: Vec<String> = summaries
        .iter()
        .map(|s| format!("{}:{:.3}", s.density, s.median))
        .collect();
    Ok(format!("{}: median accuracy by density {}", ds.name, medians.join(" ")))
}

fn cmd_benchmark(cfg: &RunConfig) -> Result<String> {
    let ds = pipeline::load(cfg)?;
    let (t, result) = pipeline::time_stages_on(&ds, cfg)?;
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&t)?)?;
        write_meta(cfg, "benchmark", &ds, 1)?;
    }
    Ok(format!(
        "{}: init+conv {:.4}s, pre-train {:.4}s, opt/epoch {:.6}s, post-train {:.4}s, \
         inference full {:.4}s, pruned {:.4}s (density {:.4})",
        ds.name,
        t.init_convolution,
        t.pre_training,
        t.optimization_per_epoch,
        t.post_training,
        t.inference_full,
        t.inference_pruned,
        result.pruned.density
    ))
}

fn cmd_report(args: &ReportArgs) -> std::result::Result<String, Failure> {
    let path = args.out.join("report.json");
    if !path.is_file() {
        return Err(usage(Error::MissingFile(path)));
    }
    let report: RunReport =
        serde_json::from_str(&fs::read_to_string(&path).map_err(Error::from)?).map_err(Error::from)?;
    print!("{}", report.to_csv());
    let m = &report.mean;
    Ok(format!(
        "{} mean over {} run(s): full acc {:.4} mcc {:.4} | pruned acc {:.4} mcc {:.4} density {:.4}",
        report.dataset,
        report.runs.len(),
        m.full_accuracy,
        m.full_mcc,
        m.pruned_accuracy,
        m.pruned_mcc,
        m.pruned_density
    ))
}

fn dispatch(cli: Cli) -> std::result::Result<String, Failure> {
    match cli.command {
        Command::Transform(a) => {
            let cfg = prepare(&a)?;
            with_threads(a.threads, || Ok(cmd_transform(&cfg)?))
        }
        Command::Train(a) => {
            let cfg = prepare(&a)?;
            with_threads(a.threads, || Ok(cmd_train(&cfg)?))
        }
        Command::Prune(a) => {
            let cfg = prepare(&a)?;
            with_threads(a.threads, || Ok(cmd_prune(&cfg)?))
        }
        Command::Benchmark(a) => {
            let cfg = prepare(&a)?;
            with_threads(a.threads, || Ok(cmd_benchmark(&cfg)?))
        }
        Command::Montecarlo(a) => {
            let cfg = prepare(&a.common)?;
            if a.trials == 0 {
                return Err(Failure::Usage("--trials must be >= 1".into()));
            }
            if let Some(d) = a.densities.iter().find(|d| !(**d > 0.0 && **d <= 1.0)) {
                return Err(usage(Error::BadDensity(*d)));
            }
            with_threads(a.common.threads, || Ok(cmd_montecarlo(&cfg, &a.densities, a.trials)?))
        }
        Command::Eval(a) => {
            let threads = a.common.threads;
            with_threads(threads, || cmd_eval(&a))
        }
        Command::Report(a) => cmd_report(&a),
    }
}

/// Runs the tool on `argv` (program name first) and returns the exit code:
/// 0 on success, 1 on usage error, 2 on runtime error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{}", e.render());
                    1
                }
            };
        }
    };
    match dispatch(cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            use clap::CommandFactory;
            let _ = Cli::command().write_help(&mut std::io::stderr());
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}
