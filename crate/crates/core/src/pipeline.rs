//! End-to-end runs: pre-train on all kernels, search for a kernel subset,
//! post-train on the kept kernels, and compare against random and
//! weight-norm pruning at the same density.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, log_space, Metrics, RidgeModel};
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::optimizer::{self, objective_value, OptConfig, OptOutcome, StateVector};
use crate::transform::{init_kernel_bank_with, transform_dataset, FeatureMatrix, KernelBank};

/// Regularization grid `10^linspace(log10_min, log10_max, count)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaGrid {
    pub log10_min: f64,
    pub log10_max: f64,
    pub count: usize,
}

impl Default for AlphaGrid {
    fn default() -> Self {
        Self {
            log10_min: -3.0,
            log10_max: 3.0,
            count: 10,
        }
    }
}

impl AlphaGrid {
    pub fn values(&self) -> Vec<f64> {
        log_space(self.log10_min, self.log10_max, self.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub dataset: String,
    pub out_dir: Option<PathBuf>,
    pub num_kernels: usize,
    pub normalize: bool,
    /// Subtract each kernel's weight mean after drawing.
    pub center_weights: bool,
    /// `opt.seed` is the base seed; run `i` uses `opt.seed + i`.
    pub opt: OptConfig,
    pub alpha_grid: AlphaGrid,
    pub runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            dataset: String::new(),
            out_dir: None,
            num_kernels: 10_000,
            normalize: true,
            center_weights: true,
            opt: OptConfig::default(),
            alpha_grid: AlphaGrid::default(),
            runs: 10,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_kernels == 0 {
            return Err(Error::InvalidArgument("number of kernels must be >= 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::InvalidArgument("runs must be >= 1".into()));
        }
        if self.alpha_grid.count == 0 {
            return Err(Error::InvalidArgument("alpha grid must not be empty".into()));
        }
        self.opt.validate()
    }
}

/// Independent stream `stream` of run seed `seed` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_BANK: u64 = 0;
const STREAM_OPT: u64 = 1;
const STREAM_RANDOM_BASELINE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub run: u64,
    pub bank: u64,
    pub optimizer: u64,
    pub random_baseline: u64,
}

impl RunSeeds {
    pub fn for_run(base: u64, run_index: usize) -> Self {
        let run = base.wrapping_add(run_index as u64);
        Self {
            run,
            bank: derive_seed(run, STREAM_BANK),
            optimizer: derive_seed(run, STREAM_OPT),
            random_baseline: derive_seed(run, STREAM_RANDOM_BASELINE),
        }
    }
}

pub fn load(cfg: &RunConfig) -> Result<Dataset> {
    let ds = data::load_dataset(&cfg.data_dir, &cfg.dataset)?;
    Ok(if cfg.normalize { ds.znormalized() } else { ds })
}

/// Train/test features of one bank, with labels.
#[derive(Debug, Clone)]
pub struct SplitFeatures {
    pub train: FeatureMatrix,
    pub train_labels: Vec<usize>,
    pub test: FeatureMatrix,
    pub test_labels: Vec<usize>,
    pub num_classes: usize,
}

impl SplitFeatures {
    pub fn extract(ds: &Dataset, bank: &KernelBank) -> Result<Self> {
        Ok(Self {
            train: transform_dataset(&ds.train, bank)?,
            train_labels: ds.train_labels(),
            test: transform_dataset(&ds.test, bank)?,
            test_labels: ds.test_labels(),
            num_classes: ds.num_classes,
        })
    }
}

/// A classifier refit on a subset of kernels. It reads only the listed
/// columns of a full-width feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedModel {
    pub active: Vec<usize>,
    pub model: RidgeModel,
}

impl PrunedModel {
    pub fn fit(
        train: &FeatureMatrix,
        labels: &[usize],
        active: &[usize],
        alphas: &[f64],
    ) -> Result<Self> {
        let model = classifier::fit(&train.select_columns(active), labels, alphas)?;
        Ok(Self {
            active: active.to_vec(),
            model,
        })
    }

    /// Predicts from a matrix holding every kernel's feature.
    pub fn predict(&self, full: &FeatureMatrix) -> Result<Vec<usize>> {
        self.model.predict(&full.select_columns(&self.active))
    }
}

fn check_density(density: f64) -> Result<()> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::BadDensity(density));
    }
    Ok(())
}

/// Number of kernels kept at `density`, at least one.
pub fn kept_count(density: f64, total: usize) -> usize {
    ((density * total as f64).round() as usize).clamp(1, total)
}

/// Retrains on a uniformly random subset of `round(density * D)` kernels and
/// scores it on the test split.
pub fn baseline_random(
    density: f64,
    features: &SplitFeatures,
    alphas: &[f64],
    seed: u64,
) -> Result<Metrics> {
    check_density(density)?;
    let total = features.train.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut active = index::sample(&mut rng, total, kept_count(density, total)).into_vec();
    active.sort_unstable();
    retrain_and_score(&active, features, alphas)
}

/// Indices of the `count` kernels with largest weight l1 norm; ties go to the
/// lower kernel index. Returned in ascending index order.
pub fn top_l1_kernels(bank: &KernelBank, count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..bank.len()).collect();
    let norms: Vec<f64> = bank.kernels.iter().map(|k| k.l1_norm()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    order.truncate(count);
    order.sort_unstable();
    order
}

/// Keeps the kernels with the largest weight l1 norm, retrains, scores.
pub fn baseline_l1norm(
    density: f64,
    bank: &KernelBank,
    features: &SplitFeatures,
    alphas: &[f64],
) -> Result<Metrics> {
    check_density(density)?;
    let active = top_l1_kernels(bank, kept_count(density, bank.len()));
    retrain_and_score(&active, features, alphas)
}

fn retrain_and_score(active: &[usize], f: &SplitFeatures, alphas: &[f64]) -> Result<Metrics> {
    let pruned = PrunedModel::fit(&f.train, &f.train_labels, active, alphas)?;
    Metrics::compute(&pruned.predict(&f.test)?, &f.test_labels, f.num_classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub accuracy: f64,
    pub mcc: f64,
    pub ofv: f64,
    pub density: f64,
}

impl ModelSummary {
    fn new(m: &Metrics, density: f64) -> Self {
        Self {
            accuracy: m.accuracy,
            mcc: m.mcc,
            ofv: objective_value(density, m.accuracy),
            density,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub accuracy: f64,
    pub mcc: f64,
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub init_convolution: f64,
    pub pre_training: f64,
    pub optimization_per_epoch: f64,
    pub post_training: f64,
    pub inference_full: f64,
    pub inference_pruned: f64,
}

impl StageTimings {
    pub fn all_positive(&self) -> bool {
        [
            self.init_convolution,
            self.pre_training,
            self.optimization_per_epoch,
            self.post_training,
            self.inference_full,
            self.inference_pruned,
        ]
        .iter()
        .all(|&t| t > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seeds: RunSeeds,
    pub full: ModelSummary,
    pub pruned: ModelSummary,
    pub active_kernels: usize,
    /// Objective of the selected state on the training set.
    pub train_ofv: f64,
    pub train_accuracy: f64,
    pub full_alpha: f64,
    pub pruned_alpha: f64,
    pub epochs_run: usize,
    pub converged: bool,
    pub random: Option<BaselineSummary>,
    pub l1_norm: Option<BaselineSummary>,
    pub timings: StageTimings,
}

/// Everything one run produces, including the artifacts written to disk.
pub struct RunArtifacts {
    pub result: RunResult,
    pub bank: KernelBank,
    pub full_model: RidgeModel,
    pub pruned: PrunedModel,
    pub outcome: OptOutcome,
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Runs inference repeatedly and keeps the fastest wall-clock time.
fn time_inference(
    ds: &Dataset,
    bank: &KernelBank,
    predict: impl Fn(&FeatureMatrix) -> Result<Vec<usize>>,
) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        let (_, t) = timed(|| predict(&transform_dataset(&ds.test, bank)?))?;
        best = best.min(t);
    }
    Ok(best)
}

/// Wall-clock inference on the test split for the full bank and for the
/// kept kernels only (features for pruned kernels are never computed).
pub fn time_inference_pair(
    ds: &Dataset,
    bank: &KernelBank,
    full_model: &RidgeModel,
    pruned: &PrunedModel,
) -> Result<(f64, f64)> {
    let full = time_inference(ds, bank, |f| full_model.predict(f))?;
    let sub_bank = bank.subset(&pruned.active);
    let pruned_t = time_inference(ds, &sub_bank, |f| pruned.model.predict(f))?;
    Ok((full, pruned_t))
}

/// One independent S-Rocket run on a loaded dataset.
pub fn run_once(ds: &Dataset, cfg: &RunConfig, run_index: usize) -> Result<RunArtifacts> {
    let seeds = RunSeeds::for_run(cfg.opt.seed, run_index);
    let alphas = cfg.alpha_grid.values();

    let ((bank, features), t_init) = timed(|| {
        let bank = init_kernel_bank_with(cfg.num_kernels, ds.series_length(), seeds.bank, cfg.center_weights)?;
        let features = SplitFeatures::extract(ds, &bank)?;
        Ok((bank, features))
    })?;

    let (full_model, t_pre) =
        timed(|| classifier::fit(&features.train, &features.train_labels, &alphas))?;

    let opt_cfg = OptConfig {
        seed: seeds.optimizer,
        ..cfg.opt.clone()
    };
    let (outcome, t_opt) =
        timed(|| optimizer::run(&features.train, &features.train_labels, &full_model, &opt_cfg))?;

    let active = outcome.best.active_indices();
    let (pruned, t_post) =
        timed(|| PrunedModel::fit(&features.train, &features.train_labels, &active, &alphas))?;

    let full_metrics = Metrics::compute(
        &full_model.predict(&features.test)?,
        &features.test_labels,
        features.num_classes,
    )?;
    let pruned_metrics = Metrics::compute(
        &pruned.predict(&features.test)?,
        &features.test_labels,
        features.num_classes,
    )?;
    let density = outcome.best.density();

    let (random, l1_norm) = if active.is_empty() {
        (None, None)
    } else {
        let r = baseline_random(density, &features, &alphas, seeds.random_baseline)?;
        let l = baseline_l1norm(density, &bank, &features, &alphas)?;
        (
            Some(BaselineSummary {
                accuracy: r.accuracy,
                mcc: r.mcc,
            }),
            Some(BaselineSummary {
                accuracy: l.accuracy,
                mcc: l.mcc,
            }),
        )
    };

    let (inference_full, inference_pruned) = time_inference_pair(ds, &bank, &full_model, &pruned)?;

    let result = RunResult {
        run: run_index,
        seeds,
        full: ModelSummary::new(&full_metrics, 1.0),
        pruned: ModelSummary::new(&pruned_metrics, density),
        active_kernels: active.len(),
        train_ofv: outcome.best_eval.ofv,
        train_accuracy: outcome.best_eval.accuracy,
        full_alpha: full_model.alpha,
        pruned_alpha: pruned.model.alpha,
        epochs_run: outcome.epochs_run,
        converged: outcome.converged,
        random,
        l1_norm,
        timings: StageTimings {
            init_convolution: t_init,
            pre_training: t_pre,
            optimization_per_epoch: t_opt / outcome.epochs_run.max(1) as f64,
            post_training: t_post,
            inference_full,
            inference_pruned,
        },
    };
    Ok(RunArtifacts {
        result,
        bank,
        full_model,
        pruned,
        outcome,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSummary {
    pub full_accuracy: f64,
    pub full_mcc: f64,
    pub full_ofv: f64,
    pub pruned_accuracy: f64,
    pub pruned_mcc: f64,
    pub pruned_ofv: f64,
    pub pruned_density: f64,
    pub random_accuracy: Option<f64>,
    pub random_mcc: Option<f64>,
    pub l1_accuracy: Option<f64>,
    pub l1_mcc: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn mean_opt(values: Vec<Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.into_iter().flatten().collect();
    (!present.is_empty()).then(|| mean(present.into_iter()))
}

impl MeanSummary {
    pub fn over(runs: &[RunResult]) -> Self {
        Self {
            full_accuracy: mean(runs.iter().map(|r| r.full.accuracy)),
            full_mcc: mean(runs.iter().map(|r| r.full.mcc)),
            full_ofv: mean(runs.iter().map(|r| r.full.ofv)),
            pruned_accuracy: mean(runs.iter().map(|r| r.pruned.accuracy)),
            pruned_mcc: mean(runs.iter().map(|r| r.pruned.mcc)),
            pruned_ofv: mean(runs.iter().map(|r| r.pruned.ofv)),
            pruned_density: mean(runs.iter().map(|r| r.pruned.density)),
            random_accuracy: mean_opt(runs.iter().map(|r| r.random.map(|b| b.accuracy)).collect()),
            random_mcc: mean_opt(runs.iter().map(|r| r.random.map(|b| b.mcc)).collect()),
            l1_accuracy: mean_opt(runs.iter().map(|r| r.l1_norm.map(|b| b.accuracy)).collect()),
            l1_mcc: mean_opt(runs.iter().map(|r| r.l1_norm.map(|b| b.mcc)).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub num_classes: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub series_length: usize,
    pub normalize: bool,
    pub num_kernels: usize,
    pub opt: OptConfig,
    pub alpha_grid: AlphaGrid,
    pub warnings: Vec<String>,
    pub runs: Vec<RunResult>,
    pub mean: MeanSummary,
    pub mean_timings: StageTimings,
    /// True when every run with fewer kernels inferred faster than the full model.
    pub pruned_inference_faster: bool,
}

impl RunReport {
    fn build(ds: &Dataset, cfg: &RunConfig, runs: Vec<RunResult>) -> Self {
        let t = |f: fn(&StageTimings) -> f64| mean(runs.iter().map(|r| f(&r.timings)));
        let mean_timings = StageTimings {
            init_convolution: t(|s| s.init_convolution),
            pre_training: t(|s| s.pre_training),
            optimization_per_epoch: t(|s| s.optimization_per_epoch),
            post_training: t(|s| s.post_training),
            inference_full: t(|s| s.inference_full),
            inference_pruned: t(|s| s.inference_pruned),
        };
        let pruned_inference_faster = runs
            .iter()
            .filter(|r| r.pruned.density < 1.0)
            .all(|r| r.timings.inference_pruned < r.timings.inference_full);
        Self {
            dataset: ds.name.clone(),
            num_classes: ds.num_classes,
            train_size: ds.train.len(),
            test_size: ds.test.len(),
            series_length: ds.series_length(),
            normalize: cfg.normalize,
            num_kernels: cfg.num_kernels,
            opt: cfg.opt.clone(),
            alpha_grid: cfg.alpha_grid,
            warnings: ds.warnings.clone(),
            mean: MeanSummary::over(&runs),
            mean_timings,
            pruned_inference_faster,
            runs,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flat per-run rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "run,seed,full_acc,full_mcc,full_ofv,pruned_acc,pruned_mcc,pruned_ofv,density,\
             active,random_acc,random_mcc,l1_acc,l1_mcc,epochs_run,converged\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.runs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.run,
                r.seeds.run,
                r.full.accuracy,
                r.full.mcc,
                r.full.ofv,
                r.pruned.accuracy,
                r.pruned.mcc,
                r.pruned.ofv,
                r.pruned.density,
                r.active_kernels,
                opt(r.random.map(|b| b.accuracy)),
                opt(r.random.map(|b| b.mcc)),
                opt(r.l1_norm.map(|b| b.accuracy)),
                opt(r.l1_norm.map(|b| b.mcc)),
                r.epochs_run,
                r.converged
            ));
        }
        out
    }
}

/// Reference to the bank a model was trained on; the seed and sizes are
/// enough to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankRef {
    pub seed: u64,
    pub num_kernels: usize,
    pub input_length: usize,
    #[serde(default = "default_true")]
    pub centered: bool,
    pub path: Option<String>,
}

impl BankRef {
    pub fn of(bank: &KernelBank, path: Option<&Path>) -> Self {
        Self {
            seed: bank.seed,
            num_kernels: bank.len(),
            input_length: bank.input_length,
            centered: bank.centered,
            path: path.map(|p| p.display().to_string()),
        }
    }

    /// Loads the bank file when present, otherwise regenerates from the seed.
    pub fn resolve(&self, relative_to: Option<&Path>) -> Result<KernelBank> {
        if let Some(p) = &self.path {
            let p = PathBuf::from(p);
            let candidates = [Some(p.clone()), relative_to.map(|base| base.join(&p))];
            for c in candidates.into_iter().flatten() {
                if c.is_file() {
                    return KernelBank::load(c);
                }
            }
        }
        init_kernel_bank_with(self.num_kernels, self.input_length, self.seed, self.centered)
    }
}

fn default_true() -> bool {
    true
}

/// Serialized classifier plus what is needed to reproduce its features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub dataset: String,
    pub normalize: bool,
    pub bank: BankRef,
    /// Kernel indices the classifier reads; `None` means all kernels.
    pub active_kernels: Option<Vec<usize>>,
    pub model: RidgeModel,
}

impl ModelArtifact {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSidecar {
    pub density: f64,
    pub active_kernels: usize,
    pub num_kernels: usize,
    pub seed: u64,
    pub train_ofv: f64,
    pub train_accuracy: f64,
    pub config: OptConfig,
}

fn write_run_artifacts(dir: &Path, art: &RunArtifacts, ds: &Dataset, cfg: &RunConfig) -> Result<()> {
    let i = art.result.run;
    fs::write(dir.join(format!("history_run{i}.csv")), art.outcome.history.to_csv())?;
    fs::write(
        dir.join(format!("best_state_run{i}.txt")),
        format!("{}\n", art.outcome.best),
    )?;
    let sidecar = StateSidecar {
        density: art.outcome.best.density(),
        active_kernels: art.result.active_kernels,
        num_kernels: art.bank.len(),
        seed: art.result.seeds.optimizer,
        train_ofv: art.result.train_ofv,
        train_accuracy: art.result.train_accuracy,
        config: OptConfig {
            seed: art.result.seeds.optimizer,
            ..cfg.opt.clone()
        },
    };
    fs::write(
        dir.join(format!("best_state_run{i}.json")),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    let bank_file = format!("bank_run{i}.json");
    art.bank.save(dir.join(&bank_file))?;
    let bank_ref = BankRef::of(&art.bank, Some(Path::new(&bank_file)));
    ModelArtifact {
        dataset: ds.name.clone(),
        normalize: cfg.normalize,
        bank: bank_ref.clone(),
        active_kernels: None,
        model: art.full_model.clone(),
    }
    .save(dir.join(format!("model_run{i}.json")))?;
    ModelArtifact {
        dataset: ds.name.clone(),
        normalize: cfg.normalize,
        bank: bank_ref,
        active_kernels: Some(art.pruned.active.clone()),
        model: art.pruned.model.clone(),
    }
    .save(dir.join(format!("pruned_model_run{i}.json")))?;
    Ok(())
}

/// Runs `cfg.runs` independent repetitions and aggregates them. With an
/// output directory, per-run artifacts are written as each run finishes and
/// a partial report is flushed if a later run fails.
pub fn run_srocket(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let ds = load(cfg)?;
    run_srocket_on(&ds, cfg)
}

pub fn run_srocket_on(ds: &Dataset, cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
    }
    let mut results = Vec::with_capacity(cfg.runs);
    for i in 0..cfg.runs {
        match run_once(ds, cfg, i) {
            Ok(art) => {
                if let Some(dir) = &cfg.out_dir {
                    write_run_artifacts(dir, &art, ds, cfg)?;
                }
                results.push(art.result);
            }
            Err(e) => {
                if let (Some(dir), false) = (&cfg.out_dir, results.is_empty()) {
                    let partial = RunReport::build(ds, cfg, results);
                    fs::write(dir.join("report_partial.json"), partial.to_json()?)?;
                }
                return Err(e);
            }
        }
    }
    let report = RunReport::build(ds, cfg, results);
    if let Some(dir) = &cfg.out_dir {
        fs::write(dir.join("report.json"), report.to_json()?)?;
        fs::write(dir.join("runs.csv"), report.to_csv())?;
    }
    Ok(report)
}

/// Box-plot style summary of Monte Carlo accuracies at one density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub density: f64,
    pub active_kernels: usize,
    pub trials: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    /// Accuracies beyond 1.5 IQR from the quartiles.
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl McSummary {
    fn from_samples(density: f64, active_kernels: usize, mut acc: Vec<f64>) -> Self {
        acc.sort_by(f64::total_cmp);
        let q1 = quantile(&acc, 0.25);
        let q3 = quantile(&acc, 0.75);
        let iqr = q3 - q1;
        let outliers = acc
            .iter()
            .copied()
            .filter(|&a| a < q1 - 1.5 * iqr || a > q3 + 1.5 * iqr)
            .collect();
        Self {
            density,
            active_kernels,
            trials: acc.len(),
            mean: mean(acc.iter().copied()),
            median: quantile(&acc, 0.5),
            q1,
            q3,
            min: acc[0],
            max: acc[acc.len() - 1],
            outliers,
        }
    }
}

/// Applies random masks of each density to the pre-trained model and scores
/// them on test features. This is a diagnostic and never feeds the search.
pub fn monte_carlo(
    densities: &[f64],
    trials: usize,
    test_features: &FeatureMatrix,
    test_labels: &[usize],
    model: &RidgeModel,
    seed: u64,
) -> Result<Vec<McSummary>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let dim = test_features.cols();
    densities
        .iter()
        .enumerate()
        .map(|(di, &density)| {
            check_density(density)?;
            let count = kept_count(density, dim);
            let acc = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let s = derive_seed(derive_seed(seed, di as u64), t as u64);
                    let mut rng = ChaCha8Rng::seed_from_u64(s);
                    let active = index::sample(&mut rng, dim, count).into_vec();
                    let state = StateVector::from_active(dim, &active);
                    let pred = model.predict_masked(test_features, &state)?;
                    classifier::accuracy(&pred, test_labels)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(McSummary::from_samples(density, count, acc))
        })
        .collect()
}

/// Stage timings of a single run (run index 0 of `cfg`), measured on one
/// worker thread.
pub fn time_stages(cfg: &RunConfig) -> Result<(StageTimings, RunResult)> {
    cfg.validate()?;
    let ds = load(cfg)?;
    time_stages_on(&ds, cfg)
}

pub fn time_stages_on(ds: &Dataset, cfg: &RunConfig) -> Result<(StageTimings, RunResult)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let art = pool.install(|| run_once(ds, cfg, 0))?;
    Ok((art.result.timings, art.result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::Kernel;

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = RunSeeds::for_run(42, 0);
        let b = RunSeeds::for_run(42, 1);
        assert_eq!(a, RunSeeds::for_run(42, 0));
        assert_eq!(a.run, 42);
        assert_eq!(b.run, 43);
        assert_ne!(a.bank, b.bank);
        assert_ne!(a.bank, a.optimizer);
        assert_ne!(a.optimizer, a.random_baseline);
    }

    #[test]
    fn l1_ranking_with_ties() {
        let k = |w: f64| Kernel {
            weights: vec![w; 7],
            bias: 0.0,
            dilation: 1,
            padding: false,
        };
        let bank = KernelBank {
            seed: 0,
            num_kernels: 5,
            input_length: 10,
            centered: false,
            kernels: vec![k(0.1), k(-2.0), k(0.5), k(2.0), k(0.3)],
        };
        assert_eq!(top_l1_kernels(&bank, 2), vec![1, 3]);
        assert_eq!(top_l1_kernels(&bank, 1), vec![1]);
        assert_eq!(top_l1_kernels(&bank, 3), vec![1, 2, 3]);
    }

    #[test]
    fn kept_count_rounds_and_clamps() {
        assert_eq!(kept_count(0.27, 10_000), 2700);
        assert_eq!(kept_count(1.0, 7), 7);
        assert_eq!(kept_count(1e-9, 7), 1);
        assert!(check_density(0.0).is_err());
        assert!(check_density(1.5).is_err());
        assert!(check_density(f64::NAN).is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        let s = McSummary::from_samples(0.5, 1, vec![4.0, 1.0, 3.0, 2.0, 100.0]);
        assert_eq!(s.median, 3.0);
        assert_eq!(s.q1, 2.0);
        assert_eq!(s.q3, 4.0);
        assert_eq!(s.outliers, vec![100.0]);
        assert_eq!(s.mean, 22.0);
    }

    #[test]
    fn alpha_grid_default() {
        assert_eq!(AlphaGrid::default().values(), classifier::default_alpha_grid());
    }
}
