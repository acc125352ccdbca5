//! Binary differential evolution over kernel activation states.
//!
//! A state is a bit per kernel (1 = kept). The search minimizes
//! `L = (density - accuracy + 1) / 2`, where accuracy is measured on the
//! training set by the pre-trained classifier with inactive kernels masked
//! out. Each generation builds one trial per pool member (DE/rand/1 on bits,
//! then binomial crossover), evaluates all trials, and keeps a trial when its
//! objective is no worse than its parent's. The run stops after the epoch
//! budget or when the pool's mean objective equals its best.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::RidgeModel;
use crate::error::{Error, Result};
use crate::transform::FeatureMatrix;

/// `|ΔL|` at or below this counts as converged.
pub const CONVERGENCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateVector(Vec<bool>);

impl StateVector {
    pub fn ones(len: usize) -> Self {
        Self(vec![true; len])
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn from_active(len: usize, active: &[usize]) -> Self {
        let mut bits = vec![false; len];
        for &i in active {
            bits[i] = true;
        }
        Self(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, d: usize) -> bool {
        self.0[d]
    }

    pub fn count_active(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Fraction of active kernels, in `[0, 1]`.
    pub fn density(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.count_active() as f64 / self.0.len() as f64
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.0.iter().map(|&b| if b { '1' } else { '0' }).collect();
        f.write_str(&s)
    }
}

impl FromStr for StateVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidArgument(format!(
                    "state files hold only '0'/'1', found {other:?}"
                ))),
            })
            .collect::<Result<Vec<bool>>>()
            .map(StateVector)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub ofv: f64,
    pub density: f64,
    pub accuracy: f64,
}

/// `(density - accuracy + 1) / 2`.
pub fn objective_value(density: f64, accuracy: f64) -> f64 {
    (density - accuracy + 1.0) / 2.0
}

impl Evaluation {
    pub fn new(density: f64, accuracy: f64) -> Self {
        Self {
            ofv: objective_value(density, accuracy),
            density,
            accuracy,
        }
    }
}

/// Anything the search can minimize over bit vectors of a fixed length.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, state: &StateVector) -> Evaluation;
}

/// Objective of a pre-trained ridge model scored on its own training set.
///
/// Standardized features are cached once so an evaluation costs one masked
/// pass over `N x D x C` products.
pub struct MaskedRidgeObjective<'a> {
    model: &'a RidgeModel,
    labels: &'a [usize],
    standardized: Vec<f64>,
}

impl<'a> MaskedRidgeObjective<'a> {
    pub fn new(model: &'a RidgeModel, features: &FeatureMatrix, labels: &'a [usize]) -> Result<Self> {
        if features.cols() != model.num_features {
            return Err(Error::WidthMismatch {
                expected: model.num_features,
                got: features.cols(),
            });
        }
        if labels.len() != features.rows() || labels.is_empty() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: features.rows(),
            });
        }
        let standardized = features
            .iter_rows()
            .flat_map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(d, &x)| (x - model.scaler_mean[d]) / model.scaler_std[d])
            })
            .collect();
        Ok(Self {
            model,
            labels,
            standardized,
        })
    }
}

impl Objective for MaskedRidgeObjective<'_> {
    fn dim(&self) -> usize {
        self.model.num_features
    }

    fn evaluate(&self, state: &StateVector) -> Evaluation {
        let d = self.model.num_features;
        let c = self.model.num_classes;
        let active = state.active_indices();
        let mut scores = vec![0.0; c];
        let mut hits = 0usize;
        for (row, &label) in self.standardized.chunks_exact(d).zip(self.labels) {
            scores.copy_from_slice(&self.model.intercepts);
            for &j in &active {
                let z = row[j];
                let w = &self.model.weights[j * c..(j + 1) * c];
                for (s, &wk) in scores.iter_mut().zip(w) {
                    *s += z * wk;
                }
            }
            if crate::classifier::argmax(&scores) == label {
                hits += 1;
            }
        }
        Evaluation::new(state.density(), hits as f64 / self.labels.len() as f64)
    }
}

/// Objective of `state` for the pre-trained `model` on training data.
pub fn evaluate_objective(
    state: &StateVector,
    features: &FeatureMatrix,
    model: &RidgeModel,
    labels: &[usize],
) -> Result<Evaluation> {
    let pred = model.predict_masked(features, state)?;
    let acc = crate::classifier::accuracy(&pred, labels)?;
    Ok(Evaluation::new(state.density(), acc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptConfig {
    pub pop_size: usize,
    pub mutation: f64,
    pub crossover: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            pop_size: 8,
            mutation: 0.9,
            crossover: 0.9,
            epochs: 500,
            seed: 0,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        check_pool_size(self.pop_size)?;
        for (name, v) in [("mutation", self.mutation), ("crossover", self.crossover)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} factor {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

fn check_pool_size(size: usize) -> Result<()> {
    if size < 4 || !size.is_multiple_of(2) {
        return Err(Error::BadPoolSize(size));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct StatePool {
    pub states: Vec<StateVector>,
    pub ofvs: Vec<f64>,
}

impl StatePool {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// First half Bernoulli(0.5) per bit, second half all ones. Objective values
/// start as NaN until the pool is evaluated.
pub fn init_pool<R: Rng + ?Sized>(size: usize, dim: usize, rng: &mut R) -> Result<StatePool> {
    check_pool_size(size)?;
    if dim == 0 {
        return Err(Error::InvalidArgument("state dimension must be >= 1".into()));
    }
    let half = size / 2;
    let mut states = Vec::with_capacity(size);
    for _ in 0..half {
        states.push(StateVector((0..dim).map(|_| rng.random_bool(0.5)).collect()));
    }
    for _ in half..size {
        states.push(StateVector::ones(dim));
    }
    Ok(StatePool {
        states,
        ofvs: vec![f64::NAN; size],
    })
}

/// One mutant bit: flip the base bit when the difference pair disagrees and
/// the draw falls below `factor`.
#[inline]
pub fn mutate_bit(base: bool, a: bool, b: bool, draw: f64, factor: f64) -> bool {
    if a != b && draw < factor {
        !base
    } else {
        base
    }
}

/// One trial bit: take the mutant bit when the draw is at most `rate`.
#[inline]
pub fn crossover_bit(mutant: bool, parent: bool, draw: f64, rate: f64) -> bool {
    if draw <= rate {
        mutant
    } else {
        parent
    }
}

/// Three distinct pool indices, all different from `target`.
pub fn pick_donors<R: Rng + ?Sized>(size: usize, target: usize, rng: &mut R) -> Result<[usize; 3]> {
    if size < 4 {
        return Err(Error::PoolTooSmall(size));
    }
    let picked = index::sample(rng, size - 1, 3);
    let mut out = [0; 3];
    for (o, k) in out.iter_mut().zip(picked.iter()) {
        *o = if k >= target { k + 1 } else { k };
    }
    Ok(out)
}

/// Mutant for pool member `target`, drawing one uniform number per bit.
pub fn mutate<R: Rng + ?Sized>(
    pool: &StatePool,
    target: usize,
    factor: f64,
    rng: &mut R,
) -> Result<StateVector> {
    if target >= pool.len() {
        return Err(Error::InvalidArgument(format!("target {target} outside pool")));
    }
    let [i1, i2, i3] = pick_donors(pool.len(), target, rng)?;
    let (base, a, b) = (&pool.states[i1].0, &pool.states[i2].0, &pool.states[i3].0);
    let bits = (0..base.len())
        .map(|d| {
            let r: f64 = rng.random();
            mutate_bit(base[d], a[d], b[d], r, factor)
        })
        .collect();
    Ok(StateVector(bits))
}

pub fn crossover<R: Rng + ?Sized>(
    mutant: &StateVector,
    parent: &StateVector,
    rate: f64,
    rng: &mut R,
) -> Result<StateVector> {
    if mutant.len() != parent.len() {
        return Err(Error::LengthMismatch {
            left: mutant.len(),
            right: parent.len(),
        });
    }
    let bits = mutant
        .0
        .iter()
        .zip(&parent.0)
        .map(|(&m, &p)| {
            let r: f64 = rng.random();
            crossover_bit(m, p, r, rate)
        })
        .collect();
    Ok(StateVector(bits))
}

/// Keeps the trial when it is no worse than the parent.
pub fn select<'s>(
    trial: &'s StateVector,
    parent: &'s StateVector,
    trial_ofv: f64,
    parent_ofv: f64,
) -> &'s StateVector {
    if trial_ofv <= parent_ofv {
        trial
    } else {
        parent
    }
}

/// Lowest cached objective; ties go to the lowest index.
pub fn best_state(pool: &StatePool) -> (usize, &StateVector, f64) {
    let mut b = 0;
    for (i, &v) in pool.ofvs.iter().enumerate().skip(1) {
        if v < pool.ofvs[b] {
            b = i;
        }
    }
    (b, &pool.states[b], pool.ofvs[b])
}

/// Best objective minus pool mean; never positive.
pub fn convergence_gap(pool: &StatePool) -> f64 {
    let (_, _, best) = best_state(pool);
    let mean = pool.ofvs.iter().sum::<f64>() / pool.ofvs.len() as f64;
    best - mean
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub best_ofv: f64,
    pub best_acc: f64,
    pub best_density: f64,
    pub mean_ofv: f64,
    pub delta_l: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptHistory {
    pub records: Vec<EpochRecord>,
}

impl OptHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,best_ofv,best_acc,best_density,mean_ofv,delta_L\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.best_ofv, r.best_acc, r.best_density, r.mean_ofv, r.delta_l
            ));
        }
        out
    }

    pub fn is_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].best_ofv <= w[0].best_ofv)
    }
}

#[derive(Debug, Clone)]
pub struct OptOutcome {
    pub best: StateVector,
    pub best_eval: Evaluation,
    pub history: OptHistory,
    /// Generations actually run (excludes the initial evaluation).
    pub epochs_run: usize,
    pub converged: bool,
}

fn evaluate_all<O: Objective>(objective: &O, states: &[StateVector]) -> Vec<Evaluation> {
    states.par_iter().map(|s| objective.evaluate(s)).collect()
}

fn record(epoch: usize, pool: &StatePool, evals: &[Evaluation]) -> EpochRecord {
    let (b, _, best_ofv) = best_state(pool);
    EpochRecord {
        epoch,
        best_ofv,
        best_acc: evals[b].accuracy,
        best_density: evals[b].density,
        mean_ofv: pool.ofvs.iter().sum::<f64>() / pool.len() as f64,
        delta_l: convergence_gap(pool),
    }
}

/// Runs the search against any objective. Epoch 0 of the history is the
/// initial pool; the returned state is the best member of the final pool,
/// which holds the lowest objective seen since selection never worsens a
/// slot.
pub fn evolve<O: Objective>(objective: &O, cfg: &OptConfig) -> Result<OptOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pool = init_pool(cfg.pop_size, objective.dim(), &mut rng)?;
    let mut evals = evaluate_all(objective, &pool.states);
    pool.ofvs = evals.iter().map(|e| e.ofv).collect();

    let mut history = OptHistory::default();
    history.records.push(record(0, &pool, &evals));
    let mut converged = convergence_gap(&pool).abs() <= CONVERGENCE_EPS;
    let mut epochs_run = 0;

    while !converged && epochs_run < cfg.epochs {
        epochs_run += 1;
        // All random draws happen here, before the parallel evaluation.
        let mut trials = Vec::with_capacity(pool.len());
        for i in 0..pool.len() {
            let mutant = mutate(&pool, i, cfg.mutation, &mut rng)?;
            trials.push(crossover(&mutant, &pool.states[i], cfg.crossover, &mut rng)?);
        }
        let trial_evals = evaluate_all(objective, &trials);
        for (i, (trial, te)) in trials.into_iter().zip(trial_evals).enumerate() {
            if te.ofv <= pool.ofvs[i] {
                pool.states[i] = trial;
                pool.ofvs[i] = te.ofv;
                evals[i] = te;
            }
        }
        let rec = record(epochs_run, &pool, &evals);
        converged = rec.delta_l.abs() <= CONVERGENCE_EPS;
        history.records.push(rec);
    }

    let (b, best, _) = best_state(&pool);
    Ok(OptOutcome {
        best: best.clone(),
        best_eval: evals[b],
        history,
        epochs_run,
        converged,
    })
}

/// Searches for a kernel subset for a model pre-trained on all kernels,
/// scoring states on the training features.
pub fn run(
    features: &FeatureMatrix,
    labels: &[usize],
    model: &RidgeModel,
    cfg: &OptConfig,
) -> Result<OptOutcome> {
    let objective = MaskedRidgeObjective::new(model, features, labels)?;
    evolve(&objective, cfg)
}
