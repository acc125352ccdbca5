#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srocket::data::{write_ucr_split, TimeSeries};
use srocket::transform::FeatureMatrix;

/// Direct evaluation of every output position, tap by tap, with explicit
/// bounds checks against the virtual zero padding.
pub fn naive_convolve(x: &[f64], w: &[f64], bias: f64, dilation: usize, padding: bool) -> Vec<f64> {
    let span = (w.len() - 1) * dilation;
    let pad = if padding { span / 2 } else { 0 };
    let padded_len = x.len() + 2 * pad;
    if padded_len <= span {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..padded_len - span {
        let mut acc = bias;
        for (j, &wj) in w.iter().enumerate() {
            let p = i as isize + (j * dilation) as isize - pad as isize;
            if p >= 0 && (p as usize) < x.len() {
                acc += x[p as usize] * wj;
            }
        }
        out.push(acc);
    }
    out
}

pub struct RidgeOracle {
    /// `D x C`
    pub weights: DMatrix<f64>,
    pub intercepts: Vec<f64>,
}

fn standardize(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut z = x.clone();
    for j in 0..x.ncols() {
        let col = x.column(j);
        let m = col.sum() / n;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        let s = var.sqrt().max(1e-8);
        for i in 0..x.nrows() {
            z[(i, j)] = (x[(i, j)] - m) / s;
        }
    }
    z
}

fn targets(labels: &[usize]) -> DMatrix<f64> {
    let c = labels.iter().max().unwrap() + 1;
    DMatrix::from_fn(labels.len(), c, |i, k| if labels[i] == k { 1.0 } else { -1.0 })
}

/// `W = (ZᵀZ + αI)⁻¹ Zᵀ (Y - mean(Y))` by explicit inversion.
pub fn ridge_oracle(x: &DMatrix<f64>, labels: &[usize], alpha: f64) -> RidgeOracle {
    let z = standardize(x);
    let y = targets(labels);
    let n = y.nrows() as f64;
    let intercepts: Vec<f64> = (0..y.ncols()).map(|k| y.column(k).sum() / n).collect();
    let yc = DMatrix::from_fn(y.nrows(), y.ncols(), |i, k| y[(i, k)] - intercepts[k]);
    let d = z.ncols();
    let a = z.transpose() * &z + DMatrix::identity(d, d) * alpha;
    let inv = a.try_inverse().expect("regularized normal matrix is invertible");
    RidgeOracle {
        weights: inv * z.transpose() * yc,
        intercepts,
    }
}

/// Mean squared leave-one-out residual, refitting slope and unpenalized
/// intercept on each fold of the (fixed) standardized design.
pub fn brute_force_loo(x: &DMatrix<f64>, labels: &[usize], alpha: f64) -> f64 {
    let z = standardize(x);
    let y = targets(labels);
    let (n, d) = z.shape();
    let mut total = 0.0;
    for held in 0..n {
        let rows: Vec<usize> = (0..n).filter(|&i| i != held).collect();
        let a = DMatrix::from_fn(rows.len(), d + 1, |r, j| if j == 0 { 1.0 } else { z[(rows[r], j - 1)] });
        let mut penalty = DMatrix::identity(d + 1, d + 1) * alpha;
        penalty[(0, 0)] = 0.0;
        let lhs = (a.transpose() * &a + penalty).try_inverse().unwrap();
        for k in 0..y.ncols() {
            let yk = DVector::from_fn(rows.len(), |r, _| y[(rows[r], k)]);
            let beta = &lhs * a.transpose() * yk;
            let pred = beta[0] + (0..d).map(|j| z[(held, j)] * beta[j + 1]).sum::<f64>();
            total += (y[(held, k)] - pred).powi(2);
        }
    }
    total / (n * y.ncols()) as f64
}

pub fn to_dmatrix(f: &FeatureMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(f.rows(), f.cols(), |i, j| f.get(i, j))
}

/// Random features with labels covering every class in `0..classes`.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, d: usize, classes: usize) -> (FeatureMatrix, Vec<usize>) {
    let data: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    for i in (1..n).rev() {
        labels.swap(i, rng.random_range(0..=i));
    }
    (FeatureMatrix::new(n, d, data).unwrap(), labels)
}

/// `n` samples, `informative` ±1 columns whose majority vote is the label,
/// and `noise` standard normal columns. Informative columns come first.
pub fn ground_truth_problem(seed: u64, n: usize, informative: usize, noise: usize) -> (FeatureMatrix, Vec<usize>) {
    assert!(informative % 2 == 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = informative + noise;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut votes = 0i32;
        for _ in 0..informative {
            let v = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            votes += v as i32;
            data.push(v);
        }
        for _ in 0..noise {
            data.push(rng.sample::<f64, _>(rand_distr::StandardNormal));
        }
        labels.push(usize::from(votes > 0));
    }
    (FeatureMatrix::new(n, d, data).unwrap(), labels)
}

/// Two-class toy set: noisy sines vs noisy square waves.
pub fn write_toy_dataset(root: &Path, name: &str, per_class: usize, length: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = root.join(name);
    std::fs::create_dir_all(&dir).unwrap();
    let mut make = |count: usize| -> Vec<TimeSeries> {
        (0..2 * count)
            .map(|i| {
                let label = i % 2;
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                let values = (0..length)
                    .map(|t| {
                        let s = (t as f64 * 0.3 + phase).sin();
                        let base = if label == 0 { s } else { s.signum() };
                        base + 0.3 * rng.random::<f64>()
                    })
                    .collect();
                TimeSeries::new(values, label)
            })
            .collect()
    };
    let train = make(per_class);
    let test = make(per_class);
    write_ucr_split(dir.join(format!("{name}_TRAIN.tsv")), &train, None).unwrap();
    write_ucr_split(dir.join(format!("{name}_TEST.tsv")), &test, None).unwrap();
}

/// Directory holding real archive datasets, if any.
pub fn data_root() -> PathBuf {
    std::env::var_os("SROCKET_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

pub fn has_dataset(name: &str) -> bool {
    data_root().join(name).is_dir()
}
