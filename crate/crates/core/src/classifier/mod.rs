//! Ridge-regression classifier over PPV features.
//!
//! Features are standardized per column, targets are one-vs-rest ±1, and the
//! regularization strength is picked from a grid by closed-form leave-one-out
//! error. The linear system is solved through an eigendecomposition of
//! whichever Gram matrix is smaller (`Z Zᵀ` when N < D, `Zᵀ Z` otherwise), so
//! one decomposition serves every grid point.

pub mod metrics;

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::StateVector;
use crate::transform::FeatureMatrix;

pub use metrics::{accuracy, mcc, ConfusionMatrix, Metrics};

pub const STD_FLOOR: f64 = 1e-8;

/// `count` values spaced evenly in log10 between `10^lo` and `10^hi`.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..count)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// Default regularization grid, ten points over `[1e-3, 1e3]`.
pub fn default_alpha_grid() -> Vec<f64> {
    log_space(-3.0, 3.0, 10)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub num_features: usize,
    pub num_classes: usize,
    /// Row-major `num_features x num_classes`.
    pub weights: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub alpha: f64,
    pub scaler_mean: Vec<f64>,
    pub scaler_std: Vec<f64>,
    /// Mean squared leave-one-out residual for each grid point tried.
    #[serde(default)]
    pub loo_errors: Vec<(f64, f64)>,
}

impl RidgeModel {
    pub fn weight(&self, d: usize, c: usize) -> f64 {
        self.weights[d * self.num_classes + c]
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    fn check_width(&self, features: &FeatureMatrix) -> Result<()> {
        if features.cols() != self.num_features {
            return Err(Error::WidthMismatch {
                expected: self.num_features,
                got: features.cols(),
            });
        }
        Ok(())
    }

    /// Class scores of one raw feature row; `mask` zeroes standardized inputs.
    pub fn scores_into(&self, row: &[f64], mask: Option<&[bool]>, scores: &mut [f64]) {
        scores.copy_from_slice(&self.intercepts);
        let c = self.num_classes;
        for (d, &x) in row.iter().enumerate() {
            if let Some(m) = mask {
                if !m[d] {
                    continue;
                }
            }
            let z = (x - self.scaler_mean[d]) / self.scaler_std[d];
            let w = &self.weights[d * c..(d + 1) * c];
            for (s, &wk) in scores.iter_mut().zip(w) {
                *s += z * wk;
            }
        }
    }

    pub fn decision_function(&self, features: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        self.check_width(features)?;
        Ok(features
            .iter_rows()
            .map(|r| {
                let mut s = vec![0.0; self.num_classes];
                self.scores_into(r, None, &mut s);
                s
            })
            .collect())
    }

    pub fn predict(&self, features: &FeatureMatrix) -> Result<Vec<usize>> {
        self.check_width(features)?;
        Ok(self.predict_rows(features, None))
    }

    /// Predicts with inactive kernels (`state[d] == 0`) contributing nothing
    /// to any class score. The mask acts on standardized features, which is
    /// what removing the kernel and its weight row does.
    pub fn predict_masked(&self, features: &FeatureMatrix, state: &StateVector) -> Result<Vec<usize>> {
        self.check_width(features)?;
        if state.len() != self.num_features {
            return Err(Error::WidthMismatch {
                expected: self.num_features,
                got: state.len(),
            });
        }
        Ok(self.predict_rows(features, Some(state.bits())))
    }

    fn predict_rows(&self, features: &FeatureMatrix, mask: Option<&[bool]>) -> Vec<usize> {
        let mut scores = vec![0.0; self.num_classes];
        features
            .iter_rows()
            .map(|r| {
                self.scores_into(r, mask, &mut scores);
                argmax(&scores)
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

struct Standardized {
    z: DMatrix<f64>,
    mean: Vec<f64>,
    std: Vec<f64>,
}

fn standardize(features: &FeatureMatrix) -> Standardized {
    let (n, d) = (features.rows(), features.cols());
    let mut mean = vec![0.0; d];
    for r in features.iter_rows() {
        for (m, &x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for r in features.iter_rows() {
        for ((v, &x), &m) in var.iter_mut().zip(r).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|v| (v / n as f64).sqrt().max(STD_FLOOR))
        .collect();
    let z = DMatrix::from_fn(n, d, |i, j| (features.get(i, j) - mean[j]) / std[j]);
    Standardized { z, mean, std }
}

/// Fits a ridge classifier, choosing alpha from `alpha_grid` by
/// leave-one-out squared error on the ±1 targets (ties go to the earlier
/// grid entry). Classes are `0..=max(labels)`.
pub fn fit(features: &FeatureMatrix, labels: &[usize], alpha_grid: &[f64]) -> Result<RidgeModel> {
    let n = features.rows();
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: n,
        });
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 training samples".into()));
    }
    if alpha_grid.is_empty() || alpha_grid.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidArgument(
            "alpha grid must be non-empty and strictly positive".into(),
        ));
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let distinct = {
        let mut l = labels.to_vec();
        l.sort_unstable();
        l.dedup();
        l.len()
    };
    if distinct < 2 {
        return Err(Error::DegenerateLabels);
    }

    let Standardized { z, mean, std } = standardize(features);
    let d = features.cols();

    let y = DMatrix::from_fn(n, num_classes, |i, c| if labels[i] == c { 1.0 } else { -1.0 });
    let y_mean: Vec<f64> = (0..num_classes).map(|c| y.column(c).mean()).collect();
    let yc = DMatrix::from_fn(n, num_classes, |i, c| y[(i, c)] - y_mean[c]);

    // No kernels left: the model reduces to its intercepts.
    if d == 0 {
        return Ok(RidgeModel {
            num_features: 0,
            num_classes,
            weights: Vec::new(),
            intercepts: y_mean,
            alpha: alpha_grid[0],
            scaler_mean: mean,
            scaler_std: std,
            loo_errors: Vec::new(),
        });
    }

    let solver = GramSolver::new(&z);
    let mut loo_errors = Vec::with_capacity(alpha_grid.len());
    let mut best = (f64::INFINITY, alpha_grid[0]);
    for &alpha in alpha_grid {
        let err = solver.loo_error(&yc, alpha);
        loo_errors.push((alpha, err));
        if err < best.0 {
            best = (err, alpha);
        }
    }
    let alpha = best.1;
    let w = solver.weights(&z, &yc, alpha)?;

    let mut weights = Vec::with_capacity(d * num_classes);
    for j in 0..d {
        for c in 0..num_classes {
            weights.push(w[(j, c)]);
        }
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::SingularSystem);
    }

    Ok(RidgeModel {
        num_features: d,
        num_classes,
        weights,
        intercepts: y_mean,
        alpha,
        scaler_mean: mean,
        scaler_std: std,
        loo_errors,
    })
}

/// Eigendecomposition of the smaller Gram matrix of the centered design.
enum GramSolver {
    /// N < D: `Z Zᵀ = Q Λ Qᵀ`.
    Dual { q: DMatrix<f64>, lambda: DVector<f64> },
    /// N >= D: `Zᵀ Z = V Λ Vᵀ`, with `U = Z V` cached.
    Primal {
        v: DMatrix<f64>,
        u: DMatrix<f64>,
        lambda: DVector<f64>,
    },
}

impl GramSolver {
    fn new(z: &DMatrix<f64>) -> Self {
        let (n, d) = z.shape();
        if n < d {
            let gram = z * z.transpose();
            let eig = gram.symmetric_eigen();
            GramSolver::Dual {
                q: eig.eigenvectors,
                lambda: eig.eigenvalues.map(|l| l.max(0.0)),
            }
        } else {
            let gram = z.transpose() * z;
            let eig = gram.symmetric_eigen();
            let u = z * &eig.eigenvectors;
            GramSolver::Primal {
                v: eig.eigenvectors,
                u,
                lambda: eig.eigenvalues.map(|l| l.max(0.0)),
            }
        }
    }

    /// Mean squared leave-one-out residual over all targets. The intercept
    /// is refit in each fold, which adds `1/N` to every leverage.
    fn loo_error(&self, yc: &DMatrix<f64>, alpha: f64) -> f64 {
        let n = yc.nrows();
        let (fitted, leverage) = match self {
            GramSolver::Dual { q, lambda } => {
                let shrink = lambda.map(|l| l / (l + alpha));
                let proj = q.transpose() * yc;
                let fitted = q * DMatrix::from_fn(proj.nrows(), proj.ncols(), |k, c| {
                    shrink[k] * proj[(k, c)]
                });
                let lev: Vec<f64> = (0..n)
                    .map(|i| (0..q.ncols()).map(|k| q[(i, k)] * q[(i, k)] * shrink[k]).sum())
                    .collect();
                (fitted, lev)
            }
            GramSolver::Primal { u, lambda, .. } => {
                let inv = lambda.map(|l| 1.0 / (l + alpha));
                let proj = u.transpose() * yc;
                let fitted = u * DMatrix::from_fn(proj.nrows(), proj.ncols(), |k, c| {
                    inv[k] * proj[(k, c)]
                });
                let lev: Vec<f64> = (0..n)
                    .map(|i| (0..u.ncols()).map(|k| u[(i, k)] * u[(i, k)] * inv[k]).sum())
                    .collect();
                (fitted, lev)
            }
        };
        let mut total = 0.0;
        for i in 0..n {
            let denom = 1.0 - leverage[i] - 1.0 / n as f64;
            for c in 0..yc.ncols() {
                let r = (yc[(i, c)] - fitted[(i, c)]) / denom;
                total += r * r;
            }
        }
        total / (n * yc.ncols()) as f64
    }

    /// Ridge weights `(ZᵀZ + αI)⁻¹ Zᵀ Yc`, `D x C`.
    fn weights(&self, z: &DMatrix<f64>, yc: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
        let scaled = |m: &DMatrix<f64>, lambda: &DVector<f64>| {
            DMatrix::from_fn(m.nrows(), m.ncols(), |k, c| m[(k, c)] / (lambda[k] + alpha))
        };
        let w = match self {
            GramSolver::Dual { q, lambda } => {
                let proj = q.transpose() * yc;
                z.transpose() * (q * scaled(&proj, lambda))
            }
            GramSolver::Primal { v, lambda, .. } => {
                let proj = v.transpose() * (z.transpose() * yc);
                v * scaled(&proj, lambda)
            }
        };
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_grid_values() {
        let g = default_alpha_grid();
        assert_eq!(g.len(), 10);
        assert!((g[0] - 1e-3).abs() < 1e-15);
        assert!((g[1] - 10f64.powf(-3.0 + 6.0 / 9.0)).abs() < 1e-15);
        assert!((g[1] - 0.004641588833612777).abs() < 1e-12);
        assert!((g[9] - 1e3).abs() < 1e-9);
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }

    fn separable(n: usize, d: usize, seed: u64) -> (FeatureMatrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = i % 2;
            let mut r: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            r[0] = if label == 1 { 0.8 + 0.2 * r[0] } else { 0.2 * r[0] };
            rows.push(r);
            labels.push(label);
        }
        (FeatureMatrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separable_training_accuracy() {
        let (x, y) = separable(10, 4, 5);
        let m = fit(&x, &y, &default_alpha_grid()).unwrap();
        assert_eq!(accuracy(&m.predict(&x).unwrap(), &y).unwrap(), 1.0);
    }

    #[test]
    fn fit_errors() {
        let (x, y) = separable(10, 4, 5);
        assert!(matches!(fit(&x, &[0; 10], &[1.0]), Err(Error::DegenerateLabels)));
        assert!(fit(&x, &y, &[]).is_err());
        assert!(fit(&x, &y, &[0.0]).is_err());
        let m = fit(&x, &y, &[1.0]).unwrap();
        let narrow = FeatureMatrix::zeros(2, 3);
        assert!(matches!(m.predict(&narrow), Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn constant_columns_are_floored() {
        let (x, y) = separable(12, 3, 2);
        let mut rows: Vec<Vec<f64>> = x.iter_rows().map(|r| r.to_vec()).collect();
        rows.iter_mut().for_each(|r| r.push(1.0));
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let m = fit(&x, &y, &[1.0]).unwrap();
        assert_eq!(m.scaler_std[3], STD_FLOOR);
        assert!(m.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn masked_extremes() {
        let (x, y) = separable(20, 6, 9);
        let m = fit(&x, &y, &default_alpha_grid()).unwrap();
        let ones = StateVector::ones(6);
        assert_eq!(m.predict_masked(&x, &ones).unwrap(), m.predict(&x).unwrap());
        let zeros = StateVector::zeros(6);
        let expect = argmax(&m.intercepts);
        assert!(m.predict_masked(&x, &zeros).unwrap().iter().all(|&p| p == expect));
        assert!(m.predict_masked(&x, &StateVector::ones(5)).is_err());
    }
}
