//! Random dilated convolution kernels and PPV feature extraction.
//!
//! Each kernel maps a series to one feature: the proportion of strictly
//! positive values (PPV) in its dilated convolution output. Indexing is
//! 0-based: `f[i] = bias + sum_j x[i + j * dilation] * w[j]`, over every
//! alignment where all taps land inside the (optionally zero-padded) input.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TimeSeries;
use crate::error::{Error, Result};

pub const KERNEL_LENGTHS: [usize; 3] = [7, 9, 11];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub dilation: usize,
    pub padding: bool,
}

impl Kernel {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Distance in samples between the first and last tap.
    pub fn span(&self) -> usize {
        (self.len() - 1) * self.dilation
    }

    /// Zeros added on each side of the input.
    pub fn pad(&self) -> usize {
        if self.padding {
            self.span() / 2
        } else {
            0
        }
    }

    pub fn output_len(&self, input_len: usize) -> Result<usize> {
        let padded = input_len + 2 * self.pad();
        if padded <= self.span() {
            return Err(Error::KernelTooLargeForInput {
                span: self.span() + 1,
                input_len,
            });
        }
        Ok(padded - self.span())
    }

    /// Sum of absolute weights.
    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBank {
    pub seed: u64,
    pub num_kernels: usize,
    pub input_length: usize,
    /// Whether each kernel's weights had their mean subtracted.
    #[serde(default = "default_centered")]
    pub centered: bool,
    pub kernels: Vec<Kernel>,
}

fn default_centered() -> bool {
    true
}

impl KernelBank {
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    /// Keeps only the kernels at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> KernelBank {
        let kernels: Vec<Kernel> = indices.iter().map(|&i| self.kernels[i].clone()).collect();
        KernelBank {
            seed: self.seed,
            num_kernels: kernels.len(),
            input_length: self.input_length,
            centered: self.centered,
            kernels,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bank: KernelBank = serde_json::from_str(&fs::read_to_string(path)?)?;
        if bank.num_kernels != bank.kernels.len() {
            return Err(Error::InvalidArgument(format!(
                "bank declares {} kernels but lists {}",
                bank.num_kernels,
                bank.kernels.len()
            )));
        }
        Ok(bank)
    }

    fn max_pad(&self) -> usize {
        self.kernels.iter().map(Kernel::pad).max().unwrap_or(0)
    }
}

/// Generates `num_kernels` random kernels for series of length
/// `input_length`, deterministically from `seed`, with mean-centered weights.
pub fn init_kernel_bank(num_kernels: usize, input_length: usize, seed: u64) -> Result<KernelBank> {
    init_kernel_bank_with(num_kernels, input_length, seed, true)
}

/// As [`init_kernel_bank`]. Weights are drawn from N(0, 1); with `center`
/// each kernel's weights then have their mean subtracted. Centering consumes
/// no randomness, so both variants share lengths, biases, dilations and
/// padding for a given seed.
///
/// Per kernel, draws are taken in a fixed order from one stream: length,
/// weights, bias, dilation exponent, padding flag.
pub fn init_kernel_bank_with(
    num_kernels: usize,
    input_length: usize,
    seed: u64,
    center: bool,
) -> Result<KernelBank> {
    if num_kernels == 0 {
        return Err(Error::InvalidArgument("number of kernels must be >= 1".into()));
    }
    let candidates: Vec<usize> = KERNEL_LENGTHS
        .iter()
        .copied()
        .filter(|&l| l <= input_length)
        .collect();
    if candidates.is_empty() {
        return Err(Error::InputTooShort(input_length));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernels = (0..num_kernels)
        .map(|_| {
            let len = candidates[rng.random_range(0..candidates.len())];
            let mut weights: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
            if center {
                let mean = weights.iter().sum::<f64>() / len as f64;
                weights.iter_mut().for_each(|w| *w -= mean);
            }
            let bias = rng.random::<f64>() * 2.0 - 1.0;
            let upper = ((input_length - 1) as f64 / (len - 1) as f64).log2().max(0.0);
            let exponent = rng.random::<f64>() * upper;
            let dilation = (exponent.exp2().floor() as usize).max(1);
            let padding = rng.random_bool(0.5);
            Kernel {
                weights,
                bias,
                dilation,
                padding,
            }
        })
        .collect();

    Ok(KernelBank {
        seed,
        num_kernels,
        input_length,
        centered: center,
        kernels,
    })
}

/// Dilated convolution of `x` with `kernel`, stride 1.
pub fn convolve(x: &[f64], kernel: &Kernel) -> Result<Vec<f64>> {
    let out_len = kernel.output_len(x.len())?;
    let pad = kernel.pad();
    let mut buf = vec![0.0; x.len() + 2 * pad];
    buf[pad..pad + x.len()].copy_from_slice(x);
    let mut out = vec![kernel.bias; out_len];
    accumulate_taps(&buf, kernel, &mut out);
    Ok(out)
}

/// Adds every tap's contribution to `out`, tap-major so the inner loop is a
/// contiguous axpy.
#[inline]
fn accumulate_taps(input: &[f64], kernel: &Kernel, out: &mut [f64]) {
    let n = out.len();
    for (j, &w) in kernel.weights.iter().enumerate() {
        let start = j * kernel.dilation;
        let src = &input[start..start + n];
        for (o, &x) in out.iter_mut().zip(src) {
            *o += w * x;
        }
    }
}

/// Proportion of strictly positive entries.
pub fn ppv(f: &[f64]) -> Result<f64> {
    if f.is_empty() {
        return Err(Error::EmptyFeature);
    }
    Ok(count_positive(f) as f64 / f.len() as f64)
}

#[inline]
fn count_positive(f: &[f64]) -> usize {
    f.iter().filter(|&&v| v > 0.0).count()
}

/// Row-major `rows x cols` matrix of PPV features. Row `n` belongs to the
/// `n`-th input series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: rows * cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::WidthMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.cols..(n + 1) * self.cols]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[n * self.cols..(n + 1) * self.cols]
    }

    pub fn get(&self, n: usize, d: usize) -> f64 {
        self.data[n * self.cols + d]
    }

    pub fn set(&mut self, n: usize, d: usize, v: f64) {
        self.data[n * self.cols + d] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// New matrix holding the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in self.iter_rows() {
            data.extend(cols.iter().map(|&c| r[c]));
        }
        FeatureMatrix {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 8);
        for r in self.iter_rows() {
            let line: Vec<String> = r.iter().map(f64::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// PPV features of every series under every kernel of `bank`.
///
/// Rows are computed in parallel; each cell is written once, so the result
/// does not depend on the thread count.
pub fn transform_dataset(series: &[TimeSeries], bank: &KernelBank) -> Result<FeatureMatrix> {
    let values: Vec<&[f64]> = series.iter().map(|s| s.values.as_slice()).collect();
    transform_values(&values, bank)
}

pub fn transform_values(series: &[&[f64]], bank: &KernelBank) -> Result<FeatureMatrix> {
    let cols = bank.len();
    let max_pad = bank.max_pad();
    let mut out = FeatureMatrix::zeros(series.len(), cols);
    if cols == 0 {
        return Ok(out);
    }

    out.data
        .par_chunks_mut(cols)
        .zip(series.par_iter())
        .enumerate()
        .try_for_each(|(sample, (row, x))| -> Result<()> {
            let mut buf = vec![0.0; x.len() + 2 * max_pad];
            buf[max_pad..max_pad + x.len()].copy_from_slice(x);
            let mut scratch = Vec::with_capacity(x.len() + 2 * max_pad);
            for (kernel_idx, (cell, kernel)) in row.iter_mut().zip(&bank.kernels).enumerate() {
                let out_len = kernel.output_len(x.len()).map_err(|e| Error::Transform {
                    sample,
                    kernel: kernel_idx,
                    source: Box::new(e),
                })?;
                let offset = max_pad - kernel.pad();
                let input = &buf[offset..offset + x.len() + 2 * kernel.pad()];
                scratch.clear();
                scratch.resize(out_len, kernel.bias);
                accumulate_taps(input, kernel, &mut scratch);
                *cell = count_positive(&scratch) as f64 / out_len as f64;
            }
            Ok(())
        })?;
    Ok(out)
}
