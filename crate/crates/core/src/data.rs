//! UCR-style dataset loading and per-series normalization.
//!
//! A split file holds one series per line: the class label first, then the
//! observations. Fields are separated by tabs or commas (detected from the
//! first data line). Labels may be any whole number; they are remapped to a
//! dense `0..C` range in ascending order of the original value.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Std below which a series is treated as constant by [`znormalize`].
pub const CONSTANT_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub label: usize,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, label: usize) -> Self {
        Self { values, label }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub train: Vec<TimeSeries>,
    pub test: Vec<TimeSeries>,
    pub num_classes: usize,
    /// Original label value for each dense class id.
    pub label_values: Vec<f64>,
    /// Non-fatal findings, e.g. a class that only occurs in the test split.
    pub warnings: Vec<String>,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
}

impl Dataset {
    pub fn series_length(&self) -> usize {
        self.train[0].len()
    }

    pub fn train_labels(&self) -> Vec<usize> {
        self.train.iter().map(|s| s.label).collect()
    }

    pub fn test_labels(&self) -> Vec<usize> {
        self.test.iter().map(|s| s.label).collect()
    }

    /// Z-normalizes every series of both splits.
    pub fn znormalized(mut self) -> Self {
        for s in self.train.iter_mut().chain(self.test.iter_mut()) {
            znormalize_in_place(&mut s.values);
        }
        self
    }
}

/// A split as parsed from disk, labels still in their original encoding.
#[derive(Debug, Clone)]
struct RawSplit {
    labels: Vec<f64>,
    values: Vec<Vec<f64>>,
}

fn parse_split(path: &Path) -> Result<RawSplit> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;

    let mut sep: Option<char> = None;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let sep = *sep.get_or_insert_with(|| if line.contains('\t') { '\t' } else { ',' });
        let malformed = |reason: String| Error::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };

        let mut fields = line.split(sep).map(str::trim);
        let label_tok = fields.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| malformed(format!("label `{label_tok}` is not numeric")))?;
        if !label.is_finite() || label.fract() != 0.0 {
            return Err(malformed(format!("label `{label_tok}` is not a whole number")));
        }

        let mut row = Vec::with_capacity(width.unwrap_or(0));
        for tok in fields {
            let v: f64 = tok
                .parse()
                .map_err(|_| malformed(format!("value `{tok}` is not numeric")))?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    path: path.to_path_buf(),
                    line: line_no,
                });
            }
            row.push(v);
        }
        if row.len() < 2 {
            return Err(malformed(format!(
                "expected at least 2 values, found {}",
                row.len()
            )));
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(malformed(format!("expected {w} values, found {}", row.len())));
            }
            Some(_) => {}
        }
        labels.push(label);
        values.push(row);
    }

    if values.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(RawSplit { labels, values })
}

/// Sorted distinct label values.
fn label_index(labels: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = labels.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn remap(raw: RawSplit, index: &[f64]) -> Vec<TimeSeries> {
    raw.values
        .into_iter()
        .zip(raw.labels)
        .map(|(values, l)| {
            let label = index
                .binary_search_by(|probe| probe.total_cmp(&l))
                .expect("label present in index");
            TimeSeries { values, label }
        })
        .collect()
}

/// Loads a single split, remapping its labels by ascending original value.
pub fn load_ucr_split(path: impl AsRef<Path>) -> Result<Vec<TimeSeries>> {
    let raw = parse_split(path.as_ref())?;
    let index = label_index(raw.labels.iter().copied());
    Ok(remap(raw, &index))
}

fn split_path(dir: &Path, name: &str, split: &str) -> Result<PathBuf> {
    let base = dir.join(name);
    for ext in ["tsv", "txt"] {
        let p = base.join(format!("{name}_{split}.{ext}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::MissingFile(base.join(format!("{name}_{split}.tsv"))))
}

/// Loads `<dir>/<name>/<name>_TRAIN.tsv` and `_TEST.tsv` (or `.txt`) with a
/// label mapping shared by both splits.
pub fn load_dataset(dir: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    let dir = dir.as_ref();
    let train_path = split_path(dir, name, "TRAIN")?;
    let test_path = split_path(dir, name, "TEST")?;
    let train_raw = parse_split(&train_path)?;
    let test_raw = parse_split(&test_path)?;

    let train_len = train_raw.values[0].len();
    let test_len = test_raw.values[0].len();
    if train_len != test_len {
        return Err(Error::InvalidDataset(format!(
            "{name}: train series length {train_len} differs from test length {test_len}"
        )));
    }

    let train_classes = label_index(train_raw.labels.iter().copied());
    let index = label_index(
        train_raw
            .labels
            .iter()
            .chain(test_raw.labels.iter())
            .copied(),
    );
    let mut warnings = Vec::new();
    for l in &index {
        if train_classes.binary_search_by(|p| p.total_cmp(l)).is_err() {
            warnings.push(format!("label {l} appears only in the test split"));
        }
    }
    if index.len() < 2 {
        return Err(Error::InvalidDataset(format!(
            "{name}: need at least 2 classes, found {}",
            index.len()
        )));
    }

    Ok(Dataset {
        name: name.to_string(),
        train: remap(train_raw, &index),
        test: remap(test_raw, &index),
        num_classes: index.len(),
        label_values: index,
        warnings,
        train_path,
        test_path,
    })
}

/// Writes a split in tab-separated UCR layout. `label_values` maps dense ids
/// back to original labels; pass `None` to write the dense ids.
pub fn write_ucr_split(
    path: impl AsRef<Path>,
    series: &[TimeSeries],
    label_values: Option<&[f64]>,
) -> Result<()> {
    let mut out = String::new();
    for s in series {
        let label = label_values.map_or(s.label as f64, |lv| lv[s.label]);
        let _ = write!(out, "{label}");
        for v in &s.values {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Returns the series shifted to zero mean and scaled to unit population
/// std. Near-constant series (std < 1e-12) map to all zeros.
pub fn znormalize(series: &TimeSeries) -> TimeSeries {
    let mut values = series.values.clone();
    znormalize_in_place(&mut values);
    TimeSeries {
        values,
        label: series.label,
    }
}

pub fn znormalize_in_place(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < CONSTANT_STD {
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        values.iter_mut().for_each(|v| *v = (*v - mean) / std);
    }
}
