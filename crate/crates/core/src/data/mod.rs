//! Datasets: CSV ingestion, standardization and synthetic 2D generators.

mod csv_io;
mod synth;

pub use csv_io::{load_csv, parse_csv, save_csv, write_csv, LabelColumn};
pub use synth::{synth, synth_with, SynthName, SynthParams};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ad::Tensor;
use crate::error::{dim_err, Error, Result};

/// Feature matrix with optional binary labels (1 = anomaly).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub labels: Option<Vec<u8>>,
    pub name: String,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Option<Vec<u8>>, name: impl Into<String>) -> Result<Self> {
        if !features.is_matrix() {
            return Err(dim_err(format!("features must be a matrix, got shape {:?}", features.shape())));
        }
        if let Some(i) = features.data().iter().position(|v| !v.is_finite()) {
            let (r, c) = (i / features.cols(), i % features.cols());
            return Err(Error::Data(format!("non-finite feature at row {r}, column {c}")));
        }
        if let Some(labels) = &labels {
            if labels.len() != features.rows() {
                return Err(Error::Data(format!(
                    "{} labels for {} rows",
                    labels.len(),
                    features.rows()
                )));
            }
            if let Some(bad) = labels.iter().find(|&&l| l > 1) {
                return Err(Error::Data(format!("label {bad} is not 0 or 1")));
            }
        }
        Ok(Self {
            features,
            labels,
            name: name.into(),
            seed: None,
        })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n_anomalies(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().filter(|&&v| v == 1).count())
    }

    /// Rows whose label equals `label`; `None` without labels.
    /// Random `train_fraction` of the label-0 rows for training; the other
    /// label-0 rows plus every label-1 row for testing.
    pub fn split_nominal(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::Data(format!("dataset '{}' has no labels to split on", self.name)))?;
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!("train fraction must lie in (0, 1), got {train_fraction}")));
        }
        let mut nominal: Vec<usize> = (0..self.n()).filter(|&i| labels[i] == 0).collect();
        nominal.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (train_fraction * nominal.len() as f64).round() as usize;
        let mut train = nominal[..n_train].to_vec();
        train.sort_unstable();
        let mut test: Vec<usize> = nominal[n_train..].to_vec();
        test.extend((0..self.n()).filter(|&i| labels[i] == 1));
        test.sort_unstable();
        let part = |idx: &[usize], tag: &str| -> Result<Dataset> {
            let mut d = Dataset::new(
                self.features.select_rows(idx)?,
                Some(idx.iter().map(|&i| labels[i]).collect()),
                format!("{}-{tag}", self.name),
            )?;
            d.seed = Some(seed);
            Ok(d)
        };
        Ok((part(&train, "train")?, part(&test, "test")?))
    }

    pub fn rows_with_label(&self, label: u8) -> Option<Result<Tensor>> {
        let labels = self.labels.as_ref()?;
        let idx: Vec<usize> = (0..self.n()).filter(|&i| labels[i] == label).collect();
        Some(self.features.select_rows(&idx))
    }
}

/// Per-column affine map to zero mean and unit variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns whose spread was zero and whose std was clamped to 1.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clamped: Vec<usize>,
}

const MIN_STD: f64 = 1e-12;

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            clamped: Vec::new(),
        }
    }

    /// Column means and population standard deviations of `x`.
    pub fn fit(x: &Tensor) -> Result<Self> {
        if !x.is_matrix() || x.rows() < 2 {
            return Err(Error::Data(format!(
                "standardizer needs a matrix with at least 2 rows, got shape {:?}",
                x.shape()
            )));
        }
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        for row in x.data().chunks(d) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in x.data().chunks(d) {
            for j in 0..d {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        let mut clamped = Vec::new();
        let std = var
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let s = (v / n as f64).sqrt();
                if s < MIN_STD {
                    clamped.push(j);
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, std, clamped })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if !x.is_matrix() || x.cols() != self.dim() {
            return Err(dim_err(format!(
                "standardizer of dimension {} cannot take shape {:?}",
                self.dim(),
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(self.dim()) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        Ok(out)
    }

    pub fn invert(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(self.dim()) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[j] + self.mean[j];
            }
        }
        Ok(out)
    }
}
