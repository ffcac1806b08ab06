//! Tabular datasets and the train/calibration/test protocol.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::seed::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    Regression,
    BinaryClassification,
}

/// Immutable `n x p` design matrix with a target column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Array2<f64>,
    target: Array1<f64>,
    feature_names: Vec<String>,
    task: Task,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        target: Array1<f64>,
        feature_names: Vec<String>,
        task: Task,
    ) -> Result<Self> {
        let (n, p) = features.dim();
        if n == 0 || p == 0 {
            return Err(Error::EmptyData(format!("dataset must have n >= 1 and p >= 1, got {n}x{p}")));
        }
        check_dim(n, target.len())?;
        check_dim(p, feature_names.len())?;
        if let Some(((i, j), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature[{i}][{j}] = {v}")));
        }
        if let Some((i, v)) = target.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("target[{i}] = {v}")));
        }
        if task == Task::BinaryClassification && target.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::invalid("binary classification targets must be 0 or 1"));
        }
        let features = features.as_standard_layout().into_owned();
        Ok(Self { features, target, feature_names, task })
    }

    /// Dataset with default names `x1..xp`.
    pub fn from_rows(features: Array2<f64>, target: Array1<f64>, task: Task) -> Result<Self> {
        let names = default_names(features.ncols());
        Self::new(features, target, names, task)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn target(&self) -> &Array1<f64> {
        &self.target
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.features.as_slice().expect("standard layout")[i * p..(i + 1) * p]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.target[i]
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows).as_standard_layout().into_owned(),
            target: self.target.select(Axis(0), rows),
            feature_names: self.feature_names.clone(),
            task: self.task,
        }
    }

    /// Copy with column `j` removed.
    pub fn drop_column(&self, j: usize) -> Result<Dataset> {
        if j >= self.p() {
            return Err(Error::invalid(format!("column {j} out of range for p = {}", self.p())));
        }
        if self.p() == 1 {
            return Err(Error::EmptyData("cannot drop the only feature".into()));
        }
        let keep: Vec<usize> = (0..self.p()).filter(|&c| c != j).collect();
        let mut names = self.feature_names.clone();
        names.remove(j);
        Ok(Dataset {
            features: self.features.select(Axis(1), &keep).as_standard_layout().into_owned(),
            target: self.target.clone(),
            feature_names: names,
            task: self.task,
        })
    }

    /// Population variance of the target.
    pub fn target_variance(&self) -> f64 {
        let n = self.n() as f64;
        let mean = self.target.sum() / n;
        self.target.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n
    }

    /// Three-way split: 75/25 outer split, then the 75% half split evenly into
    /// fitting and calibration rows.
    pub fn split(&self, seed: u64) -> Result<DataSplit> {
        if self.n() < 4 {
            return Err(Error::EmptyData(format!("need at least 4 rows to split, got {}", self.n())));
        }
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.shuffle(&mut rng_from(seed));
        let n_train = (self.n() * 3) / 4;
        let n_fit = n_train / 2;
        let fit_idx = idx[..n_fit].to_vec();
        let cal_idx = idx[n_fit..n_train].to_vec();
        let test_idx = idx[n_train..].to_vec();
        Ok(DataSplit {
            fit: self.subset(&fit_idx),
            calibration: self.subset(&cal_idx),
            test: self.subset(&test_idx),
            fit_idx,
            cal_idx,
            test_idx,
        })
    }
}

pub fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("x{i}")).collect()
}

#[derive(Debug, Clone)]
pub struct DataSplit {
    pub fit: Dataset,
    pub calibration: Dataset,
    pub test: Dataset,
    pub fit_idx: Vec<usize>,
    pub cal_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Anything that maps a feature vector to a real prediction.
pub trait Evaluator: Send + Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> f64;
}

impl<T: Evaluator + ?Sized> Evaluator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        (**self).evaluate(x)
    }
}

impl<T: Evaluator + ?Sized> Evaluator for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        (**self).evaluate(x)
    }
}

/// Closure-backed evaluator.
pub struct FnEvaluator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnEvaluator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Evaluator for FnEvaluator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}
