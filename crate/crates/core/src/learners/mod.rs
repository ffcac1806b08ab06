//! Built-in learners behind one fit/predict contract.

pub mod forest;
pub mod knn;
pub mod linear;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Evaluator, Task};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::seed::SeedTree;

pub use forest::RandomForest;
pub use knn::KNearest;
pub use linear::{weighted_ridge, LinearModel};
pub use tree::RegressionTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearnerSpec {
    RegressionTree {
        max_depth: Option<usize>,
        min_leaf: usize,
        seed: u64,
    },
    RandomForest {
        n_trees: usize,
        max_depth: Option<usize>,
        min_leaf: usize,
        /// Features tried per split; `ceil(p / 3)` when absent.
        feature_subsample: Option<usize>,
        seed: u64,
    },
    KNearest {
        k: usize,
    },
    LinearLeastSquares,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec::RandomForest { n_trees: 100, max_depth: None, min_leaf: 5, feature_subsample: None, seed: 0 }
    }
}

impl LearnerSpec {
    pub fn with_seed(self, new_seed: u64) -> Self {
        match self {
            LearnerSpec::RegressionTree { max_depth, min_leaf, .. } => {
                LearnerSpec::RegressionTree { max_depth, min_leaf, seed: new_seed }
            }
            LearnerSpec::RandomForest { n_trees, max_depth, min_leaf, feature_subsample, .. } => {
                LearnerSpec::RandomForest { n_trees, max_depth, min_leaf, feature_subsample, seed: new_seed }
            }
            other => other,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::RegressionTree { .. } => "regression-tree",
            LearnerSpec::RandomForest { .. } => "random-forest",
            LearnerSpec::KNearest { .. } => "k-nearest",
            LearnerSpec::LinearLeastSquares => "linear-least-squares",
        }
    }

    fn validate(&self, data: &Dataset) -> Result<()> {
        let n = data.n();
        let need = |what: String, min: usize| -> Result<()> {
            if n < min {
                return Err(Error::invalid(format!("{} needs n >= {min} ({what}), got {n}", self.name())));
            }
            Ok(())
        };
        match *self {
            LearnerSpec::RegressionTree { max_depth, min_leaf, .. } => {
                if min_leaf == 0 || max_depth == Some(0) {
                    return Err(Error::invalid("tree hyperparameters must be positive"));
                }
                need(format!("2 * min_leaf = {}", 2 * min_leaf), 2 * min_leaf)
            }
            LearnerSpec::RandomForest { n_trees, max_depth, min_leaf, feature_subsample, .. } => {
                if n_trees == 0 || min_leaf == 0 || max_depth == Some(0) || feature_subsample == Some(0) {
                    return Err(Error::invalid("forest hyperparameters must be positive"));
                }
                need(format!("2 * min_leaf = {}", 2 * min_leaf), 2 * min_leaf)
            }
            LearnerSpec::KNearest { k } => {
                if k == 0 {
                    return Err(Error::invalid("k must be positive"));
                }
                need(format!("k = {k}"), k)
            }
            LearnerSpec::LinearLeastSquares => need(format!("p + 1 = {}", data.p() + 1), data.p() + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "kebab-case")]
pub enum Model {
    RegressionTree(RegressionTree),
    RandomForest(RandomForest),
    KNearest(KNearest),
    LinearLeastSquares(LinearModel),
}

/// A fitted learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub p: usize,
    pub task: Task,
    pub spec: LearnerSpec,
    pub model: Model,
}

pub fn fit(spec: &LearnerSpec, data: &Dataset) -> Result<Predictor> {
    spec.validate(data)?;
    let p = data.p();
    let model = match *spec {
        LearnerSpec::RegressionTree { max_depth, min_leaf, seed } => {
            let ps = tree::Presorted::new(data);
            let params = tree::GrowParams { min_leaf, max_depth, mtry: None };
            let mut rng = SeedTree::new(seed).rng("tree", 0);
            Model::RegressionTree(tree::grow(&ps, &vec![1; data.n()], params, &mut rng))
        }
        LearnerSpec::RandomForest { n_trees, max_depth, min_leaf, feature_subsample, seed } => {
            let mtry = feature_subsample.unwrap_or(p.div_ceil(3)).min(p);
            let params = tree::GrowParams { min_leaf, max_depth, mtry: Some(mtry) };
            Model::RandomForest(RandomForest::fit(data, n_trees, params, seed))
        }
        LearnerSpec::KNearest { k } => Model::KNearest(KNearest::fit(data, k)),
        LearnerSpec::LinearLeastSquares => Model::LinearLeastSquares(LinearModel::fit(data)?),
    };
    Ok(Predictor { p, task: data.task(), spec: *spec, model })
}

impl Predictor {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.p, x.len())?;
        check_finite(x, "x")?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        match &self.model {
            Model::RegressionTree(t) => t.predict_row(x),
            Model::RandomForest(f) => f.predict_row(x),
            Model::KNearest(k) => k.predict_row(x),
            Model::LinearLeastSquares(l) => l.predict_row(x),
        }
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        check_dim(self.p, data.p())?;
        Ok((0..data.n()).map(|i| self.predict_unchecked(data.row(i))).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl Evaluator for Predictor {
    fn dim(&self) -> usize {
        self.p
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        self.predict_unchecked(x)
    }
}

/// Mean squared error of `pred` on `data`.
pub fn mse(pred: &Predictor, data: &Dataset) -> Result<f64> {
    let yhat = pred.predict_dataset(data)?;
    Ok(yhat.iter().zip(data.target()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / data.n() as f64)
}

/// `1 - MSE / Var(y)` on `data`.
pub fn r_squared(pred: &Predictor, data: &Dataset) -> Result<f64> {
    Ok(1.0 - mse(pred, data)? / data.target_variance())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl::{generate, ModelId, SyntheticSpec};
    use ndarray::{Array1, Array2};

    fn specs() -> Vec<LearnerSpec> {
        vec![
            LearnerSpec::RegressionTree { max_depth: None, min_leaf: 2, seed: 1 },
            LearnerSpec::RandomForest { n_trees: 5, max_depth: None, min_leaf: 2, feature_subsample: None, seed: 1 },
            LearnerSpec::KNearest { k: 3 },
            LearnerSpec::LinearLeastSquares,
        ]
    }

    #[test]
    fn constant_target_is_reproduced() {
        let x = crate::pwl::sample_uniform(30, 3, 4);
        let d = Dataset::from_rows(x, Array1::from_elem(30, 4.25), Task::Regression).unwrap();
        for s in specs() {
            let f = fit(&s, &d).unwrap();
            for q in [[0.0, 0.0, 0.0], [0.9, -0.9, 0.3]] {
                assert!((f.predict(&q).unwrap() - 4.25).abs() < 1e-9, "{}", s.name());
            }
        }
    }

    #[test]
    fn linear_recovers_exact_coefficients() {
        let x = crate::pwl::sample_uniform(50, 2, 8);
        let y = Array1::from_iter((0..50).map(|i| 3.0 * x[[i, 0]] - x[[i, 1]]));
        let d = Dataset::from_rows(x, y, Task::Regression).unwrap();
        let f = fit(&LearnerSpec::LinearLeastSquares, &d).unwrap();
        let Model::LinearLeastSquares(l) = &f.model else { unreachable!() };
        assert!((l.coefficients[0] - 3.0).abs() < 1e-8);
        assert!((l.coefficients[1] + 1.0).abs() < 1e-8);
        assert!(l.intercept.abs() < 1e-8);
    }

    #[test]
    fn linear_handles_duplicate_column() {
        let base = crate::pwl::sample_uniform(40, 1, 3);
        let x = Array2::from_shape_fn((40, 2), |(i, _)| base[[i, 0]]);
        let y = Array1::from_iter((0..40).map(|i| 2.0 * base[[i, 0]]));
        let d = Dataset::from_rows(x, y, Task::Regression).unwrap();
        let f = fit(&LearnerSpec::LinearLeastSquares, &d).unwrap();
        let Model::LinearLeastSquares(l) = &f.model else { unreachable!() };
        assert!(l.regularized);
        assert!((f.predict(&[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn knn_with_k_equal_n_is_global_mean() {
        let (d, _, _) = generate(&SyntheticSpec::new(ModelId::FirstOrder, 25, 1)).unwrap();
        let f = fit(&LearnerSpec::KNearest { k: 25 }, &d).unwrap();
        let mean = d.target().sum() / 25.0;
        assert!((f.predict(&[0.0; 6]).unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn forest_is_mean_of_trees_and_deterministic() {
        let (d, _, _) = generate(&SyntheticSpec::new(ModelId::FirstOrder, 200, 2)).unwrap();
        let s = specs()[1];
        let f = fit(&s, &d).unwrap();
        let g = fit(&s, &d).unwrap();
        assert_eq!(f, g);
        let Model::RandomForest(rf) = &f.model else { unreachable!() };
        let q = [0.1, 0.2, -0.3, 0.4, 0.0, -0.5];
        let manual = rf.trees.iter().map(|t| t.predict_row(&q)).sum::<f64>() / rf.trees.len() as f64;
        assert_eq!(f.predict(&q).unwrap(), manual);
    }

    #[test]
    fn json_round_trip_and_errors() {
        let (d, _, _) = generate(&SyntheticSpec::new(ModelId::FirstOrder, 60, 2)).unwrap();
        for s in specs() {
            let f = fit(&s, &d).unwrap();
            assert_eq!(Predictor::from_json(&f.to_json().unwrap()).unwrap(), f);
            assert!(f.predict(&[0.0; 5]).is_err());
        }
        assert!(fit(&LearnerSpec::KNearest { k: 100 }, &d).is_err());
    }
}
