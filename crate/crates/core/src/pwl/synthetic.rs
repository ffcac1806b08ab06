//! The synthetic benchmark models with known local structure.
//!
//! Each model is a sum of terms `c * prod(factors) * 1{switch}` in independent
//! `U[-1, 1]` features. That form gives closed-form conditional means after
//! integrating out any single feature, which the oracles rely on.

use ndarray::{Array1, Array2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

use super::model::{Interval, PiecewiseLinearModel};
use crate::data::{Dataset, Evaluator, Task};
use crate::error::{check_dim, Error, Result};
use crate::seed::SeedTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    FirstOrder,
    SecondOrder,
    #[serde(rename = "second-order-interaction", alias = "interaction")]
    Interaction,
    /// `f = X2 * sgn(X1)`, the case where squared-loss importances cannot tell the regimes apart.
    SignCounterexample,
}

impl ModelId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::FirstOrder => "first-order",
            ModelId::SecondOrder => "second-order",
            ModelId::Interaction => "second-order-interaction",
            ModelId::SignCounterexample => "sign-counterexample",
        }
    }

    pub fn all_benchmark() -> [ModelId; 3] {
        [ModelId::FirstOrder, ModelId::SecondOrder, ModelId::Interaction]
    }
}

impl FromStr for ModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-order" => Ok(ModelId::FirstOrder),
            "second-order" => Ok(ModelId::SecondOrder),
            "second-order-interaction" | "interaction" => Ok(ModelId::Interaction),
            "sign-counterexample" => Ok(ModelId::SignCounterexample),
            _ => Err(Error::Config(format!("unknown model '{s}'"))),
        }
    }
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Factor {
    Linear(usize),
    Square(usize),
    SqrtAbs(usize),
    Sign(usize),
}

impl Factor {
    fn feature(&self) -> usize {
        match *self {
            Factor::Linear(j) | Factor::Square(j) | Factor::SqrtAbs(j) | Factor::Sign(j) => j,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Factor::Linear(j) => x[j],
            Factor::Square(j) => x[j] * x[j],
            Factor::SqrtAbs(j) => x[j].abs().sqrt(),
            Factor::Sign(j) => {
                if x[j] > 0.0 {
                    1.0
                } else if x[j] < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Mean under `U[-1, 1]`.
    fn mean(&self) -> f64 {
        match self {
            Factor::Linear(_) | Factor::Sign(_) => 0.0,
            Factor::Square(_) => 1.0 / 3.0,
            Factor::SqrtAbs(_) => 2.0 / 3.0,
        }
    }
}

/// `1{x_j <= 0}` when `upper` is false, `1{x_j > 0}` when true.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Switch {
    feature: usize,
    upper: bool,
}

impl Switch {
    fn on(&self, x: &[f64]) -> bool {
        (x[self.feature] > 0.0) == self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Term {
    coef: f64,
    factors: Vec<Factor>,
    switch: Option<Switch>,
}

impl Term {
    fn active(&self, x: &[f64]) -> bool {
        self.switch.is_none_or(|s| s.on(x))
    }

    fn product(&self, x: &[f64]) -> f64 {
        self.coef * self.factors.iter().map(|f| f.value(x)).product::<f64>()
    }

    fn value(&self, x: &[f64]) -> f64 {
        if self.active(x) {
            self.product(x)
        } else {
            0.0
        }
    }

    /// `E[term | X_{-j} = x_{-j}]`.
    fn drop_mean(&self, x: &[f64], j: usize) -> f64 {
        if self.switch.is_some_and(|s| s.feature == j) {
            return 0.5 * self.product(x);
        }
        if !self.active(x) {
            return 0.0;
        }
        self.coef
            * self
                .factors
                .iter()
                .map(|f| if f.feature() == j { f.mean() } else { f.value(x) })
                .product::<f64>()
    }

    /// `E[term | X_S = x_S]` for the subset `known`.
    fn expected_given(&self, x: &[f64], known: impl Fn(usize) -> bool) -> f64 {
        let gate = match self.switch {
            Some(s) if known(s.feature) => f64::from(u8::from(s.on(x))),
            Some(_) => 0.5,
            None => 1.0,
        };
        if gate == 0.0 {
            return 0.0;
        }
        gate * self.coef
            * self.factors.iter().map(|f| if known(f.feature()) { f.value(x) } else { f.mean() }).product::<f64>()
    }

    /// Local importance of feature `j` within this term: the term magnitude for a
    /// single-factor term, otherwise `|c * prod(other factors)|`.
    fn importance(&self, x: &[f64], j: usize) -> f64 {
        if !self.active(x) || !self.factors.iter().any(|f| f.feature() == j) {
            return 0.0;
        }
        if self.factors.len() == 1 {
            return self.product(x).abs();
        }
        let others: f64 = self.factors.iter().filter(|f| f.feature() != j).map(|f| f.value(x)).product();
        (self.coef * others).abs()
    }
}

/// A synthetic model with exact conditional means and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticModel {
    id: ModelId,
    p: usize,
    terms: Vec<Term>,
    excluded: Vec<usize>,
    k: usize,
}

fn term(coef: f64, factors: Vec<Factor>, feature: usize, upper: bool) -> Term {
    Term { coef, factors, switch: Some(Switch { feature, upper }) }
}

impl SyntheticModel {
    pub fn new(id: ModelId) -> Self {
        use Factor::*;
        let s3 = 3f64.sqrt();
        match id {
            ModelId::FirstOrder => SyntheticModel {
                id,
                p: 6,
                terms: vec![
                    term(1.0, vec![Linear(0)], 5, false),
                    term(1.0, vec![Linear(1)], 5, false),
                    term(1.0, vec![Linear(2)], 5, true),
                    term(1.0, vec![Linear(3)], 5, true),
                ],
                excluded: vec![5],
                k: 2,
            },
            ModelId::SecondOrder => SyntheticModel {
                id,
                p: 10,
                terms: vec![
                    term(1.0, vec![Linear(0)], 9, false),
                    term(1.0, vec![Square(1)], 9, false),
                    term(1.0, vec![SqrtAbs(2)], 9, false),
                    term(1.0, vec![Linear(3)], 9, true),
                    term(1.0, vec![Square(4)], 9, true),
                    term(1.0, vec![SqrtAbs(5)], 9, true),
                ],
                excluded: vec![9],
                k: 3,
            },
            ModelId::Interaction => SyntheticModel {
                id,
                p: 10,
                terms: vec![
                    term(3.0 * s3, vec![Linear(0), Linear(1)], 2, true),
                    term(s3, vec![Linear(3), Linear(4)], 2, false),
                    term(3.0, vec![Linear(5), Linear(6)], 7, true),
                    term(1.0, vec![Linear(8), Linear(9)], 7, false),
                ],
                excluded: vec![2, 7],
                k: 4,
            },
            ModelId::SignCounterexample => SyntheticModel {
                id,
                p: 2,
                terms: vec![Term { coef: 1.0, factors: vec![Linear(1), Sign(0)], switch: None }],
                excluded: vec![],
                k: 2,
            },
        }
    }

    pub fn id(&self) -> ModelId {
        self.id
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Size of every observation's true active set.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Switch features, never ranked.
    pub fn excluded(&self) -> &[usize] {
        &self.excluded
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value(x)).sum()
    }

    /// Exact `E[f(X) | X_{-j} = x_{-j}]` under independent uniforms.
    pub fn conditional_mean_drop(&self, x: &[f64], j: usize) -> Result<f64> {
        check_dim(self.p, x.len())?;
        if j >= self.p {
            return Err(Error::invalid(format!("feature {j} out of range")));
        }
        Ok(self.terms.iter().map(|t| t.drop_mean(x, j)).sum())
    }

    /// Exact `E[f(X) | X_S = x_S]` for every subset mask `S` of the `p` features.
    pub fn value_table(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.p, x.len())?;
        Ok((0..1usize << self.p)
            .map(|mask| self.terms.iter().map(|t| t.expected_given(x, |j| mask >> j & 1 == 1)).sum())
            .collect())
    }

    /// Sorted features of the terms active at `x`.
    pub fn active_set(&self, x: &[f64]) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .terms
            .iter()
            .filter(|t| t.active(x))
            .flat_map(|t| t.factors.iter().map(Factor::feature))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn true_importance(&self, x: &[f64]) -> Vec<f64> {
        (0..self.p).map(|j| self.terms.iter().map(|t| t.importance(x, j)).sum()).collect()
    }

    /// Label of the true regime containing `x`.
    pub fn region_label(&self, x: &[f64]) -> usize {
        match self.id {
            ModelId::FirstOrder => usize::from(x[5] > 0.0),
            ModelId::SecondOrder => usize::from(x[9] > 0.0),
            ModelId::Interaction => 2 * usize::from(x[2] <= 0.0) + usize::from(x[7] <= 0.0),
            ModelId::SignCounterexample => usize::from(x[0] >= 0.0),
        }
    }

    pub fn n_regions(&self) -> usize {
        match self.id {
            ModelId::Interaction => 4,
            _ => 2,
        }
    }

    /// The exact piecewise-linear form, when the model is piecewise linear.
    pub fn pwl(&self) -> Option<PiecewiseLinearModel> {
        (self.id == ModelId::FirstOrder).then(first_order_pwl)
    }

    pub fn describe_truth(&self) -> &'static str {
        match self.id {
            ModelId::FirstOrder => "importance of x_i in the active branch is |x_i|",
            ModelId::SecondOrder => "importance of x_i is the magnitude of its additive component at x",
            ModelId::Interaction => "importance of x_i in an active term c*x_i*x_j is |c*x_j|",
            ModelId::SignCounterexample => "both features matter everywhere",
        }
    }
}

impl Evaluator for SyntheticModel {
    fn dim(&self) -> usize {
        self.p
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        self.value(x)
    }
}

/// `(a1 x1 + a2 x2) 1{x6 <= 0} + (a3 x3 + a4 x4) 1{x6 > 0}` on six features.
pub fn switch_model(a: [f64; 4]) -> PiecewiseLinearModel {
    let mut lower = vec![Interval::FULL; 6];
    lower[5] = Interval::at_most(0.0);
    let mut upper = vec![Interval::FULL; 6];
    upper[5] = Interval::above(0.0);
    PiecewiseLinearModel::new(
        vec![lower, upper],
        vec![vec![a[0], a[1], 0.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, a[2], a[3], 0.0, 0.0]],
        vec![0.0, 0.0],
    )
    .expect("switch model is a valid partition")
}

pub fn first_order_pwl() -> PiecewiseLinearModel {
    switch_model([1.0, 1.0, 1.0, 1.0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub model_id: ModelId,
    pub p: usize,
    pub n: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(model_id: ModelId, n: usize, seed: u64) -> Self {
        Self { model_id, p: SyntheticModel::new(model_id).p(), n, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub active: Vec<Vec<usize>>,
    pub excluded: Vec<usize>,
    pub importance: Vec<Vec<f64>>,
    pub regions: Vec<usize>,
    pub k: usize,
    pub convention: String,
}

impl GroundTruth {
    pub fn for_rows(model: &SyntheticModel, data: &Dataset) -> Self {
        let rows = 0..data.n();
        GroundTruth {
            active: rows.clone().map(|i| model.active_set(data.row(i))).collect(),
            excluded: model.excluded().to_vec(),
            importance: rows.clone().map(|i| model.true_importance(data.row(i))).collect(),
            regions: rows.map(|i| model.region_label(data.row(i))).collect(),
            k: model.k(),
            convention: model.describe_truth().to_string(),
        }
    }
}

/// Draws `n` i.i.d. `U[-1, 1]^p` rows and noiseless targets.
pub fn generate(spec: &SyntheticSpec) -> Result<(Dataset, SyntheticModel, GroundTruth)> {
    let model = SyntheticModel::new(spec.model_id);
    check_dim(model.p(), spec.p)?;
    if spec.n == 0 {
        return Err(Error::EmptyData("n must be positive".into()));
    }
    let x = sample_uniform(spec.n, spec.p, SeedTree::new(spec.seed).derive("synth", 0));
    let y = Array1::from_shape_fn(spec.n, |i| model.value(x.row(i).as_slice().expect("row-major")));
    let data = Dataset::from_rows(x, y, Task::Regression)?;
    let truth = GroundTruth::for_rows(&model, &data);
    Ok((data, model, truth))
}

/// `n x p` matrix of i.i.d. `U[-1, 1]` draws.
pub fn sample_uniform(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut rng = crate::seed::rng_from(seed);
    Array2::from_shape_simple_fn((n, p), || rng.random_range(-1.0..=1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_order_examples() {
        let m = SyntheticModel::new(ModelId::FirstOrder);
        let x = [0.5, -0.3, 0.9, 0.1, 0.0, -0.2];
        assert_abs_diff_eq!(m.value(&x), 0.2, epsilon = 1e-15);
        let xb = [0.5, -0.3, 0.9, 0.1, 0.0, 0.4];
        assert_eq!(m.active_set(&xb), vec![2, 3]);
        assert_eq!(m.excluded(), &[5]);
        assert_eq!(m.conditional_mean_drop(&x, 0).unwrap(), -0.3);
        assert_abs_diff_eq!(m.conditional_mean_drop(&x, 5).unwrap(), 0.5 * 0.2 + 0.5 * 1.0, epsilon = 1e-15);
        let pwl = m.pwl().unwrap();
        assert_eq!(pwl.evaluate(&x).unwrap(), m.value(&x));
    }

    #[test]
    fn interaction_example() {
        let m = SyntheticModel::new(ModelId::Interaction);
        let x = [0.4, -0.5, 0.3, 0.9, 0.9, 0.7, 0.2, 0.6, 0.1, 0.1];
        let expect = 3.0 * 3f64.sqrt() * 0.4 * -0.5 + 3.0 * 0.7 * 0.2;
        assert_abs_diff_eq!(m.value(&x), expect, epsilon = 1e-15);
        assert_eq!(m.active_set(&x), vec![0, 1, 5, 6]);
        let imp = m.true_importance(&x);
        assert_abs_diff_eq!(imp[0], 3.0 * 3f64.sqrt() * 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(imp[6], 3.0 * 0.7, epsilon = 1e-12);
        assert_eq!(imp[3], 0.0);
    }

    #[test]
    fn second_order_drop_uses_component_means() {
        let m = SyntheticModel::new(ModelId::SecondOrder);
        let x = [0.2, 0.5, -0.64, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -0.1];
        assert_abs_diff_eq!(m.conditional_mean_drop(&x, 1).unwrap(), 0.2 + 1.0 / 3.0 + 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(m.conditional_mean_drop(&x, 2).unwrap(), 0.2 + 0.25 + 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(m.conditional_mean_drop(&x, 4).unwrap(), m.value(&x));
    }

    #[test]
    fn generate_is_seeded_and_in_range() {
        let spec = SyntheticSpec::new(ModelId::SecondOrder, 50, 9);
        let (a, _, ta) = generate(&spec).unwrap();
        let (b, _, _) = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.features().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(ta.active.iter().all(|s| s.len() == 3));
        let bad = SyntheticSpec { p: 7, ..spec };
        assert!(generate(&bad).is_err());
    }
}
