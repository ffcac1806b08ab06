//! Analytic quantities under independent `U[-1, 1]` marginals.

use rand::Rng as _;

use super::model::PiecewiseLinearModel;
use super::synthetic::SyntheticModel;
use crate::data::Evaluator;
use crate::error::{check_dim, Error, Result};
use crate::seed::rng_from;

/// Per-dimension moments of region `k` at a query point.
#[derive(Debug, Clone)]
pub(crate) struct RegionMoments {
    /// `1{x_j in A_jk}`.
    pub alpha: Vec<f64>,
    /// `P(X_j in A_jk)`.
    pub beta: Vec<f64>,
    /// `E[X_j 1{X_j in A_jk}]`.
    pub partial_mean: Vec<f64>,
}

impl RegionMoments {
    pub fn new(model: &PiecewiseLinearModel, x: &[f64], k: usize) -> Self {
        let r = model.region(k);
        RegionMoments {
            alpha: r.iter().zip(x).map(|(iv, &v)| f64::from(u8::from(iv.contains(v)))).collect(),
            beta: r.iter().map(|iv| iv.prob()).collect(),
            partial_mean: r.iter().map(|iv| iv.partial_mean()).collect(),
        }
    }

    /// True when some marginal probability vanishes and the region is skipped.
    pub fn null(&self) -> bool {
        self.beta.contains(&0.0)
    }
}

/// `v_k(S) = E[f_k(X) 1{X in A_k} | X_S = x_S]`, with `S` given as a mask.
pub fn analytic_value_function(
    model: &PiecewiseLinearModel,
    x: &[f64],
    s: &[bool],
    k: usize,
) -> Result<f64> {
    check_dim(model.p(), x.len())?;
    check_dim(model.p(), s.len())?;
    if k >= model.m() {
        return Err(Error::invalid(format!("region {k} out of range for m = {}", model.m())));
    }
    let mo = RegionMoments::new(model, x, k);
    if mo.null() {
        return Ok(0.0);
    }
    Ok(value_from_moments(&mo, model.coefficients(k), model.intercept(k), x, |i| s[i]))
}

/// Direct evaluation of the value function from its definition, no division.
pub(crate) fn value_from_moments(
    mo: &RegionMoments,
    a: &[f64],
    b: f64,
    x: &[f64],
    in_s: impl Fn(usize) -> bool,
) -> f64 {
    let p = a.len();
    let cond: f64 = (0..p).filter(|&i| in_s(i)).map(|i| mo.alpha[i]).product();
    if cond == 0.0 {
        return 0.0;
    }
    let out: Vec<usize> = (0..p).filter(|&i| !in_s(i)).collect();
    let prob_out: f64 = out.iter().map(|&j| mo.beta[j]).product();
    let known: f64 = (0..p).filter(|&i| in_s(i)).map(|i| a[i] * x[i]).sum();
    let mut unknown = 0.0;
    for &i in &out {
        let others: f64 = out.iter().filter(|&&j| j != i).map(|&j| mo.beta[j]).product();
        unknown += a[i] * mo.partial_mean[i] * others;
    }
    cond * ((known + b) * prob_out + unknown)
}

/// `E[f(X)]`: the sum of `v_k(empty set)` over regions.
pub fn expected_value(model: &PiecewiseLinearModel) -> f64 {
    let x = vec![0.0; model.p()];
    let s = vec![false; model.p()];
    (0..model.m())
        .map(|k| analytic_value_function(model, &x, &s, k).expect("valid shapes"))
        .sum()
}

/// Exact `E[f(X) | X_{-j} = x_{-j}]` for a piecewise-linear model.
///
/// Each region contributes the affine part with `x_j` integrated against its
/// slice of `[-1, 1]`. The sum runs in the same order as `evaluate`, so a
/// feature that never enters the model reproduces `f(x)` bit for bit.
pub fn pwl_conditional_mean_drop(model: &PiecewiseLinearModel, x: &[f64], j: usize) -> Result<f64> {
    check_dim(model.p(), x.len())?;
    if j >= model.p() {
        return Err(Error::invalid(format!("feature {j} out of range")));
    }
    let mut total = 0.0;
    for k in 0..model.m() {
        let r = model.region(k);
        if !r.iter().zip(x).enumerate().all(|(i, (iv, &v))| i == j || iv.contains(v)) {
            continue;
        }
        let a = model.coefficients(k);
        let iv = r[j];
        if iv.is_full() && a[j] == 0.0 {
            total += model.affine(x, k);
            continue;
        }
        let rest: f64 = a.iter().zip(x).enumerate().filter(|(i, _)| *i != j).map(|(_, (c, v))| c * v).sum::<f64>()
            + model.intercept(k);
        total += rest * iv.prob() + a[j] * iv.partial_mean();
    }
    Ok(total)
}

/// Monte-Carlo `E[f(X) | X_{-j} = x_{-j}]` with `X_j ~ U[-1, 1]`.
pub fn mc_conditional_mean_drop<E: Evaluator + ?Sized>(
    f: &E,
    x: &[f64],
    j: usize,
    mc_budget: usize,
    seed: u64,
) -> Result<f64> {
    check_dim(f.dim(), x.len())?;
    if mc_budget == 0 {
        return Err(Error::invalid("mc_budget must be positive for a black-box evaluator"));
    }
    if j >= x.len() {
        return Err(Error::invalid(format!("feature {j} out of range")));
    }
    let mut rng = rng_from(seed);
    let mut z = x.to_vec();
    let mut sum = 0.0;
    for _ in 0..mc_budget {
        z[j] = rng.random_range(-1.0..=1.0);
        sum += f.evaluate(&z);
    }
    Ok(sum / mc_budget as f64)
}

/// Models whose single-feature conditional means are available.
pub trait DropOracle: Evaluator {
    fn drop_mean(&self, x: &[f64], j: usize) -> Result<f64>;
}

impl DropOracle for PiecewiseLinearModel {
    fn drop_mean(&self, x: &[f64], j: usize) -> Result<f64> {
        pwl_conditional_mean_drop(self, x, j)
    }
}

impl DropOracle for SyntheticModel {
    fn drop_mean(&self, x: &[f64], j: usize) -> Result<f64> {
        self.conditional_mean_drop(x, j)
    }
}

/// Wraps any evaluator with a Monte-Carlo drop oracle.
pub struct MonteCarloDrop<E> {
    pub evaluator: E,
    pub mc_budget: usize,
    pub seed: u64,
}

impl<E: Evaluator> Evaluator for MonteCarloDrop<E> {
    fn dim(&self) -> usize {
        self.evaluator.dim()
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        self.evaluator.evaluate(x)
    }
}

impl<E: Evaluator> DropOracle for MonteCarloDrop<E> {
    fn drop_mean(&self, x: &[f64], j: usize) -> Result<f64> {
        let bits = x.iter().fold(self.seed ^ j as u64, |h, v| h.rotate_left(7) ^ v.to_bits());
        mc_conditional_mean_drop(&self.evaluator, x, j, self.mc_budget, bits)
    }
}
