//! Local Shapley values.
//!
//! Three engines: the exact closed form for piecewise-linear models, brute
//! force over all subsets with the analytic value function, and Monte-Carlo
//! marginal Shapley for arbitrary evaluators.
//!
//! For region `k` write `alpha_j = 1{x_j in A_jk}`, `beta_j = P(X_j in A_jk)` and
//! `m_j = E[X_j | X_j in A_jk]`. The value function then factors as
//! `v_k(S) = W(S) (L0 + sum_{i in S} c_i)` with
//! `W(S) = prod_{S} alpha * prod_{not S} beta`, `c_i = a_i (x_i - m_i)` and
//! `L0 = b + sum_i a_i m_i`. Grouping subsets by size, the Shapley sum for
//! feature `l` only needs the coefficients of
//! `prod_{j != l} (beta_j + alpha_j t)` and of its first-order perturbation in
//! `c`, which a product of dual-number polynomials delivers in `O(p^2)`.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionVector, Method};
use crate::data::{Dataset, Evaluator};
use crate::error::{check_dim, Error, Result};
use crate::pwl::oracle::{value_from_moments, RegionMoments};
use crate::pwl::{PiecewiseLinearModel, SyntheticModel};
use crate::seed::SeedTree;

pub const MAX_ENUMERATION_P: usize = 20;
pub const MAX_EXACT_MC_P: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ShapleyMode {
    #[default]
    ClosedForm,
    Enumeration,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapleyConfig {
    pub mode: ShapleyMode,
    /// Background rows per value-function estimate (permutations above 12 features).
    pub mc_samples_per_subset: usize,
    pub seed: u64,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        Self { mode: ShapleyMode::ClosedForm, mc_samples_per_subset: 256, seed: 0 }
    }
}

/// `|S|! (p - |S| - 1)! / p!`, the weight of a coalition of size `s` not containing the player.
pub fn shapley_weight(p: usize, s: usize) -> f64 {
    1.0 / (p as f64 * binomial(p - 1, s))
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact local Shapley values of a piecewise-linear model under `U[-1, 1]` features.
pub fn lsv_closed_form(model: &PiecewiseLinearModel, x: &[f64]) -> Result<AttributionVector> {
    check_dim(model.p(), x.len())?;
    crate::error::check_finite(x, "x")?;
    let p = model.p();
    let weights: Vec<f64> = (0..p).map(|s| shapley_weight(p, s)).collect();
    let mut phi = vec![0.0; p];
    for k in 0..model.m() {
        let mo = RegionMoments::new(model, x, k);
        if mo.null() {
            continue;
        }
        let a = model.coefficients(k);
        let mean: Vec<f64> = (0..p).map(|j| mo.partial_mean[j] / mo.beta[j]).collect();
        let c: Vec<f64> = (0..p).map(|j| a[j] * (x[j] - mean[j])).collect();
        let l0 = model.intercept(k) + (0..p).map(|j| a[j] * mean[j]).sum::<f64>();
        for l in 0..p {
            let (p0, p1) = dual_polynomial(&mo.alpha, &mo.beta, &c, l);
            let mut sum_value = 0.0;
            let mut sum_weight = 0.0;
            for s in 0..p {
                sum_value += weights[s] * (l0 * p0[s] + p1[s]);
                sum_weight += weights[s] * p0[s];
            }
            phi[l] += (mo.alpha[l] - mo.beta[l]) * sum_value + c[l] * mo.alpha[l] * sum_weight;
        }
    }
    AttributionVector::new(phi, Method::LsvClosedForm)
}

/// Coefficients in `t` of `prod_{j != l} (beta_j + alpha_j t + u alpha_j c_j t)`,
/// split into the `u^0` and `u^1` parts.
fn dual_polynomial(alpha: &[f64], beta: &[f64], c: &[f64], l: usize) -> (Vec<f64>, Vec<f64>) {
    let p = alpha.len();
    let mut p0 = vec![0.0; p];
    let mut p1 = vec![0.0; p];
    p0[0] = 1.0;
    let mut deg = 0;
    for j in (0..p).filter(|&j| j != l) {
        deg += 1;
        for s in (0..=deg).rev() {
            let prev0 = if s > 0 { p0[s - 1] } else { 0.0 };
            let prev1 = if s > 0 { p1[s - 1] } else { 0.0 };
            let cur0 = if s < deg { p0[s] } else { 0.0 };
            let cur1 = if s < deg { p1[s] } else { 0.0 };
            p1[s] = beta[j] * cur1 + alpha[j] * prev1 + alpha[j] * c[j] * prev0;
            p0[s] = beta[j] * cur0 + alpha[j] * prev0;
        }
    }
    (p0, p1)
}

/// `v(S)` summed over regions for every subset mask of `p` features.
pub fn value_table(model: &PiecewiseLinearModel, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(model.p(), x.len())?;
    let p = model.p();
    if p > MAX_ENUMERATION_P {
        return Err(Error::Unsupported(format!("enumeration needs p <= {MAX_ENUMERATION_P}, got {p}")));
    }
    let regions: Vec<_> = (0..model.m())
        .map(|k| RegionMoments::new(model, x, k))
        .enumerate()
        .filter(|(_, mo)| !mo.null())
        .collect();
    Ok((0..1usize << p)
        .into_par_iter()
        .map(|mask| {
            regions
                .iter()
                .map(|(k, mo)| {
                    value_from_moments(mo, model.coefficients(*k), model.intercept(*k), x, |i| mask >> i & 1 == 1)
                })
                .sum()
        })
        .collect())
}

/// Shapley values from a full table of subset values indexed by bitmask.
pub fn shapley_from_table(p: usize, v: &[f64]) -> Vec<f64> {
    let weights: Vec<f64> = (0..p).map(|s| shapley_weight(p, s)).collect();
    (0..p)
        .map(|l| {
            let bit = 1usize << l;
            (0..v.len())
                .filter(|m| m & bit == 0)
                .map(|m| weights[m.count_ones() as usize] * (v[m | bit] - v[m]))
                .sum()
        })
        .collect()
}

/// Local Shapley values by summing weighted marginal contributions over all subsets.
pub fn lsv_enumeration(model: &PiecewiseLinearModel, x: &[f64]) -> Result<AttributionVector> {
    crate::error::check_finite(x, "x")?;
    let v = value_table(model, x)?;
    AttributionVector::new(shapley_from_table(model.p(), &v), Method::LsvEnumeration)
}

/// Exact local Shapley values of a synthetic benchmark model by enumeration.
pub fn lsv_synthetic(model: &SyntheticModel, x: &[f64]) -> Result<AttributionVector> {
    crate::error::check_finite(x, "x")?;
    let v = model.value_table(x)?;
    AttributionVector::new(shapley_from_table(model.p(), &v), Method::LsvEnumeration)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloShapley {
    pub attribution: AttributionVector,
    /// Standard error of each coordinate.
    pub std_error: Vec<f64>,
    pub samples: usize,
}

/// Marginal Shapley values `v(S) = E[f(x_S, Z_{not S})]` with `Z` drawn from `background`.
///
/// Up to 12 features every subset is evaluated exactly against each sampled
/// background row and the per-row Shapley vectors are averaged. Above that,
/// random permutations are paired with random background rows.
pub fn lsv_monte_carlo<E: Evaluator + ?Sized>(
    f: &E,
    background: &Dataset,
    x: &[f64],
    cfg: &ShapleyConfig,
) -> Result<MonteCarloShapley> {
    let p = f.dim();
    check_dim(p, x.len())?;
    check_dim(p, background.p())?;
    if cfg.mc_samples_per_subset == 0 {
        return Err(Error::invalid("mc_samples_per_subset must be at least 1"));
    }
    let seeds = SeedTree::new(cfg.seed);
    let per_sample: Vec<Vec<f64>> = if p <= MAX_EXACT_MC_P {
        let mut rows: Vec<usize> = (0..background.n()).collect();
        rows.shuffle(&mut seeds.rng("lsv-background", 0));
        rows.truncate(cfg.mc_samples_per_subset.min(background.n()));
        rows.par_iter()
            .map(|&r| {
                let z = background.row(r);
                let mut point = vec![0.0; p];
                let v: Vec<f64> = (0..1usize << p)
                    .map(|mask| {
                        for i in 0..p {
                            point[i] = if mask >> i & 1 == 1 { x[i] } else { z[i] };
                        }
                        f.evaluate(&point)
                    })
                    .collect();
                shapley_from_table(p, &v)
            })
            .collect()
    } else {
        (0..cfg.mc_samples_per_subset)
            .into_par_iter()
            .map(|t| {
                let mut rng = seeds.rng("lsv-permutation", t as u64);
                let mut order: Vec<usize> = (0..p).collect();
                order.shuffle(&mut rng);
                let z = background.row(rng.random_range(0..background.n()));
                let mut point = z.to_vec();
                let mut prev = f.evaluate(&point);
                let mut phi = vec![0.0; p];
                for &j in &order {
                    point[j] = x[j];
                    let cur = f.evaluate(&point);
                    phi[j] = cur - prev;
                    prev = cur;
                }
                phi
            })
            .collect()
    };
    let b = per_sample.len() as f64;
    let mut mean = vec![0.0; p];
    for s in &per_sample {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / b;
        }
    }
    let std_error = (0..p)
        .map(|j| {
            if per_sample.len() < 2 {
                return f64::INFINITY;
            }
            let var = per_sample.iter().map(|s| (s[j] - mean[j]).powi(2)).sum::<f64>() / (b - 1.0);
            (var / b).sqrt()
        })
        .collect();
    Ok(MonteCarloShapley {
        attribution: AttributionVector::new(mean, Method::LsvMonteCarlo)?,
        std_error,
        samples: per_sample.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl::{expected_value, first_order_pwl, switch_model, Interval};
    use approx::assert_abs_diff_eq;

    #[test]
    fn synthetic_enumeration_matches_closed_form_and_efficiency() {
        use crate::pwl::{ModelId, SyntheticModel};
        let fo = SyntheticModel::new(ModelId::FirstOrder);
        let pwl = first_order_pwl();
        let x = [0.3, -0.7, 0.2, 0.9, -0.1, 0.4];
        let a = lsv_synthetic(&fo, &x).unwrap().scores;
        let b = lsv_closed_form(&pwl, &x).unwrap().scores;
        for j in 0..6 {
            assert_abs_diff_eq!(a[j], b[j], epsilon = 1e-12);
        }
        for id in [ModelId::SecondOrder, ModelId::Interaction] {
            let m = SyntheticModel::new(id);
            let x: Vec<f64> = (0..m.p()).map(|j| ((j * 37 % 11) as f64 / 5.0) - 1.0).collect();
            let v = m.value_table(&x).unwrap();
            let phi = lsv_synthetic(&m, &x).unwrap().scores;
            assert_abs_diff_eq!(phi.iter().sum::<f64>(), m.value(&x) - v[0], epsilon = 1e-12);
            assert_abs_diff_eq!(v[v.len() - 1], m.value(&x), epsilon = 1e-15);
        }
    }

    #[test]
    fn linear_model_gives_coefficient_times_value() {
        let m = PiecewiseLinearModel::linear(vec![2.0, -1.0, 0.5], 0.3).unwrap();
        let x = [0.4, 0.9, -0.2];
        let phi = lsv_closed_form(&m, &x).unwrap().scores;
        for j in 0..3 {
            assert_abs_diff_eq!(phi[j], m.coefficients(0)[j] * x[j], epsilon = 1e-14);
        }
    }

    #[test]
    fn constant_model_has_zero_attribution() {
        let m = PiecewiseLinearModel::linear(vec![0.0; 4], 7.0).unwrap();
        let phi = lsv_enumeration(&m, &[0.1, 0.2, 0.3, 0.4]).unwrap().scores;
        assert!(phi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inactive_features_get_nonzero_shapley() {
        let m = first_order_pwl();
        let x = [0.3, 0.5, 0.8, -0.4, 0.1, -0.6];
        let phi = lsv_enumeration(&m, &x).unwrap().scores;
        assert!(phi[2].abs() > 0.05);
        let cf = lsv_closed_form(&m, &x).unwrap().scores;
        for j in 0..6 {
            assert_abs_diff_eq!(phi[j], cf[j], epsilon = 1e-12);
        }
        let total: f64 = cf.iter().sum();
        assert_abs_diff_eq!(total, m.evaluate(&x).unwrap() - expected_value(&m), epsilon = 1e-12);
    }

    #[test]
    fn switch_model_ratio_is_constant() {
        let m = switch_model([0.0, 2.0, 0.0, 5.0]);
        let ratio = |x: [f64; 6]| lsv_closed_form(&m, &x).unwrap().scores[3] / x[3];
        let r1 = ratio([0.1, 0.2, 0.3, 0.4, 0.5, -0.5]);
        let r2 = ratio([-0.9, 0.7, -0.1, -0.8, 0.2, -0.01]);
        assert_abs_diff_eq!(r1, r2, epsilon = 1e-12);
        assert!(r1.abs() > 0.1);
    }

    #[test]
    fn region_outside_support_is_skipped() {
        let m = PiecewiseLinearModel::new(
            vec![vec![Interval::at_most(1.0)], vec![Interval::above(1.0)]],
            vec![vec![1.0], vec![5.0]],
            vec![0.0, 0.0],
        )
        .unwrap();
        let phi = lsv_closed_form(&m, &[2.0]).unwrap().scores;
        assert_eq!(phi, vec![0.0]);
    }

    #[test]
    fn weights_sum_to_one_over_subsets() {
        for p in 1..10 {
            let total: f64 = (0..p).map(|s| shapley_weight(p, s) * binomial(p - 1, s)).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn closed_form_matches_enumeration_on_random_models() {
        let mut rng = crate::seed::rng_from(11);
        for _ in 0..50 {
            let p = rng.random_range(1..=7);
            let m = rng.random_range(1..=4);
            let model = PiecewiseLinearModel::random(p, m, 0.3, &mut rng).unwrap();
            let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = lsv_closed_form(&model, &x).unwrap().scores;
            let b = lsv_enumeration(&model, &x).unwrap().scores;
            for j in 0..p {
                assert_abs_diff_eq!(a[j], b[j], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn monte_carlo_dummy_feature_vanishes() {
        let f = crate::data::FnEvaluator::new(3, |x: &[f64]| 2.0 * x[0] + x[1] * x[1]);
        let bg = crate::data::Dataset::from_rows(
            crate::pwl::sample_uniform(400, 3, 5),
            ndarray::Array1::zeros(400),
            crate::data::Task::Regression,
        )
        .unwrap();
        let cfg = ShapleyConfig { mode: ShapleyMode::MonteCarlo, mc_samples_per_subset: 400, seed: 2 };
        let r = lsv_monte_carlo(&f, &bg, &[0.5, 0.5, 0.5], &cfg).unwrap();
        assert_eq!(r.attribution.scores[2], 0.0);
        assert!(r.attribution.scores[0] > 0.5);
        assert!(lsv_monte_carlo(&f, &bg, &[0.5, 0.5, 0.5], &ShapleyConfig { mc_samples_per_subset: 0, ..cfg }).is_err());
    }
}
