//! Verification suites with analytic or enumerated oracles.

use ndarray::{Array2, Axis};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::lime::{bandwidth_sensitivity, explain_lime, LimeConfig};
use crate::loco::{oracle_deltas, DeltaConvention};
use crate::pwl::{expected_value, sample_uniform, switch_model, ModelId, PiecewiseLinearModel, SyntheticModel};
use crate::regions::kmeans;
use crate::seed::SeedTree;
use crate::shapley::{lsv_closed_form, lsv_enumeration};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub trials: usize,
    /// Largest `|closed form - enumeration|` over trials and features.
    pub max_discrepancy: f64,
    /// Largest `|sum phi - (f(x) - E f)|` over both engines.
    pub max_efficiency_error: f64,
    /// Largest discrepancy restricted to single-region models.
    pub max_linear_discrepancy: f64,
    pub switch: SwitchCheck,
}

/// The ratio `phi_4 / x_4` on the switch model with `a = (0, 2, 0, 5)` at
/// points where the `x_6 > 0` branch is inactive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchCheck {
    pub points: usize,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// `a_4 P(X_6 > 0) / 2`, the value the ratio should take.
    pub expected: f64,
    pub max_efficiency_error: f64,
}

/// Compares the closed form with subset enumeration on random
/// piecewise-linear models and checks the switch-model proportionality.
pub fn verify_theorem1(trials: usize, p_max: usize, m_max: usize, seed: u64) -> Result<Theorem1Report> {
    if p_max == 0 || m_max == 0 || p_max > 12 {
        return Err(Error::invalid("need 1 <= p_max <= 12 and m_max >= 1"));
    }
    let seeds = SeedTree::new(seed);
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeds.rng("theorem1", t as u64);
            let p = rng.random_range(1..=p_max);
            let m = rng.random_range(1..=m_max);
            let model = PiecewiseLinearModel::random(p, m, 0.3, &mut rng)?;
            let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let a = lsv_closed_form(&model, &x)?.scores;
            let b = lsv_enumeration(&model, &x)?.scores;
            let gap = model.evaluate(&x)? - expected_value(&model);
            let disc = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            let eff = (a.iter().sum::<f64>() - gap).abs().max((b.iter().sum::<f64>() - gap).abs());
            Ok((m, disc, eff))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_discrepancy = per_trial.iter().map(|t| t.1).fold(0.0, f64::max);
    let max_efficiency_error = per_trial.iter().map(|t| t.2).fold(0.0, f64::max);
    let max_linear_discrepancy = per_trial.iter().filter(|t| t.0 == 1).map(|t| t.1).fold(0.0, f64::max);
    Ok(Theorem1Report {
        trials,
        max_discrepancy,
        max_efficiency_error,
        max_linear_discrepancy,
        switch: switch_check(100, seeds.derive("switch", 0))?,
    })
}

/// `phi_4 / x_4` at `points` random points of the switch model with `x_6 <= 0`.
pub fn switch_check(points: usize, seed: u64) -> Result<SwitchCheck> {
    let a = [0.0, 2.0, 0.0, 5.0];
    let model = switch_model(a);
    let ef = expected_value(&model);
    let mut rng = crate::seed::rng_from(seed);
    let mut ratios = Vec::with_capacity(points);
    let mut max_eff: f64 = 0.0;
    while ratios.len() < points {
        let mut x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..=1.0)).collect();
        x[5] = -x[5].abs();
        if x[3].abs() < 1e-3 {
            continue;
        }
        for phi in [lsv_closed_form(&model, &x)?.scores, lsv_enumeration(&model, &x)?.scores] {
            max_eff = max_eff.max((phi.iter().sum::<f64>() - (model.evaluate(&x)? - ef)).abs());
        }
        ratios.push(lsv_closed_form(&model, &x)?.scores[3] / x[3]);
    }
    Ok(SwitchCheck {
        points,
        ratio_min: ratios.iter().cloned().fold(f64::INFINITY, f64::min),
        ratio_max: ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        expected: a[3] * 0.5 / 2.0,
        max_efficiency_error: max_eff,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidReport {
    pub n: usize,
    /// Mean oracle deltas (squared loss) over `x_6 <= 0` and `x_6 > 0` rows.
    pub importance_a: Vec<f64>,
    pub importance_b: Vec<f64>,
    pub input_a: Vec<f64>,
    pub input_b: Vec<f64>,
    /// L-infinity distances to the analytic targets.
    pub importance_a_error: f64,
    pub importance_b_error: f64,
    pub input_a_error: f64,
    pub input_b_error: f64,
    /// `importance_a - importance_b`.
    pub separating_direction: Vec<f64>,
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

fn group_means(x: &Array2<f64>, labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|c| {
            let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            x.select(Axis(0), &rows).mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default()
        })
        .collect()
}

/// Regime centroids of the first-order model in input and importance space.
pub fn verify_centroids(n: usize, seed: u64) -> Result<CentroidReport> {
    let model = SyntheticModel::new(ModelId::FirstOrder);
    let data = synthetic_rows(&model, n, seed)?;
    let repr = oracle_deltas(&model, &data, DeltaConvention::SquaredLoss, 1.0)?;
    let labels: Vec<usize> = (0..n).map(|i| model.region_label(data.row(i))).collect();
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::invalid("sample hit only one regime"));
    }
    let imp = group_means(&repr.deltas, &labels, 2);
    let inp = group_means(data.features(), &labels, 2);
    let third = 1.0 / 3.0;
    let target_a = [third, third, 0.0, 0.0, 0.0, third];
    let target_b = [0.0, 0.0, third, third, 0.0, third];
    let mut in_a = vec![0.0; 6];
    in_a[5] = -0.5;
    let mut in_b = vec![0.0; 6];
    in_b[5] = 0.5;
    Ok(CentroidReport {
        n,
        importance_a_error: linf(&imp[0], &target_a),
        importance_b_error: linf(&imp[1], &target_b),
        input_a_error: linf(&inp[0], &in_a),
        input_b_error: linf(&inp[1], &in_b),
        separating_direction: imp[0].iter().zip(&imp[1]).map(|(a, b)| a - b).collect(),
        importance_a: imp[0].clone(),
        importance_b: imp[1].clone(),
        input_a: inp[0].clone(),
        input_b: inp[1].clone(),
    })
}

fn synthetic_rows(model: &SyntheticModel, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyData("n must be positive".into()));
    }
    let x = sample_uniform(n, model.p(), seed);
    let y = ndarray::Array1::from_shape_fn(n, |i| model.value(x.row(i).as_slice().expect("row-major")));
    Dataset::from_rows(x, y, Task::Regression)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub trials: usize,
    /// Largest summed `|psi_j|` over features outside `J_k` and the boundary features.
    pub max_outside_mass: f64,
    /// Trials where both regions received sample points.
    pub informative_trials: usize,
}

/// Oracle clusters and oracle deltas on random two-region models: regional
/// attributions vanish outside the region's active and boundary features.
pub fn verify_locality(trials: usize, n: usize, seed: u64) -> Result<LocalityReport> {
    let seeds = SeedTree::new(seed);
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeds.rng("locality", t as u64);
            let p = rng.random_range(3..=8);
            let model = PiecewiseLinearModel::random(p, 2, 0.5, &mut rng)?;
            let x = sample_uniform(n, p, seeds.derive("locality-data", t as u64));
            let y = ndarray::Array1::from_shape_fn(n, |i| model.eval_unchecked(x.row(i).as_slice().expect("row-major")));
            let data = Dataset::from_rows(x, y, Task::Regression)?;
            let repr = oracle_deltas(&model, &data, DeltaConvention::SquaredLoss, 1.0)?;
            let labels: Vec<usize> =
                (0..n).map(|i| model.region_of(data.row(i)).expect("samples lie in the partition")).collect();
            let boundary = model.boundary_features();
            let means = group_means(&repr.deltas, &labels, 2);
            let mut worst: f64 = 0.0;
            let mut informative = true;
            for (k, psi) in means.iter().enumerate() {
                if psi.is_empty() {
                    informative = false;
                    continue;
                }
                let active = model.active_features(k);
                let outside: f64 = (0..p)
                    .filter(|j| !active.contains(j) && !boundary.contains(j))
                    .map(|j| psi[j].abs())
                    .sum();
                worst = worst.max(outside);
            }
            Ok((worst, informative))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LocalityReport {
        trials,
        max_outside_mass: per_trial.iter().map(|t| t.0).fold(0.0, f64::max),
        informative_trials: per_trial.iter().filter(|t| t.1).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationReport {
    pub rho: Vec<f64>,
    /// L1 distance between the contaminated and the pure regional attribution.
    pub bias: Vec<f64>,
    /// Least-squares slope of a line through the origin.
    pub slope: f64,
    /// Centred `R^2` of that line.
    pub r_squared: f64,
}

/// Replaces a fraction `rho` of the first-order model's `x_6 <= 0` cluster with
/// rows from the other regime and measures how far the regional attribution
/// moves. Oracle deltas, squared loss.
pub fn contamination_experiment(rho_grid: &[f64], n: usize, seed: u64) -> Result<ContaminationReport> {
    if rho_grid.is_empty() || rho_grid.iter().any(|r| !(0.0..=0.5).contains(r)) {
        return Err(Error::invalid("rho values must lie in [0, 0.5]"));
    }
    let model = SyntheticModel::new(ModelId::FirstOrder);
    let data = synthetic_rows(&model, n, seed)?;
    let repr = oracle_deltas(&model, &data, DeltaConvention::SquaredLoss, 1.0)?;
    let (a, b): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| model.region_label(data.row(i)) == 0);
    let na = a.len();
    if na == 0 || b.len() < (0.5 * na as f64).round() as usize {
        return Err(Error::invalid("sample too small for the contamination grid"));
    }
    let p = model.p();
    let mean_of = |rows: &[usize]| -> Vec<f64> {
        let mut m = vec![0.0; p];
        for &i in rows {
            for j in 0..p {
                m[j] += repr.deltas[[i, j]] / rows.len() as f64;
            }
        }
        m
    };
    let pure = mean_of(&a);
    let bias: Vec<f64> = rho_grid
        .iter()
        .map(|&rho| {
            let c = (rho * na as f64).round() as usize;
            let mut rows: Vec<usize> = a[c..].to_vec();
            rows.extend_from_slice(&b[..c]);
            mean_of(&rows).iter().zip(&pure).map(|(u, v)| (u - v).abs()).sum()
        })
        .collect();
    let sxy: f64 = rho_grid.iter().zip(&bias).map(|(r, b)| r * b).sum();
    let sxx: f64 = rho_grid.iter().map(|r| r * r).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let mean_b = bias.iter().sum::<f64>() / bias.len() as f64;
    let ss_tot: f64 = bias.iter().map(|b| (b - mean_b).powi(2)).sum();
    let ss_res: f64 = rho_grid.iter().zip(&bias).map(|(r, b)| (b - slope * r).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { f64::NAN };
    Ok(ContaminationReport { rho: rho_grid.to_vec(), bias, slope, r_squared })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub n: usize,
    pub seeds: Vec<u64>,
    pub base_purity: Vec<f64>,
    pub enriched_purity: Vec<f64>,
    pub base_median: f64,
    pub enriched_median: f64,
}

/// Majority-label purity of a clustering against true regimes.
pub fn purity(labels: &[usize], truth: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let t = truth.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; t]; k];
    for (&l, &r) in labels.iter().zip(truth) {
        counts[l][r] += 1;
    }
    counts.iter().map(|c| c.iter().copied().max().unwrap_or(0)).sum::<usize>() as f64 / labels.len() as f64
}

/// 2-means regime purity for `f = x_2 sgn(x_1)` in the squared-loss delta
/// space and in the space enriched with signed residuals. Oracle deltas.
pub fn counterexample_separability(n: usize, seeds: &[u64]) -> Result<SeparabilityReport> {
    if seeds.is_empty() {
        return Err(Error::invalid("at least one seed is required"));
    }
    let model = SyntheticModel::new(ModelId::SignCounterexample);
    let mut base = Vec::new();
    let mut enriched = Vec::new();
    for &s in seeds {
        let tree = SeedTree::new(s);
        let data = synthetic_rows(&model, n, tree.derive("data", 0))?;
        let truth: Vec<usize> = (0..n).map(|i| model.region_label(data.row(i))).collect();
        let repr = oracle_deltas(&model, &data, DeltaConvention::SquaredLoss, 1.0)?;
        let km_seed = tree.derive("kmeans", 0);
        base.push(purity(&kmeans(repr.deltas.view(), 2, 10, km_seed)?.labels, &truth));
        enriched.push(purity(&kmeans(repr.enriched()?.view(), 2, 10, km_seed)?.labels, &truth));
    }
    Ok(SeparabilityReport {
        n,
        seeds: seeds.to_vec(),
        base_median: crate::metrics::quantile(&base, 0.5),
        enriched_median: crate::metrics::quantile(&enriched, 0.5),
        base_purity: base,
        enriched_purity: enriched,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeSwitchReport {
    pub points: usize,
    /// LIME coefficient of `x_3` at each explained point (all with `x_6 < 0`).
    pub x3_coefficients: Vec<f64>,
    pub mean_abs_x3: f64,
    pub a4: f64,
    /// Points with at least one coefficient changing sign when the bandwidth is halved.
    pub points_with_sign_flip: usize,
    /// Fraction of all coefficients that changed sign.
    pub sign_flip_fraction: f64,
}

/// LIME on the switch model with `a = (0, 2, 0, 5)` at points where `x_6 < 0`.
pub fn lime_switch_study(points: usize, background_n: usize, seed: u64) -> Result<LimeSwitchReport> {
    let a = [0.0, 2.0, 0.0, 5.0];
    let model = switch_model(a);
    let tree = SeedTree::new(seed);
    let bx = sample_uniform(background_n, 6, tree.derive("background", 0));
    let by = ndarray::Array1::from_shape_fn(background_n, |i| model.eval_unchecked(bx.row(i).as_slice().expect("row")));
    let background = Dataset::from_rows(bx, by, Task::Regression)?;
    let mut q = sample_uniform(points, 6, tree.derive("points", 0));
    q.column_mut(5).mapv_inplace(|v| -v.abs().max(1e-9));
    let cfg = LimeConfig { seed: tree.derive("lime", 0), ..Default::default() }.resolve(&background)?;
    let results = (0..points)
        .into_par_iter()
        .map(|i| {
            let x = q.row(i).to_vec();
            let c = LimeConfig { seed: tree.derive("lime-point", i as u64), ..cfg };
            let e = explain_lime(&model, &background, &x, &c)?;
            let s = bandwidth_sensitivity(&model, &background, &x, &c)?;
            Ok((e.attribution.scores[2], s.sign_flip))
        })
        .collect::<Result<Vec<_>>>()?;
    let x3: Vec<f64> = results.iter().map(|r| r.0).collect();
    let flips: usize = results.iter().map(|r| r.1.iter().filter(|&&f| f).count()).sum();
    Ok(LimeSwitchReport {
        points,
        mean_abs_x3: x3.iter().map(|v| v.abs()).sum::<f64>() / points.max(1) as f64,
        x3_coefficients: x3,
        a4: a[3],
        points_with_sign_flip: results.iter().filter(|r| r.1.iter().any(|&f| f)).count(),
        sign_flip_fraction: flips as f64 / (6 * points).max(1) as f64,
    })
}
