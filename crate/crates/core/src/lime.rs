//! LIME in raw feature space, with the bandwidth and seed diagnostics.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionVector, Method};
use crate::data::{Dataset, Evaluator};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::learners::weighted_ridge;
use crate::seed::SeedTree;

/// Rows kept when estimating the median pairwise distance.
pub const MEDIAN_SUBSAMPLE: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    MedianHeuristic,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub num_samples: usize,
    pub bandwidth: Bandwidth,
    pub ridge_penalty: f64,
    pub seed: u64,
    /// Divide kernel distances by background column standard deviations.
    #[serde(default)]
    pub standardize: bool,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            num_samples: 1000,
            bandwidth: Bandwidth::MedianHeuristic,
            ridge_penalty: 1e-6,
            seed: 0,
            standardize: false,
        }
    }
}

impl LimeConfig {
    fn validate(&self, p: usize) -> Result<()> {
        if self.num_samples < p + 2 {
            return Err(Error::invalid(format!("num_samples must be >= p + 2 = {}", p + 2)));
        }
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
            }
        }
        if !(self.ridge_penalty >= 0.0 && self.ridge_penalty.is_finite()) {
            return Err(Error::invalid("ridge_penalty must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Copy with the median heuristic replaced by its value on `background`.
    pub fn resolve(&self, background: &Dataset) -> Result<LimeConfig> {
        let h = match self.bandwidth {
            Bandwidth::Fixed(h) => h,
            Bandwidth::MedianHeuristic => {
                let scale = if self.standardize { column_scales(background) } else { vec![1.0; background.p()] };
                median_distance(background, &scale, self.seed)?
            }
        };
        Ok(LimeConfig { bandwidth: Bandwidth::Fixed(h), ..*self })
    }
}

fn column_scales(data: &Dataset) -> Vec<f64> {
    let n = data.n() as f64;
    (0..data.p())
        .map(|j| {
            let c = data.features().column(j);
            let m = c.sum() / n;
            let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect()
}

/// Median of all pairwise Euclidean distances between rows.
///
/// Above 2000 rows a seeded subsample of 2000 rows is used.
pub fn median_bandwidth(data: &Dataset, seed: u64) -> Result<f64> {
    median_distance(data, &vec![1.0; data.p()], seed)
}

fn median_distance(data: &Dataset, scale: &[f64], seed: u64) -> Result<f64> {
    let n = data.n();
    if n < 2 {
        return Err(Error::EmptyData("median bandwidth needs at least two rows".into()));
    }
    let rows: Vec<usize> = if n > MEDIAN_SUBSAMPLE {
        let mut r = sample(&mut SeedTree::new(seed).rng("lime-median", 0), n, MEDIAN_SUBSAMPLE).into_vec();
        r.sort_unstable();
        r
    } else {
        (0..n).collect()
    };
    let mut d = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            let s: f64 = data
                .row(i)
                .iter()
                .zip(data.row(j))
                .zip(scale)
                .map(|((u, v), c)| ((u - v) / c).powi(2))
                .sum();
            d.push(s.sqrt());
        }
    }
    let m = d.len();
    let cmp = f64::total_cmp;
    let med = if m % 2 == 1 {
        *d.select_nth_unstable_by(m / 2, cmp).1
    } else {
        let hi = *d.select_nth_unstable_by(m / 2, cmp).1;
        let lo = d[..m / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    };
    if med <= 0.0 {
        return Err(Error::invalid("median pairwise distance is zero; all rows coincide"));
    }
    Ok(med)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeExplanation {
    pub attribution: AttributionVector,
    pub intercept: f64,
    pub bandwidth: f64,
}

/// Fits a locally weighted linear surrogate of `f` around `x`.
///
/// Perturbations resample each coordinate independently from its empirical
/// marginal in `background`; weights are `exp(-|z - x|^2 / h^2)`.
pub fn explain_lime<E: Evaluator + ?Sized>(
    f: &E,
    background: &Dataset,
    x: &[f64],
    cfg: &LimeConfig,
) -> Result<LimeExplanation> {
    let p = f.dim();
    check_dim(p, x.len())?;
    check_dim(p, background.p())?;
    check_finite(x, "x")?;
    cfg.validate(p)?;
    let cfg = cfg.resolve(background)?;
    let Bandwidth::Fixed(h) = cfg.bandwidth else { unreachable!() };
    let scale = if cfg.standardize { column_scales(background) } else { vec![1.0; p] };
    let n = background.n();
    let mut rng = SeedTree::new(cfg.seed).rng("lime-perturb", 0);
    let mut z = vec![0.0; cfg.num_samples * p];
    for row in z.chunks_exact_mut(p) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = background.row(rng.random_range(0..n))[j];
        }
    }
    let mut y = Vec::with_capacity(cfg.num_samples);
    let mut w = Vec::with_capacity(cfg.num_samples);
    for row in z.chunks_exact(p) {
        let d2: f64 = row.iter().zip(x).zip(&scale).map(|((a, b), c)| ((a - b) / c).powi(2)).sum();
        w.push((-d2 / (h * h)).exp());
        y.push(f.evaluate(row));
    }
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::Singular(format!("every kernel weight underflows at bandwidth {h}")));
    }
    let (beta, intercept) = weighted_ridge(&z, p, &y, &w, cfg.ridge_penalty)?;
    Ok(LimeExplanation { attribution: AttributionVector::new(beta, Method::Lime)?, intercept, bandwidth: h })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSensitivity {
    pub bandwidth: f64,
    pub coef_h: Vec<f64>,
    pub coef_half: Vec<f64>,
    /// `(L^h - L^{h/2}) / L^h`; `+inf` where `L^h` is exactly zero.
    pub relative_error: Vec<f64>,
    pub sign_flip: Vec<bool>,
}

impl BandwidthSensitivity {
    /// Mean absolute relative error over the finite entries.
    pub fn mean_abs_relative_error(&self) -> Option<f64> {
        let finite: Vec<f64> = self.relative_error.iter().filter(|v| v.is_finite()).map(|v| v.abs()).collect();
        (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64)
    }
}

/// Re-runs LIME at `h` and `h / 2` on the same perturbations.
pub fn bandwidth_sensitivity<E: Evaluator + ?Sized>(
    f: &E,
    background: &Dataset,
    x: &[f64],
    cfg: &LimeConfig,
) -> Result<BandwidthSensitivity> {
    let full = cfg.resolve(background)?;
    let Bandwidth::Fixed(h) = full.bandwidth else { unreachable!() };
    let half = LimeConfig { bandwidth: Bandwidth::Fixed(h / 2.0), ..full };
    let a = explain_lime(f, background, x, &full)?.attribution.scores;
    let b = explain_lime(f, background, x, &half)?.attribution.scores;
    let relative_error = a.iter().zip(&b).map(|(u, v)| if *u == 0.0 { f64::INFINITY } else { (u - v) / u }).collect();
    let sign_flip = a.iter().zip(&b).map(|(u, v)| u * v < 0.0).collect();
    Ok(BandwidthSensitivity { bandwidth: h, coef_h: a, coef_half: b, relative_error, sign_flip })
}

/// Per-feature sample standard deviation of LIME coefficients over `runs`
/// seeds derived from `cfg.seed`.
pub fn seed_instability<E: Evaluator + ?Sized>(
    f: &E,
    background: &Dataset,
    x: &[f64],
    cfg: &LimeConfig,
    runs: usize,
) -> Result<Vec<f64>> {
    let tree = SeedTree::new(cfg.seed);
    let seeds: Vec<u64> = (0..runs as u64).map(|r| tree.derive("lime-run", r)).collect();
    seed_instability_with_seeds(f, background, x, cfg, &seeds)
}

/// As [`seed_instability`] with explicit seeds.
pub fn seed_instability_with_seeds<E: Evaluator + ?Sized>(
    f: &E,
    background: &Dataset,
    x: &[f64],
    cfg: &LimeConfig,
    seeds: &[u64],
) -> Result<Vec<f64>> {
    if seeds.len() < 2 {
        return Err(Error::invalid("seed instability needs at least two runs"));
    }
    let resolved = cfg.resolve(background)?;
    let coefs = seeds
        .iter()
        .map(|&s| explain_lime(f, background, x, &LimeConfig { seed: s, ..resolved }).map(|e| e.attribution.scores))
        .collect::<Result<Vec<_>>>()?;
    let r = coefs.len() as f64;
    Ok((0..f.dim())
        .map(|j| {
            let m = coefs.iter().map(|c| c[j]).sum::<f64>() / r;
            (coefs.iter().map(|c| (c[j] - m).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
        })
        .collect())
}
