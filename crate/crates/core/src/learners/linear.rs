use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Ordinary least squares with an intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Whether the diagonal jitter was needed.
    pub regularized: bool,
}

pub(crate) const RANK_JITTER: f64 = 1e-10;

impl LinearModel {
    /// Solves the centred normal equations by Cholesky, retrying with a
    /// `1e-10` diagonal when the Gram matrix is singular.
    pub fn fit(data: &Dataset) -> Result<Self> {
        let (n, p) = (data.n(), data.p());
        let x = data.features();
        let y = data.target();
        let x_mean: Vec<f64> = (0..p).map(|j| x.column(j).sum() / n as f64).collect();
        let y_mean = y.sum() / n as f64;
        let xc = DMatrix::from_fn(n, p, |i, j| x[[i, j]] - x_mean[j]);
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let gram = xc.transpose() * &xc;
        let rhs = xc.transpose() * yc;
        let (beta, regularized) = match gram.clone().cholesky() {
            Some(ch) if well_conditioned(&ch.l()) => (ch.solve(&rhs), false),
            _ => {
                let mut g = gram;
                for j in 0..p {
                    g[(j, j)] += RANK_JITTER;
                }
                let ch = g.cholesky().ok_or_else(|| Error::Singular("normal equations".into()))?;
                (ch.solve(&rhs), true)
            }
        };
        let coefficients: Vec<f64> = beta.iter().copied().collect();
        let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
        Ok(LinearModel { coefficients, intercept, regularized })
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

fn well_conditioned(l: &DMatrix<f64>) -> bool {
    let d: Vec<f64> = l.diagonal().iter().map(|v| v.abs()).collect();
    let max = d.iter().cloned().fold(0.0, f64::max);
    d.iter().all(|&v| v > 1e-7 * max.max(1e-300))
}

/// Weighted ridge regression with an unpenalised intercept.
///
/// Minimises `sum_i w_i (y_i - b - x_i . beta)^2 + penalty |beta|^2` over
/// row-major `x` with `p` columns. The problem is solved on weighted-centred
/// data through a Cholesky factorisation.
pub fn weighted_ridge(x: &[f64], p: usize, y: &[f64], w: &[f64], penalty: f64) -> Result<(Vec<f64>, f64)> {
    let n = y.len();
    crate::error::check_dim(n * p, x.len())?;
    crate::error::check_dim(n, w.len())?;
    if !(penalty >= 0.0 && penalty.is_finite()) {
        return Err(Error::invalid(format!("ridge penalty must be finite and >= 0, got {penalty}")));
    }
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0 && sw.is_finite()) {
        return Err(Error::Singular("all sample weights are zero".into()));
    }
    let mut xm = vec![0.0; p];
    let mut ym = 0.0;
    for i in 0..n {
        for j in 0..p {
            xm[j] += w[i] * x[i * p + j] / sw;
        }
        ym += w[i] * y[i] / sw;
    }
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        for j in 0..p {
            row[j] = x[i * p + j] - xm[j];
        }
        let yc = y[i] - ym;
        for a in 0..p {
            let wa = w[i] * row[a];
            rhs[a] += wa * yc;
            for b in 0..=a {
                gram[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
        gram[(a, a)] += penalty;
    }
    let ch = gram.cholesky().filter(|c| penalty > 0.0 || well_conditioned(&c.l())).ok_or_else(|| {
        Error::Singular("weighted design is singular; use a positive ridge penalty".into())
    })?;
    let beta: Vec<f64> = ch.solve(&rhs).iter().copied().collect();
    let intercept = ym - beta.iter().zip(&xm).map(|(b, m)| b * m).sum::<f64>();
    Ok((beta, intercept))
}
