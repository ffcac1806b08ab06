//! Masking fidelity: how much the error changes when the highest or lowest
//! ranked features of each row are replaced.

use serde::{Deserialize, Serialize};

use crate::attribution::normalize;
use crate::data::{Dataset, Evaluator, Task};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingCurve {
    pub method: String,
    pub k: Vec<usize>,
    /// `AvgError_original - AvgError_masked` with the top-k features set to zero.
    pub top_change: Vec<f64>,
    pub bottom_change: Vec<f64>,
    /// Same with column means instead of zeros; reported separately.
    pub top_change_mean_mask: Vec<f64>,
    pub bottom_change_mean_mask: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingReport {
    pub baseline_error: f64,
    pub curves: Vec<MaskingCurve>,
}

impl MaskingReport {
    pub fn curve(&self, method: &str) -> Option<&MaskingCurve> {
        self.curves.iter().find(|c| c.method == method)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("Method\tk\tTop change\tBottom change\tTop change (mean mask)\tBottom change (mean mask)\n");
        for c in &self.curves {
            for i in 0..c.k.len() {
                out.push_str(&format!(
                    "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
                    c.method, c.k[i], c.top_change[i], c.bottom_change[i], c.top_change_mean_mask[i], c.bottom_change_mean_mask[i]
                ));
            }
        }
        out
    }
}

fn row_error(task: Task, pred: f64, y: f64) -> f64 {
    match task {
        Task::Regression => (pred - y).abs(),
        Task::BinaryClassification => f64::from(u8::from((pred >= 0.5) != (y >= 0.5))),
    }
}

/// Ranks features by normalised magnitude; largest first, ties to the lower index.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let v = normalize(scores).values;
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx
}

/// Bottom-k takes the `k` smallest, ties again to the lower index.
fn bottom(scores: &[f64], k: usize) -> Vec<usize> {
    let v = normalize(scores).values;
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// `attributions[m]` holds one score vector per row of `data` for method `m`.
pub fn mask_eval<E: Evaluator + ?Sized>(
    data: &Dataset,
    predictor: &E,
    attributions: &[(String, Vec<Vec<f64>>)],
    k_grid: &[usize],
) -> Result<MaskingReport> {
    let (n, p) = (data.n(), data.p());
    check_dim(predictor.dim(), p)?;
    if let Some(&k) = k_grid.iter().find(|&&k| k > p) {
        return Err(Error::invalid(format!("k = {k} exceeds p = {p}")));
    }
    let means: Vec<f64> = (0..p).map(|j| data.features().column(j).sum() / n as f64).collect();
    let errors: Vec<f64> = (0..n).map(|i| row_error(data.task(), predictor.evaluate(data.row(i)), data.y(i))).collect();
    let baseline_error = errors.iter().sum::<f64>() / n as f64;
    let mut curves = Vec::with_capacity(attributions.len());
    for (name, scores) in attributions {
        check_dim(n, scores.len())?;
        let mut curve = MaskingCurve {
            method: name.clone(),
            k: k_grid.to_vec(),
            top_change: Vec::new(),
            bottom_change: Vec::new(),
            top_change_mean_mask: Vec::new(),
            bottom_change_mean_mask: Vec::new(),
        };
        let ranks = scores
            .iter()
            .map(|s| {
                check_dim(p, s.len())?;
                Ok(ranking(s))
            })
            .collect::<Result<Vec<_>>>()?;
        for &k in k_grid {
            let mut sums = [0.0f64; 4];
            let mut buf = vec![0.0; p];
            for i in 0..n {
                let sets = [&ranks[i][..k], &bottom(&scores[i], k)[..]];
                for (s, set) in sets.iter().enumerate() {
                    for (slot, fill) in [(s, None), (s + 2, Some(&means))] {
                        if set.is_empty() {
                            sums[slot] += errors[i];
                            continue;
                        }
                        buf.copy_from_slice(data.row(i));
                        for &j in set.iter() {
                            buf[j] = fill.map_or(0.0, |m| m[j]);
                        }
                        sums[slot] += row_error(data.task(), predictor.evaluate(&buf), data.y(i));
                    }
                }
            }
            let change = |s: f64| baseline_error - s / n as f64;
            curve.top_change.push(change(sums[0]));
            curve.bottom_change.push(change(sums[1]));
            curve.top_change_mean_mask.push(change(sums[2]));
            curve.bottom_change_mean_mask.push(change(sums[3]));
        }
        curves.push(curve);
    }
    Ok(MaskingReport { baseline_error, curves })
}
