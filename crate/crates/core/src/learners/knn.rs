use serde::{Deserialize, Serialize};

use crate::data::Dataset;

/// Brute-force k-nearest-neighbour regression in Euclidean distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KNearest {
    pub k: usize,
    pub p: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl KNearest {
    pub fn fit(data: &Dataset, k: usize) -> Self {
        KNearest {
            k,
            p: data.p(),
            x: data.features().iter().copied().collect(),
            y: data.target().to_vec(),
        }
    }

    /// Mean target of the `k` closest rows; distance ties go to the lower row index.
    pub fn predict_row(&self, q: &[f64]) -> f64 {
        let mut d: Vec<(f64, usize)> = self
            .x
            .chunks_exact(self.p)
            .enumerate()
            .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(d.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
        }
        d[..k].iter().map(|&(_, i)| self.y[i]).sum::<f64>() / k as f64
    }
}
