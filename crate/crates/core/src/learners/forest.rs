use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, GrowParams, Presorted, RegressionTree};
use crate::data::Dataset;
use crate::seed::SeedTree;

/// Bagged regression trees with per-split feature subsampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<RegressionTree>,
}

impl RandomForest {
    pub fn fit(data: &Dataset, n_trees: usize, params: GrowParams, seed: u64) -> Self {
        let ps = Presorted::new(data);
        let n = data.n();
        let seeds = SeedTree::new(seed);
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seeds.rng("tree", t as u64);
                let mut counts = vec![0u32; n];
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1;
                }
                grow(&ps, &counts, params, &mut rng)
            })
            .collect();
        RandomForest { trees }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }
}
