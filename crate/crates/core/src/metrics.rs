//! Top-k ranking metrics against known local importance sets.

use serde::{Deserialize, Serialize};

use crate::attribution::normalize;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub tp_rate: f64,
    pub fp_rate: f64,
    pub ni_mean: f64,
    pub ni_q10: f64,
    pub ni_q95: f64,
    /// Observations scored.
    pub n_obs: usize,
    /// Observations whose attribution was all zero.
    pub n_degenerate: usize,
}

/// Indices of the `k` largest values outside `excluded`, ties to the lowest index.
pub fn top_k(values: &[f64], k: usize, excluded: &[usize]) -> Result<Vec<usize>> {
    let mut cand: Vec<usize> = (0..values.len()).filter(|j| !excluded.contains(j)).collect();
    if k > cand.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {} rankable features",
            cand.len()
        )));
    }
    cand.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    cand.truncate(k);
    Ok(cand)
}

/// Linear-interpolation quantile between order statistics (numpy's default).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Scores each observation's top-k against its truth set.
///
/// `scores[i]` is observation i's raw attribution. Features in `excluded` are
/// never ranked and never count as non-important. TP is averaged over
/// observations; NI statistics are taken over per-observation mean NI mass.
pub fn ranking_metrics(
    scores: &[Vec<f64>],
    truth_sets: &[Vec<usize>],
    k: usize,
    excluded: &[usize],
) -> Result<RankingMetrics> {
    check_dim(scores.len(), truth_sets.len())?;
    if scores.is_empty() {
        return Err(Error::EmptyData("no attributions to score".into()));
    }
    let p = scores[0].len();
    let mut tp_sum = 0.0;
    let mut ni = Vec::with_capacity(scores.len());
    let mut n_degenerate = 0;
    for (s, truth) in scores.iter().zip(truth_sets) {
        check_dim(p, s.len())?;
        if truth.len() != k {
            return Err(Error::invalid(format!(
                "truth set has {} features but k = {k}",
                truth.len()
            )));
        }
        let norm = normalize(s);
        if norm.degenerate {
            n_degenerate += 1;
        }
        let top = top_k(&norm.values, k, excluded)?;
        let hits = top.iter().filter(|j| truth.contains(j)).count();
        tp_sum += hits as f64 / k as f64;
        let others: Vec<f64> = (0..p)
            .filter(|j| !truth.contains(j) && !excluded.contains(j))
            .map(|j| norm.values[j])
            .collect();
        if !others.is_empty() {
            ni.push(others.iter().sum::<f64>() / others.len() as f64);
        }
    }
    let tp_rate = tp_sum / scores.len() as f64;
    ni.sort_by(f64::total_cmp);
    let ni_mean = if ni.is_empty() { 0.0 } else { ni.iter().sum::<f64>() / ni.len() as f64 };
    Ok(RankingMetrics {
        tp_rate,
        fp_rate: 1.0 - tp_rate,
        ni_mean,
        ni_q10: if ni.is_empty() { 0.0 } else { quantile_sorted(&ni, 0.10) },
        ni_q95: if ni.is_empty() { 0.0 } else { quantile_sorted(&ni, 0.95) },
        n_obs: scores.len(),
        n_degenerate,
    })
}

/// Mean across runs of every field.
pub fn mean_metrics(runs: &[RankingMetrics]) -> Option<RankingMetrics> {
    if runs.is_empty() {
        return None;
    }
    let r = runs.len() as f64;
    let avg = |f: fn(&RankingMetrics) -> f64| runs.iter().map(f).sum::<f64>() / r;
    let tp_rate = avg(|m| m.tp_rate);
    Some(RankingMetrics {
        tp_rate,
        fp_rate: 1.0 - tp_rate,
        ni_mean: avg(|m| m.ni_mean),
        ni_q10: avg(|m| m.ni_q10),
        ni_q95: avg(|m| m.ni_q95),
        n_obs: runs.iter().map(|m| m.n_obs).sum(),
        n_degenerate: runs.iter().map(|m| m.n_degenerate).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_attribution() {
        let scores = vec![vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.3], vec![0.0, 0.0, 2.0, 1.0, 0.0, 9.0]];
        let truth = vec![vec![0, 1], vec![2, 3]];
        let m = ranking_metrics(&scores, &truth, 2, &[5]).unwrap();
        assert_eq!(m.tp_rate, 1.0);
        assert_eq!(m.fp_rate, 0.0);
    }

    #[test]
    fn random_ranking_matches_combinatorial_oracle() {
        // Every ordering of 5 rankable features with equal weight: expected tp = 2/5.
        let mut scores = Vec::new();
        let mut truth = Vec::new();
        let perms = permutations(5);
        for perm in &perms {
            let mut s = vec![0.0; 6];
            for (rank, &j) in perm.iter().enumerate() {
                s[j] = (5 - rank) as f64;
            }
            s[5] = 100.0;
            scores.push(s);
            truth.push(vec![0, 1]);
        }
        let m = ranking_metrics(&scores, &truth, 2, &[5]).unwrap();
        assert!((m.tp_rate - 0.4).abs() < 1e-12);
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn ties_break_to_lowest_index() {
        assert_eq!(top_k(&[0.2, 0.4, 0.4, 0.0], 1, &[]).unwrap(), vec![1]);
        assert_eq!(top_k(&[0.2, 0.4, 0.4, 0.0], 1, &[1]).unwrap(), vec![2]);
        assert!(top_k(&[0.2, 0.4], 2, &[0]).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert!((quantile(&v, 0.1) - 1.4).abs() < 1e-12);
        assert!((quantile(&v, 0.95) - 4.8).abs() < 1e-12);
    }

    #[test]
    fn ni_excludes_truth_and_switch() {
        let scores = vec![vec![1.0, 1.0, 1.0, 1.0]];
        let m = ranking_metrics(&scores, &[vec![0]], 1, &[3]).unwrap();
        assert!((m.ni_mean - 0.25).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn tp_fp_sum_to_one_and_scale_invariant(
            raw in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 1..20),
            a in 0.1f64..10.0,
        ) {
            let truth: Vec<Vec<usize>> = raw.iter().map(|r| if r[5] <= 0.0 { vec![0, 1] } else { vec![2, 3] }).collect();
            let m = ranking_metrics(&raw, &truth, 2, &[5]).unwrap();
            prop_assert!((m.tp_rate + m.fp_rate - 1.0).abs() < 1e-15);
            prop_assert!(m.ni_q10 <= m.ni_q95);
            let scaled: Vec<Vec<f64>> = raw.iter().map(|r| r.iter().map(|v| (a * v.abs()).powi(3)).collect()).collect();
            let m2 = ranking_metrics(&scaled, &truth, 2, &[5]).unwrap();
            prop_assert_eq!(m.tp_rate, m2.tp_rate);
        }
    }
}
