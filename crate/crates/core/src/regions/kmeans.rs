//! Lloyd's algorithm with k-means++ seeding and restarts.

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed::SeedTree;

pub const DEFAULT_RESTARTS: usize = 10;
const MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Best of `restarts` k-means runs by inertia; earlier restarts win ties.
pub fn kmeans(data: ArrayView2<f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    let n = data.nrows();
    if k == 0 || n < k {
        return Err(Error::invalid(format!("kmeans needs 1 <= k <= n, got k = {k}, n = {n}")));
    }
    let data = data.as_standard_layout();
    let rows: Vec<&[f64]> = data.rows().into_iter().map(|r| r.to_slice().expect("row-major")).collect();
    let seeds = SeedTree::new(seed);
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let res = lloyd(&rows, data.ncols(), k, &mut seeds.rng("kmeans-restart", r as u64));
        if best.as_ref().is_none_or(|b| res.inertia < b.inertia) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, m) in centroids.iter().enumerate() {
        let d = sq_dist(m, x);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(rows: &[&[f64]], k: usize, rng: &mut crate::seed::Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centroids = vec![rows[rng.random_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = rows[pick].to_vec();
        for (d, r) in d2.iter_mut().zip(rows) {
            *d = d.min(sq_dist(r, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(rows: &[&[f64]], p: usize, k: usize, rng: &mut crate::seed::Rng) -> KMeansResult {
    let n = rows.len();
    let mut centroids = plus_plus(rows, k, rng);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_ITER {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, r) in rows.iter().enumerate() {
            let (c, d) = nearest(&centroids, r);
            dists[i] = d;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; p]; k];
        let mut counts = vec![0usize; k];
        for (i, r) in rows.iter().enumerate() {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i]].iter_mut().zip(r.iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an empty cluster at the point farthest from its centroid.
                let far = (0..n).max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a))).expect("n >= 1");
                centroids[c] = rows[far].to_vec();
                dists[far] = 0.0;
                changed = true;
            } else {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let mut inertia = 0.0;
    for (i, r) in rows.iter().enumerate() {
        let (c, d) = nearest(&centroids, r);
        labels[i] = c;
        inertia += d;
    }
    let flat: Vec<f64> = centroids.into_iter().flatten().collect();
    KMeansResult { labels, centroids: Array2::from_shape_vec((k, p), flat).expect("k x p"), inertia }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn separates_point_masses() {
        let x = array![[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [0.0, 0.0]];
        let r = kmeans(x.view(), 2, 10, 3).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert_eq!(r.labels[0], r.labels[1]);
        assert_eq!(r.labels[2], r.labels[3]);
        assert_ne!(r.labels[0], r.labels[2]);
    }

    #[test]
    fn rejects_too_many_clusters() {
        let x = array![[0.0], [1.0]];
        assert!(kmeans(x.view(), 3, 1, 0).is_err());
        assert!(kmeans(x.view(), 0, 1, 0).is_err());
    }

    #[test]
    fn more_restarts_never_hurt() {
        let x = crate::pwl::sample_uniform(300, 2, 1);
        let one = kmeans(x.view(), 5, 1, 4).unwrap();
        let ten = kmeans(x.view(), 5, 10, 4).unwrap();
        assert!(ten.inertia <= one.inertia);
    }
}
