//! Affinity propagation on negative squared Euclidean similarities.
//!
//! The preference is the median off-diagonal similarity. A tiny
//! deterministic perturbation breaks ties between identical similarities;
//! it is derived from the seed and the contents of both rows, so the
//! resulting partition does not depend on the order of the input rows.
//! Clusters are numbered by the lexicographic order of their exemplars.

use ndarray::ArrayView2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::quantile;

use super::kmeans::sq_dist;

pub const DEFAULT_DAMPING: f64 = 0.8;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_CONVERGENCE_ITER: usize = 15;
const NOISE_SCALE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityResult {
    pub labels: Vec<usize>,
    /// Row index of each cluster's exemplar.
    pub exemplars: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityParams {
    pub damping: f64,
    pub max_iter: usize,
    pub convergence_iter: usize,
    /// `None` uses the median similarity.
    pub preference: Option<f64>,
    pub seed: u64,
}

impl Default for AffinityParams {
    fn default() -> Self {
        AffinityParams {
            damping: DEFAULT_DAMPING,
            max_iter: DEFAULT_MAX_ITER,
            convergence_iter: DEFAULT_CONVERGENCE_ITER,
            preference: None,
            seed: 0,
        }
    }
}

fn row_hash(seed: u64, row: &[f64]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for v in row {
        // Normalise -0.0 so equal rows hash equally.
        h.update((v + 0.0).to_bits().to_le_bytes());
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// Uniform in [-0.5, 0.5) from a pair of row hashes.
fn pair_noise(a: u64, b: u64) -> f64 {
    let mut z = a ^ b.rotate_left(29) ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

pub fn affinity_propagation(data: ArrayView2<f64>, params: &AffinityParams) -> Result<AffinityResult> {
    let n = data.nrows();
    if n == 0 {
        return Err(Error::EmptyData("affinity propagation on zero rows".into()));
    }
    if !(params.damping >= 0.5 && params.damping < 1.0) {
        return Err(Error::invalid(format!("damping must lie in [0.5, 1), got {}", params.damping)));
    }
    if params.convergence_iter == 0 || params.max_iter == 0 {
        return Err(Error::invalid("iteration counts must be positive"));
    }
    let data = data.as_standard_layout();
    let rows: Vec<&[f64]> = data.rows().into_iter().map(|r| r.to_slice().expect("row-major")).collect();
    if n == 1 {
        return Ok(AffinityResult { labels: vec![0], exemplars: vec![0], converged: true, iterations: 0 });
    }

    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            s[i * n + k] = -sq_dist(rows[i], rows[k]);
        }
    }
    let preference = match params.preference {
        Some(v) => v,
        None => {
            let off: Vec<f64> = (0..n).flat_map(|i| (0..n).filter(move |&k| k != i).map(move |k| (i, k)))
                .map(|(i, k)| s[i * n + k])
                .collect();
            quantile(&off, 0.5)
        }
    };
    for i in 0..n {
        s[i * n + i] = preference;
    }
    let hashes: Vec<u64> = rows.iter().map(|r| row_hash(params.seed, r)).collect();
    for i in 0..n {
        for k in 0..n {
            let v = s[i * n + k];
            s[i * n + k] = v + NOISE_SCALE * (v.abs() + 1e-300) * pair_noise(hashes[i], hashes[k]);
        }
    }

    let d = params.damping;
    let mut r = vec![0.0; n * n];
    let mut a = vec![0.0; n * n];
    let mut history = vec![vec![false; n]; params.convergence_iter];
    let mut colsum = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;
    let mut exemplar = vec![false; n];
    for it in 0..params.max_iter {
        iterations = it + 1;
        // Responsibilities.
        for i in 0..n {
            let (si, ai) = (&s[i * n..(i + 1) * n], &a[i * n..(i + 1) * n]);
            let (mut best, mut second, mut arg) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
            for k in 0..n {
                let v = ai[k] + si[k];
                if v > best {
                    second = best;
                    best = v;
                    arg = k;
                } else if v > second {
                    second = v;
                }
            }
            let ri = &mut r[i * n..(i + 1) * n];
            for k in 0..n {
                let target = si[k] - if k == arg { second } else { best };
                ri[k] = d * ri[k] + (1.0 - d) * target;
            }
        }
        // Availabilities.
        colsum.iter_mut().for_each(|c| *c = 0.0);
        for i in 0..n {
            for k in 0..n {
                let v = r[i * n + k];
                colsum[k] += if i == k { v } else { v.max(0.0) };
            }
        }
        for i in 0..n {
            for k in 0..n {
                let rik = r[i * n + k];
                let target = if i == k {
                    colsum[k] - rik
                } else {
                    (colsum[k] - rik.max(0.0)).min(0.0)
                };
                a[i * n + k] = d * a[i * n + k] + (1.0 - d) * target;
            }
        }
        for k in 0..n {
            exemplar[k] = a[k * n + k] + r[k * n + k] > 0.0;
        }
        history[it % params.convergence_iter].clone_from(&exemplar);
        if it + 1 >= params.convergence_iter {
            let stable = (0..n).all(|k| {
                let c = history.iter().filter(|h| h[k]).count();
                c == 0 || c == params.convergence_iter
            });
            if stable && exemplar.iter().any(|&e| e) {
                converged = true;
                break;
            }
        }
    }

    let mut ex: Vec<usize> = (0..n).filter(|&k| exemplar[k]).collect();
    if !converged || ex.is_empty() {
        return Ok(AffinityResult { labels: Vec::new(), exemplars: ex, converged: false, iterations });
    }
    let assign = |ex: &[usize]| -> Vec<usize> {
        (0..n)
            .map(|i| {
                if let Some(c) = ex.iter().position(|&e| e == i) {
                    return c;
                }
                let mut best = (0, f64::NEG_INFINITY);
                for (c, &e) in ex.iter().enumerate() {
                    if s[i * n + e] > best.1 {
                        best = (c, s[i * n + e]);
                    }
                }
                best.0
            })
            .collect()
    };
    // Refine each exemplar to the member maximising total similarity.
    let labels = assign(&ex);
    for (c, e) in ex.iter_mut().enumerate() {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        let mut best = (*e, f64::NEG_INFINITY);
        for &j in &members {
            let tot: f64 = members.iter().map(|&i| s[i * n + j]).sum();
            if tot > best.1 {
                best = (j, tot);
            }
        }
        *e = best.0;
    }
    ex.sort_unstable();
    ex.dedup();
    ex.sort_by(|&x, &y| {
        rows[x].iter().zip(rows[y]).map(|(u, v)| u.total_cmp(v)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let labels = assign(&ex);
    Ok(AffinityResult { labels, exemplars: ex, converged: true, iterations })
}
