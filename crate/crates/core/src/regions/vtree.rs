//! Best-first variance-reduction tree over the clustering space.
//!
//! Each split is a threshold on one coordinate and is chosen to minimise the
//! summed within-child squared error of the full vectors. Leaves are the
//! clusters.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { cluster: usize, size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTree {
    pub nodes: Vec<VNode>,
    pub n_leaves: usize,
}

struct Candidate {
    node: usize,
    rows: Vec<usize>,
    gain: f64,
    split: Option<Split>,
}

/// Feature, threshold, left rows, right rows.
type Split = (usize, f64, Vec<usize>, Vec<usize>);

fn best_split(data: &ArrayView2<f64>, rows: &[usize], min_leaf: usize) -> (f64, Option<Split>) {
    let dim = data.ncols();
    let n = rows.len();
    if n < 2 * min_leaf {
        return (0.0, None);
    }
    let mut tot_s = vec![0.0; dim];
    let mut tot_q = 0.0;
    for &i in rows {
        for d in 0..dim {
            let v = data[[i, d]];
            tot_s[d] += v;
            tot_q += v * v;
        }
    }
    let sse = |s: &[f64], q: f64, m: usize| q - s.iter().map(|v| v * v).sum::<f64>() / m as f64;
    let parent = sse(&tot_s, tot_q, n);
    let mut best: (f64, Option<(usize, f64)>) = (0.0, None);
    let mut order = rows.to_vec();
    for f in 0..dim {
        order.sort_by(|&a, &b| data[[a, f]].total_cmp(&data[[b, f]]).then(a.cmp(&b)));
        let mut ls = vec![0.0; dim];
        let mut lq = 0.0;
        for (pos, &i) in order.iter().enumerate().take(n - 1) {
            for d in 0..dim {
                let v = data[[i, d]];
                ls[d] += v;
                lq += v * v;
            }
            let left = pos + 1;
            let (a, b) = (data[[i, f]], data[[order[pos + 1], f]]);
            if left < min_leaf || n - left < min_leaf || a == b {
                continue;
            }
            let rs: Vec<f64> = tot_s.iter().zip(&ls).map(|(t, l)| t - l).collect();
            let gain = parent - sse(&ls, lq, left) - sse(&rs, tot_q - lq, n - left);
            if gain > best.0 + 1e-12 * parent.abs().max(1e-300) {
                best = (gain, Some((f, a + (b - a) / 2.0)));
            }
        }
    }
    match best.1 {
        Some((f, t)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| data[[i, f]] <= t);
            (best.0, Some((f, t, l, r)))
        }
        None => (0.0, None),
    }
}

impl VarianceTree {
    /// Grows until `max_leaves` leaves exist or no admissible split reduces the error.
    pub fn fit(data: ArrayView2<f64>, max_leaves: usize, min_leaf: usize) -> Result<(Self, Vec<usize>)> {
        let n = data.nrows();
        if n == 0 {
            return Err(Error::EmptyData("variance tree on zero rows".into()));
        }
        if max_leaves == 0 || min_leaf == 0 {
            return Err(Error::invalid("max_leaves and min_leaf must be positive"));
        }
        let mut nodes = vec![VNode::Leaf { cluster: 0, size: n }];
        let all: Vec<usize> = (0..n).collect();
        let (gain, split) = best_split(&data, &all, min_leaf);
        let mut open = vec![Candidate { node: 0, rows: all, gain, split }];
        let mut done: Vec<(usize, Vec<usize>)> = Vec::new();
        while open.len() + done.len() < max_leaves {
            // Largest gain first, earliest node on ties.
            let pick = open
                .iter()
                .enumerate()
                .filter(|(_, c)| c.split.is_some())
                .max_by(|(_, a), (_, b)| a.gain.total_cmp(&b.gain).then(b.node.cmp(&a.node)))
                .map(|(i, _)| i);
            let Some(i) = pick else { break };
            let c = open.swap_remove(i);
            let (feature, threshold, l, r) = c.split.expect("filtered");
            let (li, ri) = (nodes.len(), nodes.len() + 1);
            nodes.push(VNode::Leaf { cluster: 0, size: l.len() });
            nodes.push(VNode::Leaf { cluster: 0, size: r.len() });
            nodes[c.node] = VNode::Split { feature, threshold, left: li, right: ri };
            for (node, rows) in [(li, l), (ri, r)] {
                let (gain, split) = best_split(&data, &rows, min_leaf);
                open.push(Candidate { node, rows, gain, split });
            }
        }
        done.extend(open.into_iter().map(|c| (c.node, c.rows)));
        done.sort_by_key(|(node, _)| *node);
        let mut labels = vec![0; n];
        for (cluster, (node, rows)) in done.iter().enumerate() {
            nodes[*node] = VNode::Leaf { cluster, size: rows.len() };
            for &i in rows {
                labels[i] = cluster;
            }
        }
        let n_leaves = done.len();
        Ok((VarianceTree { nodes, n_leaves }, labels))
    }

    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                VNode::Leaf { cluster, .. } => return *cluster,
                VNode::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Indented if/else listing of the split rules.
    pub fn render(&self, names: &[String]) -> String {
        let mut out = String::new();
        self.render_node(0, 0, names, &mut out);
        out
    }

    fn render_node(&self, at: usize, depth: usize, names: &[String], out: &mut String) {
        let pad = "  ".repeat(depth);
        match &self.nodes[at] {
            VNode::Leaf { cluster, size } => out.push_str(&format!("{pad}region {cluster} (n = {size})\n")),
            VNode::Split { feature, threshold, left, right } => {
                let name = names.get(*feature).cloned().unwrap_or_else(|| format!("c{feature}"));
                out.push_str(&format!("{pad}if {name} <= {threshold:.6}\n"));
                self.render_node(*left, depth + 1, names, out);
                out.push_str(&format!("{pad}else\n"));
                self.render_node(*right, depth + 1, names, out);
            }
        }
    }
}
