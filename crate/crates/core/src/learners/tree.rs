//! CART regression trees grown on presorted feature orders.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Node {
    Leaf { value: f64, weight: f64 },
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub p: usize,
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Indented `if x_j <= t` rendering.
    pub fn render(&self, names: &[String]) -> String {
        let mut out = String::new();
        self.render_node(0, 0, names, &mut out);
        out
    }

    fn render_node(&self, i: usize, depth: usize, names: &[String], out: &mut String) {
        let pad = "  ".repeat(depth);
        match self.nodes[i] {
            Node::Leaf { value, weight } => out.push_str(&format!("{pad}leaf value={value:.6} n={weight}\n")),
            Node::Split { feature, threshold, left, right } => {
                let name = names.get(feature).cloned().unwrap_or_else(|| format!("x{}", feature + 1));
                out.push_str(&format!("{pad}if {name} <= {threshold:.6}\n"));
                self.render_node(left, depth + 1, names, out);
                out.push_str(&format!("{pad}else\n"));
                self.render_node(right, depth + 1, names, out);
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GrowParams {
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    /// Features tried per split; all of them when `None`.
    pub mtry: Option<usize>,
}

/// Column-major copy of the features plus one global sort order per column.
pub struct Presorted {
    pub cols: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(data: &Dataset) -> Self {
        let n = data.n();
        let cols: Vec<Vec<f64>> = (0..data.p()).map(|j| data.features().column(j).to_vec()).collect();
        let order = cols
            .iter()
            .map(|c| {
                let mut o: Vec<u32> = (0..n as u32).collect();
                o.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                o
            })
            .collect();
        Presorted { cols, y: data.target().to_vec(), order }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Grows one tree on rows with positive integer weight (bootstrap counts).
pub fn grow(ps: &Presorted, weights: &[u32], params: GrowParams, rng: &mut Rng) -> RegressionTree {
    let p = ps.cols.len();
    let mut order: Vec<Vec<u32>> = ps
        .order
        .iter()
        .map(|o| o.iter().copied().filter(|&i| weights[i as usize] > 0).collect())
        .collect();
    let m = order.first().map_or(0, Vec::len);
    let mut goes_left = vec![false; ps.n()];
    let mut buf: Vec<u32> = Vec::with_capacity(m);
    let mut nodes: Vec<Node> = Vec::new();
    // (node index, start, end, depth)
    let mut stack = vec![(0usize, 0usize, m, 0usize)];
    nodes.push(Node::Leaf { value: 0.0, weight: 0.0 });
    while let Some((id, start, end, depth)) = stack.pop() {
        let rows = &order[0][start..end];
        let (mut sw, mut swy) = (0.0, 0.0);
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for &r in rows {
            let w = weights[r as usize] as f64;
            let y = ps.y[r as usize];
            sw += w;
            swy += w * y;
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        let value = swy / sw;
        let leaf = Node::Leaf { value, weight: sw };
        let depth_ok = params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || sw < 2.0 * params.min_leaf as f64 || y_max - y_min <= 1e-12 * (1.0 + y_max.abs()) {
            nodes[id] = leaf;
            continue;
        }
        let features: Vec<usize> = match params.mtry {
            Some(k) if k < p => {
                let mut f = sample(rng, p, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };
        let base = swy * swy / sw;
        let mut best: Option<Best> = None;
        for &f in &features {
            let col = &ps.cols[f];
            let seg = &order[f][start..end];
            let (mut lw, mut lwy) = (0.0, 0.0);
            for t in 0..seg.len() - 1 {
                let r = seg[t] as usize;
                let w = weights[r] as f64;
                lw += w;
                lwy += w * ps.y[r];
                let v = col[r];
                let next = col[seg[t + 1] as usize];
                if next <= v || lw < params.min_leaf as f64 {
                    continue;
                }
                let rw = sw - lw;
                if rw < params.min_leaf as f64 {
                    break;
                }
                let rwy = swy - lwy;
                let gain = lwy * lwy / lw + rwy * rwy / rw - base;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Best { feature: f, threshold: 0.5 * (v + next), gain });
                }
            }
        }
        let Some(best) = best.filter(|b| b.gain > 0.0) else {
            nodes[id] = leaf;
            continue;
        };
        let col = &ps.cols[best.feature];
        let mut n_left = 0;
        for &r in &order[0][start..end] {
            let l = col[r as usize] <= best.threshold;
            goes_left[r as usize] = l;
            n_left += usize::from(l);
        }
        for o in order.iter_mut() {
            buf.clear();
            let seg = &mut o[start..end];
            let mut w = 0;
            for i in 0..seg.len() {
                let r = seg[i];
                if goes_left[r as usize] {
                    seg[w] = r;
                    w += 1;
                } else {
                    buf.push(r);
                }
            }
            seg[w..].copy_from_slice(&buf);
        }
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { value, weight: 0.0 });
        nodes.push(Node::Leaf { value, weight: 0.0 });
        nodes[id] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        let mid = start + n_left;
        stack.push((right, mid, end, depth + 1));
        stack.push((left, start, mid, depth + 1));
    }
    RegressionTree { p, nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::seed::rng_from;
    use ndarray::{Array1, Array2};

    fn step_data() -> Dataset {
        let xs = [-1.0, -0.6, -0.2, 0.3, 0.5, 0.9];
        let x = Array2::from_shape_vec((6, 1), xs.to_vec()).unwrap();
        let y = Array1::from_iter(xs.iter().map(|&v| f64::from(u8::from(v > 0.0))));
        Dataset::from_rows(x, y, Task::Regression).unwrap()
    }

    #[test]
    fn single_split_fits_step() {
        let d = step_data();
        let ps = Presorted::new(&d);
        let t = grow(&ps, &[1; 6], GrowParams { min_leaf: 1, max_depth: Some(2), mtry: None }, &mut rng_from(0));
        for i in 0..6 {
            assert_eq!(t.predict_row(d.row(i)), d.y(i));
        }
        assert_eq!(t.n_leaves(), 2);
        match t.nodes[0] {
            Node::Split { threshold, .. } => assert!((threshold - 0.05).abs() < 1e-12),
            _ => panic!("root should split"),
        }
    }

    #[test]
    fn ties_go_to_lowest_feature() {
        // Two identical columns: the split must use column 0.
        let x = Array2::from_shape_fn((8, 2), |(i, _)| i as f64);
        let y = Array1::from_iter((0..8).map(|i| f64::from(u8::from(i >= 4))));
        let d = Dataset::from_rows(x, y, Task::Regression).unwrap();
        let t = grow(&Presorted::new(&d), &[1; 8], GrowParams { min_leaf: 1, max_depth: None, mtry: None }, &mut rng_from(0));
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn respects_min_leaf() {
        let d = step_data();
        let t = grow(&Presorted::new(&d), &[1; 6], GrowParams { min_leaf: 4, max_depth: None, mtry: None }, &mut rng_from(0));
        assert_eq!(t.n_leaves(), 1);
        assert!((t.predict_row(&[0.0]) - 0.5).abs() < 1e-15);
    }
}
