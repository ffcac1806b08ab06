use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::Evaluator;
use crate::error::{check_dim, check_finite, Error, Result};

/// One side of a hyperrectangle: the set `lo < x <= hi`.
///
/// Infinite bounds are allowed. The upper bound is closed so that a switch
/// written as `1{x <= 0}` / `1{x > 0}` maps onto `(-inf, 0]` and `(0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const FULL: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::invalid(format!("empty interval ({lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn at_most(hi: f64) -> Self {
        Self { lo: f64::NEG_INFINITY, hi }
    }

    pub fn above(lo: f64) -> Self {
        Self { lo, hi: f64::INFINITY }
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x <= self.hi
    }

    pub fn is_full(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }

    /// Intersection with `[-1, 1]` as `(lo, hi)`, or `None` when it has no length.
    pub fn clipped(&self) -> Option<(f64, f64)> {
        let lo = self.lo.max(-1.0);
        let hi = self.hi.min(1.0);
        (hi > lo).then_some((lo, hi))
    }

    /// `P(X in I)` for `X ~ U[-1, 1]`.
    pub fn prob(&self) -> f64 {
        self.clipped().map_or(0.0, |(lo, hi)| (hi - lo) / 2.0)
    }

    /// `E[X 1{X in I}]` for `X ~ U[-1, 1]`: `(hi^2 - lo^2) / 4` on the clipped interval.
    pub fn partial_mean(&self) -> f64 {
        self.clipped().map_or(0.0, |(lo, hi)| (hi * hi - lo * lo) / 4.0)
    }

    fn overlaps(&self, other: &Interval) -> bool {
        self.lo.max(other.lo) < self.hi.min(other.hi)
    }
}

fn bound_to_json(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [bound_to_json(self.lo), bound_to_json(self.hi)].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [lo, hi] = <[Option<f64>; 2]>::deserialize(d)?;
        Interval::new(lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY))
            .map_err(D::Error::custom)
    }
}

/// `f(x) = sum_k (a_k . x + b_k) 1{x in A_k}` over disjoint hyperrectangles `A_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseLinearModel {
    regions: Vec<Vec<Interval>>,
    coefficients: Vec<Vec<f64>>,
    intercepts: Vec<f64>,
}

#[derive(Deserialize)]
struct RawModel {
    regions: Vec<Vec<Interval>>,
    coefficients: Vec<Vec<f64>>,
    intercepts: Vec<f64>,
}

impl<'de> Deserialize<'de> for PiecewiseLinearModel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawModel::deserialize(d)?;
        PiecewiseLinearModel::new(raw.regions, raw.coefficients, raw.intercepts).map_err(D::Error::custom)
    }
}

impl PiecewiseLinearModel {
    /// Validates shapes, finiteness, pairwise disjointness and coverage of `[-1, 1]^p`.
    pub fn new(
        regions: Vec<Vec<Interval>>,
        coefficients: Vec<Vec<f64>>,
        intercepts: Vec<f64>,
    ) -> Result<Self> {
        let m = regions.len();
        if m == 0 {
            return Err(Error::EmptyData("model needs at least one region".into()));
        }
        let p = regions[0].len();
        if p == 0 {
            return Err(Error::EmptyData("model needs at least one feature".into()));
        }
        check_dim(m, coefficients.len())?;
        check_dim(m, intercepts.len())?;
        check_finite(&intercepts, "intercepts")?;
        for (r, a) in regions.iter().zip(&coefficients) {
            check_dim(p, r.len())?;
            check_dim(p, a.len())?;
            check_finite(a, "coefficients")?;
            for iv in r {
                if iv.lo >= iv.hi || iv.lo.is_nan() || iv.hi.is_nan() {
                    return Err(Error::invalid("region has an empty interval"));
                }
            }
        }
        for k in 0..m {
            for l in k + 1..m {
                if regions[k].iter().zip(&regions[l]).all(|(a, b)| a.overlaps(b)) {
                    return Err(Error::invalid(format!("regions {k} and {l} overlap")));
                }
            }
        }
        // Disjoint, so coverage holds iff the clipped volumes add up to 2^p.
        let volume: f64 = regions.iter().map(|r| r.iter().map(Interval::prob).product::<f64>()).sum();
        if (volume - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "regions cover a fraction {volume} of [-1, 1]^p instead of all of it"
            )));
        }
        Ok(Self { regions, coefficients, intercepts })
    }

    /// Single region covering everything.
    pub fn linear(coefficients: Vec<f64>, intercept: f64) -> Result<Self> {
        let p = coefficients.len();
        Self::new(vec![vec![Interval::FULL; p]], vec![coefficients], vec![intercept])
    }

    pub fn p(&self) -> usize {
        self.regions[0].len()
    }

    pub fn m(&self) -> usize {
        self.regions.len()
    }

    pub fn region(&self, k: usize) -> &[Interval] {
        &self.regions[k]
    }

    pub fn coefficients(&self, k: usize) -> &[f64] {
        &self.coefficients[k]
    }

    pub fn intercept(&self, k: usize) -> f64 {
        self.intercepts[k]
    }

    pub fn in_region(&self, x: &[f64], k: usize) -> bool {
        self.regions[k].iter().zip(x).all(|(iv, &v)| iv.contains(v))
    }

    /// Index of the region containing `x`.
    pub fn region_of(&self, x: &[f64]) -> Option<usize> {
        (0..self.m()).find(|&k| self.in_region(x, k))
    }

    pub fn affine(&self, x: &[f64], k: usize) -> f64 {
        self.coefficients[k].iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + self.intercepts[k]
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.p(), x.len())?;
        Ok(self.eval_unchecked(x))
    }

    /// Zero outside every region, matching `sum_k f_k 1{A_k}`.
    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.region_of(x).map_or(0.0, |k| self.affine(x, k))
    }

    /// Features with a nonzero coefficient in region `k`.
    pub fn active_features(&self, k: usize) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.coefficients[k][j] != 0.0).collect()
    }

    /// Features whose interval is bounded in some region.
    pub fn boundary_features(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.regions.iter().any(|r| !r[j].is_full())).collect()
    }

    /// Random model on `p` features with `m` regions, built by recursively
    /// splitting a random region along a random axis inside `[-1, 1]`.
    /// Each coefficient is zero with probability `sparsity`.
    pub fn random<R: rand::Rng + ?Sized>(p: usize, m: usize, sparsity: f64, rng: &mut R) -> Result<Self> {
        if p == 0 || m == 0 {
            return Err(Error::EmptyData("random model needs p >= 1 and m >= 1".into()));
        }
        let mut regions = vec![vec![Interval::FULL; p]];
        while regions.len() < m {
            let k = rng.random_range(0..regions.len());
            let j = rng.random_range(0..p);
            let (lo, hi) = regions[k][j].clipped().expect("regions keep positive mass");
            let t = lo + (hi - lo) * rng.random_range(0.1..0.9);
            let mut upper = regions[k].clone();
            regions[k][j].hi = t;
            upper[j].lo = t;
            regions.push(upper);
        }
        let draw = |rng: &mut R| {
            if rng.random_bool(sparsity) {
                0.0
            } else {
                rng.random_range(-2.0..2.0)
            }
        };
        let coefficients = (0..m).map(|_| (0..p).map(|_| draw(rng)).collect()).collect();
        let intercepts = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self::new(regions, coefficients, intercepts)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl Evaluator for PiecewiseLinearModel {
    fn dim(&self) -> usize {
        self.p()
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        self.eval_unchecked(x)
    }
}
