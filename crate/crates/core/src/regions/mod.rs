//! Regional attribution: cluster the calibration importance vectors, average
//! the deltas within each cluster, and route new points to a cluster.

pub mod affinity;
pub mod kmeans;
pub mod vtree;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionVector, Method};
use crate::conformity::ConformityScore;
use crate::data::Dataset;
use crate::error::{check_dim, check_finite, Error, Result};
use crate::learners::LearnerSpec;
use crate::loco::{delta_scores, fit_loco, ImportanceRepresentation, LocoModels};
use crate::seed::SeedTree;

pub use affinity::{affinity_propagation, AffinityParams, AffinityResult};
pub use kmeans::{kmeans, KMeansResult};
pub use vtree::VarianceTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterAlgorithm {
    #[serde(alias = "kmeans")]
    KMeans,
    #[serde(alias = "affinity")]
    AffinityPropagation,
    VarianceTree,
    /// Labels supplied by the caller, e.g. the true regions.
    OracleRegions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterSpace {
    /// The `p` deltas.
    Importance,
    /// The raw inputs.
    Input,
    /// Deltas followed by signed residuals, width `2p`.
    EnrichedImportance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    Euclidean,
    Manhattan,
}

impl DistanceMetric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceMetric::Euclidean => kmeans::sq_dist(a, b).sqrt(),
            DistanceMetric::Manhattan => a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentRule {
    /// Smallest total distance to the cluster's members.
    SumOfDistances,
    /// Smallest average distance to the cluster's members.
    MeanDistance,
    /// Closest member centroid.
    NearestCentroid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSpec {
    pub algorithm: ClusterAlgorithm,
    pub space: ClusterSpace,
    /// Number of clusters for k-means.
    pub k: usize,
    pub damping: f64,
    pub max_leaves: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec {
            algorithm: ClusterAlgorithm::AffinityPropagation,
            space: ClusterSpace::Importance,
            k: 4,
            damping: affinity::DEFAULT_DAMPING,
            max_leaves: 8,
            min_leaf: 20,
            seed: 0,
        }
    }
}

impl ClusterSpec {
    pub fn name(&self) -> String {
        match self.algorithm {
            ClusterAlgorithm::KMeans => format!("kmeans-{}", self.k),
            ClusterAlgorithm::AffinityPropagation => "affinity-propagation".into(),
            ClusterAlgorithm::VarianceTree => "variance-tree".into(),
            ClusterAlgorithm::OracleRegions => "oracle-regions".into(),
        }
    }
}

/// Labels plus whatever the algorithm produced on the side.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub labels: Vec<usize>,
    pub exemplars: Option<Vec<usize>>,
    pub tree: Option<VarianceTree>,
    pub flags: Vec<String>,
}

/// Clusters the rows of `space`. `oracle_labels` is required by, and only
/// used for, [`ClusterAlgorithm::OracleRegions`].
pub fn cluster(space: ArrayView2<f64>, spec: &ClusterSpec, oracle_labels: Option<&[usize]>) -> Result<Clustering> {
    let n = space.nrows();
    if n == 0 {
        return Err(Error::EmptyData("nothing to cluster".into()));
    }
    check_finite(space.as_standard_layout().as_slice().expect("standard layout"), "clustering space")?;
    let mut out = Clustering { labels: Vec::new(), exemplars: None, tree: None, flags: Vec::new() };
    match spec.algorithm {
        ClusterAlgorithm::KMeans => {
            out.labels = kmeans(space, spec.k, kmeans::DEFAULT_RESTARTS, spec.seed)?.labels;
        }
        ClusterAlgorithm::AffinityPropagation => {
            let params = AffinityParams { damping: spec.damping, seed: spec.seed, ..Default::default() };
            let r = affinity_propagation(space, &params)?;
            if r.converged {
                out.labels = r.labels;
                out.exemplars = Some(r.exemplars);
            } else {
                let k = r.exemplars.len().clamp(1, n);
                log::warn!("affinity propagation did not converge after {} iterations; using k-means with k = {k}", r.iterations);
                out.flags.push(format!("affinity-propagation-fallback-kmeans-{k}"));
                out.labels = kmeans(space, k, kmeans::DEFAULT_RESTARTS, spec.seed)?.labels;
            }
        }
        ClusterAlgorithm::VarianceTree => {
            let (tree, labels) = VarianceTree::fit(space, spec.max_leaves, spec.min_leaf)?;
            out.labels = labels;
            out.tree = Some(tree);
        }
        ClusterAlgorithm::OracleRegions => {
            let l = oracle_labels.ok_or_else(|| Error::invalid("oracle-regions needs externally supplied labels"))?;
            check_dim(n, l.len())?;
            out.labels = l.to_vec();
        }
    }
    Ok(out)
}

/// Per-cluster column means of `deltas`.
///
/// Labels are renumbered densely in order of first use of the original label
/// values; the returned count says how many label values in `0..=max` had no
/// members and were dropped.
pub fn regional_attributions(
    deltas: ArrayView2<f64>,
    labels: &[usize],
    method: &Method,
) -> Result<(Vec<usize>, Vec<AttributionVector>, usize)> {
    check_dim(deltas.nrows(), labels.len())?;
    if labels.is_empty() {
        return Err(Error::EmptyData("no labelled rows".into()));
    }
    let max = *labels.iter().max().expect("nonempty");
    let mut counts = vec![0usize; max + 1];
    labels.iter().for_each(|&l| counts[l] += 1);
    let mut remap = vec![usize::MAX; max + 1];
    let mut next = 0;
    for (l, &c) in counts.iter().enumerate() {
        if c > 0 {
            remap[l] = next;
            next += 1;
        }
    }
    let dropped = counts.len() - next;
    let new_labels: Vec<usize> = labels.iter().map(|&l| remap[l]).collect();
    let p = deltas.ncols();
    let mut sums = Array2::<f64>::zeros((next, p));
    let mut sizes = vec![0usize; next];
    for (row, &l) in deltas.axis_iter(Axis(0)).zip(&new_labels) {
        sizes[l] += 1;
        sums.row_mut(l).scaled_add(1.0, &row);
    }
    let attributions = (0..next)
        .map(|c| AttributionVector::new(sums.row(c).iter().map(|v| v / sizes[c] as f64).collect(), method.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok((new_labels, attributions, dropped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub region: usize,
    /// Regions tied exactly for the best score; the lowest was chosen.
    pub undecidable: Option<Vec<usize>>,
}

/// A partition of the calibration rows together with its regional attributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub spec: ClusterSpec,
    pub labels: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    pub attributions: Vec<AttributionVector>,
    /// Clustering-space coordinates of the calibration rows.
    pub snapshot: Array2<f64>,
    pub centroids: Array2<f64>,
    pub metric: DistanceMetric,
    pub rule: AssignmentRule,
    pub exemplars: Option<Vec<usize>>,
    pub tree: Option<VarianceTree>,
    pub flags: Vec<String>,
}

impl RegionPartition {
    /// Clusters `snapshot` and averages `deltas` per cluster.
    pub fn build(
        snapshot: Array2<f64>,
        deltas: ArrayView2<f64>,
        spec: &ClusterSpec,
        metric: DistanceMetric,
        rule: AssignmentRule,
        oracle_labels: Option<&[usize]>,
    ) -> Result<Self> {
        check_dim(snapshot.nrows(), deltas.nrows())?;
        let c = cluster(snapshot.view(), spec, oracle_labels)?;
        let method = Method::Rloco(spec.name());
        let (labels, attributions, dropped) = regional_attributions(deltas, &c.labels, &method)?;
        let mut flags = c.flags;
        if dropped > 0 {
            log::warn!("{dropped} empty clusters dropped");
            flags.push(format!("dropped-empty-clusters-{dropped}"));
        }
        let k = attributions.len();
        let mut members = vec![Vec::new(); k];
        labels.iter().enumerate().for_each(|(i, &l)| members[l].push(i));
        let dim = snapshot.ncols();
        let mut centroids = Array2::zeros((k, dim));
        for (c, m) in members.iter().enumerate() {
            for &i in m {
                centroids.row_mut(c).scaled_add(1.0 / m.len() as f64, &snapshot.row(i));
            }
        }
        Ok(RegionPartition {
            spec: *spec,
            labels,
            members,
            attributions,
            snapshot,
            centroids,
            metric,
            rule,
            exemplars: c.exemplars,
            tree: c.tree,
            flags,
        })
    }

    pub fn n_regions(&self) -> usize {
        self.attributions.len()
    }

    pub fn dim(&self) -> usize {
        self.snapshot.ncols()
    }

    /// Routes a clustering-space point to a region.
    pub fn assign(&self, z: &[f64]) -> Result<Assignment> {
        check_dim(self.dim(), z.len())?;
        check_finite(z, "query representation")?;
        let snap = self.snapshot.as_standard_layout();
        let scores: Vec<f64> = match self.rule {
            AssignmentRule::NearestCentroid => self
                .centroids
                .rows()
                .into_iter()
                .map(|c| self.metric.distance(&c.to_vec(), z))
                .collect(),
            AssignmentRule::SumOfDistances | AssignmentRule::MeanDistance => self
                .members
                .iter()
                .map(|m| {
                    let s: f64 = m.iter().map(|&i| self.metric.distance(snap.row(i).as_slice().expect("row"), z)).sum();
                    if self.rule == AssignmentRule::MeanDistance { s / m.len() as f64 } else { s }
                })
                .collect(),
        };
        let best = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let tied: Vec<usize> = (0..scores.len()).filter(|&c| scores[c] == best).collect();
        Ok(Assignment { region: tied[0], undecidable: (tied.len() > 1).then_some(tied) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlocoConfig {
    pub learner: LearnerSpec,
    pub cluster: ClusterSpec,
    pub assignment: AssignmentRule,
    pub metric: DistanceMetric,
    pub seed: u64,
}

impl Default for RlocoConfig {
    fn default() -> Self {
        RlocoConfig {
            learner: LearnerSpec::default(),
            cluster: ClusterSpec::default(),
            assignment: AssignmentRule::SumOfDistances,
            metric: DistanceMetric::Euclidean,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlocoExplanation {
    pub attribution: AttributionVector,
    pub region: usize,
    pub undecidable: Option<Vec<usize>>,
    /// False when the model's prediction stood in for the label.
    pub labelled: bool,
}

/// The fitted R-LOCO pipeline: LOCO models, calibration deltas and regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlocoPipeline {
    pub config: RlocoConfig,
    pub models: LocoModels,
    pub score: ConformityScore,
    pub calibration: ImportanceRepresentation,
    pub partition: RegionPartition,
}

impl RlocoPipeline {
    /// Fits LOCO models on `fit_data`, computes deltas on `calibration` and
    /// clusters them. `oracle_labels` label the calibration rows when the
    /// algorithm is [`ClusterAlgorithm::OracleRegions`].
    pub fn fit(
        fit_data: &Dataset,
        calibration: &Dataset,
        config: &RlocoConfig,
        oracle_labels: Option<&[usize]>,
    ) -> Result<Self> {
        check_dim(fit_data.p(), calibration.p())?;
        let models = fit_loco(fit_data, &config.learner, SeedTree::new(config.seed).derive("rloco-loco", 0))?;
        Self::from_models(models, calibration, config, oracle_labels)
    }

    /// Builds the pipeline around already fitted LOCO models, so several
    /// clustering variants can share one set of fits.
    pub fn from_models(
        models: LocoModels,
        calibration: &Dataset,
        config: &RlocoConfig,
        oracle_labels: Option<&[usize]>,
    ) -> Result<Self> {
        check_dim(models.p(), calibration.p())?;
        let seeds = SeedTree::new(config.seed);
        let score = models.default_score()?;
        let with_signed = config.cluster.space == ClusterSpace::EnrichedImportance;
        let repr = delta_scores(&models, calibration, &score, with_signed)?;
        let snapshot = match config.cluster.space {
            ClusterSpace::Importance => repr.deltas.clone(),
            ClusterSpace::Input => calibration.features().clone(),
            ClusterSpace::EnrichedImportance => repr.enriched()?,
        };
        let mut spec = config.cluster;
        spec.seed = seeds.derive("rloco-cluster", config.cluster.seed);
        let partition =
            RegionPartition::build(snapshot, repr.deltas.view(), &spec, config.metric, config.assignment, oracle_labels)?;
        Ok(RlocoPipeline { config: *config, models, score, calibration: repr, partition })
    }

    pub fn p(&self) -> usize {
        self.models.p()
    }

    pub fn n_regions(&self) -> usize {
        self.partition.n_regions()
    }

    /// Clustering-space representation of a query point.
    pub fn represent(&self, x: &[f64], y: Option<f64>) -> Result<(Vec<f64>, bool)> {
        check_dim(self.p(), x.len())?;
        match self.config.cluster.space {
            ClusterSpace::Input => {
                check_finite(x, "x")?;
                Ok((x.to_vec(), y.is_some()))
            }
            space => {
                let d = self.models.point_deltas(x, y, &self.score)?;
                let mut z = d.deltas;
                if space == ClusterSpace::EnrichedImportance {
                    z.extend(d.signed);
                }
                Ok((z, d.labelled))
            }
        }
    }

    /// Regional attribution for `x`. Without `y` the full model's prediction
    /// is used as the label (deployment mode).
    pub fn explain(&self, x: &[f64], y: Option<f64>) -> Result<RlocoExplanation> {
        if self.config.cluster.algorithm == ClusterAlgorithm::OracleRegions {
            return Err(Error::Unsupported("oracle regions need explain_in_region".into()));
        }
        let (z, labelled) = self.represent(x, y)?;
        let a = self.partition.assign(&z)?;
        Ok(RlocoExplanation {
            attribution: self.partition.attributions[a.region].clone(),
            region: a.region,
            undecidable: a.undecidable,
            labelled,
        })
    }

    /// Attribution of a region chosen by the caller.
    pub fn explain_in_region(&self, region: usize) -> Result<RlocoExplanation> {
        let attribution = self
            .partition
            .attributions
            .get(region)
            .ok_or_else(|| Error::invalid(format!("region {region} out of range 0..{}", self.n_regions())))?
            .clone();
        Ok(RlocoExplanation { attribution, region, undecidable: None, labelled: false })
    }

    /// Explains every row of `data`, using its labels when `labelled`.
    pub fn explain_dataset(&self, data: &Dataset, labelled: bool) -> Result<Vec<RlocoExplanation>> {
        check_dim(self.p(), data.p())?;
        (0..data.n())
            .into_par_iter()
            .map(|i| self.explain(data.row(i), labelled.then(|| data.y(i))))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::pwl::{generate, ModelId, SyntheticSpec};
    use ndarray::{array, Array1};

    #[test]
    fn regional_means_and_renumbering() {
        let d = array![[1.0, 0.0], [3.0, 0.0], [0.0, 2.0]];
        let (labels, attr, dropped) = regional_attributions(d.view(), &[2, 2, 5], &Method::Loco).unwrap();
        assert_eq!(labels, vec![0, 0, 1]);
        assert_eq!(dropped, 4);
        assert_eq!(attr[0].scores, vec![2.0, 0.0]);
        assert_eq!(attr[1].scores, vec![0.0, 2.0]);
    }

    #[test]
    fn sum_rule_reports_exact_ties() {
        let snap = array![[0.0], [2.0]];
        let spec = ClusterSpec { algorithm: ClusterAlgorithm::OracleRegions, ..Default::default() };
        let part = RegionPartition::build(
            snap.clone(),
            snap.view(),
            &spec,
            DistanceMetric::Euclidean,
            AssignmentRule::SumOfDistances,
            Some(&[0, 1]),
        )
        .unwrap();
        let a = part.assign(&[1.0]).unwrap();
        assert_eq!(a.region, 0);
        assert_eq!(a.undecidable, Some(vec![0, 1]));
        assert_eq!(part.assign(&[1.5]).unwrap(), Assignment { region: 1, undecidable: None });
    }

    #[test]
    fn sum_and_mean_rules_differ_with_unequal_sizes() {
        let snap = array![[0.0], [0.0], [0.0], [0.0], [3.0]];
        let spec = ClusterSpec { algorithm: ClusterAlgorithm::OracleRegions, ..Default::default() };
        let build = |rule| {
            RegionPartition::build(snap.clone(), snap.view(), &spec, DistanceMetric::Manhattan, rule, Some(&[0, 0, 0, 0, 1]))
                .unwrap()
        };
        assert_eq!(build(AssignmentRule::SumOfDistances).assign(&[1.0]).unwrap().region, 1);
        assert_eq!(build(AssignmentRule::MeanDistance).assign(&[1.0]).unwrap().region, 0);
        assert_eq!(build(AssignmentRule::NearestCentroid).assign(&[1.0]).unwrap().region, 0);
    }

    #[test]
    fn oracle_regions_require_labels() {
        let x = array![[0.0], [1.0]];
        let spec = ClusterSpec { algorithm: ClusterAlgorithm::OracleRegions, ..Default::default() };
        assert!(cluster(x.view(), &spec, None).is_err());
    }

    #[test]
    fn single_cluster_equals_global_loco() {
        let (data, _, _) = generate(&SyntheticSpec::new(ModelId::FirstOrder, 400, 3)).unwrap();
        let split = data.split(1).unwrap();
        let cfg = RlocoConfig {
            learner: LearnerSpec::RegressionTree { max_depth: Some(6), min_leaf: 5, seed: 0 },
            cluster: ClusterSpec { algorithm: ClusterAlgorithm::KMeans, k: 1, ..Default::default() },
            ..Default::default()
        };
        let pipe = RlocoPipeline::fit(&split.fit, &split.calibration, &cfg, None).unwrap();
        let global = crate::loco::global_psi(&pipe.calibration).unwrap();
        let e = pipe.explain(split.test.row(0), Some(split.test.y(0))).unwrap();
        assert_eq!(e.region, 0);
        for (a, b) in e.attribution.scores.iter().zip(&global.scores) {
            assert!((a - b).abs() < 1e-12);
        }
        let back = RlocoPipeline::from_json(&pipe.to_json().unwrap()).unwrap();
        assert_eq!(back.explain(split.test.row(0), None).unwrap(), pipe.explain(split.test.row(0), None).unwrap());
    }

    #[test]
    fn input_space_separates_regimes() {
        let n = 200;
        let x = crate::pwl::sample_uniform(n, 2, 9);
        let y = Array1::from_iter((0..n).map(|i| if x[[i, 0]] > 0.0 { x[[i, 1]] } else { 0.0 }));
        let data = Dataset::from_rows(x, y, Task::Regression).unwrap();
        let split = data.split(4).unwrap();
        let cfg = RlocoConfig {
            learner: LearnerSpec::KNearest { k: 5 },
            cluster: ClusterSpec { algorithm: ClusterAlgorithm::KMeans, k: 2, space: ClusterSpace::Input, ..Default::default() },
            assignment: AssignmentRule::NearestCentroid,
            ..Default::default()
        };
        let pipe = RlocoPipeline::fit(&split.fit, &split.calibration, &cfg, None).unwrap();
        assert_eq!(pipe.n_regions(), 2);
        assert_eq!(pipe.partition.dim(), 2);
    }
}
