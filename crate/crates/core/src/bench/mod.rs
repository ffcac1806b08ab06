//! Experiment harness: the synthetic ranking benchmark, verification suites
//! and masking evaluation.

pub mod masking;
pub mod verify;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::LearnerSpec;
use crate::lime::{explain_lime, LimeConfig};
use crate::loco::{fit_loco, global_psi, LocoModels};
use crate::metrics::{mean_metrics, ranking_metrics, RankingMetrics};
use crate::pwl::{generate, GroundTruth, ModelId, SyntheticModel, SyntheticSpec};
use crate::regions::{AssignmentRule, ClusterAlgorithm, ClusterSpec, RlocoConfig, RlocoPipeline};
use crate::seed::SeedTree;
use crate::shapley::{lsv_closed_form, lsv_synthetic};

pub use masking::{mask_eval, MaskingCurve, MaskingReport};
pub use verify::{
    contamination_experiment, counterexample_separability, lime_switch_study, switch_check, verify_centroids, verify_locality,
    verify_theorem1, CentroidReport, ContaminationReport, LimeSwitchReport, LocalityReport, SeparabilityReport,
    SwitchCheck, Theorem1Report,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum BenchMethod {
    Lsv,
    Lime,
    Loco,
    /// Affinity propagation with summed-distance assignment.
    Rloco,
    /// Affinity propagation with nearest-centroid assignment.
    RlocoCentroid,
    /// True regions as clusters.
    RlocoTrueClusters,
    RlocoKMeans(usize),
    RlocoVarianceTree,
}

impl BenchMethod {
    /// Standard method rows for a model, plus the k-means sweep on the first-order model.
    pub fn defaults_for(model: ModelId) -> Vec<BenchMethod> {
        let mut m = vec![
            BenchMethod::Lsv,
            BenchMethod::Lime,
            BenchMethod::Loco,
            BenchMethod::Rloco,
            BenchMethod::RlocoCentroid,
            BenchMethod::RlocoTrueClusters,
        ];
        if model == ModelId::FirstOrder {
            m.extend([2, 4, 8, 20].map(BenchMethod::RlocoKMeans));
        }
        m
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchMethod::Lsv => f.write_str("L-SV"),
            BenchMethod::Lime => f.write_str("LIME"),
            BenchMethod::Loco => f.write_str("LOCO"),
            BenchMethod::Rloco => f.write_str("R-LOCO"),
            BenchMethod::RlocoCentroid => f.write_str("R-LOCO_centroid"),
            BenchMethod::RlocoTrueClusters => f.write_str("R-LOCO_TC"),
            BenchMethod::RlocoKMeans(k) => write!(f, "R-LOCO_KMeans-{k}"),
            BenchMethod::RlocoVarianceTree => f.write_str("R-LOCO_VT"),
        }
    }
}

impl FromStr for BenchMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "l-sv" | "lsv" => BenchMethod::Lsv,
            "lime" => BenchMethod::Lime,
            "loco" => BenchMethod::Loco,
            "r-loco" | "rloco" => BenchMethod::Rloco,
            "r-loco_centroid" | "rloco-centroid" => BenchMethod::RlocoCentroid,
            "r-loco_tc" | "rloco-tc" => BenchMethod::RlocoTrueClusters,
            "r-loco_vt" | "rloco-vt" => BenchMethod::RlocoVarianceTree,
            other => {
                let k = other
                    .strip_prefix("r-loco_kmeans-")
                    .or_else(|| other.strip_prefix("rloco-kmeans-"))
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k > 0)
                    .ok_or_else(|| Error::Config(format!("unknown benchmark method '{s}'")))?;
                BenchMethod::RlocoKMeans(k)
            }
        })
    }
}

impl From<BenchMethod> for String {
    fn from(m: BenchMethod) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for BenchMethod {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Forest used for the benchmark LOCO fits on `p` features: every feature is
/// a split candidate and leaves may hold a single row.
pub fn benchmark_learner(p: usize) -> LearnerSpec {
    LearnerSpec::RandomForest { n_trees: 100, max_depth: None, min_leaf: 1, feature_subsample: Some(p), seed: 0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub model_id: ModelId,
    pub methods: Vec<BenchMethod>,
    pub runs: usize,
    pub n: usize,
    pub seed: u64,
    pub learner: LearnerSpec,
    pub lime_samples: usize,
    /// Explain test rows with their labels rather than the model's predictions.
    pub labelled: bool,
}

impl BenchmarkConfig {
    pub fn new(model_id: ModelId, seed: u64) -> Self {
        BenchmarkConfig {
            model_id,
            methods: BenchMethod::defaults_for(model_id),
            runs: 50,
            n: 4000,
            seed,
            learner: benchmark_learner(SyntheticModel::new(model_id).p()),
            lime_samples: 1000,
            labelled: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.n < 40 {
            return Err(Error::Config(format!("n = {} is too small to split", self.n)));
        }
        if self.model_id == ModelId::SignCounterexample {
            return Err(Error::Config("the sign counterexample has no ranking benchmark".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: BenchMethod,
    pub metrics: Option<RankingMetrics>,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub methods: Vec<MethodRun>,
    /// Held-out R^2 of the full LOCO model, when one was fitted.
    pub full_model_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: BenchMethod,
    pub metrics: Option<RankingMetrics>,
    pub runs_ok: usize,
    pub runs_failed: usize,
    /// TP rate of each successful run, in run order.
    pub tp_by_run: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub summaries: Vec<MethodSummary>,
    pub runs: Vec<RunResult>,
}

impl BenchmarkReport {
    pub fn summary(&self, method: BenchMethod) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// Table with columns Method, TP, FP, NI mean, NI q0.1, NI q0.95.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("Method\tTP\tFP\tNI mean\tNI q0.1\tNI q0.95\n");
        for s in &self.summaries {
            match &s.metrics {
                Some(m) => out.push_str(&format!(
                    "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\n",
                    s.method, m.tp_rate, m.fp_rate, m.ni_mean, m.ni_q10, m.ni_q95
                )),
                None => out.push_str(&format!("{}\tNA\tNA\tNA\tNA\tNA\n", s.method)),
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs every configured method on `cfg.runs` independent draws of the
/// synthetic model and aggregates the ranking metrics.
pub fn run_synthetic_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let root = SeedTree::new(cfg.seed);
    let runs: Vec<RunResult> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| run_once(cfg, r, root.child("run", r as u64)))
        .collect::<Result<Vec<_>>>()?;
    let summaries = cfg
        .methods
        .iter()
        .map(|&method| {
            let ok: Vec<RankingMetrics> =
                runs.iter().filter_map(|r| r.methods.iter().find(|m| m.method == method)?.metrics).collect();
            MethodSummary {
                method,
                metrics: mean_metrics(&ok),
                runs_ok: ok.len(),
                runs_failed: runs.len() - ok.len(),
                tp_by_run: ok.iter().map(|m| m.tp_rate).collect(),
            }
        })
        .collect();
    Ok(BenchmarkReport { config: cfg.clone(), summaries, runs })
}

struct RunContext<'a> {
    cfg: &'a BenchmarkConfig,
    seeds: SeedTree,
    model: SyntheticModel,
    fit: Dataset,
    calibration: Dataset,
    test: Dataset,
    truth: GroundTruth,
    loco: Option<std::result::Result<LocoModels, String>>,
    /// Fitted pipelines keyed by cluster spec name; assignment rules share them.
    pipelines: Vec<(String, RlocoPipeline)>,
}

fn run_once(cfg: &BenchmarkConfig, run: usize, seeds: SeedTree) -> Result<RunResult> {
    let (data, model, _) = generate(&SyntheticSpec::new(cfg.model_id, cfg.n, seeds.derive("data", 0)))?;
    let split = data.split(seeds.derive("split", 0))?;
    let truth = GroundTruth::for_rows(&model, &split.test);
    let mut ctx = RunContext {
        cfg,
        seeds,
        model,
        fit: split.fit,
        calibration: split.calibration,
        test: split.test,
        truth,
        loco: None,
        pipelines: Vec::new(),
    };
    let mut methods = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let t = Instant::now();
        let outcome = ctx.scores(method).and_then(|s| ranking_metrics(&s, &ctx.truth.active, ctx.truth.k, &ctx.truth.excluded));
        let seconds = t.elapsed().as_secs_f64();
        methods.push(match outcome {
            Ok(m) => MethodRun { method, metrics: Some(m), error: None, seconds },
            Err(e) => {
                log::warn!("run {run}: {method} failed: {e}");
                MethodRun { method, metrics: None, error: Some(e.to_string()), seconds }
            }
        });
    }
    let full_model_r2 = match &ctx.loco {
        Some(Ok(m)) => crate::learners::r_squared(&m.full, &ctx.test).ok(),
        _ => None,
    };
    Ok(RunResult { run, seed: seeds.root(), methods, full_model_r2 })
}

impl RunContext<'_> {
    fn loco_models(&mut self) -> Result<LocoModels> {
        if self.loco.is_none() {
            self.loco = Some(fit_loco(&self.fit, &self.cfg.learner, self.seeds.derive("loco", 0)).map_err(|e| e.to_string()));
        }
        match self.loco.as_ref().expect("just set") {
            Ok(m) => Ok(m.clone()),
            Err(e) => Err(Error::invalid(format!("LOCO fit failed: {e}"))),
        }
    }

    fn rloco(&mut self, cluster: ClusterSpec, assignment: AssignmentRule) -> Result<Vec<Vec<f64>>> {
        let key = cluster.name();
        let pos = match self.pipelines.iter().position(|(k, _)| *k == key) {
            Some(pos) => pos,
            None => {
                let models = self.loco_models()?;
                let config = RlocoConfig {
                    learner: models.learner_spec,
                    cluster: ClusterSpec { seed: self.seeds.derive("cluster", 0), ..cluster },
                    assignment,
                    seed: self.seeds.derive("rloco", 0),
                    ..Default::default()
                };
                let oracle: Option<Vec<usize>> = (cluster.algorithm == ClusterAlgorithm::OracleRegions).then(|| {
                    (0..self.calibration.n()).map(|i| self.model.region_label(self.calibration.row(i))).collect()
                });
                let pipe = RlocoPipeline::from_models(models, &self.calibration, &config, oracle.as_deref())?;
                self.pipelines.push((key, pipe));
                self.pipelines.len() - 1
            }
        };
        let pipe = &mut self.pipelines[pos].1;
        pipe.config.assignment = assignment;
        pipe.partition.rule = assignment;
        if cluster.algorithm == ClusterAlgorithm::OracleRegions {
            // Label k is region k as long as no region came out empty.
            if pipe.n_regions() != self.model.n_regions() {
                return Err(Error::invalid("a true region has no calibration rows"));
            }
            return (0..self.test.n())
                .map(|i| Ok(pipe.explain_in_region(self.truth.regions[i])?.attribution.scores))
                .collect();
        }
        Ok(pipe
            .explain_dataset(&self.test, self.cfg.labelled)?
            .into_iter()
            .map(|e| e.attribution.scores)
            .collect())
    }

    fn scores(&mut self, method: BenchMethod) -> Result<Vec<Vec<f64>>> {
        let n = self.test.n();
        match method {
            BenchMethod::Lsv => match self.model.pwl() {
                Some(pwl) => (0..n).map(|i| Ok(lsv_closed_form(&pwl, self.test.row(i))?.scores)).collect(),
                None => (0..n).into_par_iter().map(|i| Ok(lsv_synthetic(&self.model, self.test.row(i))?.scores)).collect(),
            },
            BenchMethod::Lime => {
                let base = LimeConfig { num_samples: self.cfg.lime_samples, seed: self.seeds.derive("lime", 0), ..Default::default() };
                let base = base.resolve(&self.fit)?;
                (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let cfg = LimeConfig { seed: self.seeds.derive("lime-point", i as u64), ..base };
                        Ok(explain_lime(&self.model, &self.fit, self.test.row(i), &cfg)?.attribution.scores)
                    })
                    .collect()
            }
            BenchMethod::Loco => {
                let models = self.loco_models()?;
                let repr = crate::loco::delta_scores(&models, &self.calibration, &models.default_score()?, false)?;
                Ok(vec![global_psi(&repr)?.scores; n])
            }
            BenchMethod::Rloco => self.rloco(ClusterSpec::default(), AssignmentRule::SumOfDistances),
            BenchMethod::RlocoCentroid => self.rloco(ClusterSpec::default(), AssignmentRule::NearestCentroid),
            BenchMethod::RlocoTrueClusters => self.rloco(
                ClusterSpec { algorithm: ClusterAlgorithm::OracleRegions, ..Default::default() },
                AssignmentRule::SumOfDistances,
            ),
            BenchMethod::RlocoKMeans(k) => self.rloco(
                ClusterSpec { algorithm: ClusterAlgorithm::KMeans, k, ..Default::default() },
                AssignmentRule::SumOfDistances,
            ),
            BenchMethod::RlocoVarianceTree => self.rloco(
                ClusterSpec { algorithm: ClusterAlgorithm::VarianceTree, ..Default::default() },
                AssignmentRule::SumOfDistances,
            ),
        }
    }
}
