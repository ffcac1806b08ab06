//! The `rloco` command-line front-end.
//!
//! Every invocation writes `manifest.json` to its output directory with the
//! resolved configuration, the seed and where it came from, timings,
//! warnings and the artifacts produced. Values come from flags, then an
//! optional TOML file passed with `--config`, then built-in defaults. The
//! only environment variable consulted is `RLOCO_SEED`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration,
//! 3 CSV without a header row, 4 non-numeric or non-finite CSV cell,
//! 5 target column missing from the CSV.

pub mod ingest;
mod svg;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bench::{self, BenchMethod, BenchmarkConfig};
use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::learners::{fit, LearnerSpec};
use crate::lime::{explain_lime, LimeConfig};
use crate::loco::{delta_scores, fit_loco, global_psi};
use crate::pwl::{generate, ModelId, SyntheticSpec};
use crate::regions::{
    AssignmentRule, ClusterAlgorithm, ClusterSpace, ClusterSpec, DistanceMetric, RlocoConfig, RlocoPipeline,
};
use crate::seed::SeedTree;
use crate::shapley::{lsv_monte_carlo, ShapleyConfig, ShapleyMode};

pub use ingest::{ingest_csv, write_csv};

pub const SEED_ENV: &str = "RLOCO_SEED";
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_OUT: &str = "rloco-out";
pub const MANIFEST: &str = "manifest.json";

/// Parses a kebab-case name through the type's serde representation.
fn kebab<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "rloco", version, about = "Regional LOCO attribution, exact local Shapley values, LIME and benchmarks")]
pub struct Cli {
    /// TOML config file with a section per command; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: rloco-out).
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic benchmark dataset with its ground truth.
    Synth(SynthArgs),
    /// Explain one row of a CSV.
    Explain(ExplainArgs),
    /// Run the synthetic ranking benchmark.
    Bench(BenchArgs),
    /// Run the analytic verification suites.
    Verify(VerifyArgs),
    /// Top-k / bottom-k masking evaluation.
    MaskEval(MaskEvalArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Explain(_) => "explain",
            Command::Bench(_) => "bench",
            Command::Verify(_) => "verify",
            Command::MaskEval(_) => "mask-eval",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    Forest,
    Tree,
    Knn,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExplainMethod {
    Rloco,
    Loco,
    Lime,
    Lsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Theorem1,
    Centroids,
    Locality,
    Contamination,
    Separability,
    Lime,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMethod {
    Rloco,
    Loco,
    Lime,
    Random,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SynthArgs {
    /// first-order, second-order, second-order-interaction or sign-counterexample.
    #[arg(long, value_parser = kebab::<ModelId>)]
    pub model: Option<ModelId>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Name of the target column in data.csv.
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExplainArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_parser = kebab::<Task>)]
    pub task: Option<Task>,
    #[arg(long, value_enum)]
    pub method: Option<ExplainMethod>,
    /// Zero-based data row of the CSV to explain.
    #[arg(long)]
    pub point_index: Option<usize>,
    #[arg(long, value_enum)]
    pub learner: Option<LearnerKind>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Features tried per forest split.
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long)]
    pub neighbors: Option<usize>,
    /// affinity-propagation, kmeans or variance-tree.
    #[arg(long, value_parser = kebab::<ClusterAlgorithm>)]
    pub cluster: Option<ClusterAlgorithm>,
    /// Cluster count for k-means.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub max_leaves: Option<usize>,
    /// importance, input or enriched-importance.
    #[arg(long, value_parser = kebab::<ClusterSpace>)]
    pub space: Option<ClusterSpace>,
    /// sum-of-distances, mean-distance or nearest-centroid.
    #[arg(long, value_parser = kebab::<AssignmentRule>)]
    pub assignment: Option<AssignmentRule>,
    /// euclidean or manhattan.
    #[arg(long, value_parser = kebab::<DistanceMetric>)]
    pub metric: Option<DistanceMetric>,
    /// Use the model's prediction in place of the row's label.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub unlabelled: Option<bool>,
    #[arg(long)]
    pub lime_samples: Option<usize>,
    /// Also write the fitted pipeline as JSON.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub save_pipeline: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BenchArgs {
    #[arg(long, value_parser = kebab::<ModelId>)]
    pub model: Option<ModelId>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated method names, e.g. R-LOCO,LOCO,L-SV.
    #[arg(long, value_delimiter = ',', value_parser = kebab::<BenchMethod>)]
    pub methods: Option<Vec<BenchMethod>>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub lime_samples: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub unlabelled: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    /// Overrides the trial or point count of the selected suites.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Overrides the sample size of the selected suites.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct MaskEvalArgs {
    /// CSV to evaluate on; a synthetic dataset is drawn when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_parser = kebab::<Task>)]
    pub task: Option<Task>,
    #[arg(long, value_parser = kebab::<ModelId>)]
    pub model: Option<ModelId>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',', value_enum)]
    pub methods: Option<Vec<MaskMethod>>,
    #[arg(long, value_delimiter = ',')]
    pub k_grid: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub learner: Option<LearnerKind>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long)]
    pub neighbors: Option<usize>,
    #[arg(long)]
    pub lime_samples: Option<usize>,
}

/// Contents of a `--config` file. Top-level keys apply to every command.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub synth: SynthArgs,
    pub explain: ExplainArgs,
    pub bench: BenchArgs,
    pub verify: VerifyArgs,
    #[serde(rename = "mask-eval")]
    pub mask_eval: MaskEvalArgs,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Field-wise `flag.or(file)`.
macro_rules! merge {
    ($flags:expr, $file:expr; $($f:ident),+) => {{
        let (a, b) = ($flags, $file);
        Self { $($f: a.$f.or(b.$f)),+ }
    }};
}

impl SynthArgs {
    fn merge(self, file: Self) -> Self {
        merge!(self, file; model, n, target)
    }
}

impl ExplainArgs {
    fn merge(self, file: Self) -> Self {
        merge!(self, file; input, target, task, method, point_index, learner, n_trees, min_leaf, mtry, neighbors,
            cluster, k, damping, max_leaves, space, assignment, metric, unlabelled, lime_samples, save_pipeline)
    }
}

impl BenchArgs {
    fn merge(self, file: Self) -> Self {
        merge!(self, file; model, runs, n, methods, n_trees, lime_samples, unlabelled)
    }
}

impl VerifyArgs {
    fn merge(self, file: Self) -> Self {
        merge!(self, file; suite, trials, n)
    }
}

impl MaskEvalArgs {
    fn merge(self, file: Self) -> Self {
        merge!(self, file; input, target, task, model, n, methods, k_grid, learner, n_trees, min_leaf, mtry,
            neighbors, lime_samples)
    }
}

fn learner_spec(
    kind: Option<LearnerKind>,
    n_trees: Option<usize>,
    min_leaf: Option<usize>,
    mtry: Option<usize>,
    neighbors: Option<usize>,
) -> LearnerSpec {
    let min_leaf = min_leaf.unwrap_or(5);
    match kind.unwrap_or(LearnerKind::Forest) {
        LearnerKind::Forest => LearnerSpec::RandomForest {
            n_trees: n_trees.unwrap_or(100),
            max_depth: None,
            min_leaf,
            feature_subsample: mtry,
            seed: 0,
        },
        LearnerKind::Tree => LearnerSpec::RegressionTree { max_depth: None, min_leaf, seed: 0 },
        LearnerKind::Knn => LearnerSpec::KNearest { k: neighbors.unwrap_or(10) },
        LearnerKind::Linear => LearnerSpec::LinearLeastSquares,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthConfig {
    pub model: ModelId,
    pub n: usize,
    pub target: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExplainConfig {
    pub input: PathBuf,
    pub target: String,
    pub task: Task,
    pub method: ExplainMethod,
    pub point_index: usize,
    pub rloco: RlocoConfig,
    pub labelled: bool,
    pub lime_samples: usize,
    pub save_pipeline: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyConfig {
    pub suites: Vec<Suite>,
    pub trials: Option<usize>,
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaskEvalConfig {
    pub input: Option<PathBuf>,
    pub target: String,
    pub task: Task,
    pub model: ModelId,
    pub n: usize,
    pub methods: Vec<MaskMethod>,
    pub k_grid: Option<Vec<usize>>,
    pub learner: LearnerSpec,
    pub lime_samples: usize,
}

/// A command with every value resolved.
#[derive(Debug, Clone)]
pub enum Resolved {
    Synth(SynthConfig),
    Explain(ExplainConfig),
    Bench(BenchmarkConfig),
    Verify(VerifyConfig),
    MaskEval(MaskEvalConfig),
}

impl Resolved {
    fn to_json(&self) -> Value {
        let v = match self {
            Resolved::Synth(c) => serde_json::to_value(c),
            Resolved::Explain(c) => serde_json::to_value(c),
            Resolved::Bench(c) => serde_json::to_value(c),
            Resolved::Verify(c) => serde_json::to_value(c),
            Resolved::MaskEval(c) => serde_json::to_value(c),
        };
        v.unwrap_or(Value::Null)
    }
}

fn positive(v: usize, what: &str) -> Result<usize> {
    if v == 0 {
        return Err(Error::Config(format!("{what} must be positive")));
    }
    Ok(v)
}

/// Merges flags over the file section and fills in defaults.
pub fn resolve(command: Command, file: &FileConfig, seed: u64) -> Result<Resolved> {
    Ok(match command {
        Command::Synth(a) => {
            let a = a.merge(file.synth.clone());
            Resolved::Synth(SynthConfig {
                model: a.model.unwrap_or(ModelId::FirstOrder),
                n: positive(a.n.unwrap_or(4000), "n")?,
                target: a.target.unwrap_or_else(|| "y".into()),
            })
        }
        Command::Explain(a) => {
            let a = a.merge(file.explain.clone());
            let input = a.input.ok_or_else(|| Error::Config("explain needs --input".into()))?;
            let point_index = a.point_index.ok_or_else(|| Error::Config("explain needs --point-index".into()))?;
            let algorithm = a.cluster.unwrap_or(ClusterAlgorithm::AffinityPropagation);
            if algorithm == ClusterAlgorithm::OracleRegions {
                return Err(Error::Config("oracle-regions needs known regions and is only used by bench".into()));
            }
            let defaults = ClusterSpec::default();
            let cluster = ClusterSpec {
                algorithm,
                space: a.space.unwrap_or(defaults.space),
                k: positive(a.k.unwrap_or(defaults.k), "k")?,
                damping: a.damping.unwrap_or(defaults.damping),
                max_leaves: positive(a.max_leaves.unwrap_or(defaults.max_leaves), "max-leaves")?,
                min_leaf: defaults.min_leaf,
                seed: 0,
            };
            if !(0.5..1.0).contains(&cluster.damping) {
                return Err(Error::Config(format!("damping must lie in [0.5, 1), got {}", cluster.damping)));
            }
            Resolved::Explain(ExplainConfig {
                input,
                target: a.target.unwrap_or_else(|| "y".into()),
                task: a.task.unwrap_or_default(),
                method: a.method.unwrap_or(ExplainMethod::Rloco),
                point_index,
                rloco: RlocoConfig {
                    learner: learner_spec(a.learner, a.n_trees, a.min_leaf, a.mtry, a.neighbors),
                    cluster,
                    assignment: a.assignment.unwrap_or(AssignmentRule::SumOfDistances),
                    metric: a.metric.unwrap_or(DistanceMetric::Euclidean),
                    seed: SeedTree::new(seed).derive("explain-rloco", 0),
                },
                labelled: !a.unlabelled.unwrap_or(false),
                lime_samples: a.lime_samples.unwrap_or(1000),
                save_pipeline: a.save_pipeline.unwrap_or(false),
            })
        }
        Command::Bench(a) => {
            let a = a.merge(file.bench.clone());
            let mut cfg = BenchmarkConfig::new(a.model.unwrap_or(ModelId::FirstOrder), seed);
            if let Some(runs) = a.runs {
                cfg.runs = runs;
            }
            if let Some(n) = a.n {
                cfg.n = n;
            }
            if let Some(m) = a.methods {
                cfg.methods = m;
            }
            if let Some(t) = a.n_trees {
                if let LearnerSpec::RandomForest { n_trees, .. } = &mut cfg.learner {
                    *n_trees = positive(t, "n-trees")?;
                }
            }
            if let Some(s) = a.lime_samples {
                cfg.lime_samples = s;
            }
            cfg.labelled = !a.unlabelled.unwrap_or(false);
            Resolved::Bench(cfg)
        }
        Command::Verify(a) => {
            let a = a.merge(file.verify.clone());
            let suites = match a.suite.unwrap_or(Suite::All) {
                Suite::All => vec![
                    Suite::Theorem1,
                    Suite::Centroids,
                    Suite::Locality,
                    Suite::Contamination,
                    Suite::Separability,
                    Suite::Lime,
                ],
                s => vec![s],
            };
            let trials = a.trials.map(|t| positive(t, "trials")).transpose()?;
            let n = a.n.map(|t| positive(t, "n")).transpose()?;
            Resolved::Verify(VerifyConfig { suites, trials, n })
        }
        Command::MaskEval(a) => {
            let a = a.merge(file.mask_eval.clone());
            Resolved::MaskEval(MaskEvalConfig {
                input: a.input,
                target: a.target.unwrap_or_else(|| "y".into()),
                task: a.task.unwrap_or_default(),
                model: a.model.unwrap_or(ModelId::FirstOrder),
                n: positive(a.n.unwrap_or(4000), "n")?,
                methods: a.methods.unwrap_or_else(|| vec![MaskMethod::Rloco, MaskMethod::Loco, MaskMethod::Random]),
                k_grid: a.k_grid,
                learner: learner_spec(a.learner, a.n_trees, a.min_leaf, a.mtry, a.neighbors),
                lime_samples: a.lime_samples.unwrap_or(1000),
            })
        }
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    /// Crate version and manifest format.
    pub versions: BTreeMap<String, String>,
    pub platform: String,
    pub command: String,
    pub argv: Vec<String>,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
    pub seed: u64,
    /// flag, env:RLOCO_SEED, config or default.
    pub seed_source: String,
    pub config_file: Option<PathBuf>,
    pub config: Value,
    pub timings: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<String>,
}

/// Output directory plus the manifest being accumulated.
struct Run {
    out: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.out.join(name), contents)?;
        self.manifest.artifacts.push(name.to_string());
        Ok(())
    }

    fn time<T>(&mut self, label: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let r = f();
        self.manifest.timings.insert(label.to_string(), t.elapsed().as_secs_f64());
        r
    }

    fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.manifest.warnings.push(msg);
    }
}

/// Exit code for an error raised after parsing.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::MissingHeader => 3,
        Error::NonNumericCell { .. } => 4,
        Error::MissingTarget(_) => 5,
        _ => 1,
    }
}

fn usage_error(command: &str, e: &Error) -> i32 {
    let mut cmd = Cli::command();
    let usage = match cmd.find_subcommand_mut(command) {
        Some(sub) => sub.render_usage(),
        None => cmd.render_usage(),
    };
    eprintln!("error: {e}\n\n{usage}\n\nFor more information, try 'rloco {command} --help'.");
    2
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    let argv = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    dispatch(cli, argv)
}

/// Resolves the configuration, executes the command and writes the manifest.
pub fn dispatch(cli: Cli, argv: Vec<String>) -> i32 {
    let name = cli.command.name();
    let file = match cli.config.as_deref().map(FileConfig::load).transpose() {
        Ok(f) => f.unwrap_or_default(),
        Err(e) => return usage_error(name, &e),
    };
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(v) => match v.trim().parse::<u64>() {
            Ok(s) => Some(s),
            Err(_) => {
                return usage_error(name, &Error::Config(format!("{SEED_ENV}='{v}' is not an unsigned integer")));
            }
        },
        Err(_) => None,
    };
    let (seed, seed_source) = match (cli.seed, env_seed, file.seed) {
        (Some(s), _, _) => (s, "flag".to_string()),
        (None, Some(s), _) => (s, format!("env:{SEED_ENV}")),
        (None, None, Some(s)) => (s, "config".to_string()),
        (None, None, None) => (DEFAULT_SEED, "default".to_string()),
    };
    log::info!("seed {seed} ({seed_source})");
    let resolved = match resolve(cli.command, &file, seed) {
        Ok(r) => r,
        Err(e) => return usage_error(name, &e),
    };
    let out = cli.out.or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create output directory {}: {e}", out.display());
        return 1;
    }
    let mut run = Run {
        out,
        manifest: Manifest {
            tool: "rloco".into(),
            versions: BTreeMap::from([
                ("rloco".to_string(), env!("CARGO_PKG_VERSION").to_string()),
                ("manifest".to_string(), "1".to_string()),
            ]),
            platform: format!("{}-{}", std::env::consts::OS, std::env::consts::ARCH),
            command: name.into(),
            argv,
            status: "running".into(),
            exit_code: 0,
            error: None,
            seed,
            seed_source,
            config_file: cli.config,
            config: resolved.to_json(),
            timings: BTreeMap::new(),
            warnings: Vec::new(),
            artifacts: Vec::new(),
        },
    };
    let started = Instant::now();
    let result = match &resolved {
        Resolved::Synth(c) => synth(c, seed, &mut run),
        Resolved::Explain(c) => explain(c, seed, &mut run),
        Resolved::Bench(c) => bench_cmd(c, &mut run),
        Resolved::Verify(c) => verify(c, seed, &mut run),
        Resolved::MaskEval(c) => mask_eval_cmd(c, seed, &mut run),
    };
    run.manifest.timings.insert("total".into(), started.elapsed().as_secs_f64());
    let code = match &result {
        Ok(()) => 0,
        Err(e) => exit_code(e),
    };
    run.manifest.exit_code = code;
    match result {
        Ok(()) => run.manifest.status = "ok".into(),
        Err(e) => {
            eprintln!("error: {e}");
            run.manifest.status = "failed".into();
            run.manifest.error = Some(e.to_string());
        }
    }
    let text = serde_json::to_string_pretty(&run.manifest).expect("manifest serializes");
    if let Err(e) = std::fs::write(run.out.join(MANIFEST), text + "\n") {
        eprintln!("error: cannot write manifest: {e}");
        return if code == 0 { 1 } else { code };
    }
    code
}

fn synth(cfg: &SynthConfig, seed: u64, run: &mut Run) -> Result<()> {
    let spec = SyntheticSpec::new(cfg.model, cfg.n, SeedTree::new(seed).derive("synth", 0));
    let (data, model, truth) = run.time("generate", || generate(&spec))?;
    ingest::write_csv(&run.out.join("data.csv"), &data, &cfg.target)?;
    run.manifest.artifacts.push("data.csv".into());
    let truth = json!({
        "model": model.id(),
        "description": model.describe_truth(),
        "truth": truth,
    });
    run.write("truth.json", &serde_json::to_string_pretty(&truth)?)?;
    println!("wrote {} rows of {} to {}", cfg.n, cfg.model, run.out.display());
    Ok(())
}

fn explain(cfg: &ExplainConfig, seed: u64, run: &mut Run) -> Result<()> {
    let data = run.time("ingest", || ingest_csv(&cfg.input, &cfg.target, cfg.task))?;
    let i = cfg.point_index;
    if i >= data.n() {
        return Err(Error::Config(format!("--point-index {i} is out of range for {} rows", data.n())));
    }
    let seeds = SeedTree::new(seed);
    let split = data.split(seeds.derive("split", 0))?;
    let (x, y) = (data.row(i), cfg.labelled.then(|| data.y(i)));
    let names = data.feature_names().to_vec();
    let mut report = json!({
        "method": cfg.method,
        "point_index": i,
        "features": names,
        "x": x,
        "y": data.y(i),
        "labelled": cfg.labelled,
    });
    let scores = match cfg.method {
        ExplainMethod::Rloco => {
            let pipe = run.time("fit", || RlocoPipeline::fit(&split.fit, &split.calibration, &cfg.rloco, None))?;
            for f in &pipe.partition.flags {
                run.warn(format!("clustering: {f}"));
            }
            let e = run.time("explain", || pipe.explain(x, y))?;
            if let Some(tied) = &e.undecidable {
                run.warn(format!("row {i} ties between clusters {tied:?}; assigned to {}", e.region));
            }
            report["cluster"] = json!(e.region);
            report["n_clusters"] = json!(pipe.n_regions());
            report["undecidable"] = json!(e.undecidable.is_some());
            report["tied_clusters"] = json!(e.undecidable);
            report["cluster_size"] = json!(pipe.partition.members[e.region].len());
            if let Some(tree) = &pipe.partition.tree {
                let rules = tree.render(&names);
                run.write("regions.txt", &rules)?;
            }
            if cfg.save_pipeline {
                run.write("pipeline.json", &pipe.to_json()?)?;
            }
            e.attribution.scores
        }
        ExplainMethod::Loco => {
            let models = run.time("fit", || fit_loco(&split.fit, &cfg.rloco.learner, cfg.rloco.seed))?;
            let score = models.default_score()?;
            let repr = delta_scores(&models, &split.calibration, &score, false)?;
            let point = models.point_deltas(x, y, &score)?;
            report["point_deltas"] = json!(point.deltas);
            global_psi(&repr)?.scores
        }
        ExplainMethod::Lime => {
            let f = run.time("fit", || fit(&cfg.rloco.learner.with_seed(seeds.derive("explain-fit", 0)), &split.fit))?;
            let lime = LimeConfig { num_samples: cfg.lime_samples, seed: seeds.derive("lime", 0), ..Default::default() };
            let e = run.time("explain", || explain_lime(&f, &split.fit, x, &lime))?;
            report["intercept"] = json!(e.intercept);
            report["bandwidth"] = json!(e.bandwidth);
            e.attribution.scores
        }
        ExplainMethod::Lsv => {
            let f = run.time("fit", || fit(&cfg.rloco.learner.with_seed(seeds.derive("explain-fit", 0)), &split.fit))?;
            let sc = ShapleyConfig { mode: ShapleyMode::MonteCarlo, seed: seeds.derive("lsv", 0), ..Default::default() };
            let e = run.time("explain", || lsv_monte_carlo(&f, &split.calibration, x, &sc))?;
            report["std_error"] = json!(e.std_error);
            e.attribution.scores
        }
    };
    let norm = crate::attribution::normalize(&scores);
    if norm.degenerate {
        run.warn("every attribution score is zero; normalized shares are uniform");
    }
    report["scores"] = json!(scores);
    report["normalized"] = json!(norm.values);
    run.write("explanation.json", &serde_json::to_string_pretty(&report)?)?;
    let title = format!("{:?} attribution for row {i}", cfg.method).to_lowercase();
    run.write("explanation.svg", &svg::bar_chart(&title, data.feature_names(), &scores))?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn bench_cmd(cfg: &BenchmarkConfig, run: &mut Run) -> Result<()> {
    log::info!("benchmark {} with {} runs of n = {}", cfg.model_id, cfg.runs, cfg.n);
    let report = run.time("benchmark", || bench::run_synthetic_benchmark(cfg))?;
    for s in &report.summaries {
        if s.runs_failed > 0 {
            run.warn(format!("{}: {} of {} runs failed", s.method, s.runs_failed, cfg.runs));
        }
    }
    let tsv = report.to_tsv();
    run.write("table.tsv", &tsv)?;
    run.write("report.json", &report.to_json()?)?;
    print!("{tsv}");
    Ok(())
}

fn verify(cfg: &VerifyConfig, seed: u64, run: &mut Run) -> Result<()> {
    let seeds = SeedTree::new(seed);
    for &suite in &cfg.suites {
        let name = serde_json::to_value(suite)?.as_str().unwrap_or("suite").to_string();
        let s = seeds.derive(&format!("verify-{name}"), 0);
        let (value, summary) = match suite {
            Suite::Theorem1 => {
                let r = run.time(&name, || bench::verify_theorem1(cfg.trials.unwrap_or(200), 8, 4, s))?;
                let line = format!(
                    "max |closed form - enumeration| = {:.3e} over {} models; efficiency error {:.3e}; switch ratio in [{}, {}], expected {}",
                    r.max_discrepancy, r.trials, r.max_efficiency_error, r.switch.ratio_min, r.switch.ratio_max, r.switch.expected
                );
                (serde_json::to_value(&r)?, line)
            }
            Suite::Centroids => {
                let r = run.time(&name, || bench::verify_centroids(cfg.n.unwrap_or(100_000), s))?;
                let worst = r.importance_a_error.max(r.importance_b_error).max(r.input_a_error).max(r.input_b_error);
                (serde_json::to_value(&r)?, format!("largest centroid error {worst:.4} at n = {}", r.n))
            }
            Suite::Locality => {
                let r = run.time(&name, || bench::verify_locality(cfg.trials.unwrap_or(50), cfg.n.unwrap_or(2000), s))?;
                let line = format!("max mass outside the active set {} over {} trials", r.max_outside_mass, r.trials);
                (serde_json::to_value(&r)?, line)
            }
            Suite::Contamination => {
                let grid: Vec<f64> = (0..=10).map(|i| 0.02 * i as f64).collect();
                let r = run.time(&name, || bench::contamination_experiment(&grid, cfg.n.unwrap_or(20_000), s))?;
                (serde_json::to_value(&r)?, format!("bias slope {:.4}, R^2 {:.6}", r.slope, r.r_squared))
            }
            Suite::Separability => {
                let k = cfg.trials.unwrap_or(10) as u64;
                let seed_list: Vec<u64> = (0..k).map(|i| seeds.derive("verify-separability-seed", i)).collect();
                let r = run.time(&name, || bench::counterexample_separability(cfg.n.unwrap_or(5000), &seed_list))?;
                let line = format!("median purity base {:.4}, enriched {:.4}", r.base_median, r.enriched_median);
                (serde_json::to_value(&r)?, line)
            }
            Suite::Lime => {
                let r = run.time(&name, || bench::lime_switch_study(cfg.trials.unwrap_or(20), cfg.n.unwrap_or(5000), s))?;
                let line = format!(
                    "mean |x3 coefficient| {:.4} (a4 = {}); sign flips at {} of {} points",
                    r.mean_abs_x3, r.a4, r.points_with_sign_flip, r.points
                );
                (serde_json::to_value(&r)?, line)
            }
            Suite::All => unreachable!("expanded during resolution"),
        };
        run.write(&format!("{name}.json"), &serde_json::to_string_pretty(&value)?)?;
        println!("{name}: {summary}");
    }
    Ok(())
}

fn mask_eval_cmd(cfg: &MaskEvalConfig, seed: u64, run: &mut Run) -> Result<()> {
    let seeds = SeedTree::new(seed);
    let data: Dataset = match &cfg.input {
        Some(path) => run.time("ingest", || ingest_csv(path, &cfg.target, cfg.task))?,
        None => {
            let spec = SyntheticSpec::new(cfg.model, cfg.n, seeds.derive("synth", 0));
            run.time("generate", || generate(&spec))?.0
        }
    };
    let p = data.p();
    let k_grid = cfg.k_grid.clone().unwrap_or_else(|| (0..=p).collect());
    if let Some(&k) = k_grid.iter().find(|&&k| k > p) {
        return Err(Error::Config(format!("k = {k} in --k-grid exceeds p = {p}")));
    }
    let split = data.split(seeds.derive("split", 0))?;
    let rcfg = RlocoConfig { learner: cfg.learner, seed: seeds.derive("mask-rloco", 0), ..Default::default() };
    let pipe = run.time("fit", || RlocoPipeline::fit(&split.fit, &split.calibration, &rcfg, None))?;
    for f in &pipe.partition.flags {
        run.warn(format!("clustering: {f}"));
    }
    let test = &split.test;
    let predictor = &pipe.models.full;
    let mut attributions = Vec::new();
    for &m in &cfg.methods {
        let name = serde_json::to_value(m)?.as_str().unwrap_or("method").to_string();
        let scores: Vec<Vec<f64>> = run.time(&format!("attribute-{name}"), || match m {
            MaskMethod::Rloco => {
                Ok(pipe.explain_dataset(test, true)?.into_iter().map(|e| e.attribution.scores).collect())
            }
            MaskMethod::Loco => Ok(vec![global_psi(&pipe.calibration)?.scores; test.n()]),
            MaskMethod::Lime => {
                let base = LimeConfig { num_samples: cfg.lime_samples, seed: seeds.derive("lime", 0), ..Default::default() };
                let resolved = base.resolve(&split.fit)?;
                (0..test.n())
                    .into_par_iter()
                    .map(|i| {
                        let c = LimeConfig { seed: seeds.derive("lime-point", i as u64), ..resolved };
                        Ok(explain_lime(predictor, &split.fit, test.row(i), &c)?.attribution.scores)
                    })
                    .collect()
            }
            MaskMethod::Random => {
                use rand::Rng as _;
                let mut rng = seeds.rng("mask-random", 0);
                Ok((0..test.n()).map(|_| (0..p).map(|_| rng.random::<f64>()).collect()).collect())
            }
        })?;
        attributions.push((name, scores));
    }
    let report = run.time("mask", || bench::mask_eval(test, predictor, &attributions, &k_grid))?;
    run.write("masking.tsv", &report.to_tsv())?;
    run.write("masking.json", &serde_json::to_string_pretty(&report)?)?;
    let series: Vec<(String, Vec<f64>)> = report
        .curves
        .iter()
        .flat_map(|c| {
            [(format!("{} top-k", c.method), c.top_change.clone()), (format!("{} bottom-k", c.method), c.bottom_change.clone())]
        })
        .collect();
    run.write("masking.svg", &svg::line_chart("error change under masking", &k_grid, &series))?;
    print!("{}", report.to_tsv());
    Ok(())
}
