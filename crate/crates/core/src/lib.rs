//! Regional leave-one-covariate-out attribution (R-LOCO) and the baselines it
//! is compared against: exact local Shapley values for piecewise-linear
//! models, LIME and global LOCO.
//!
//! The crate is organised bottom-up. [`data`], [`seed`], [`attribution`],
//! [`conformity`] and [`metrics`] are shared foundations; [`pwl`] holds the
//! ground-truth models and their analytic oracles; [`shapley`], [`lime`] and
//! [`loco`] produce attributions; [`regions`] turns LOCO deltas into regional
//! explanations; [`bench`] reproduces the controlled experiments.

pub mod attribution;
pub mod bench;
pub mod cli;
pub mod conformity;
pub mod data;
pub mod error;
pub mod learners;
pub mod lime;
pub mod loco;
pub mod metrics;
pub mod pwl;
pub mod regions;
pub mod seed;
pub mod shapley;

pub use attribution::{normalize, AttributionVector, Method, Normalized};
pub use conformity::ConformityScore;
pub use data::{DataSplit, Dataset, Evaluator, FnEvaluator, Task};
pub use error::{Error, Result};
pub use metrics::{ranking_metrics, RankingMetrics};
pub use seed::SeedTree;
