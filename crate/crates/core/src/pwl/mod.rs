//! Piecewise-linear ground-truth models, the synthetic generators and their
//! analytic oracles under independent `U[-1, 1]` features.

pub mod model;
pub mod oracle;
pub mod synthetic;

pub use model::{Interval, PiecewiseLinearModel};
pub use oracle::{
    analytic_value_function, expected_value, mc_conditional_mean_drop, pwl_conditional_mean_drop, DropOracle,
    MonteCarloDrop,
};
pub use synthetic::{
    first_order_pwl, generate, sample_uniform, switch_model, GroundTruth, ModelId, SyntheticModel, SyntheticSpec,
};
