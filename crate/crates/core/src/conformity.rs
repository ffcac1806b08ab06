//! Per-observation predictiveness scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConformityScore {
    /// `1 - (y - f)^2 / sigma2`; its population mean is the R^2 of `f`.
    RSquared { sigma2: f64 },
    /// `1{y == f}` with `f` thresholded at 0.5.
    Accuracy,
}

impl ConformityScore {
    pub fn r_squared(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid(format!("sigma2 must be positive and finite, got {sigma2}")));
        }
        Ok(ConformityScore::RSquared { sigma2 })
    }

    pub fn conformity(&self, prediction: f64, y: f64) -> Result<f64> {
        if !prediction.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite(format!("conformity({prediction}, {y})")));
        }
        Ok(self.conformity_unchecked(prediction, y))
    }

    pub(crate) fn conformity_unchecked(&self, prediction: f64, y: f64) -> f64 {
        match *self {
            ConformityScore::RSquared { sigma2 } => {
                let r = y - prediction;
                1.0 - r * r / sigma2
            }
            ConformityScore::Accuracy => {
                let label = if prediction >= 0.5 { 1.0 } else { 0.0 };
                if label == y {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}
