use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Result};

/// Which algorithm produced an attribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LsvClosedForm,
    LsvEnumeration,
    LsvMonteCarlo,
    Lime,
    Loco,
    Rloco(String),
    Truth,
    Other(String),
}

/// Signed per-feature scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub scores: Vec<f64>,
    pub method: Method,
}

/// Magnitude shares; `degenerate` is set when every score was zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

impl AttributionVector {
    pub fn new(scores: Vec<f64>, method: Method) -> Result<Self> {
        check_finite(&scores, "scores")?;
        Ok(Self { scores, method })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn normalize(&self) -> Normalized {
        normalize(&self.scores)
    }
}

/// `|s| / sum |s|`. An all-zero vector maps to the uniform vector and logs a warning.
pub fn normalize(scores: &[f64]) -> Normalized {
    let total: f64 = scores.iter().map(|s| s.abs()).sum();
    if total > 0.0 && total.is_finite() {
        Normalized {
            values: scores.iter().map(|s| s.abs() / total).collect(),
            degenerate: false,
        }
    } else {
        log::warn!("degenerate normalization: all {} scores are zero", scores.len());
        let p = scores.len().max(1) as f64;
        Normalized {
            values: vec![1.0 / p; scores.len()],
            degenerate: true,
        }
    }
}
