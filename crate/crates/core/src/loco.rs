//! Leave-one-covariate-out importance.
//!
//! A full model and one model per dropped feature are fitted on the same rows.
//! Each observation then gets a vector of conformity drops `Delta_j`, the
//! representation R-LOCO clusters in. The oracle path computes the same
//! quantities from exact conditional means instead of fitted models.

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionVector, Method};
use crate::conformity::ConformityScore;
use crate::data::{Dataset, Task};
use crate::error::{check_dim, Error, Result};
use crate::learners::{fit, LearnerSpec, Predictor};
use crate::pwl::DropOracle;
use crate::seed::SeedTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocoModels {
    pub full: Predictor,
    /// `dropped[j]` was fitted without column `j`.
    pub dropped: Vec<Predictor>,
    pub learner_spec: LearnerSpec,
    pub seed: u64,
    /// Population target variance of the fitting rows.
    pub sigma2: f64,
    pub task: Task,
}

/// Fits the full model and the `p` leave-one-out models on `data`.
pub fn fit_loco(data: &Dataset, spec: &LearnerSpec, seed: u64) -> Result<LocoModels> {
    if data.p() < 2 {
        return Err(Error::invalid("LOCO needs at least two features"));
    }
    let seeds = SeedTree::new(seed);
    let full = fit(&spec.with_seed(seeds.derive("loco-full", 0)), data)?;
    let dropped = (0..data.p())
        .into_par_iter()
        .map(|j| {
            let d = data.drop_column(j)?;
            fit(&spec.with_seed(seeds.derive("loco-drop", j as u64)), &d)
                .map_err(|e| Error::Learner { feature: j, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LocoModels { full, dropped, learner_spec: *spec, seed, sigma2: data.target_variance(), task: data.task() })
}

impl LocoModels {
    pub fn p(&self) -> usize {
        self.full.p
    }

    /// Conformity score matching the task, with `sigma2` from the fitting rows.
    pub fn default_score(&self) -> Result<ConformityScore> {
        match self.task {
            Task::Regression => ConformityScore::r_squared(self.sigma2),
            Task::BinaryClassification => Ok(ConformityScore::Accuracy),
        }
    }

    /// `(f0(x), [f_{-j}(x_{-j})]_j)`.
    pub fn predictions(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let f0 = self.full.predict(x)?;
        let mut buf = Vec::with_capacity(x.len());
        let fj = self
            .dropped
            .iter()
            .enumerate()
            .map(|(j, m)| {
                buf.clear();
                buf.extend(x.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, v)| *v));
                m.predict(&buf)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((f0, fj))
    }

    /// Deltas for one point. Without a label the full model's prediction
    /// stands in for it (thresholded for classification).
    pub fn point_deltas(&self, x: &[f64], y: Option<f64>, score: &ConformityScore) -> Result<PointDeltas> {
        let (f0, fj) = self.predictions(x)?;
        let label = match (y, self.task) {
            (Some(y), _) => y,
            (None, Task::Regression) => f0,
            (None, Task::BinaryClassification) => f64::from(u8::from(f0 >= 0.5)),
        };
        let deltas = fj.iter().map(|&v| delta(score, f0, v, label)).collect::<Result<Vec<_>>>()?;
        let signed = fj.iter().map(|v| f0 - v).collect();
        Ok(PointDeltas { deltas, signed, labelled: y.is_some() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDeltas {
    pub deltas: Vec<f64>,
    pub signed: Vec<f64>,
    /// False when the prediction was substituted for the label.
    pub labelled: bool,
}

/// `V(f0, y) - V(fj, y)`; for the R^2 score this is `[(y - fj)^2 - (y - f0)^2] / sigma2`.
fn delta(score: &ConformityScore, f0: f64, fj: f64, y: f64) -> Result<f64> {
    match *score {
        ConformityScore::RSquared { sigma2 } => {
            if !(f0.is_finite() && fj.is_finite() && y.is_finite()) {
                return Err(Error::NonFinite("prediction or target".into()));
            }
            Ok(((y - fj).powi(2) - (y - f0).powi(2)) / sigma2)
        }
        ConformityScore::Accuracy => Ok(score.conformity(f0, y)? - score.conformity(fj, y)?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaConvention {
    /// `(f - f_{-j})^2`.
    SquaredLoss,
    /// Conformity drop under the R^2 score, `[(y - f_{-j})^2 - (y - f)^2] / sigma2`.
    RSquaredNormalized,
    /// Drop in the 0/1 accuracy score.
    AccuracyDrop,
}

/// Per-observation importance vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRepresentation {
    pub deltas: Array2<f64>,
    /// `f(x) - f_{-j}(x)`.
    pub signed: Option<Array2<f64>>,
    pub convention: DeltaConvention,
}

impl ImportanceRepresentation {
    pub fn n(&self) -> usize {
        self.deltas.nrows()
    }

    pub fn p(&self) -> usize {
        self.deltas.ncols()
    }

    /// `[deltas | signed]`, width `2p`.
    pub fn enriched(&self) -> Result<Array2<f64>> {
        let s = self.signed.as_ref().ok_or_else(|| Error::invalid("signed residuals were not computed"))?;
        Ok(concatenate(Axis(1), &[self.deltas.view(), s.view()]).expect("matching rows"))
    }

    pub fn to_tsv(&self, names: &[String]) -> Result<String> {
        check_dim(self.p(), names.len())?;
        let mut out = String::new();
        let mut header: Vec<String> = names.iter().map(|n| format!("delta_{n}")).collect();
        if self.signed.is_some() {
            header.extend(names.iter().map(|n| format!("signed_{n}")));
        }
        out.push_str(&header.join("\t"));
        out.push('\n');
        for i in 0..self.n() {
            let mut cells: Vec<String> = self.deltas.row(i).iter().map(|v| format!("{v}")).collect();
            if let Some(s) = &self.signed {
                cells.extend(s.row(i).iter().map(|v| format!("{v}")));
            }
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        Ok(out)
    }
}

/// Plug-in deltas on every row of `eval_data`.
pub fn delta_scores(
    models: &LocoModels,
    eval_data: &Dataset,
    score: &ConformityScore,
    with_signed: bool,
) -> Result<ImportanceRepresentation> {
    check_dim(models.p(), eval_data.p())?;
    let n = eval_data.n();
    let p = eval_data.p();
    let f0 = models.full.predict_dataset(eval_data)?;
    let mut deltas = Array2::zeros((n, p));
    let mut signed = Array2::zeros((n, p));
    for j in 0..p {
        let fj = models.dropped[j].predict_dataset(&eval_data.drop_column(j)?)?;
        for i in 0..n {
            deltas[[i, j]] = delta(score, f0[i], fj[i], eval_data.y(i))?;
            signed[[i, j]] = f0[i] - fj[i];
        }
    }
    let convention = match score {
        ConformityScore::RSquared { .. } => DeltaConvention::RSquaredNormalized,
        ConformityScore::Accuracy => DeltaConvention::AccuracyDrop,
    };
    Ok(ImportanceRepresentation { deltas, signed: with_signed.then_some(signed), convention })
}

/// Column means of the deltas.
pub fn global_psi(repr: &ImportanceRepresentation) -> Result<AttributionVector> {
    if repr.n() == 0 {
        return Err(Error::EmptyData("empty importance representation".into()));
    }
    let mean = repr.deltas.mean_axis(Axis(0)).expect("nonempty");
    AttributionVector::new(mean.to_vec(), Method::Loco)
}

/// Exact deltas from a model's conditional means, for noiseless targets `y = f(x)`.
///
/// `sigma2` is only used by the normalised convention.
pub fn oracle_deltas<O: DropOracle + ?Sized>(
    oracle: &O,
    data: &Dataset,
    convention: DeltaConvention,
    sigma2: f64,
) -> Result<ImportanceRepresentation> {
    check_dim(oracle.dim(), data.p())?;
    if convention == DeltaConvention::AccuracyDrop {
        return Err(Error::Unsupported("oracle deltas are defined for regression conventions only".into()));
    }
    if convention == DeltaConvention::RSquaredNormalized && !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::invalid("sigma2 must be positive for the normalised convention"));
    }
    let (n, p) = (data.n(), data.p());
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = data.row(i);
            let f = oracle.evaluate(x);
            let mut d = Vec::with_capacity(p);
            let mut s = Vec::with_capacity(p);
            for j in 0..p {
                let r = f - oracle.drop_mean(x, j)?;
                s.push(r);
                d.push(match convention {
                    DeltaConvention::SquaredLoss => r * r,
                    DeltaConvention::RSquaredNormalized => r * r / sigma2,
                    DeltaConvention::AccuracyDrop => unreachable!("rejected above"),
                });
            }
            Ok((d, s))
        })
        .collect::<Result<_>>()?;
    let mut deltas = Array2::zeros((n, p));
    let mut signed = Array2::zeros((n, p));
    for (i, (d, s)) in rows.into_iter().enumerate() {
        deltas.row_mut(i).assign(&ndarray::Array1::from(d));
        signed.row_mut(i).assign(&ndarray::Array1::from(s));
    }
    Ok(ImportanceRepresentation { deltas, signed: Some(signed), convention })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl::{generate, ModelId, SyntheticModel, SyntheticSpec};
    use ndarray::Array1;

    #[test]
    fn dropping_uninformative_feature_with_linear_learner() {
        let x = crate::pwl::sample_uniform(200, 2, 1);
        let y = Array1::from_iter((0..200).map(|i| x[[i, 0]]));
        let d = Dataset::from_rows(x, y, Task::Regression).unwrap();
        let m = fit_loco(&d, &LearnerSpec::LinearLeastSquares, 0).unwrap();
        // Without x1 only x2 remains, which carries no signal.
        assert!(m.dropped[0].predict(&[0.7]).unwrap().abs() < 0.1);
        let r = delta_scores(&m, &d, &m.default_score().unwrap(), true).unwrap();
        assert!(r.deltas.column(1).iter().all(|v| v.abs() < 1e-6));
        let g = global_psi(&r).unwrap();
        assert!(g.scores[0] > 0.9);
    }

    #[test]
    fn oracle_first_order_expectations() {
        let (d, model, _) = generate(&SyntheticSpec::new(ModelId::FirstOrder, 20_000, 5)).unwrap();
        let r = oracle_deltas(&model, &d, DeltaConvention::SquaredLoss, 1.0).unwrap();
        let psi = global_psi(&r).unwrap().scores;
        let target = [1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 0.0, 1.0 / 3.0];
        for j in 0..6 {
            assert!((psi[j] - target[j]).abs() < 0.02 * target[j].max(0.5), "{j}: {}", psi[j]);
        }
        assert!(r.deltas.column(4).iter().all(|&v| v == 0.0));
        assert!(r.deltas.iter().all(|&v| v >= 0.0));
        let x = d.row(0);
        let expect6 = 0.25 * (x[0] + x[1] - x[2] - x[3]).powi(2);
        assert!((r.deltas[[0, 5]] - expect6).abs() < 1e-12);
    }

    #[test]
    fn counterexample_base_space_is_sign_blind() {
        let m = SyntheticModel::new(ModelId::SignCounterexample);
        let (d, _, _) = generate(&SyntheticSpec::new(ModelId::SignCounterexample, 50, 1)).unwrap();
        let r = oracle_deltas(&m, &d, DeltaConvention::SquaredLoss, 1.0).unwrap();
        let e = r.enriched().unwrap();
        for i in 0..d.n() {
            let x = d.row(i);
            assert!((r.deltas[[i, 0]] - x[1] * x[1]).abs() < 1e-15);
            assert!((r.deltas[[i, 1]] - x[1] * x[1]).abs() < 1e-15);
            if x[0] < 0.0 {
                assert!((e[[i, 2]] + x[1]).abs() < 1e-15 && (e[[i, 3]] + x[1]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn deployment_mode_substitutes_prediction() {
        let (d, _, _) = generate(&SyntheticSpec::new(ModelId::FirstOrder, 300, 2)).unwrap();
        let m = fit_loco(&d, &LearnerSpec::LinearLeastSquares, 0).unwrap();
        let s = m.default_score().unwrap();
        let pd = m.point_deltas(d.row(0), None, &s).unwrap();
        assert!(!pd.labelled);
        let (f0, fj) = m.predictions(d.row(0)).unwrap();
        for j in 0..6 {
            assert!((pd.deltas[j] - (f0 - fj[j]).powi(2) / m.sigma2).abs() < 1e-12);
        }
    }

    #[test]
    fn tsv_has_header_and_rows() {
        let r = ImportanceRepresentation {
            deltas: ndarray::array![[0.5, 0.0]],
            signed: None,
            convention: DeltaConvention::SquaredLoss,
        };
        assert_eq!(r.to_tsv(&["a".into(), "b".into()]).unwrap(), "delta_a\tdelta_b\n0.5\t0\n");
    }
}
