//! Target linear classifiers: hinge (linear SVM) and logistic loss with
//! L2 regularization `(1/2)|w|^2 + C * sum loss`, plus one-vs-rest multiclass.

pub mod logistic;
pub mod svm;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Hinge,
    Logistic,
}

impl LossKind {
    /// Loss of a signed margin `y * f(x)`.
    #[inline]
    pub fn value<T: Scalar>(self, margin: T) -> T {
        match self {
            LossKind::Hinge => (T::one() - margin).max(T::zero()),
            LossKind::Logistic => (-margin).softplus(),
        }
    }

    /// Derivative of [`LossKind::value`] with respect to the margin
    /// (subgradient `-1` inside the hinge, `0` at and beyond the kink).
    #[inline]
    pub fn derivative<T: Scalar>(self, margin: T) -> T {
        match self {
            LossKind::Hinge => {
                if margin < T::one() {
                    -T::one()
                } else {
                    T::zero()
                }
            }
            LossKind::Logistic => -(-margin).sigmoid(),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Hinge => "hinge",
            LossKind::Logistic => "logistic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig<T> {
    pub loss: LossKind,
    pub reg_c: T,
    /// Relative duality gap (hinge) or scaled gradient norm (logistic).
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn new(loss: LossKind, reg_c: T) -> Self {
        Self {
            loss,
            reg_c,
            tol: T::lit(1e-4),
            max_iter: match loss {
                LossKind::Hinge => 2_000_000,
                LossKind::Logistic => 200,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.reg_c > T::zero()) || !self.reg_c.is_finite() {
            return Err(Error::InvalidConfig(format!("C must be positive, got {}", self.reg_c)));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport<T> {
    /// Primal objective at the returned parameters.
    pub final_objective: T,
    pub iterations: usize,
    pub converged: bool,
    /// Convergence measure compared against the tolerance.
    pub certificate: T,
    pub wall_time: f64,
    /// Objective the solver descends (the dual for hinge, the primal for
    /// logistic), sampled along the run.
    pub objective_trace: Vec<T>,
}

/// `weights[k] . x + bias[k]` per head. Binary models have one head whose
/// positive side is internal label 1; multiclass models have one head per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T> {
    pub loss: LossKind,
    pub reg_c: T,
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<T>,
    pub class_map: Vec<u32>,
}

impl<T: Scalar> LinearModel<T> {
    pub fn d(&self) -> usize {
        self.weights[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_map.len()
    }

    pub fn is_binary(&self) -> bool {
        self.weights.len() == 1
    }

    pub fn decision_values(&self, x: &[T]) -> Vec<T> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, &b)| dot(w, x) + b)
            .collect()
    }

    /// Internal label for one input. Binary: decision `>= 0` is label 1.
    /// Multiclass: argmax, ties to the lowest index.
    pub fn predict_one(&self, x: &[T]) -> usize {
        let scores = self.decision_values(x);
        if self.is_binary() {
            return usize::from(scores[0] >= T::zero());
        }
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = k;
            }
        }
        best
    }

    /// Mean loss of the model's own kind over a binary dataset.
    pub fn mean_loss(&self, data: &Dataset<T>) -> Result<T> {
        if !self.is_binary() {
            return Err(Error::Unsupported("mean loss is defined for binary models".into()));
        }
        check_dim(self.d(), data.d())?;
        let y = data.signed_labels()?;
        let total: T = data
            .features()
            .iter_rows()
            .zip(&y)
            .map(|(row, &yi)| self.loss.value(yi * (dot(&self.weights[0], row) + self.bias[0])))
            .sum();
        Ok(total / T::from_count(data.n()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument::from_model(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        doc.into_model()
    }
}

const MODEL_FORMAT: &str = "poison-linear-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format: String,
    version: u32,
    loss: LossKind,
    reg_c: f64,
    class_map: Vec<u32>,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl ModelDocument {
    fn from_model<T: Scalar>(m: &LinearModel<T>) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            loss: m.loss,
            reg_c: m.reg_c.as_f64(),
            class_map: m.class_map.clone(),
            weights: m
                .weights
                .iter()
                .map(|w| w.iter().map(|v| v.as_f64()).collect())
                .collect(),
            bias: m.bias.iter().map(|v| v.as_f64()).collect(),
        }
    }

    fn into_model<T: Scalar>(self) -> Result<LinearModel<T>> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(Error::Unsupported(format!(
                "model document {} v{}",
                self.format, self.version
            )));
        }
        let heads_ok = match self.weights.len() {
            1 => self.class_map.len() == 2,
            k => k == self.class_map.len() && k > 2,
        };
        let d = self.weights.first().map_or(0, Vec::len);
        if !heads_ok || self.bias.len() != self.weights.len() || d == 0 {
            return Err(Error::Unsupported("inconsistent model shapes".into()));
        }
        if self.weights.iter().any(|w| w.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: self.weights.iter().map(Vec::len).find(|&l| l != d).unwrap_or(0),
            });
        }
        Ok(LinearModel {
            loss: self.loss,
            reg_c: T::lit(self.reg_c),
            weights: self
                .weights
                .iter()
                .map(|w| w.iter().map(|&v| T::lit(v)).collect())
                .collect(),
            bias: self.bias.iter().map(|&v| T::lit(v)).collect(),
            class_map: self.class_map,
        })
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn check_trainable<T: Scalar>(data: &Dataset<T>) -> Result<()> {
    if !data.features().all_finite() {
        return Err(Error::NonFinite("training features"));
    }
    let present = data.distinct_labels();
    if present < 2 {
        return Err(Error::SingleClass(present));
    }
    Ok(())
}

/// Trains one binary head on `x` with signed labels `y`.
pub fn train_head<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    cfg: &TrainConfig<T>,
) -> (Vec<T>, T, TrainReport<T>) {
    match cfg.loss {
        LossKind::Hinge => {
            let k = svm::gram(x);
            let s = svm::solve_hinge(x, y, cfg.reg_c, cfg.tol, cfg.max_iter, &k, None);
            (s.weights, s.bias, s.report)
        }
        LossKind::Logistic => {
            let mut s = logistic::solve_logistic(x, y, cfg.reg_c, cfg.tol, cfg.max_iter, None);
            let b = s.theta.pop().expect("theta carries the bias");
            (s.theta, b, s.report)
        }
    }
}

/// Binary training. The dataset must have exactly two label values, both present.
pub fn train<T: Scalar>(data: &Dataset<T>, cfg: &TrainConfig<T>) -> Result<(LinearModel<T>, TrainReport<T>)> {
    cfg.validate()?;
    if data.num_classes() != 2 {
        return Err(Error::Unsupported(format!(
            "binary training on {} classes; use train_multiclass_ovr",
            data.num_classes()
        )));
    }
    check_trainable(data)?;
    let y = data.signed_labels()?;
    let (w, b, report) = train_head(data.features(), &y, cfg);
    Ok((
        LinearModel {
            loss: cfg.loss,
            reg_c: cfg.reg_c,
            weights: vec![w],
            bias: vec![b],
            class_map: data.class_map().to_vec(),
        },
        report,
    ))
}

/// One-vs-rest: one head per class (that class `+1`, the rest `-1`). With two
/// classes this is exactly [`train`].
pub fn train_multiclass_ovr<T: Scalar>(
    data: &Dataset<T>,
    cfg: &TrainConfig<T>,
) -> Result<(LinearModel<T>, Vec<TrainReport<T>>)> {
    cfg.validate()?;
    if data.num_classes() == 2 {
        let (m, r) = train(data, cfg)?;
        return Ok((m, vec![r]));
    }
    check_trainable(data)?;
    if let Some(c) = data.class_counts().iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(data.class_map()[c]));
    }
    let heads: Vec<(Vec<T>, T, TrainReport<T>)> = (0..data.num_classes())
        .map(|c| {
            let y: Vec<T> = data
                .labels()
                .iter()
                .map(|&l| if l == c { T::one() } else { -T::one() })
                .collect();
            train_head(data.features(), &y, cfg)
        })
        .collect();
    let mut model = LinearModel {
        loss: cfg.loss,
        reg_c: cfg.reg_c,
        weights: Vec::with_capacity(heads.len()),
        bias: Vec::with_capacity(heads.len()),
        class_map: data.class_map().to_vec(),
    };
    let mut reports = Vec::with_capacity(heads.len());
    for (w, b, r) in heads {
        model.weights.push(w);
        model.bias.push(b);
        reports.push(r);
    }
    Ok((model, reports))
}

/// Trains binary or one-vs-rest depending on the number of classes.
pub fn train_auto<T: Scalar>(data: &Dataset<T>, cfg: &TrainConfig<T>) -> Result<LinearModel<T>> {
    Ok(train_multiclass_ovr(data, cfg)?.0)
}

pub fn predict<T: Scalar>(model: &LinearModel<T>, features: &Matrix<T>) -> Result<Vec<usize>> {
    check_dim(model.d(), features.cols())?;
    Ok(features.iter_rows().map(|r| model.predict_one(r)).collect())
}

pub fn accuracy<T: Scalar>(model: &LinearModel<T>, data: &Dataset<T>) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let pred = predict(model, data.features())?;
    let correct = pred.iter().zip(data.labels()).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / data.n() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[(f64, usize)]) -> Dataset<f64> {
        let rows: Vec<[f64; 1]> = points.iter().map(|p| [p.0]).collect();
        Dataset::new(
            Matrix::from_rows(&rows).unwrap(),
            points.iter().map(|p| p.1).collect(),
            vec![-10.0],
            vec![10.0],
            vec![0, 1],
        )
        .unwrap()
    }

    #[test]
    fn two_points_sign_correct() {
        let ds = line(&[(-1.0, 0), (1.0, 1)]);
        for loss in [LossKind::Hinge, LossKind::Logistic] {
            for c in [1.0, 5.0, 100.0] {
                let (m, _) = train(&ds, &TrainConfig::new(loss, c)).unwrap();
                assert!(m.weights[0][0] > 0.0);
                assert_eq!(accuracy(&m, &ds).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn mirrored_dataset_has_zero_bias() {
        let ds = line(&[(-2.0, 0), (-0.5, 0), (0.3, 0), (-0.3, 1), (0.5, 1), (2.0, 1)]);
        for loss in [LossKind::Hinge, LossKind::Logistic] {
            let mut cfg = TrainConfig::new(loss, 3.0);
            cfg.tol = 1e-10;
            let (m, _) = train(&ds, &cfg).unwrap();
            let primal = |b: f64| {
                let y = ds.signed_labels().unwrap();
                let w = m.weights[0][0];
                0.5 * w * w
                    + 3.0
                        * ds.features()
                            .iter_rows()
                            .zip(&y)
                            .map(|(r, &yi)| loss.value(yi * (w * r[0] + b)))
                            .sum::<f64>()
            };
            match loss {
                LossKind::Logistic => assert!(m.bias[0].abs() < 1e-6, "{}", m.bias[0]),
                // the hinge optimum in b is an interval symmetric about 0
                LossKind::Hinge => assert!((primal(m.bias[0]) - primal(0.0)).abs() < 1e-8),
            }
        }
    }

    #[test]
    fn zero_decision_goes_to_positive_class() {
        let m = LinearModel {
            loss: LossKind::Hinge,
            reg_c: 1.0,
            weights: vec![vec![1.0, -1.0]],
            bias: vec![0.0],
            class_map: vec![4, 0],
        };
        assert_eq!(predict(&m, &Matrix::from_rows(&[[2.0, 2.0]]).unwrap()).unwrap(), vec![1]);
    }

    #[test]
    fn multiclass_tie_goes_to_lowest_index() {
        let m = LinearModel {
            loss: LossKind::Hinge,
            reg_c: 1.0,
            weights: vec![vec![0.0], vec![1.0], vec![1.0]],
            bias: vec![0.0, 0.0, 0.0],
            class_map: vec![3, 7, 5],
        };
        assert_eq!(m.predict_one(&[2.0]), 1);
        assert_eq!(m.predict_one(&[0.0]), 0);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let ds = line(&[(-1.0, 0), (1.0, 1)]);
        let (m, _) = train(&ds, &TrainConfig::new(LossKind::Hinge, 1.0)).unwrap();
        let bad = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(predict(&m, &bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn single_class_rejected() {
        let ds = line(&[(-1.0, 1), (1.0, 1)]);
        assert!(matches!(
            train(&ds, &TrainConfig::new(LossKind::Logistic, 1.0)),
            Err(Error::SingleClass(1))
        ));
    }

    #[test]
    fn ovr_rejects_missing_class() {
        let rows = [[0.1], [0.2], [0.9]];
        let ds = Dataset::new(
            Matrix::from_rows(&rows).unwrap(),
            vec![0, 0, 2],
            vec![0.0],
            vec![1.0],
            vec![3, 7, 5],
        )
        .unwrap();
        assert!(matches!(
            train_multiclass_ovr(&ds, &TrainConfig::new(LossKind::Hinge, 1.0)),
            Err(Error::EmptyClass(7))
        ));
    }

    #[test]
    fn model_json_round_trip_and_unknown_keys() {
        let ds = line(&[(-1.0, 0), (1.0, 1)]);
        let (m, _) = train(&ds, &TrainConfig::new(LossKind::Logistic, 2.0)).unwrap();
        let text = m.to_json().unwrap();
        assert!(text.contains("\"loss\": \"logistic\""));
        let back: LinearModel<f64> = LinearModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        let tampered = text.replacen('{', "{\"extra\": 1,", 1);
        assert!(LinearModel::<f64>::from_json(&tampered).is_err());
    }
}
