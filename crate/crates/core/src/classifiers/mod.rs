//! Sample-weighted binary classifiers producing scores in `[0, 1]`.
//!
//! Every kind trains on a [`WeightedDataset`]. Before fitting, zero-weight
//! instances are dropped, identical `(features, label)` rows are merged with
//! their weights summed, rows are put in a canonical order and weights are
//! rescaled to mean one over the remaining rows. Integer weights are therefore
//! indistinguishable from physically duplicated instances, a global rescale of
//! the weights is a no-op, and the input order of instances never matters.
//! `knn` skips the merge and accepts uniform weights only.

mod gbdt;
mod knn;
mod logreg;
mod mlp;
mod svm;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gbdt::{gbdt_root_gain, GbdtModel, GbdtParams, TreeNode};
pub use knn::{KnnModel, KnnParams};
pub use logreg::{LogRegModel, LogRegParams};
pub use mlp::{MlpModel, MlpParams};
pub use svm::{LinearSvmModel, LinearSvmParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("no instances with positive weight")]
    EmptyData,
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("non-finite feature value at instance {0}")]
    NonFiniteFeature(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid label {0}; labels must be 0 or 1")]
    InvalidLabel(u8),
    #[error("model kind {0} does not support non-uniform sample weights")]
    UnweightableModelKind(ModelKind),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gbdt,
    Logreg,
    LinearSvm,
    Knn,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Gbdt,
        ModelKind::Logreg,
        ModelKind::LinearSvm,
        ModelKind::Knn,
        ModelKind::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gbdt => "gbdt",
            ModelKind::Logreg => "logreg",
            ModelKind::LinearSvm => "linear_svm",
            ModelKind::Knn => "knn",
            ModelKind::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Whether the kind can be fitted with non-uniform sample weights.
    pub fn supports_weights(self) -> bool {
        !matches!(self, ModelKind::Knn)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparameters {
    Gbdt(GbdtParams),
    Logreg(LogRegParams),
    LinearSvm(LinearSvmParams),
    Knn(KnnParams),
    Mlp(MlpParams),
}

impl Hyperparameters {
    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparameters::Gbdt(_) => ModelKind::Gbdt,
            Hyperparameters::Logreg(_) => ModelKind::Logreg,
            Hyperparameters::LinearSvm(_) => ModelKind::LinearSvm,
            Hyperparameters::Knn(_) => ModelKind::Knn,
            Hyperparameters::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Gbdt => Hyperparameters::Gbdt(GbdtParams::default()),
            ModelKind::Logreg => Hyperparameters::Logreg(LogRegParams::default()),
            ModelKind::LinearSvm => Hyperparameters::LinearSvm(LinearSvmParams::default()),
            ModelKind::Knn => Hyperparameters::Knn(KnnParams::default()),
            ModelKind::Mlp => Hyperparameters::Mlp(MlpParams::default()),
        }
    }

    fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidHyperparameter(m.to_string()));
        match self {
            Hyperparameters::Gbdt(p) => {
                if p.n_rounds == 0 {
                    return bad("gbdt n_rounds must be >= 1");
                }
                if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) {
                    return bad("gbdt learning_rate must be > 0");
                }
                if !(p.l2 >= 0.0 && p.l2.is_finite()) || !(p.min_child_weight >= 0.0) {
                    return bad("gbdt l2 and min_child_weight must be >= 0");
                }
            }
            Hyperparameters::Logreg(p) => {
                if !(p.l2 >= 0.0 && p.l2.is_finite()) || p.max_iter == 0 {
                    return bad("logreg l2 must be >= 0 and max_iter >= 1");
                }
            }
            Hyperparameters::LinearSvm(p) => {
                if !(p.c > 0.0 && p.c.is_finite()) || p.iterations == 0 {
                    return bad("linear_svm c must be > 0 and iterations >= 1");
                }
            }
            Hyperparameters::Knn(p) => {
                if p.k == 0 {
                    return bad("knn k must be >= 1");
                }
            }
            Hyperparameters::Mlp(p) => {
                if p.hidden == 0 || p.epochs == 0 || p.batch_size == 0 {
                    return bad("mlp hidden, epochs and batch_size must be >= 1");
                }
                if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) {
                    return bad("mlp learning_rate must be > 0");
                }
            }
        }
        Ok(())
    }
}

/// A classifier kind with its hyperparameters and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub params: Hyperparameters,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        Self {
            params: Hyperparameters::default_for(kind),
            seed,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            params: self.params.clone(),
            seed,
        }
    }
}

/// Feature rows (row-major), binary labels and non-negative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDataset {
    x: Vec<f64>,
    dim: usize,
    labels: Vec<u8>,
    weights: Vec<f64>,
}

impl WeightedDataset {
    pub fn new(
        rows: &[Vec<f64>],
        labels: Vec<u8>,
        weights: Vec<f64>,
    ) -> Result<Self, ClassifierError> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let mut x = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(ClassifierError::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            x.extend_from_slice(r);
        }
        Self::from_flat(x, dim, labels, weights)
    }

    pub fn unweighted(rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self, ClassifierError> {
        let w = vec![1.0; labels.len()];
        Self::new(rows, labels, w)
    }

    pub fn from_flat(
        x: Vec<f64>,
        dim: usize,
        labels: Vec<u8>,
        weights: Vec<f64>,
    ) -> Result<Self, ClassifierError> {
        let n = labels.len();
        if weights.len() != n || (dim > 0 && x.len() != n * dim) || (dim == 0 && !x.is_empty()) {
            return Err(ClassifierError::InvalidWeights(format!(
                "{} labels, {} weights, {} values for dimension {dim}",
                n,
                weights.len(),
                x.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l > 1) {
            return Err(ClassifierError::InvalidLabel(l));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(ClassifierError::InvalidWeights(format!(
                "weight {w} is not a finite non-negative number"
            )));
        }
        Ok(Self {
            x,
            dim,
            labels,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same rows and labels with new weights.
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Self, ClassifierError> {
        Self::from_flat(self.x.clone(), self.dim, self.labels.clone(), weights)
    }

    /// Concatenates two datasets of equal dimension.
    pub fn concat(&self, other: &Self) -> Result<Self, ClassifierError> {
        if self.is_empty() {
            return Ok(other.clone());
        }
        if other.is_empty() {
            return Ok(self.clone());
        }
        if self.dim != other.dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut x = self.x.clone();
        x.extend_from_slice(&other.x);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        Self::from_flat(x, self.dim, labels, weights)
    }

    /// Subset by instance indices, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Self {
            x,
            dim: self.dim,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            weights: idx.iter().map(|&i| self.weights[i]).collect(),
        }
    }
}

/// Canonicalized training rows handed to the individual learners.
#[derive(Debug, Clone)]
pub(crate) struct TrainingRows {
    pub x: Vec<f64>,
    pub dim: usize,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl TrainingRows {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }
}

fn cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(u, v)| u.total_cmp(v))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn snap_uniform(w: &mut [f64]) {
    if let Some(&first) = w.first() {
        if w.iter().all(|&v| v == first) {
            w.iter_mut().for_each(|v| *v = 1.0);
        }
    }
}

pub(crate) fn prepare(data: &WeightedDataset, merge: bool) -> Result<TrainingRows, ClassifierError> {
    let dim = data.dim();
    let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.weights[i] > 0.0).collect();
    if idx.is_empty() {
        return Err(ClassifierError::EmptyData);
    }
    if let Some(&i) = idx.iter().find(|&&i| data.row(i).iter().any(|v| !v.is_finite())) {
        return Err(ClassifierError::NonFiniteFeature(i));
    }
    let first = data.labels[idx[0]];
    if idx.iter().all(|&i| data.labels[i] == first) {
        return Err(ClassifierError::SingleClassData);
    }

    let mut w_in: Vec<f64> = data.weights.clone();
    {
        let mut kept: Vec<f64> = idx.iter().map(|&i| w_in[i]).collect();
        snap_uniform(&mut kept);
        for (&i, v) in idx.iter().zip(kept) {
            w_in[i] = v;
        }
    }

    // stable sort keeps equal rows in input order, so merged sums are
    // reproducible for a given multiset of instances
    idx.sort_by(|&a, &b| {
        cmp_rows(data.row(a), data.row(b)).then(data.labels[a].cmp(&data.labels[b]))
    });

    let mut x = Vec::with_capacity(idx.len() * dim);
    let mut y = Vec::with_capacity(idx.len());
    let mut w: Vec<f64> = Vec::with_capacity(idx.len());
    let mut prev: Option<usize> = None;
    for &i in &idx {
        let same = merge
            && prev.is_some_and(|p| {
                data.labels[p] == data.labels[i]
                    && data
                        .row(p)
                        .iter()
                        .zip(data.row(i))
                        .all(|(a, b)| a.to_bits() == b.to_bits())
            });
        if same {
            *w.last_mut().expect("merged row has a predecessor") += w_in[i];
        } else {
            x.extend_from_slice(data.row(i));
            y.push(f64::from(data.labels[i]));
            w.push(w_in[i]);
            prev = Some(i);
        }
    }

    snap_uniform(&mut w);
    if w.iter().any(|&v| v != 1.0) {
        let total: f64 = w.iter().sum();
        let scale = w.len() as f64 / total;
        w.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(TrainingRows { x, dim, y, w })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "fitted", rename_all = "snake_case")]
pub enum FittedParams {
    Gbdt(GbdtModel),
    Logreg(LogRegModel),
    LinearSvm(LinearSvmModel),
    Knn(KnnModel),
    Mlp(MlpModel),
}

/// A fitted classifier. Immutable; prediction is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub dim: usize,
    pub params: FittedParams,
}

impl TrainedModel {
    pub fn predict_score(&self, features: &[f64]) -> Result<f64, ClassifierError> {
        if features.len() != self.dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim,
                got: features.len(),
            });
        }
        Ok(match &self.params {
            FittedParams::Gbdt(m) => sigmoid(m.margin(features)),
            FittedParams::Logreg(m) => sigmoid(m.margin(features)),
            FittedParams::LinearSvm(m) => sigmoid(m.margin(features)),
            FittedParams::Knn(m) => m.score(features),
            FittedParams::Mlp(m) => sigmoid(m.margin(features)),
        })
    }

    pub fn predict_label(&self, features: &[f64], threshold: f64) -> Result<u8, ClassifierError> {
        Ok(u8::from(self.predict_score(features)? >= threshold))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn train_classifier(
    spec: &ModelSpec,
    data: &WeightedDataset,
) -> Result<TrainedModel, ClassifierError> {
    spec.params.validate()?;
    let params = match &spec.params {
        Hyperparameters::Knn(p) => {
            let rows = prepare(data, false)?;
            if rows.w.iter().any(|&v| v != 1.0) {
                return Err(ClassifierError::UnweightableModelKind(ModelKind::Knn));
            }
            FittedParams::Knn(knn::fit(&rows, p))
        }
        other => {
            let rows = prepare(data, true)?;
            match other {
                Hyperparameters::Gbdt(p) => FittedParams::Gbdt(gbdt::fit(&rows, p)),
                Hyperparameters::Logreg(p) => FittedParams::Logreg(logreg::fit(&rows, p)),
                Hyperparameters::LinearSvm(p) => FittedParams::LinearSvm(svm::fit(&rows, p)),
                Hyperparameters::Mlp(p) => FittedParams::Mlp(mlp::fit(&rows, p, spec.seed)),
                Hyperparameters::Knn(_) => unreachable!("handled above"),
            }
        }
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        dim: data.dim(),
        params,
    })
}

pub fn predict_score(model: &TrainedModel, features: &[f64]) -> Result<f64, ClassifierError> {
    model.predict_score(features)
}

pub fn predict_label(
    model: &TrainedModel,
    features: &[f64],
    threshold: f64,
) -> Result<u8, ClassifierError> {
    model.predict_label(features, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_data() -> WeightedDataset {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        WeightedDataset::unweighted(&rows, vec![0, 0, 1, 1]).unwrap()
    }

    #[test]
    fn prepare_merges_duplicates_and_normalizes() {
        let rows = vec![vec![1.0], vec![0.0], vec![1.0], vec![2.0]];
        let d = WeightedDataset::unweighted(&rows, vec![1, 0, 1, 0]).unwrap();
        let p = prepare(&d, true).unwrap();
        assert_eq!(p.x, vec![0.0, 1.0, 2.0]);
        assert_eq!(p.y, vec![0.0, 1.0, 0.0]);
        assert_eq!(p.w, vec![0.75, 1.5, 0.75]);
    }

    #[test]
    fn prepare_snaps_uniform_weights() {
        let rows = vec![vec![0.0], vec![1.0]];
        let d = WeightedDataset::new(&rows, vec![0, 1], vec![5.0 / 3.0; 2]).unwrap();
        let p = prepare(&d, true).unwrap();
        assert_eq!(p.w, vec![1.0, 1.0]);
    }

    #[test]
    fn error_paths() {
        let rows = vec![vec![0.0], vec![1.0]];
        let single = WeightedDataset::unweighted(&rows, vec![1, 1]).unwrap();
        let spec = ModelSpec::new(ModelKind::Gbdt, 0);
        assert_eq!(train_classifier(&spec, &single), Err(ClassifierError::SingleClassData));
        let zero = WeightedDataset::new(&rows, vec![0, 1], vec![0.0, 0.0]).unwrap();
        assert_eq!(train_classifier(&spec, &zero), Err(ClassifierError::EmptyData));
        let nan = WeightedDataset::unweighted(&[vec![f64::NAN], vec![1.0]], vec![0, 1]).unwrap();
        assert_eq!(train_classifier(&spec, &nan), Err(ClassifierError::NonFiniteFeature(0)));
        assert!(WeightedDataset::new(&rows, vec![0, 1], vec![-1.0, 1.0]).is_err());
        assert!(WeightedDataset::new(&rows, vec![0, 2], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn zero_weight_single_class_remainder_fails() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        let d = WeightedDataset::new(&rows, vec![0, 1, 1], vec![0.0, 1.0, 1.0]).unwrap();
        let spec = ModelSpec::new(ModelKind::Logreg, 0);
        assert_eq!(train_classifier(&spec, &d), Err(ClassifierError::SingleClassData));
    }

    #[test]
    fn label_threshold_boundary() {
        let m = train_classifier(&ModelSpec::new(ModelKind::Gbdt, 0), &line_data()).unwrap();
        let s = m.predict_score(&[3.0]).unwrap();
        assert_eq!(m.predict_label(&[3.0], s).unwrap(), 1);
        assert_eq!(m.predict_label(&[3.0], s + 1e-9).unwrap(), 0);
        assert!(matches!(
            m.predict_score(&[1.0, 2.0]),
            Err(ClassifierError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn every_kind_trains_and_scores_in_unit_interval() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i % 7) as f64 / 7.0])
            .collect();
        let labels: Vec<u8> = rows.iter().map(|r| u8::from(r[0] + 0.3 * r[1] > 0.1)).collect();
        let data = WeightedDataset::unweighted(&rows, labels).unwrap();
        for kind in ModelKind::ALL {
            let m = train_classifier(&ModelSpec::new(kind, 7), &data).unwrap();
            for r in &rows {
                let s = m.predict_score(r).unwrap();
                assert!((0.0..=1.0).contains(&s) && s.is_finite(), "{kind}: {s}");
            }
            let back = TrainedModel::from_json(&m.to_json()).unwrap();
            assert_eq!(back, m, "{kind} json round trip");
        }
    }

    #[test]
    fn spec_json_shape() {
        let spec = ModelSpec::new(ModelKind::Knn, 3);
        let v: serde_json::Value = serde_json::to_value(&spec).unwrap();
        assert_eq!(v["kind"], "knn");
        assert_eq!(v["k"], 5);
        assert_eq!(v["seed"], 3);
    }

    #[test]
    fn knn_rejects_nonuniform_weights() {
        let rows = vec![vec![0.0], vec![1.0]];
        let d = WeightedDataset::new(&rows, vec![0, 1], vec![1.0, 2.0]).unwrap();
        assert_eq!(
            train_classifier(&ModelSpec::new(ModelKind::Knn, 0), &d),
            Err(ClassifierError::UnweightableModelKind(ModelKind::Knn))
        );
    }
}
