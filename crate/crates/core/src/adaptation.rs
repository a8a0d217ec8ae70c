//! Supervised domain adaptation by loss reweighting, with the mixing weight
//! chosen by cross-validation on the target participant's data, and the
//! CORAL unsupervised baseline.
//!
//! With `α` the weight of the target domain, the training loss is
//! `α·ε̂_T(h) + (1 − α)·ε̂_S(h)`: each target instance gets weight `α/n_T`,
//! each source instance `(1 − α)/n_S`, and all weights are multiplied by
//! `n_T + n_S` so that the total mass equals the instance count. `α = 1`
//! trains on the target alone (individualized), `α = 0` on the source alone
//! (generic).

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::auroc;
use crate::classifiers::{
    train_classifier, ClassifierError, ModelSpec, TrainedModel, WeightedDataset,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdaptationError {
    #[error("both domains are empty")]
    EmptyBothDomains,
    #[error("alpha {alpha} puts no weight on the only non-empty domain")]
    NoEffectiveMass { alpha: f64 },
    #[error("alpha {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("invalid adaptation config: {0}")]
    Config(String),
    #[error("target has {got} instances, need at least {need}")]
    TooFewTargetInstances { got: usize, need: usize },
    #[error("target data contains a single class")]
    SingleClassTarget,
    #[error("model kind {0} cannot be trained with sample weights")]
    UnweightableModelKind(crate::classifiers::ModelKind),
    #[error("no cross-validation fold contains both classes")]
    NoUsableFolds,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// Per-instance weights `(target, source)` for mixing weight `alpha`.
///
/// When one domain is empty its share is void and all mass goes to the other
/// domain, provided `alpha` gives that domain a positive share.
pub fn reweight(n_target: usize, n_source: usize, alpha: f64) -> Result<(f64, f64), AdaptationError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AdaptationError::InvalidAlpha(alpha));
    }
    if n_target == 0 && n_source == 0 {
        return Err(AdaptationError::EmptyBothDomains);
    }
    let total = (n_target + n_source) as f64;
    let raw_t = if n_target > 0 { alpha / n_target as f64 } else { 0.0 };
    let raw_s = if n_source > 0 {
        (1.0 - alpha) / n_source as f64
    } else {
        0.0
    };
    let mass = raw_t * n_target as f64 + raw_s * n_source as f64;
    if mass <= 0.0 {
        return Err(AdaptationError::NoEffectiveMass { alpha });
    }
    if n_target > 0 && n_source > 0 {
        Ok((raw_t * total, raw_s * total))
    } else {
        // a single domain carries everything: unit weights
        Ok((
            if n_target > 0 { 1.0 } else { 0.0 },
            if n_source > 0 { 1.0 } else { 0.0 },
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldStrategy {
    /// Consecutive blocks in time order.
    Contiguous,
    StratifiedRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    Auroc,
    Error,
}

impl SelectionMetric {
    pub fn name(self) -> &'static str {
        match self {
            SelectionMetric::Auroc => "auroc",
            SelectionMetric::Error => "error",
        }
    }

    fn higher_is_better(self) -> bool {
        matches!(self, SelectionMetric::Auroc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptationConfig {
    pub alpha_grid: Vec<f64>,
    pub cv_folds: usize,
    pub fold_strategy: FoldStrategy,
    pub selection_metric: SelectionMetric,
    pub seed: u64,
    /// Ridge added to both covariances by CORAL.
    pub coral_ridge: f64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            alpha_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            cv_folds: 5,
            fold_strategy: FoldStrategy::Contiguous,
            selection_metric: SelectionMetric::Auroc,
            seed: 0,
            coral_ridge: 1.0,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<(), AdaptationError> {
        if self.alpha_grid.is_empty() {
            return Err(AdaptationError::Config("alpha_grid is empty".into()));
        }
        if self.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(AdaptationError::Config("alpha_grid values must lie in [0, 1]".into()));
        }
        if self.alpha_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AdaptationError::Config(
                "alpha_grid must be strictly increasing".into(),
            ));
        }
        if self.cv_folds < 2 {
            return Err(AdaptationError::Config("cv_folds must be >= 2".into()));
        }
        if !(self.coral_ridge >= 0.0 && self.coral_ridge.is_finite()) {
            return Err(AdaptationError::Config("coral_ridge must be >= 0".into()));
        }
        Ok(())
    }
}

/// Cross-validated estimate of the selection metric for each `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSearchResult {
    pub alpha_grid: Vec<f64>,
    pub metric_mean: Vec<f64>,
    pub metric_std: Vec<f64>,
    pub chosen_alpha: f64,
    /// Number of folds that contributed (folds lacking a class are skipped).
    pub folds: usize,
    pub metric_name: String,
}

impl AlphaSearchResult {
    /// Summarizes per-α fold metrics (`fold_metrics[a][f]`) and picks the best
    /// mean; ties go to the larger `α`.
    pub fn from_fold_metrics(
        alpha_grid: &[f64],
        fold_metrics: &[Vec<f64>],
        metric: SelectionMetric,
    ) -> Result<Self, AdaptationError> {
        if alpha_grid.is_empty() || alpha_grid.len() != fold_metrics.len() {
            return Err(AdaptationError::Config(
                "fold metrics must be given for every alpha".into(),
            ));
        }
        let folds = fold_metrics[0].len();
        if folds == 0 || fold_metrics.iter().any(|m| m.len() != folds) {
            return Err(AdaptationError::NoUsableFolds);
        }
        let mut metric_mean = Vec::with_capacity(alpha_grid.len());
        let mut metric_std = Vec::with_capacity(alpha_grid.len());
        for m in fold_metrics {
            let n = m.len() as f64;
            let mean = m.iter().sum::<f64>() / n;
            let std = if m.len() > 1 {
                (m.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            metric_mean.push(mean);
            metric_std.push(std);
        }
        let mut best = 0;
        for a in 1..alpha_grid.len() {
            let better = if metric.higher_is_better() {
                metric_mean[a] >= metric_mean[best]
            } else {
                metric_mean[a] <= metric_mean[best]
            };
            if better {
                best = a;
            }
        }
        Ok(Self {
            alpha_grid: alpha_grid.to_vec(),
            metric_mean,
            metric_std,
            chosen_alpha: alpha_grid[best],
            folds,
            metric_name: metric.name().to_string(),
        })
    }

    pub fn chosen_metric(&self) -> f64 {
        let i = self
            .alpha_grid
            .iter()
            .position(|a| *a == self.chosen_alpha)
            .expect("chosen alpha is on the grid");
        self.metric_mean[i]
    }
}

/// Held-out index sets for cross-validation over `n` target instances.
pub fn cv_folds(labels: &[u8], k: usize, strategy: FoldStrategy, seed: u64) -> Vec<Vec<usize>> {
    let n = labels.len();
    match strategy {
        FoldStrategy::Contiguous => (0..k).map(|f| (f * n / k..(f + 1) * n / k).collect()).collect(),
        FoldStrategy::StratifiedRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut folds = vec![Vec::new(); k];
            let mut next = 0;
            for class in [0u8, 1] {
                let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                idx.shuffle(&mut rng);
                for i in idx {
                    folds[next % k].push(i);
                    next += 1;
                }
            }
            folds.iter_mut().for_each(|f| f.sort_unstable());
            folds
        }
    }
}

/// Training set of `source ∪ target` carrying reweighting weights for `alpha`.
pub fn mixed_dataset(
    source: &WeightedDataset,
    target: &WeightedDataset,
    alpha: f64,
) -> Result<WeightedDataset, AdaptationError> {
    let (wt, ws) = reweight(target.len(), source.len(), alpha)?;
    let s = source.reweighted(vec![ws; source.len()])?;
    let t = target.reweighted(vec![wt; target.len()])?;
    Ok(s.concat(&t)?)
}

fn has_both_classes(labels: &[u8]) -> bool {
    labels.contains(&0) && labels.contains(&1)
}

fn fold_metric(
    model: Result<TrainedModel, ClassifierError>,
    train_labels: &[u8],
    held_out: &WeightedDataset,
    metric: SelectionMetric,
) -> Result<f64, AdaptationError> {
    let labels = held_out.labels();
    match model {
        Ok(m) => {
            let scores = (0..held_out.len())
                .map(|i| m.predict_score(held_out.row(i)))
                .collect::<Result<Vec<f64>, _>>()?;
            Ok(match metric {
                SelectionMetric::Auroc => auroc(&scores, labels).expect("fold has both classes"),
                SelectionMetric::Error => {
                    let wrong = scores
                        .iter()
                        .zip(labels)
                        .filter(|(s, l)| u8::from(**s >= 0.5) != **l)
                        .count();
                    wrong as f64 / labels.len() as f64
                }
            })
        }
        // a training set with one class yields the constant predictor
        Err(ClassifierError::SingleClassData) => {
            let only = train_labels.iter().copied().find(|_| true).unwrap_or(1);
            Ok(match metric {
                SelectionMetric::Auroc => 0.5,
                SelectionMetric::Error => {
                    labels.iter().filter(|&&l| l != only).count() as f64 / labels.len() as f64
                }
            })
        }
        Err(e) => Err(e.into()),
    }
}

/// Grid search over `α` with cross-validation on the target data. The same
/// folds serve every `α`; folds lacking either class are skipped.
pub fn select_alpha(
    source: &WeightedDataset,
    target: &WeightedDataset,
    spec: &ModelSpec,
    cfg: &AdaptationConfig,
) -> Result<AlphaSearchResult, AdaptationError> {
    cfg.validate()?;
    if !spec.kind().supports_weights() {
        return Err(AdaptationError::UnweightableModelKind(spec.kind()));
    }
    if target.len() < cfg.cv_folds {
        return Err(AdaptationError::TooFewTargetInstances {
            got: target.len(),
            need: cfg.cv_folds,
        });
    }
    if !has_both_classes(target.labels()) {
        return Err(AdaptationError::SingleClassTarget);
    }
    let folds: Vec<Vec<usize>> = cv_folds(target.labels(), cfg.cv_folds, cfg.fold_strategy, cfg.seed)
        .into_iter()
        .filter(|f| {
            let l: Vec<u8> = f.iter().map(|&i| target.labels()[i]).collect();
            has_both_classes(&l)
        })
        .collect();
    if folds.is_empty() {
        return Err(AdaptationError::NoUsableFolds);
    }
    let splits: Vec<(WeightedDataset, WeightedDataset)> = folds
        .iter()
        .map(|held| {
            let mut mask = vec![false; target.len()];
            held.iter().for_each(|&i| mask[i] = true);
            let keep: Vec<usize> = (0..target.len()).filter(|&i| !mask[i]).collect();
            (target.select(&keep), target.select(held))
        })
        .collect();

    let cells: Vec<(usize, usize)> = (0..cfg.alpha_grid.len())
        .flat_map(|a| (0..splits.len()).map(move |f| (a, f)))
        .collect();
    let values = cells
        .par_iter()
        .map(|&(a, f)| {
            let alpha = cfg.alpha_grid[a];
            let (train_t, held) = &splits[f];
            let train = mixed_dataset(source, train_t, alpha)?;
            let effective: Vec<u8> = (0..train.len())
                .filter(|&i| train.weights()[i] > 0.0)
                .map(|i| train.labels()[i])
                .collect();
            fold_metric(train_classifier(spec, &train), &effective, held, cfg.selection_metric)
        })
        .collect::<Result<Vec<f64>, AdaptationError>>()?;
    let per_alpha: Vec<Vec<f64>> = values.chunks(splits.len()).map(<[f64]>::to_vec).collect();
    AlphaSearchResult::from_fold_metrics(&cfg.alpha_grid, &per_alpha, cfg.selection_metric)
}

/// Personalized model for a target participant whose accumulated past
/// sessions form `target`: selects `α` by cross-validation, then retrains on
/// all source and target data with the chosen weights.
pub fn train_personalized(
    source: &WeightedDataset,
    target: &WeightedDataset,
    spec: &ModelSpec,
    cfg: &AdaptationConfig,
) -> Result<(TrainedModel, AlphaSearchResult), AdaptationError> {
    let search = select_alpha(source, target, spec, cfg)?;
    let data = mixed_dataset(source, target, search.chosen_alpha)?;
    let model = train_classifier(spec, &data)?;
    Ok((model, search))
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, AdaptationError> {
    let n = rows.len();
    let d = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|r| r.len() != d) {
        return Err(AdaptationError::DimensionMismatch("ragged rows".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(AdaptationError::DegenerateCovariance("non-finite input".into()));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

/// Sample covariance (denominator `n − 1`) of the rows of `x`.
pub fn covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    (centered.transpose() * &centered) / (n - 1.0)
}

fn symmetric_power(m: &DMatrix<f64>, inverse: bool) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let vals = eig.eigenvalues.map(|l| {
        let l = l.max(0.0);
        if inverse {
            if l <= scale * 1e-14 {
                0.0
            } else {
                1.0 / l.sqrt()
            }
        } else {
            l.sqrt()
        }
    });
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// The CORAL map `A = (C_s + rI)^{-1/2} (C_t + rI)^{1/2}`, so that aligned
/// source features are `X_s · A`.
pub fn coral_transform(
    source: &[Vec<f64>],
    target: &[Vec<f64>],
    ridge: f64,
) -> Result<DMatrix<f64>, AdaptationError> {
    let xs = to_matrix(source)?;
    let xt = to_matrix(target)?;
    if xs.ncols() != xt.ncols() {
        return Err(AdaptationError::DimensionMismatch(format!(
            "source has {} columns, target {}",
            xs.ncols(),
            xt.ncols()
        )));
    }
    if xs.nrows() < 2 || xt.nrows() < 2 {
        return Err(AdaptationError::DimensionMismatch(
            "need at least two rows in each domain".into(),
        ));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(AdaptationError::Config("ridge must be >= 0".into()));
    }
    let d = xs.ncols();
    let eye = DMatrix::<f64>::identity(d, d) * ridge;
    let cs = covariance(&xs) + &eye;
    let ct = covariance(&xt) + &eye;
    let a = symmetric_power(&cs, true) * symmetric_power(&ct, false);
    if a.iter().any(|v| !v.is_finite()) {
        return Err(AdaptationError::DegenerateCovariance(
            "alignment map is not finite".into(),
        ));
    }
    Ok(a)
}

/// Re-colours source features with the target's second-order statistics.
pub fn coral_align(
    source: &[Vec<f64>],
    target: &[Vec<f64>],
    ridge: f64,
) -> Result<Vec<Vec<f64>>, AdaptationError> {
    let a = coral_transform(source, target, ridge)?;
    let aligned = to_matrix(source)? * a;
    Ok(aligned.row_iter().map(|r| r.iter().copied().collect()).collect())
}

/// Trains on CORAL-aligned source features with the source labels. Target
/// labels are never consulted; only `target_x` is used.
pub fn train_personalized_uda(
    source: &WeightedDataset,
    target_x: &[Vec<f64>],
    spec: &ModelSpec,
    ridge: f64,
) -> Result<TrainedModel, AdaptationError> {
    let rows: Vec<Vec<f64>> = (0..source.len()).map(|i| source.row(i).to_vec()).collect();
    let aligned = coral_align(&rows, target_x, ridge)?;
    let data = WeightedDataset::new(&aligned, source.labels().to_vec(), source.weights().to_vec())?;
    Ok(train_classifier(spec, &data)?)
}
