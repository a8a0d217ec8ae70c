//! Early fusion and sliding-window aggregation of per-frame features, window
//! labelling, and train-fit standardization.
//!
//! Each window yields, per schema column in order, `[mean, var]` for
//! continuous columns and `[mean, changed]` for discrete columns, followed by
//! one presence fraction per modality present in the schema. Missing frame
//! values are skipped by the aggregates; a column with no observed value in a
//! window aggregates to zero and the presence fraction records the gap.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{FeatureKind, FeatureSchema, FrameLabel, SessionData, Task};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("invalid window config: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("schema has {expected} columns but frames carry {got} values")]
    ColumnMismatch { expected: usize, got: usize },
    #[error("window cache error: {0}")]
    Cache(String),
}

/// Tolerance for placing frames on the window grid.
const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub window_seconds: f64,
    pub shift_seconds: f64,
    /// Minimum fraction of frames in a window carrying a non-excluded label
    /// for the window to be labelled at all.
    pub min_label_fraction: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_seconds: 3.0,
            shift_seconds: 1.0,
            min_label_fraction: 0.5,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if !(self.window_seconds.is_finite() && self.window_seconds > 0.0) {
            return Err(PreprocessError::Config("window_seconds must be positive".into()));
        }
        if !(self.shift_seconds.is_finite() && self.shift_seconds > 0.0) {
            return Err(PreprocessError::Config("shift_seconds must be positive".into()));
        }
        if self.shift_seconds > self.window_seconds {
            return Err(PreprocessError::Config(
                "shift_seconds must not exceed window_seconds".into(),
            ));
        }
        if !(self.min_label_fraction > 0.0 && self.min_label_fraction <= 1.0) {
            return Err(PreprocessError::Config(
                "min_label_fraction must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Number of grid windows fitting in a session of `duration` seconds.
    pub fn window_count(&self, duration: f64) -> usize {
        if duration + GRID_EPS < self.window_seconds {
            return 0;
        }
        ((duration - self.window_seconds) / self.shift_seconds + GRID_EPS).floor() as usize + 1
    }
}

/// One aggregated window. A task label is `None` when the window was dropped
/// for that task by the labelling rule.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowInstance {
    pub participant_id: String,
    pub session_index: u32,
    pub window_start: f64,
    pub features: Vec<f64>,
    pub arousal: Option<u8>,
    pub valence: Option<u8>,
}

impl WindowInstance {
    pub fn label(&self, task: Task) -> Option<u8> {
        match task {
            Task::Arousal => self.arousal,
            Task::Valence => self.valence,
        }
    }
}

/// Length of the windowed feature vector for a schema.
pub fn feature_dimension(schema: &FeatureSchema) -> usize {
    2 * schema.len() + schema.modalities().len()
}

/// Column names of the windowed feature vector, in order.
pub fn derived_feature_names(schema: &FeatureSchema) -> Vec<String> {
    let mut names = Vec::with_capacity(feature_dimension(schema));
    for c in schema.columns() {
        names.push(format!("{}__mean", c.name));
        match c.kind {
            FeatureKind::Continuous => names.push(format!("{}__var", c.name)),
            FeatureKind::Discrete => names.push(format!("{}__chg", c.name)),
        }
    }
    for m in schema.modalities() {
        names.push(format!("presence__{m}"));
    }
    names
}

/// Session length in seconds: the frames span `[0, last + 1/frame_rate)`.
pub fn session_duration(session: &SessionData, frame_rate_hz: f64) -> f64 {
    session
        .frames()
        .last()
        .map(|f| f.timestamp + 1.0 / frame_rate_hz)
        .unwrap_or(0.0)
}

/// Window label by majority vote over non-excluded frame labels. Exact ties
/// go to the negative class. Returns `None` (window dropped) when fewer than
/// `min_label_fraction` of the frames carry a label.
pub fn window_label(labels: &[FrameLabel], cfg: &WindowConfig) -> Option<u8> {
    if labels.is_empty() {
        return None;
    }
    let (mut pos, mut neg) = (0usize, 0usize);
    for l in labels {
        match l {
            FrameLabel::Positive => pos += 1,
            FrameLabel::Negative => neg += 1,
            FrameLabel::Excluded => {}
        }
    }
    let labelled = pos + neg;
    if labelled == 0 || (labelled as f64) < cfg.min_label_fraction * labels.len() as f64 {
        return None;
    }
    Some(u8::from(pos > neg))
}

/// Slides the window grid over a session. Windows without frames or without a
/// label for either task are skipped.
pub fn window_features(
    session: &SessionData,
    cfg: &WindowConfig,
    schema: &FeatureSchema,
    frame_rate_hz: f64,
) -> Result<Vec<WindowInstance>, PreprocessError> {
    cfg.validate()?;
    let frames = session.frames();
    if let Some(f) = frames.iter().find(|f| f.values.len() != schema.len()) {
        return Err(PreprocessError::ColumnMismatch {
            expected: schema.len(),
            got: f.values.len(),
        });
    }
    let n_windows = cfg.window_count(session_duration(session, frame_rate_hz));
    if n_windows == 0 {
        log::warn!(
            "participant {} session {}: shorter than one window, no instances",
            session.participant_id(),
            session.session_index()
        );
        return Ok(Vec::new());
    }

    let modalities = schema.modalities();
    let modality_cols: Vec<Vec<usize>> = modalities
        .iter()
        .map(|m| {
            schema
                .columns()
                .iter()
                .enumerate()
                .filter(|(_, c)| c.modality == *m)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    let mut out = Vec::with_capacity(n_windows);
    let mut lo = 0usize;
    for k in 0..n_windows {
        let start = k as f64 * cfg.shift_seconds;
        let end = start + cfg.window_seconds;
        while lo < frames.len() && frames[lo].timestamp < start - GRID_EPS {
            lo += 1;
        }
        let mut hi = lo;
        while hi < frames.len() && frames[hi].timestamp < end - GRID_EPS {
            hi += 1;
        }
        let window = &frames[lo..hi];
        if window.is_empty() {
            continue;
        }
        let labels_a: Vec<FrameLabel> = window.iter().map(|f| f.arousal).collect();
        let labels_v: Vec<FrameLabel> = window.iter().map(|f| f.valence).collect();
        let arousal = window_label(&labels_a, cfg);
        let valence = window_label(&labels_v, cfg);
        if arousal.is_none() && valence.is_none() {
            continue;
        }

        let mut features = Vec::with_capacity(feature_dimension(schema));
        for (j, col) in schema.columns().iter().enumerate() {
            let observed: Vec<f64> = window.iter().filter_map(|f| f.values[j]).collect();
            let mean = if observed.is_empty() {
                0.0
            } else {
                observed.iter().sum::<f64>() / observed.len() as f64
            };
            features.push(mean);
            match col.kind {
                FeatureKind::Continuous => {
                    let var = if observed.is_empty() {
                        0.0
                    } else {
                        let ss: f64 = observed.iter().map(|v| (v - mean) * (v - mean)).sum();
                        (ss / observed.len() as f64).max(0.0)
                    };
                    features.push(var);
                }
                FeatureKind::Discrete => {
                    let changed = observed.windows(2).any(|w| w[0] != w[1]);
                    features.push(if changed { 1.0 } else { 0.0 });
                }
            }
        }
        for cols in &modality_cols {
            let present = window
                .iter()
                .filter(|f| cols.iter().all(|&j| f.values[j].is_some()))
                .count();
            features.push(present as f64 / window.len() as f64);
        }

        out.push(WindowInstance {
            participant_id: session.participant_id().to_string(),
            session_index: session.session_index(),
            window_start: start,
            features,
            arousal,
            valence,
        });
    }
    Ok(out)
}

/// Per-feature training-set statistics. Features with zero variance are
/// masked and map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub masked: Vec<bool>,
}

impl Standardizer {
    pub fn fit_rows<'a, I>(rows: I) -> Result<Self, PreprocessError>
    where
        I: IntoIterator<Item = &'a [f64]>,
        I::IntoIter: Clone,
    {
        let rows = rows.into_iter();
        let mut count = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        for r in rows.clone() {
            if count == 0 {
                sum = vec![0.0; r.len()];
            } else if r.len() != sum.len() {
                return Err(PreprocessError::DimensionMismatch {
                    expected: sum.len(),
                    got: r.len(),
                });
            }
            for (s, v) in sum.iter_mut().zip(r) {
                *s += v;
            }
            count += 1;
        }
        if count == 0 {
            return Err(PreprocessError::EmptyTrainingSet);
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut ss = vec![0.0; mean.len()];
        for r in rows {
            for ((acc, v), m) in ss.iter_mut().zip(r).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let mut sd = Vec::with_capacity(mean.len());
        let mut masked = Vec::with_capacity(mean.len());
        for (acc, m) in ss.iter().zip(&mean) {
            let s = (acc / n).sqrt();
            if s <= 1e-12 * m.abs().max(1.0) {
                sd.push(1.0);
                masked.push(true);
            } else {
                sd.push(s);
                masked.push(false);
            }
        }
        Ok(Self { mean, sd, masked })
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, PreprocessError> {
        if x.len() != self.dimension() {
            return Err(PreprocessError::DimensionMismatch {
                expected: self.dimension(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .enumerate()
            .map(|(j, v)| {
                if self.masked[j] {
                    0.0
                } else {
                    (v - self.mean[j]) / self.sd[j]
                }
            })
            .collect())
    }
}

pub fn fit_standardizer(train: &[WindowInstance]) -> Result<Standardizer, PreprocessError> {
    Standardizer::fit_rows(train.iter().map(|w| w.features.as_slice()))
}

pub fn apply_standardizer(
    std: &Standardizer,
    instances: &[WindowInstance],
) -> Result<Vec<WindowInstance>, PreprocessError> {
    instances
        .iter()
        .map(|w| {
            Ok(WindowInstance {
                features: std.transform(&w.features)?,
                ..w.clone()
            })
        })
        .collect()
}

fn label_cell(l: Option<u8>) -> String {
    l.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes windows to the cache CSV format.
pub fn write_windows_csv(
    path: &Path,
    schema: &FeatureSchema,
    windows: &[WindowInstance],
) -> Result<(), PreprocessError> {
    let names = derived_feature_names(schema);
    let mut out = String::from("participant,session,window_start,arousal,valence");
    for n in &names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for w in windows {
        if w.features.len() != names.len() {
            return Err(PreprocessError::DimensionMismatch {
                expected: names.len(),
                got: w.features.len(),
            });
        }
        out.push_str(&format!(
            "{},{},{},{},{}",
            w.participant_id,
            w.session_index,
            w.window_start,
            label_cell(w.arousal),
            label_cell(w.valence)
        ));
        for v in &w.features {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| PreprocessError::Cache(format!("{}: {e}", path.display())))
}

pub fn read_windows_csv(path: &Path) -> Result<Vec<WindowInstance>, PreprocessError> {
    let cache = |m: String| PreprocessError::Cache(format!("{}: {m}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| cache(e.to_string()))?;
    let width = reader.headers().map_err(|e| cache(e.to_string()))?.len();
    if width < 5 {
        return Err(cache("too few columns".into()));
    }
    let label = |s: &str| -> Result<Option<u8>, PreprocessError> {
        match s {
            "" => Ok(None),
            "0" => Ok(Some(0)),
            "1" => Ok(Some(1)),
            other => Err(cache(format!("bad label {other:?}"))),
        }
    };
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| cache(e.to_string()))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| cache(format!("bad number {s:?}")));
        out.push(WindowInstance {
            participant_id: rec[0].to_string(),
            session_index: rec[1].parse().map_err(|_| cache("bad session".into()))?,
            window_start: num(&rec[2])?,
            arousal: label(&rec[3])?,
            valence: label(&rec[4])?,
            features: rec.iter().skip(5).map(num).collect::<Result<_, _>>()?,
        });
    }
    Ok(out)
}
