//! Session-based chronological evaluation.
//!
//! Every participant in turn is the test participant (one round). For a
//! participant with `S` sessions there are `S − 1` experiments: experiment `j`
//! tests on session `j + 1` after training on sessions `1..=j` of that
//! participant and/or all sessions of the other participants, depending on
//! the method.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::{
    mixed_dataset, select_alpha, train_personalized_uda, AdaptationConfig, AdaptationError,
    AlphaSearchResult,
};
use crate::analysis::{auroc, f1, roc_points, AnalysisError};
use crate::classifiers::{
    train_classifier, ClassifierError, Hyperparameters, ModelKind, ModelSpec, TrainedModel,
    WeightedDataset,
};
use crate::dataset::{exclude_absent_frames, DatasetError, FeatureSchema, StudyManifest, Task};
use crate::preprocess::{window_features, PreprocessError, Standardizer, WindowConfig, WindowInstance};
use crate::seeding::derive_seed;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("unknown participant {0:?}")]
    UnknownParticipant(String),
    #[error("temporal audit failed: {0}")]
    TemporalLeak(String),
    #[error("test session has no labelled instances")]
    NoTestInstances,
    #[error("test session contains a single class")]
    SingleClassTestSession,
    #[error("no results to average")]
    EmptyResults,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("results file {path}: {message}")]
    Results { path: PathBuf, message: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Adaptation(#[from] AdaptationError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Individualized,
    Generic,
    PersonalizedSda,
    PersonalizedUda,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Individualized,
        Method::Generic,
        Method::PersonalizedSda,
        Method::PersonalizedUda,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Individualized => "individualized",
            Method::Generic => "generic",
            Method::PersonalizedSda => "personalized_sda",
            Method::PersonalizedUda => "personalized_uda",
        }
    }

    /// Short column label used in tables and comparisons.
    pub fn abbrev(self) -> &'static str {
        match self {
            Method::Individualized => "IND",
            Method::Generic => "GEN",
            Method::PersonalizedSda => "PER",
            Method::PersonalizedUda => "UDA",
        }
    }

    /// Accepts the full name or the abbreviation (case-insensitive).
    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s || m.abbrev().eq_ignore_ascii_case(s))
    }

    fn uses_target(self) -> bool {
        matches!(self, Method::Individualized | Method::PersonalizedSda)
    }

    fn uses_source(self) -> bool {
        !matches!(self, Method::Individualized)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Participants and their session counts, in manifest order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudyLayout {
    pub participants: Vec<(String, u32)>,
}

impl From<&StudyManifest> for StudyLayout {
    fn from(m: &StudyManifest) -> Self {
        Self {
            participants: m
                .participants
                .iter()
                .map(|p| (p.id.clone(), p.sessions.len() as u32))
                .collect(),
        }
    }
}

impl StudyLayout {
    pub fn session_count(&self, id: &str) -> Option<u32> {
        self.participants.iter().find(|(p, _)| p == id).map(|(_, n)| *n)
    }

    /// 1-based round number of a participant.
    pub fn round_of(&self, id: &str) -> Option<usize> {
        self.participants.iter().position(|(p, _)| p == id).map(|i| i + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub test_participant: String,
    pub train_sessions: Vec<u32>,
    pub test_session: u32,
    pub source_participants: Vec<String>,
    pub method: Method,
    pub kind: ModelKind,
    pub task: Task,
}

impl ExperimentPlan {
    /// Identifies the cell; also used to name per-cell output files.
    pub fn key(&self) -> String {
        cell_key(&self.test_participant, self.test_session, self.method, self.kind, self.task)
    }

    /// Seed label shared by every method evaluated on the same cell, so that
    /// methods which reduce to one another train identically.
    fn seed_labels(&self) -> [String; 4] {
        [
            self.test_participant.clone(),
            self.test_session.to_string(),
            self.kind.to_string(),
            self.task.to_string(),
        ]
    }
}

/// File-name-safe identifier of a result cell.
pub fn cell_key(participant: &str, test_session: u32, method: Method, kind: ModelKind, task: Task) -> String {
    format!("{}_s{test_session}_{method}_{kind}_{task}", sanitize(participant))
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// The `S − 1` chronological plans for one participant.
pub fn plan_round(
    layout: &StudyLayout,
    test_participant: &str,
    method: Method,
    kind: ModelKind,
    task: Task,
) -> Result<Vec<ExperimentPlan>, ProtocolError> {
    let sessions = layout
        .session_count(test_participant)
        .ok_or_else(|| ProtocolError::UnknownParticipant(test_participant.to_string()))?;
    if sessions < 2 {
        log::warn!("participant {test_participant} has a single session; no experiments");
        return Ok(Vec::new());
    }
    let sources: Vec<String> = layout
        .participants
        .iter()
        .filter(|(p, _)| p != test_participant)
        .map(|(p, _)| p.clone())
        .collect();
    Ok((1..sessions)
        .map(|j| ExperimentPlan {
            test_participant: test_participant.to_string(),
            train_sessions: (1..=j).collect(),
            test_session: j + 1,
            source_participants: sources.clone(),
            method,
            kind,
            task,
        })
        .collect())
}

/// Windowed instances of a whole study, keyed by participant and session.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedStudy {
    pub schema: FeatureSchema,
    pub layout: StudyLayout,
    sessions: BTreeMap<(String, u32), Vec<WindowInstance>>,
}

impl PreparedStudy {
    /// Groups already-windowed instances. Instances within a session are put
    /// in time order.
    pub fn from_windows(
        schema: FeatureSchema,
        layout: StudyLayout,
        windows: Vec<WindowInstance>,
    ) -> Result<Self, ProtocolError> {
        let mut sessions: BTreeMap<(String, u32), Vec<WindowInstance>> = BTreeMap::new();
        for w in windows {
            let n = layout
                .session_count(&w.participant_id)
                .ok_or_else(|| ProtocolError::UnknownParticipant(w.participant_id.clone()))?;
            if w.session_index == 0 || w.session_index > n {
                return Err(ProtocolError::Config(format!(
                    "participant {} has no session {}",
                    w.participant_id, w.session_index
                )));
            }
            sessions
                .entry((w.participant_id.clone(), w.session_index))
                .or_default()
                .push(w);
        }
        for v in sessions.values_mut() {
            v.sort_by(|a, b| a.window_start.total_cmp(&b.window_start));
        }
        Ok(Self {
            schema,
            layout,
            sessions,
        })
    }

    /// Loads every session, removes excluded frames and slides windows.
    pub fn load(manifest: &StudyManifest, cfg: &WindowConfig) -> Result<Self, ProtocolError> {
        let layout = StudyLayout::from(manifest);
        let mut windows = Vec::new();
        for (pid, n) in &layout.participants {
            for k in 1..=*n {
                let session = manifest.load_session(pid, k)?;
                let (kept, removed) = exclude_absent_frames(&session);
                if removed > 0 {
                    log::info!("participant {pid} session {k}: {removed} excluded frames dropped");
                }
                windows.extend(window_features(&kept, cfg, &manifest.schema, manifest.frame_rate_hz)?);
            }
        }
        Self::from_windows(manifest.schema.clone(), layout, windows)
    }

    pub fn windows(&self, participant: &str, session: u32) -> &[WindowInstance] {
        self.sessions
            .get(&(participant.to_string(), session))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn all_windows(&self) -> impl Iterator<Item = &WindowInstance> {
        self.sessions.values().flatten()
    }
}

/// Instances available to one plan, restricted to those labelled for its task.
#[derive(Debug, Clone, PartialEq)]
pub struct CellData {
    /// Past sessions of the test participant, in time order.
    pub target: Vec<WindowInstance>,
    /// All sessions of the other participants.
    pub source: Vec<WindowInstance>,
    pub test: Vec<WindowInstance>,
}

pub fn assemble(plan: &ExperimentPlan, study: &PreparedStudy) -> CellData {
    let labelled = |ws: &[WindowInstance]| -> Vec<WindowInstance> {
        ws.iter().filter(|w| w.label(plan.task).is_some()).cloned().collect()
    };
    let mut target = Vec::new();
    for &s in &plan.train_sessions {
        target.extend(labelled(study.windows(&plan.test_participant, s)));
    }
    let mut source = Vec::new();
    for p in &plan.source_participants {
        let n = study.layout.session_count(p).unwrap_or(0);
        for s in 1..=n {
            source.extend(labelled(study.windows(p, s)));
        }
    }
    CellData {
        target,
        source,
        test: labelled(study.windows(&plan.test_participant, plan.test_session)),
    }
}

/// Checks that no test-participant instance used for training lies at or
/// after the test session, that source data never comes from the test
/// participant, and that the test set is exactly the test session.
pub fn audit_plan(plan: &ExperimentPlan, data: &CellData) -> Result<(), ProtocolError> {
    let leak = |m: String| Err(ProtocolError::TemporalLeak(format!("{}: {m}", plan.key())));
    if plan.train_sessions.is_empty()
        || plan.train_sessions.iter().enumerate().any(|(i, &s)| s != i as u32 + 1)
        || plan.test_session != *plan.train_sessions.last().unwrap() + 1
    {
        return leak("train sessions must be 1..j with test session j+1".into());
    }
    if plan.source_participants.contains(&plan.test_participant) {
        return leak("test participant listed as a source".into());
    }
    if plan.method.uses_target() {
        for w in &data.target {
            if w.participant_id != plan.test_participant || w.session_index >= plan.test_session {
                return leak(format!(
                    "training window {} s{} t={} not before test session",
                    w.participant_id, w.session_index, w.window_start
                ));
            }
        }
    }
    if plan.method.uses_source() {
        if let Some(w) = data.source.iter().find(|w| w.participant_id == plan.test_participant) {
            return leak(format!("source window from test participant at s{}", w.session_index));
        }
    }
    if let Some(w) = data
        .test
        .iter()
        .find(|w| w.participant_id != plan.test_participant || w.session_index != plan.test_session)
    {
        return leak(format!("foreign test window {} s{}", w.participant_id, w.session_index));
    }
    Ok(())
}

/// Order-sensitive hash of the test instances (identity and label).
pub fn test_fingerprint(test: &[WindowInstance], task: Task) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for w in test {
        eat(w.participant_id.as_bytes());
        eat(&w.session_index.to_le_bytes());
        eat(&w.window_start.to_bits().to_le_bytes());
        eat(&[w.label(task).unwrap_or(2)]);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub plan: ExperimentPlan,
    pub auroc: f64,
    pub f1_positive: f64,
    pub f1_negative: f64,
    pub roc_points: Vec<(f64, f64)>,
    /// Scores of the test instances in time order.
    pub scores: Vec<f64>,
    pub n_test_instances: usize,
    pub chosen_alpha: Option<f64>,
    pub alpha_search: Option<AlphaSearchResult>,
    pub test_fingerprint: u64,
}

fn dataset(ws: &[&WindowInstance], std: &Standardizer, task: Task) -> Result<WeightedDataset, ProtocolError> {
    let rows = ws
        .iter()
        .map(|w| std.transform(&w.features))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = ws.iter().map(|w| w.label(task).expect("labelled")).collect();
    Ok(WeightedDataset::unweighted(&rows, labels)?)
}

fn fit_on(ws: &[&WindowInstance]) -> Result<Standardizer, ProtocolError> {
    Ok(Standardizer::fit_rows(ws.iter().map(|w| w.features.as_slice()))?)
}

/// Trains by the plan's method and evaluates on the test session. The
/// standardizer is fitted on the instances the final model trains on (those
/// with positive weight) and applied to the test session.
///
/// For `personalized_sda` a single-value `alpha_grid` fixes `α` without
/// cross-validation.
pub fn run_experiment(
    plan: &ExperimentPlan,
    study: &PreparedStudy,
    spec: &ModelSpec,
    cfg: &AdaptationConfig,
    global_seed: u64,
) -> Result<ExperimentResult, ProtocolError> {
    if spec.kind() != plan.kind {
        return Err(ProtocolError::Config(format!(
            "model spec is {} but plan wants {}",
            spec.kind(),
            plan.kind
        )));
    }
    cfg.validate()?;
    let data = assemble(plan, study);
    audit_plan(plan, &data)?;
    if data.test.is_empty() {
        return Err(ProtocolError::NoTestInstances);
    }
    let test_labels: Vec<u8> = data.test.iter().map(|w| w.label(plan.task).unwrap()).collect();
    if !(test_labels.contains(&0) && test_labels.contains(&1)) {
        return Err(ProtocolError::SingleClassTestSession);
    }

    let labels = plan.seed_labels();
    let label_refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let seed = derive_seed(global_seed, &label_refs);
    let spec = spec.with_seed(seed);
    let target: Vec<&WindowInstance> = data.target.iter().collect();
    let source: Vec<&WindowInstance> = data.source.iter().collect();

    let mut chosen_alpha = None;
    let mut alpha_search = None;
    let (model, std): (TrainedModel, Standardizer) = match plan.method {
        Method::Individualized | Method::Generic => {
            let train = if plan.method == Method::Individualized { &target } else { &source };
            let std = fit_on(train)?;
            (train_classifier(&spec, &dataset(train, &std, plan.task)?)?, std)
        }
        Method::PersonalizedSda => {
            let alpha = if cfg.alpha_grid.len() == 1 {
                cfg.alpha_grid[0]
            } else {
                let both: Vec<&WindowInstance> = source.iter().chain(&target).copied().collect();
                let std = fit_on(&both)?;
                let search_cfg = AdaptationConfig {
                    seed: derive_seed(seed, &["cv"]),
                    ..cfg.clone()
                };
                let search = select_alpha(
                    &dataset(&source, &std, plan.task)?,
                    &dataset(&target, &std, plan.task)?,
                    &spec,
                    &search_cfg,
                )?;
                let a = search.chosen_alpha;
                alpha_search = Some(search);
                a
            };
            chosen_alpha = Some(alpha);
            // endpoints train on one domain only; so does the standardizer
            let used: Vec<&WindowInstance> = match alpha {
                a if a >= 1.0 => target.clone(),
                a if a <= 0.0 => source.clone(),
                _ => source.iter().chain(&target).copied().collect(),
            };
            let std = fit_on(&used)?;
            let s = if alpha >= 1.0 { Vec::new() } else { source.clone() };
            let t = if alpha <= 0.0 { Vec::new() } else { target.clone() };
            let (ds, dt) = (dataset(&s, &std, plan.task)?, dataset(&t, &std, plan.task)?);
            let train = if s.is_empty() {
                dt
            } else if t.is_empty() {
                ds
            } else {
                mixed_dataset(&ds, &dt, alpha)?
            };
            (train_classifier(&spec, &train)?, std)
        }
        Method::PersonalizedUda => {
            let std = fit_on(&source)?;
            let test_x = data
                .test
                .iter()
                .map(|w| std.transform(&w.features))
                .collect::<Result<Vec<_>, _>>()?;
            let model = train_personalized_uda(&dataset(&source, &std, plan.task)?, &test_x, &spec, cfg.coral_ridge)?;
            (model, std)
        }
    };

    let scores = data
        .test
        .iter()
        .map(|w| Ok(model.predict_score(&std.transform(&w.features)?)?))
        .collect::<Result<Vec<f64>, ProtocolError>>()?;
    let pred: Vec<u8> = scores.iter().map(|&s| u8::from(s >= 0.5)).collect();
    Ok(ExperimentResult {
        plan: plan.clone(),
        auroc: auroc(&scores, &test_labels)?,
        f1_positive: f1(&pred, &test_labels, 1)?,
        f1_negative: f1(&pred, &test_labels, 0)?,
        roc_points: roc_points(&scores, &test_labels)?,
        n_test_instances: scores.len(),
        scores,
        chosen_alpha,
        alpha_search,
        test_fingerprint: test_fingerprint(&data.test, plan.task),
    })
}

/// Test-instance-weighted averages (wAVE).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub sessions: Vec<SessionScore>,
    pub wave_auroc: f64,
    pub wave_f1_positive: f64,
    pub wave_f1_negative: f64,
    pub n_test_instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    pub participant: String,
    pub test_session: u32,
    pub auroc: f64,
    pub f1_positive: f64,
    pub f1_negative: f64,
    pub n: usize,
}

impl From<&ExperimentResult> for SessionScore {
    fn from(r: &ExperimentResult) -> Self {
        Self {
            participant: r.plan.test_participant.clone(),
            test_session: r.plan.test_session,
            auroc: r.auroc,
            f1_positive: r.f1_positive,
            f1_negative: r.f1_negative,
            n: r.n_test_instances,
        }
    }
}

pub fn weighted_average(results: &[ExperimentResult]) -> Result<RoundSummary, ProtocolError> {
    let scores: Vec<SessionScore> = results.iter().map(SessionScore::from).collect();
    summarize(scores)
}

/// wAVE over per-session scores.
pub fn summarize(sessions: Vec<SessionScore>) -> Result<RoundSummary, ProtocolError> {
    let total: usize = sessions.iter().map(|s| s.n).sum();
    if sessions.is_empty() || total == 0 {
        return Err(ProtocolError::EmptyResults);
    }
    let avg = |f: fn(&SessionScore) -> f64| {
        let v = sessions.iter().map(|s| f(s) * s.n as f64).sum::<f64>() / total as f64;
        // keep the mean inside the range of its inputs despite rounding
        let lo = sessions.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = sessions.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        v.clamp(lo, hi)
    };
    Ok(RoundSummary {
        wave_auroc: avg(|s| s.auroc),
        wave_f1_positive: avg(|s| s.f1_positive),
        wave_f1_negative: avg(|s| s.f1_negative),
        n_test_instances: total,
        sessions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub methods: Vec<Method>,
    pub kinds: Vec<ModelKind>,
    pub tasks: Vec<Task>,
    pub adaptation: AdaptationConfig,
    /// Overrides of the default hyperparameters, at most one per kind.
    pub hyperparameters: Vec<Hyperparameters>,
    pub seed: u64,
    /// Worker threads for cells; 0 uses the rayon default.
    pub threads: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            kinds: vec![ModelKind::Gbdt],
            tasks: Task::ALL.to_vec(),
            adaptation: AdaptationConfig::default(),
            hyperparameters: Vec::new(),
            seed: 0,
            threads: 0,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.methods.is_empty() || self.kinds.is_empty() || self.tasks.is_empty() {
            return Err(ProtocolError::Config(
                "at least one method, model kind and task is required".into(),
            ));
        }
        let mut seen = Vec::new();
        for h in &self.hyperparameters {
            if seen.contains(&h.kind()) {
                return Err(ProtocolError::Config(format!(
                    "duplicate hyperparameters for {}",
                    h.kind()
                )));
            }
            seen.push(h.kind());
        }
        self.adaptation.validate()?;
        Ok(())
    }

    pub fn spec_for(&self, kind: ModelKind) -> ModelSpec {
        let params = self
            .hyperparameters
            .iter()
            .find(|h| h.kind() == kind)
            .cloned()
            .unwrap_or_else(|| Hyperparameters::default_for(kind));
        ModelSpec { params, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellStatus {
    Ok { result: Box<ExperimentResult> },
    Skipped { reason: String },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub round: usize,
    pub plan: ExperimentPlan,
    #[serde(flatten)]
    pub status: CellStatus,
}

impl CellRecord {
    pub fn result(&self) -> Option<&ExperimentResult> {
        match &self.status {
            CellStatus::Ok { result } => Some(result),
            _ => None,
        }
    }

    fn sort_key(&self) -> (usize, u32, Method, ModelKind, Task) {
        (
            self.round,
            self.plan.test_session,
            self.plan.method,
            self.plan.kind,
            self.plan.task,
        )
    }
}

/// wAVE of one participant or of the whole study for a (method, kind, task).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// `None` for the cross-participant average.
    pub participant: Option<String>,
    pub method: Method,
    pub kind: ModelKind,
    pub task: Task,
    pub summary: RoundSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResults {
    pub seed: u64,
    pub cells: Vec<CellRecord>,
}

impl StudyResults {
    pub fn successful(&self) -> impl Iterator<Item = &ExperimentResult> {
        self.cells.iter().filter_map(CellRecord::result)
    }

    /// Per-participant and overall wAVE for every combination with at least
    /// one successful cell.
    pub fn summaries(&self, layout: &StudyLayout) -> Vec<SummaryRow> {
        let mut groups: BTreeMap<(Method, ModelKind, Task), Vec<&ExperimentResult>> = BTreeMap::new();
        for r in self.successful() {
            groups.entry((r.plan.method, r.plan.kind, r.plan.task)).or_default().push(r);
        }
        let mut out = Vec::new();
        for ((method, kind, task), rs) in groups {
            for (pid, _) in &layout.participants {
                let mine: Vec<ExperimentResult> = rs
                    .iter()
                    .filter(|r| &r.plan.test_participant == pid)
                    .map(|r| (*r).clone())
                    .collect();
                if let Ok(summary) = weighted_average(&mine) {
                    out.push(SummaryRow {
                        participant: Some(pid.clone()),
                        method,
                        kind,
                        task,
                        summary,
                    });
                }
            }
            let all: Vec<ExperimentResult> = rs.iter().map(|r| (*r).clone()).collect();
            if let Ok(summary) = weighted_average(&all) {
                out.push(SummaryRow {
                    participant: None,
                    method,
                    kind,
                    task,
                    summary,
                });
            }
        }
        out
    }
}

/// Every plan of the study, in round order.
pub fn plan_study(layout: &StudyLayout, cfg: &StudyConfig) -> Result<Vec<(usize, ExperimentPlan)>, ProtocolError> {
    let mut plans = Vec::new();
    for (round, (pid, _)) in layout.participants.iter().enumerate() {
        for &method in &cfg.methods {
            for &kind in &cfg.kinds {
                for &task in &cfg.tasks {
                    for p in plan_round(layout, pid, method, kind, task)? {
                        plans.push((round + 1, p));
                    }
                }
            }
        }
    }
    Ok(plans)
}

/// Runs every cell. Failures are recorded per cell; the result does not
/// depend on the number of threads.
pub fn run_study(study: &PreparedStudy, cfg: &StudyConfig) -> Result<StudyResults, ProtocolError> {
    use rayon::prelude::*;
    cfg.validate()?;
    let plans = plan_study(&study.layout, cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| ProtocolError::Config(format!("thread pool: {e}")))?;
    let mut cells: Vec<CellRecord> = pool.install(|| {
        plans
            .par_iter()
            .map(|(round, plan)| {
                let spec = cfg.spec_for(plan.kind);
                let status = match run_experiment(plan, study, &spec, &cfg.adaptation, cfg.seed) {
                    Ok(r) => CellStatus::Ok { result: Box::new(r) },
                    Err(e @ (ProtocolError::SingleClassTestSession | ProtocolError::NoTestInstances)) => {
                        CellStatus::Skipped { reason: e.to_string() }
                    }
                    Err(e) => {
                        log::warn!("cell {} failed: {e}", plan.key());
                        CellStatus::Failed { reason: e.to_string() }
                    }
                };
                CellRecord {
                    round: *round,
                    plan: plan.clone(),
                    status,
                }
            })
            .collect()
    });
    cells.sort_by_key(CellRecord::sort_key);
    Ok(StudyResults {
        seed: cfg.seed,
        cells,
    })
}

/// One line of the result matrix CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub round: usize,
    pub participant: String,
    pub test_session: u32,
    pub method: Method,
    pub kind: ModelKind,
    pub task: Task,
    pub auroc: f64,
    pub f1_pos: f64,
    pub f1_neg: f64,
    pub n: usize,
    pub alpha: Option<f64>,
}

impl ResultRow {
    pub fn key(&self) -> String {
        cell_key(&self.participant, self.test_session, self.method, self.kind, self.task)
    }
}

impl StudyResults {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.cells
            .iter()
            .filter_map(|c| {
                c.result().map(|r| ResultRow {
                    round: c.round,
                    participant: r.plan.test_participant.clone(),
                    test_session: r.plan.test_session,
                    method: r.plan.method,
                    kind: r.plan.kind,
                    task: r.plan.task,
                    auroc: r.auroc,
                    f1_pos: r.f1_positive,
                    f1_neg: r.f1_negative,
                    n: r.n_test_instances,
                    alpha: r.chosen_alpha,
                })
            })
            .collect()
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ProtocolError + '_ {
    move |source| ProtocolError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the result matrix (successful cells only).
pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> Result<(), ProtocolError> {
    let bad = |m: String| ProtocolError::Results {
        path: path.to_path_buf(),
        message: m,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record([
            "round", "participant", "test_session", "method", "kind", "task", "auroc", "f1_pos",
            "f1_neg", "n", "alpha",
        ])
        .map_err(|e| bad(e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| bad(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| bad(e.to_string()))?;
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>, ProtocolError> {
    let bad = |m: String| ProtocolError::Results {
        path: path.to_path_buf(),
        message: m,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| bad(e.to_string())))
        .collect()
}

/// Writes `<cell-key>.roc.csv` for every successful cell.
pub fn write_roc_files(results: &StudyResults, dir: &Path) -> Result<(), ProtocolError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for r in results.successful() {
        let mut text = String::from("fpr,tpr\n");
        for (x, y) in &r.roc_points {
            text.push_str(&format!("{x},{y}\n"));
        }
        let path = dir.join(format!("{}.roc.csv", r.plan.key()));
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    Ok(())
}

pub fn read_roc_file(path: &Path) -> Result<Vec<(f64, f64)>, ProtocolError> {
    let bad = |m: String| ProtocolError::Results {
        path: path.to_path_buf(),
        message: m,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| bad(e.to_string())))
        .collect()
}
