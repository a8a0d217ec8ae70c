//! Deterministic synthetic longitudinal studies.
//!
//! Continuous (visual and audio) features are Gaussian with identity
//! covariance. Each task shifts the mean along its own unit direction by
//! `±separation/2` depending on the frame label, so the class-conditional
//! distributions of a single frame are `N(μ ± (sep/2)·u, I)`. Participants
//! differ by a mean offset (`participant_shift`) and by rotating both task
//! directions by `concept_shift` radians towards private directions; sessions
//! add a random-walk offset (`session_drift`). Labels follow a persistent
//! two-state chain whose stationary negative fraction is `negative_rate`.
//! Game features are label-independent integer levels. Visual and audio
//! modalities drop out in contiguous bursts.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::dataset::{
    write_manifest, write_session, Column, DatasetError, FeatureKind, FeatureSchema, FrameLabel,
    FrameRecord, Modality, ParticipantEntry, SessionData, StudyManifest, Task,
};
use crate::preprocess::WindowConfig;
use crate::seeding::derive_seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerTask {
    pub arousal: f64,
    pub valence: f64,
}

impl PerTask {
    pub fn get(&self, task: Task) -> f64 {
        match task {
            Task::Arousal => self.arousal,
            Task::Valence => self.valence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_participants: usize,
    /// Session count of each participant.
    pub sessions_per_participant: Vec<u32>,
    pub session_seconds: f64,
    pub frame_rate_hz: f64,
    pub n_visual: usize,
    pub n_audio: usize,
    pub n_game: usize,
    /// Expected share of negative windows (default 3 s window); the frame
    /// level rate is calibrated to match.
    pub negative_rate: PerTask,
    /// Distance between the class means of one frame, in noise standard
    /// deviations.
    pub class_separation: PerTask,
    /// Probability that a frame keeps the previous frame's label rather than
    /// redrawing it.
    pub label_persistence: f64,
    pub participant_shift: f64,
    /// Rotation angle (radians) of each participant's task directions.
    pub concept_shift: f64,
    pub session_drift: f64,
    /// Long-run fraction of frames in which a visual or audio modality is
    /// missing.
    pub dropout_rate: f64,
    pub dropout_burst_seconds: f64,
    /// Long-run fraction of frames whose labels are excluded (`x`).
    pub exclusion_rate: f64,
    pub seed: u64,
    /// Where `synth` writes the study when no `--out` is given.
    pub output_dir: Option<PathBuf>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_participants: 4,
            sessions_per_participant: vec![5, 6, 4, 4],
            session_seconds: 600.0,
            frame_rate_hz: 2.0,
            n_visual: 4,
            n_audio: 2,
            n_game: 1,
            negative_rate: PerTask {
                arousal: 0.3,
                valence: 0.3,
            },
            class_separation: PerTask {
                arousal: 0.8,
                valence: 0.6,
            },
            label_persistence: 0.8,
            participant_shift: 0.5,
            concept_shift: 0.5,
            session_drift: 0.1,
            dropout_rate: 0.05,
            dropout_burst_seconds: 5.0,
            exclusion_rate: 0.0,
            seed: 0,
            output_dir: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.n_participants == 0 {
            return bad("n_participants must be >= 1");
        }
        if self.sessions_per_participant.len() != self.n_participants {
            return bad("sessions_per_participant needs one entry per participant");
        }
        if self.sessions_per_participant.contains(&0) {
            return bad("every participant needs at least one session");
        }
        if !(self.session_seconds > 0.0 && self.session_seconds.is_finite()) {
            return bad("session_seconds must be > 0");
        }
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return bad("frame_rate_hz must be > 0");
        }
        if self.frames_per_session() == 0 {
            return bad("sessions must contain at least one frame");
        }
        if self.n_visual + self.n_audio < 4 {
            return bad("need at least 4 continuous features (n_visual + n_audio)");
        }
        for task in Task::ALL {
            let r = self.negative_rate.get(task);
            if !(r > 0.0 && r < 1.0) {
                return bad("negative_rate must lie in (0, 1)");
            }
            let s = self.class_separation.get(task);
            if !(s >= 0.0 && s.is_finite()) {
                return bad("class_separation must be >= 0");
            }
        }
        if !(0.0..1.0).contains(&self.label_persistence) {
            return bad("label_persistence must lie in [0, 1)");
        }
        for (v, name) in [
            (self.participant_shift, "participant_shift"),
            (self.concept_shift, "concept_shift"),
            (self.session_drift, "session_drift"),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SynthError::Config(format!("{name} must be >= 0")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) || !(0.0..1.0).contains(&self.exclusion_rate) {
            return bad("dropout_rate and exclusion_rate must lie in [0, 1)");
        }
        if !(self.dropout_burst_seconds * self.frame_rate_hz >= 1.0) {
            return bad("dropout bursts must last at least one frame");
        }
        Ok(())
    }

    pub fn frames_per_session(&self) -> usize {
        (self.session_seconds * self.frame_rate_hz).round() as usize
    }

    fn n_continuous(&self) -> usize {
        self.n_visual + self.n_audio
    }

    /// Frames in one default-length window.
    fn frames_per_window(&self) -> usize {
        let w = WindowConfig::default().window_seconds * self.frame_rate_hz;
        ((w - 1e-9).ceil() as usize).max(1)
    }

    pub fn schema(&self) -> FeatureSchema {
        let mut cols = Vec::new();
        cols.extend((0..self.n_visual).map(|i| Column::new(format!("visual_{i}"), Modality::Visual, FeatureKind::Continuous)));
        cols.extend((0..self.n_audio).map(|i| Column::new(format!("audio_{i}"), Modality::Audio, FeatureKind::Continuous)));
        cols.extend((0..self.n_game).map(|i| Column::new(format!("game_{i}"), Modality::Game, FeatureKind::Discrete)));
        FeatureSchema::new(cols).expect("generated names are unique and non-reserved")
    }
}

pub fn participant_id(index: usize) -> String {
    format!("P{}", index + 1)
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// Gram-Schmidt of `v` against `basis`, normalized.
fn orthonormal_to(mut v: Vec<f64>, basis: &[&[f64]]) -> Vec<f64> {
    for b in basis {
        let p = dot(&v, b);
        v.iter_mut().zip(b.iter()).for_each(|(x, y)| *x -= p * y);
    }
    normalize(&mut v);
    v
}

/// Per-participant generative parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantModel {
    pub mean: Vec<f64>,
    pub arousal_direction: Vec<f64>,
    pub valence_direction: Vec<f64>,
    /// Additional mean offset of each session (index 0 is session 1).
    pub session_offsets: Vec<Vec<f64>>,
}

/// The task directions shared by all participants before rotation: the
/// first two coordinate axes.
fn base_directions(d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![0.0; d];
    let mut v = vec![0.0; d];
    a[0] = 1.0;
    v[1] = 1.0;
    (a, v)
}

pub fn participant_model(cfg: &SynthConfig, index: usize) -> Result<ParticipantModel, SynthError> {
    cfg.validate()?;
    if index >= cfg.n_participants {
        return Err(SynthError::Config(format!("no participant {index}")));
    }
    let d = cfg.n_continuous();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["participant", &participant_id(index)]));
    let mut mean = gaussian(&mut rng, d);
    normalize(&mut mean);
    mean.iter_mut().for_each(|x| *x *= cfg.participant_shift);

    let (ua, uv) = base_directions(d);
    let wa = orthonormal_to(gaussian(&mut rng, d), &[&ua, &uv]);
    let wv = orthonormal_to(gaussian(&mut rng, d), &[&ua, &uv, &wa]);
    let (c, s) = (cfg.concept_shift.cos(), cfg.concept_shift.sin());
    let rotate = |u: &[f64], w: &[f64]| -> Vec<f64> { u.iter().zip(w).map(|(x, y)| c * x + s * y).collect() };

    let sessions = cfg.sessions_per_participant[index] as usize;
    let mut offsets = vec![vec![0.0; d]];
    for _ in 1..sessions {
        let step = gaussian(&mut rng, d);
        let prev = offsets.last().unwrap();
        let scale = cfg.session_drift / (d as f64).sqrt();
        offsets.push(prev.iter().zip(&step).map(|(p, z)| p + scale * z).collect());
    }
    Ok(ParticipantModel {
        mean,
        arousal_direction: rotate(&ua, &wa),
        valence_direction: rotate(&uv, &wv),
        session_offsets: offsets,
    })
}

/// Two-state chain with stationary "on" fraction `rate` and mean on-run
/// length `burst` frames.
struct Bursts {
    on: bool,
    p_start: f64,
    p_end: f64,
}

impl Bursts {
    fn new(rate: f64, burst: f64, rng: &mut ChaCha8Rng) -> Self {
        let p_end = (1.0 / burst).min(1.0);
        let p_start = if rate > 0.0 { (rate / (1.0 - rate) * p_end).min(1.0) } else { 0.0 };
        Self {
            on: rate > 0.0 && rng.random::<f64>() < rate,
            p_start,
            p_end,
        }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> bool {
        let u: f64 = rng.random();
        let current = self.on;
        self.on = if self.on { u >= self.p_end } else { u < self.p_start };
        current
    }
}

/// Probability that a window of `frames` consecutive frames is labelled
/// negative (majority vote, ties negative) when frame labels follow the
/// stationary persistence chain with negative fraction `frame_rate`.
pub fn window_negative_probability(frame_rate: f64, persistence: f64, frames: usize) -> f64 {
    // dist[s][k]: current label s (0 negative), k negatives so far
    let mut dist = vec![vec![0.0; frames + 1]; 2];
    dist[0][1] = frame_rate;
    dist[1][0] = 1.0 - frame_rate;
    let stay = [
        persistence + (1.0 - persistence) * frame_rate,
        persistence + (1.0 - persistence) * (1.0 - frame_rate),
    ];
    for _ in 1..frames {
        let mut next = vec![vec![0.0; frames + 1]; 2];
        for s in 0..2 {
            for k in 0..frames {
                let p = dist[s][k];
                if p == 0.0 {
                    continue;
                }
                for (t, q) in [(s, stay[s]), (1 - s, 1.0 - stay[s])] {
                    next[t][k + usize::from(t == 0)] += p * q;
                }
            }
        }
        dist = next;
    }
    (0..2)
        .flat_map(|s| dist[s].iter().enumerate().map(move |(k, p)| (k, *p)))
        .filter(|(k, _)| 2 * k >= frames)
        .map(|(_, p)| p)
        .sum()
}

/// Frame-level negative fraction at which the expected share of negative
/// default-length windows equals `negative_rate`.
pub fn frame_negative_rate(cfg: &SynthConfig, task: Task) -> f64 {
    let target = cfg.negative_rate.get(task);
    let m = cfg.frames_per_window();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if window_negative_probability(mid, cfg.label_persistence, m) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Simulates one session in memory.
pub fn simulate_session(cfg: &SynthConfig, participant: usize, session_index: u32) -> Result<SessionData, SynthError> {
    let model = participant_model(cfg, participant)?;
    let sessions = cfg.sessions_per_participant[participant];
    if session_index == 0 || session_index > sessions {
        return Err(SynthError::Config(format!("no session {session_index}")));
    }
    let pid = participant_id(participant);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["session", &pid, &session_index.to_string()]));
    let d = cfg.n_continuous();
    let offset = &model.session_offsets[session_index as usize - 1];
    let base: Vec<f64> = model.mean.iter().zip(offset).map(|(a, b)| a + b).collect();

    let burst = cfg.dropout_burst_seconds * cfg.frame_rate_hz;
    let mut visual = Bursts::new(cfg.dropout_rate, burst, &mut rng);
    let mut audio = Bursts::new(cfg.dropout_rate, burst, &mut rng);
    let mut excluded = Bursts::new(cfg.exclusion_rate, burst, &mut rng);

    let neg = PerTask {
        arousal: frame_negative_rate(cfg, Task::Arousal),
        valence: frame_negative_rate(cfg, Task::Valence),
    };
    let draw = |rng: &mut ChaCha8Rng, task: Task| u8::from(rng.random::<f64>() >= neg.get(task));
    let mut arousal = draw(&mut rng, Task::Arousal);
    let mut valence = draw(&mut rng, Task::Valence);
    let mut levels: Vec<f64> = (0..cfg.n_game).map(|_| f64::from(rng.random_range(0..5u8))).collect();

    let sep_a = cfg.class_separation.arousal / 2.0;
    let sep_v = cfg.class_separation.valence / 2.0;
    let mut frames = Vec::with_capacity(cfg.frames_per_session());
    for k in 0..cfg.frames_per_session() {
        if k > 0 {
            if rng.random::<f64>() >= cfg.label_persistence {
                arousal = draw(&mut rng, Task::Arousal);
            }
            if rng.random::<f64>() >= cfg.label_persistence {
                valence = draw(&mut rng, Task::Valence);
            }
        }
        let sa = if arousal == 1 { sep_a } else { -sep_a };
        let sv = if valence == 1 { sep_v } else { -sep_v };
        let noise = gaussian(&mut rng, d);
        let mut values: Vec<Option<f64>> = (0..d)
            .map(|j| Some(round6(base[j] + sa * model.arousal_direction[j] + sv * model.valence_direction[j] + noise[j])))
            .collect();
        for l in levels.iter_mut() {
            // occasional level changes, independent of affect
            if rng.random::<f64>() < 0.01 {
                *l = f64::from(rng.random_range(0..5u8));
            }
            values.push(Some(*l));
        }
        if visual.step(&mut rng) {
            values[..cfg.n_visual].iter_mut().for_each(|v| *v = None);
        }
        if audio.step(&mut rng) {
            values[cfg.n_visual..d].iter_mut().for_each(|v| *v = None);
        }
        let out = excluded.step(&mut rng);
        let label = |y: u8| match (out, y) {
            (true, _) => FrameLabel::Excluded,
            (false, 0) => FrameLabel::Negative,
            _ => FrameLabel::Positive,
        };
        frames.push(FrameRecord {
            timestamp: k as f64 / cfg.frame_rate_hz,
            values,
            arousal: label(arousal),
            valence: label(valence),
        });
    }
    Ok(SessionData::new(pid, session_index, frames)?)
}

/// Writes `manifest.json` and `sessions/<participant>_s<k>.csv` under
/// `out_dir` and returns the manifest.
pub fn generate_study(cfg: &SynthConfig, out_dir: &Path) -> Result<StudyManifest, SynthError> {
    cfg.validate()?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    let sessions_dir = out_dir.join("sessions");
    fs::create_dir_all(&sessions_dir).map_err(io(&sessions_dir))?;
    let schema = cfg.schema();
    let mut participants = Vec::new();
    for p in 0..cfg.n_participants {
        let pid = participant_id(p);
        let mut files = Vec::new();
        for k in 1..=cfg.sessions_per_participant[p] {
            let session = simulate_session(cfg, p, k)?;
            let rel = PathBuf::from("sessions").join(format!("{pid}_s{k}.csv"));
            write_session(&session, &schema, &out_dir.join(&rel))?;
            files.push(rel);
        }
        participants.push(ParticipantEntry { id: pid, sessions: files });
    }
    let manifest = StudyManifest::new(schema, participants, cfg.frame_rate_hz, out_dir)?;
    write_manifest(&manifest, &out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Analytic AUROC of the Bayes-optimal score for one participant and task
/// when each instance pools `frames` frames of the same label:
/// `Φ(sep·√frames / √2)`. With `frames = 1` this is the single-frame bound;
/// for windows it bounds any classifier of window means, since mixed-label
/// windows and missing frames only weaken the signal.
pub fn bayes_auroc(cfg: &SynthConfig, participant: usize, task: Task, frames: usize) -> Result<f64, SynthError> {
    cfg.validate()?;
    if participant >= cfg.n_participants {
        return Err(SynthError::Config(format!("no participant {participant}")));
    }
    if frames == 0 {
        return Err(SynthError::Config("frames must be >= 1".into()));
    }
    // rotations preserve the separation, so every participant shares it
    let delta = cfg.class_separation.get(task) * (frames as f64).sqrt();
    Ok(Normal::new(0.0, 1.0).expect("standard normal").cdf(delta / 2f64.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_participants: 2,
            sessions_per_participant: vec![2, 3],
            session_seconds: 60.0,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn task_directions_are_orthonormal_and_rotated() {
        let cfg = SynthConfig {
            concept_shift: 0.7,
            ..small()
        };
        let m = participant_model(&cfg, 1).unwrap();
        let (a, v) = (&m.arousal_direction, &m.valence_direction);
        assert!((dot(a, a) - 1.0).abs() < 1e-12);
        assert!((dot(v, v) - 1.0).abs() < 1e-12);
        assert!(dot(a, v).abs() < 1e-12);
        let (ua, uv) = base_directions(a.len());
        assert!((dot(a, &ua) - 0.7f64.cos()).abs() < 1e-12);
        assert!((dot(v, &uv) - 0.7f64.cos()).abs() < 1e-12);
        assert!((dot(&m.mean, &m.mean).sqrt() - cfg.participant_shift).abs() < 1e-12);
        assert_eq!(m.session_offsets.len(), 3);
    }

    #[test]
    fn bayes_bound_closed_form() {
        let cfg = small();
        let zero = SynthConfig {
            class_separation: PerTask { arousal: 0.0, valence: 0.0 },
            ..small()
        };
        assert_eq!(bayes_auroc(&zero, 0, Task::Arousal, 6).unwrap(), 0.5);
        let one = bayes_auroc(&cfg, 0, Task::Arousal, 1).unwrap();
        let doubled = SynthConfig {
            class_separation: PerTask { arousal: 1.6, valence: 0.6 },
            ..small()
        };
        assert!(bayes_auroc(&doubled, 0, Task::Arousal, 1).unwrap() > one);
        // sep 0.8: Φ(0.8/√2) = Φ(0.565685...) ≈ 0.71420
        assert!((one - 0.714196).abs() < 1e-5);
        assert!(bayes_auroc(&cfg, 5, Task::Arousal, 1).is_err());
    }

    #[test]
    fn sessions_are_deterministic_and_valid() {
        let cfg = small();
        let a = simulate_session(&cfg, 1, 2).unwrap();
        let b = simulate_session(&cfg, 1, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 120);
        assert_ne!(a, simulate_session(&cfg, 1, 3).unwrap());
        assert!(simulate_session(&cfg, 0, 3).is_err());
    }

    #[test]
    fn window_rate_calibration() {
        // single-frame windows need no calibration
        assert!((window_negative_probability(0.3, 0.9, 1) - 0.3).abs() < 1e-15);
        // independent frames, 2-frame windows: negative unless both positive
        assert!((window_negative_probability(0.3, 0.0, 2) - (1.0 - 0.49)).abs() < 1e-12);
        let cfg = small();
        let f = frame_negative_rate(&cfg, Task::Arousal);
        assert!(f < 0.3);
        assert!((window_negative_probability(f, cfg.label_persistence, 6) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig::default().validate().is_ok());
        let bad = [
            SynthConfig { sessions_per_participant: vec![2], ..small() },
            SynthConfig { n_visual: 1, n_audio: 1, ..small() },
            SynthConfig { dropout_rate: 1.0, ..small() },
            SynthConfig { negative_rate: PerTask { arousal: 0.0, valence: 0.3 }, ..small() },
            SynthConfig { label_persistence: 1.0, ..small() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(SynthError::Config(_))));
        }
    }

    #[test]
    fn dropout_blanks_whole_modalities_at_roughly_the_set_rate() {
        let cfg = SynthConfig {
            n_participants: 1,
            sessions_per_participant: vec![1],
            session_seconds: 3000.0,
            dropout_rate: 0.2,
            ..SynthConfig::default()
        };
        let s = simulate_session(&cfg, 0, 1).unwrap();
        let mut missing = 0;
        for f in s.frames() {
            let v = &f.values[..cfg.n_visual];
            assert!(v.iter().all(Option::is_some) || v.iter().all(Option::is_none));
            missing += usize::from(v[0].is_none());
            assert!(f.values[cfg.n_continuous()..].iter().all(Option::is_some));
        }
        let frac = missing as f64 / s.len() as f64;
        assert!((frac - 0.2).abs() < 0.05, "{frac}");
    }
}
