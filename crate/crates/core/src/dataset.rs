//! Study data model: feature schema, per-frame records, sessions and the
//! study manifest, plus loaders and writers for the on-disk formats.
//!
//! A manifest is a JSON document listing the feature schema and, per
//! participant, the chronologically ordered session files. Session files are
//! CSV with header `timestamp,arousal,valence,<feature columns...>`. Labels
//! are `0`, `1` or `x` (excluded frame); an empty feature cell is a missing
//! value and stays missing (`None`) until windowing.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("session file {0} referenced by the manifest does not exist")]
    MissingSession(PathBuf),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("timestamps not strictly increasing in {path} at row {row}")]
    NonMonotonicTimestamps { path: PathBuf, row: usize },
    #[error("column mismatch in {path}: {message}")]
    ColumnMismatch { path: PathBuf, message: String },
    #[error("invalid session: {0}")]
    InvalidSession(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Visual,
    Audio,
    Game,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Visual, Modality::Audio, Modality::Game];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Audio => "audio",
            Modality::Game => "game",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub modality: Modality,
    pub kind: FeatureKind,
}

impl Column {
    pub fn new(name: impl Into<String>, modality: Modality, kind: FeatureKind) -> Self {
        Self {
            name: name.into(),
            modality,
            kind,
        }
    }
}

/// Ordered list of raw feature columns. Column names are unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Column>", into = "Vec<Column>")]
pub struct FeatureSchema {
    columns: Vec<Column>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<Column>) -> Result<Self, DatasetError> {
        if columns.is_empty() {
            return Err(DatasetError::Schema("schema has no columns".into()));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if c.name.is_empty() {
                return Err(DatasetError::Schema("empty column name".into()));
            }
            if matches!(c.name.as_str(), "timestamp" | "arousal" | "valence") {
                return Err(DatasetError::Schema(format!(
                    "column name {:?} is reserved",
                    c.name
                )));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(DatasetError::Schema(format!(
                    "duplicate column name {:?}",
                    c.name
                )));
            }
        }
        Ok(Self { columns })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn count(&self, modality: Modality) -> usize {
        self.columns.iter().filter(|c| c.modality == modality).count()
    }

    pub fn count_kind(&self, kind: FeatureKind) -> usize {
        self.columns.iter().filter(|c| c.kind == kind).count()
    }

    /// Modalities with at least one column, in canonical order.
    pub fn modalities(&self) -> Vec<Modality> {
        Modality::ALL
            .into_iter()
            .filter(|m| self.count(*m) > 0)
            .collect()
    }
}

impl TryFrom<Vec<Column>> for FeatureSchema {
    type Error = DatasetError;

    fn try_from(columns: Vec<Column>) -> Result<Self, Self::Error> {
        Self::new(columns)
    }
}

impl From<FeatureSchema> for Vec<Column> {
    fn from(schema: FeatureSchema) -> Self {
        schema.columns
    }
}

/// Per-frame annotation for one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameLabel {
    Negative,
    Positive,
    Excluded,
}

impl FrameLabel {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "0" => Some(FrameLabel::Negative),
            "1" => Some(FrameLabel::Positive),
            "x" | "X" => Some(FrameLabel::Excluded),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FrameLabel::Negative => "0",
            FrameLabel::Positive => "1",
            FrameLabel::Excluded => "x",
        }
    }

    /// `Some(0)`/`Some(1)` for annotated frames, `None` when excluded.
    pub fn value(self) -> Option<u8> {
        match self {
            FrameLabel::Negative => Some(0),
            FrameLabel::Positive => Some(1),
            FrameLabel::Excluded => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Arousal,
    Valence,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Arousal, Task::Valence];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Arousal => "arousal",
            Task::Valence => "valence",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "arousal" => Some(Task::Arousal),
            "valence" => Some(Task::Valence),
            _ => None,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    /// Seconds from session start.
    pub timestamp: f64,
    /// One entry per schema column; `None` marks a missing value.
    pub values: Vec<Option<f64>>,
    pub arousal: FrameLabel,
    pub valence: FrameLabel,
}

impl FrameRecord {
    pub fn label(&self, task: Task) -> FrameLabel {
        match task {
            Task::Arousal => self.arousal,
            Task::Valence => self.valence,
        }
    }
}

/// One recorded session of one participant. Frames are strictly increasing in
/// time and immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionData {
    participant_id: String,
    session_index: u32,
    frames: Vec<FrameRecord>,
}

impl SessionData {
    pub fn new(
        participant_id: impl Into<String>,
        session_index: u32,
        frames: Vec<FrameRecord>,
    ) -> Result<Self, DatasetError> {
        if session_index == 0 {
            return Err(DatasetError::InvalidSession(
                "session_index is 1-based".into(),
            ));
        }
        for (i, f) in frames.iter().enumerate() {
            if !f.timestamp.is_finite() || f.timestamp < 0.0 {
                return Err(DatasetError::InvalidSession(format!(
                    "frame {i} has invalid timestamp {}",
                    f.timestamp
                )));
            }
            if i > 0 && f.timestamp <= frames[i - 1].timestamp {
                return Err(DatasetError::InvalidSession(format!(
                    "timestamps not strictly increasing at frame {i}"
                )));
            }
        }
        if let Some(first) = frames.first() {
            let width = first.values.len();
            if frames.iter().any(|f| f.values.len() != width) {
                return Err(DatasetError::InvalidSession(
                    "frames have differing value counts".into(),
                ));
            }
        }
        Ok(Self {
            participant_id: participant_id.into(),
            session_index,
            frames,
        })
    }

    /// Builds a session from frames in arbitrary order, sorting by timestamp.
    pub fn from_unsorted(
        participant_id: impl Into<String>,
        session_index: u32,
        mut frames: Vec<FrameRecord>,
    ) -> Result<Self, DatasetError> {
        frames.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        Self::new(participant_id, session_index, frames)
    }

    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }

    pub fn session_index(&self) -> u32 {
        self.session_index
    }

    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Drops frames whose arousal or valence label is excluded. Returns the
/// filtered session and the number of frames removed.
pub fn exclude_absent_frames(session: &SessionData) -> (SessionData, usize) {
    let kept: Vec<FrameRecord> = session
        .frames
        .iter()
        .filter(|f| f.arousal != FrameLabel::Excluded && f.valence != FrameLabel::Excluded)
        .cloned()
        .collect();
    let removed = session.frames.len() - kept.len();
    if kept.is_empty() && !session.frames.is_empty() {
        log::warn!(
            "participant {} session {}: every frame is excluded",
            session.participant_id,
            session.session_index
        );
    }
    let out = SessionData {
        participant_id: session.participant_id.clone(),
        session_index: session.session_index,
        frames: kept,
    };
    (out, removed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantEntry {
    pub id: String,
    /// Session files in chronological order; entry `k - 1` is session `k`.
    pub sessions: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestFile {
    schema: FeatureSchema,
    participants: Vec<ParticipantEntry>,
    frame_rate_hz: f64,
}

/// A validated study manifest. Session paths are stored as written in the
/// file (relative to the manifest directory unless absolute).
#[derive(Debug, Clone, PartialEq)]
pub struct StudyManifest {
    pub schema: FeatureSchema,
    pub participants: Vec<ParticipantEntry>,
    pub frame_rate_hz: f64,
    base_dir: PathBuf,
}

impl StudyManifest {
    pub fn new(
        schema: FeatureSchema,
        participants: Vec<ParticipantEntry>,
        frame_rate_hz: f64,
        base_dir: impl Into<PathBuf>,
    ) -> Result<Self, DatasetError> {
        if !(frame_rate_hz.is_finite() && frame_rate_hz > 0.0) {
            return Err(DatasetError::Schema(format!(
                "frame_rate_hz must be positive, got {frame_rate_hz}"
            )));
        }
        let mut ids = HashSet::new();
        for p in &participants {
            if p.id.is_empty() {
                return Err(DatasetError::Schema("empty participant id".into()));
            }
            if !ids.insert(p.id.as_str()) {
                return Err(DatasetError::Schema(format!(
                    "duplicate participant id {:?}",
                    p.id
                )));
            }
            if p.sessions.is_empty() {
                return Err(DatasetError::Schema(format!(
                    "participant {:?} has no sessions",
                    p.id
                )));
            }
        }
        Ok(Self {
            schema,
            participants,
            frame_rate_hz,
            base_dir: base_dir.into(),
        })
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn participant(&self, id: &str) -> Option<&ParticipantEntry> {
        self.participants.iter().find(|p| p.id == id)
    }

    pub fn session_count(&self, id: &str) -> Option<usize> {
        self.participant(id).map(|p| p.sessions.len())
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        if rel.is_absolute() {
            rel.to_path_buf()
        } else {
            self.base_dir.join(rel)
        }
    }

    /// Loads session `session_index` (1-based) of a participant.
    pub fn load_session(
        &self,
        participant_id: &str,
        session_index: u32,
    ) -> Result<SessionData, DatasetError> {
        let entry = self.participant(participant_id).ok_or_else(|| {
            DatasetError::Schema(format!("unknown participant {participant_id:?}"))
        })?;
        let rel = entry
            .sessions
            .get((session_index as usize).wrapping_sub(1))
            .ok_or_else(|| {
                DatasetError::Schema(format!(
                    "participant {participant_id:?} has no session {session_index}"
                ))
            })?;
        load_session(&self.resolve(rel), &self.schema, participant_id, session_index)
    }
}

pub fn load_manifest(path: &Path) -> Result<StudyManifest, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file: ManifestFile = serde_json::from_str(&text).map_err(|e| {
        // duplicate columns surface through FeatureSchema::try_from
        let message = e.to_string();
        if message.contains("duplicate column") || message.contains("reserved") {
            DatasetError::Schema(message)
        } else {
            DatasetError::Parse {
                path: path.to_path_buf(),
                message,
            }
        }
    })?;
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let manifest = StudyManifest::new(file.schema, file.participants, file.frame_rate_hz, base_dir)?;
    for p in &manifest.participants {
        for s in &p.sessions {
            let full = manifest.resolve(s);
            if !full.is_file() {
                return Err(DatasetError::MissingSession(full));
            }
        }
    }
    Ok(manifest)
}

pub fn write_manifest(manifest: &StudyManifest, path: &Path) -> Result<(), DatasetError> {
    let file = ManifestFile {
        schema: manifest.schema.clone(),
        participants: manifest.participants.clone(),
        frame_rate_hz: manifest.frame_rate_hz,
    };
    let mut text = serde_json::to_string_pretty(&file).map_err(|e| DatasetError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Reads a session CSV. Column order in the file must match the schema.
pub fn load_session(
    path: &Path,
    schema: &FeatureSchema,
    participant_id: &str,
    session_index: u32,
) -> Result<SessionData, DatasetError> {
    let parse_err = |message: String| DatasetError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DatasetError::MissingSession(path.to_path_buf()),
            _ => parse_err(e.to_string()),
        })?;

    let headers = reader.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    let expected: Vec<&str> = ["timestamp", "arousal", "valence"]
        .into_iter()
        .chain(schema.columns().iter().map(|c| c.name.as_str()))
        .collect();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(DatasetError::ColumnMismatch {
            path: path.to_path_buf(),
            message: format!("expected header {:?}, found {:?}", expected, got),
        });
    }

    let mut frames = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => DatasetError::ColumnMismatch {
                path: path.to_path_buf(),
                message: e.to_string(),
            },
            _ => parse_err(e.to_string()),
        })?;
        let line = row + 2;
        let timestamp: f64 = record[0]
            .parse()
            .map_err(|_| parse_err(format!("line {line}: bad timestamp {:?}", &record[0])))?;
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(parse_err(format!("line {line}: bad timestamp {timestamp}")));
        }
        let arousal = FrameLabel::parse(&record[1])
            .ok_or_else(|| parse_err(format!("line {line}: bad arousal label {:?}", &record[1])))?;
        let valence = FrameLabel::parse(&record[2])
            .ok_or_else(|| parse_err(format!("line {line}: bad valence label {:?}", &record[2])))?;
        let values = record
            .iter()
            .skip(3)
            .map(|cell| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    match cell.parse::<f64>() {
                        Ok(v) if v.is_finite() => Ok(Some(v)),
                        _ => Err(parse_err(format!("line {line}: bad feature value {cell:?}"))),
                    }
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(prev) = frames.last().map(|f: &FrameRecord| f.timestamp) {
            if timestamp <= prev {
                return Err(DatasetError::NonMonotonicTimestamps {
                    path: path.to_path_buf(),
                    row: row + 1,
                });
            }
        }
        frames.push(FrameRecord {
            timestamp,
            values,
            arousal,
            valence,
        });
    }
    SessionData::new(participant_id, session_index, frames)
}

/// Writes a session in the CSV format read by [`load_session`]. Floats use
/// the shortest representation that round-trips exactly.
pub fn write_session(
    session: &SessionData,
    schema: &FeatureSchema,
    path: &Path,
) -> Result<(), DatasetError> {
    let mut out = String::new();
    out.push_str("timestamp,arousal,valence");
    for c in schema.columns() {
        out.push(',');
        out.push_str(&c.name);
    }
    out.push('\n');
    for f in session.frames() {
        if f.values.len() != schema.len() {
            return Err(DatasetError::ColumnMismatch {
                path: path.to_path_buf(),
                message: format!(
                    "frame has {} values, schema has {} columns",
                    f.values.len(),
                    schema.len()
                ),
            });
        }
        out.push_str(&format!(
            "{},{},{}",
            f.timestamp,
            f.arousal.as_str(),
            f.valence.as_str()
        ));
        for v in &f.values {
            out.push(',');
            if let Some(v) = v {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}
