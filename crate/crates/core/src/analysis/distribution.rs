//! Negative-class fractions per session and participant.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Task;
use crate::preprocess::WindowInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionClassShare {
    pub session_index: u32,
    pub n_windows: usize,
    pub negative_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantClassShare {
    pub participant_id: String,
    pub sessions: Vec<SessionClassShare>,
    /// Mean of the per-session negative fractions.
    pub mean: f64,
    /// Sample standard deviation across sessions (0 for a single session).
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub task: Task,
    pub participants: Vec<ParticipantClassShare>,
    /// Negative fraction over all labelled windows in the study.
    pub overall_negative_fraction: f64,
    pub n_windows: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Fraction of label-0 windows per session, skipping windows unlabelled for
/// `task`. Participants and sessions are reported in sorted order.
pub fn class_distribution(windows: &[WindowInstance], task: Task) -> ClassDistribution {
    let mut counts: BTreeMap<&str, BTreeMap<u32, (usize, usize)>> = BTreeMap::new();
    for w in windows {
        if let Some(l) = w.label(task) {
            let e = counts
                .entry(w.participant_id.as_str())
                .or_default()
                .entry(w.session_index)
                .or_default();
            e.0 += 1;
            if l == 0 {
                e.1 += 1;
            }
        }
    }
    let (mut total, mut negatives) = (0usize, 0usize);
    let participants = counts
        .into_iter()
        .map(|(pid, sessions)| {
            let sessions: Vec<SessionClassShare> = sessions
                .into_iter()
                .map(|(k, (n, neg))| {
                    total += n;
                    negatives += neg;
                    SessionClassShare {
                        session_index: k,
                        n_windows: n,
                        negative_fraction: neg as f64 / n as f64,
                    }
                })
                .collect();
            let fractions: Vec<f64> = sessions.iter().map(|s| s.negative_fraction).collect();
            let (mean, std) = mean_std(&fractions);
            ParticipantClassShare {
                participant_id: pid.to_string(),
                sessions,
                mean,
                std,
            }
        })
        .collect();
    ClassDistribution {
        task,
        participants,
        overall_negative_fraction: if total == 0 {
            0.0
        } else {
            negatives as f64 / total as f64
        },
        n_windows: total,
    }
}
