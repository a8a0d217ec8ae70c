//! Markdown tables over result-matrix rows and merged ROC curves.

use std::collections::BTreeMap;
use std::fmt::Write;

use longadapt::classifiers::ModelKind;
use longadapt::dataset::Task;
use longadapt::protocol::{summarize, Method, ResultRow, SessionScore};

/// (kind, task) combinations present, in a stable order.
pub fn groups(rows: &[ResultRow]) -> Vec<(ModelKind, Task)> {
    let mut g: Vec<(ModelKind, Task)> = rows.iter().map(|r| (r.kind, r.task)).collect();
    g.sort();
    g.dedup();
    g
}

pub fn methods(rows: &[ResultRow]) -> Vec<Method> {
    let mut m: Vec<Method> = rows.iter().map(|r| r.method).collect();
    m.sort();
    m.dedup();
    m
}

/// Participants in round order.
fn participants(rows: &[ResultRow]) -> Vec<String> {
    let mut p: Vec<(usize, String)> = rows.iter().map(|r| (r.round, r.participant.clone())).collect();
    p.sort();
    p.dedup();
    p.into_iter().map(|(_, id)| id).collect()
}

fn score(r: &ResultRow) -> SessionScore {
    SessionScore {
        participant: r.participant.clone(),
        test_session: r.test_session,
        auroc: r.auroc,
        f1_positive: r.f1_pos,
        f1_negative: r.f1_neg,
        n: r.n,
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Metric {
    Auroc,
    F1Pos,
    F1Neg,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Auroc => "AUROC",
            Metric::F1Pos => "F1 (positive class)",
            Metric::F1Neg => "F1 (negative class)",
        }
    }
}

fn wave(rows: &[&ResultRow], metric: Metric) -> Option<f64> {
    let s = summarize(rows.iter().map(|r| score(r)).collect()).ok()?;
    Some(match metric {
        Metric::Auroc => s.wave_auroc,
        Metric::F1Pos => s.wave_f1_positive,
        Metric::F1Neg => s.wave_f1_negative,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into())
}

/// Rows are participants plus a final wAVE row, columns are methods.
pub fn wave_table(rows: &[ResultRow], kind: ModelKind, task: Task, metric: Metric) -> String {
    let sel: Vec<&ResultRow> = rows.iter().filter(|r| r.kind == kind && r.task == task).collect();
    let owned: Vec<ResultRow> = sel.iter().map(|r| (*r).clone()).collect();
    let ms = methods(&owned);
    let mut out = String::from("| Participant |");
    for m in &ms {
        let _ = write!(out, " {} |", m.abbrev());
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(ms.len()));
    out.push('\n');
    let line = |label: &str, pick: &dyn Fn(&ResultRow) -> bool| {
        let mut l = format!("| {label} |");
        for m in &ms {
            let cells: Vec<&ResultRow> = sel.iter().copied().filter(|r| r.method == *m && pick(r)).collect();
            let _ = write!(l, " {} |", cell(wave(&cells, metric)));
        }
        l.push('\n');
        l
    };
    for p in participants(&owned) {
        out.push_str(&line(&p, &|r: &ResultRow| r.participant == p));
    }
    out.push_str(&line("wAVE", &|_: &ResultRow| true));
    out
}

/// Per-session AUROC with one column per method and the chosen `α`.
pub fn session_table(rows: &[ResultRow], kind: ModelKind, task: Task) -> String {
    let sel: Vec<&ResultRow> = rows.iter().filter(|r| r.kind == kind && r.task == task).collect();
    let owned: Vec<ResultRow> = sel.iter().map(|r| (*r).clone()).collect();
    let ms = methods(&owned);
    let mut keys: BTreeMap<(usize, u32), String> = BTreeMap::new();
    for r in &sel {
        keys.insert((r.round, r.test_session), r.participant.clone());
    }
    let mut out = String::from("| Participant | Session |");
    for m in &ms {
        let _ = write!(out, " {} |", m.abbrev());
    }
    out.push_str(" alpha |\n|---|---|");
    out.push_str(&"---|".repeat(ms.len() + 1));
    out.push('\n');
    for ((round, session), pid) in keys {
        let at = |m: Method| {
            sel.iter()
                .find(|r| r.round == round && r.test_session == session && r.method == m)
                .copied()
        };
        let _ = write!(out, "| {pid} | {session} |");
        for m in &ms {
            let _ = write!(out, " {} |", cell(at(*m).map(|r| r.auroc)));
        }
        let alpha = at(Method::PersonalizedSda).and_then(|r| r.alpha);
        let _ = writeln!(out, " {} |", alpha.map(|a| format!("{a:.1}")).unwrap_or_else(|| "-".into()));
    }
    out
}

pub const GRID_POINTS: usize = 101;

/// TPR of a ROC polyline at `fpr`, taking the upper end of vertical segments.
fn tpr_at(curve: &[(f64, f64)], fpr: f64) -> f64 {
    let mut best: Option<f64> = None;
    for &(x, y) in curve {
        if x == fpr {
            best = Some(best.map_or(y, |b: f64| b.max(y)));
        }
    }
    if let Some(b) = best {
        return b;
    }
    for w in curve.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x0 < fpr && fpr < x1 {
            return y0 + (y1 - y0) * (fpr - x0) / (x1 - x0);
        }
    }
    curve.last().map_or(0.0, |p| p.1)
}

/// Vertical average of ROC curves on an evenly spaced FPR grid.
pub fn merge_curves(curves: &[Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    (0..GRID_POINTS)
        .map(|i| {
            let f = i as f64 / (GRID_POINTS - 1) as f64;
            let mean = curves.iter().map(|c| tpr_at(c, f)).sum::<f64>() / curves.len() as f64;
            (f, mean)
        })
        .collect()
}
