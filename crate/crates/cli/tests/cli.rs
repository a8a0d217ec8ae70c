use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn longadapt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_longadapt"))
        .args(args)
        .env_remove("LONGADAPT_THREADS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

const SYNTH: &str = r#"{"n_participants": 3, "sessions_per_participant": [3, 3, 2], "session_seconds": 90, "seed": 2}"#;

fn write_synth_config(dir: &Path) -> PathBuf {
    let p = dir.join("synth.json");
    std::fs::write(&p, SYNTH).unwrap();
    p
}

fn run_config(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(
        &p,
        format!(
            r#"{{"manifest": "study/manifest.json", "kinds": ["logreg"], "seed": 3,
                 "adaptation": {{"alpha_grid": [0.0, 0.5, 1.0]}} {extra}}}"#
        ),
    )
    .unwrap();
    p
}

/// A synthesized, preprocessed and evaluated study shared by the read-only tests.
fn evaluated() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let cfg = write_synth_config(root);
        assert_eq!(code(&longadapt(&["synth", "--config", &s(&cfg), "--out", &s(&root.join("study"))])), 0);
        let run = run_config(root, "run.json", r#", "output_dir": "out""#);
        let o = longadapt(&["evaluate", "--config", &s(&run)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        dir
    })
    .path()
}

#[test]
fn synth_refuses_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_synth_config(dir.path());
    let out = s(&dir.path().join("study"));
    let o = longadapt(&["synth", "--config", &s(&cfg), "--out", &out]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).trim().ends_with("manifest.json"));
    assert_eq!(code(&longadapt(&["synth", "--config", &s(&cfg), "--out", &out])), 3);
    assert_eq!(code(&longadapt(&["synth", "--config", &s(&cfg), "--out", &out, "--force"])), 0);
}

#[test]
fn synth_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    for (i, text) in [
        "{not json",
        r#"{"n_participants": 2, "sesion_seconds": 10}"#,
        r#"{"n_participants": 0}"#,
    ]
    .iter()
    .enumerate()
    {
        let p = dir.path().join(format!("bad{i}.json"));
        std::fs::write(&p, text).unwrap();
        let o = longadapt(&["synth", "--config", &s(&p), "--out", &s(&dir.path().join(format!("o{i}")))]);
        assert_eq!(code(&o), 2, "{text}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
}

#[test]
fn preprocess_writes_cache_once() {
    let root = evaluated();
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("cache"));
    let manifest = s(&root.join("study/manifest.json"));
    assert_eq!(code(&longadapt(&["preprocess", "--manifest", &manifest, "--out", &out])), 0);
    assert_eq!(code(&longadapt(&["preprocess", "--manifest", &manifest, "--out", &out])), 3);
    assert_eq!(code(&longadapt(&["preprocess", "--manifest", &manifest, "--out", &out, "--force"])), 0);
}

#[test]
fn evaluate_prints_tables_and_is_repeatable() {
    let root = evaluated();
    let first = std::fs::read(root.join("out/results.csv")).unwrap();
    let run = run_config(root, "again.json", r#", "output_dir": "again""#);
    let o = longadapt(&["evaluate", "--config", &s(&run)]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("AUROC wAVE, logreg, arousal"));
    assert!(stdout.contains("| Participant | IND | GEN | PER | UDA |"));
    let table: Vec<&str> = stdout
        .lines()
        .skip_while(|l| !l.starts_with("| Participant"))
        .take_while(|l| l.starts_with('|'))
        .collect();
    // header, rule, three participants, wAVE
    assert_eq!(table.len(), 6);
    assert!(table[5].starts_with("| wAVE |"));
    assert!(stdout.contains("cells: "));
    for f in ["results.csv", "results.json", "summary.json"] {
        assert_eq!(
            std::fs::read(root.join("out").join(f)).unwrap(),
            std::fs::read(root.join("again").join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(first, std::fs::read(root.join("again/results.csv")).unwrap());
    assert!(root.join("out/roc").read_dir().unwrap().next().is_some());
}

#[test]
fn evaluate_from_window_cache_matches_manifest() {
    let root = evaluated();
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let manifest = s(&root.join("study/manifest.json"));
    assert_eq!(code(&longadapt(&["preprocess", "--manifest", &manifest, "--out", &s(&cache)])), 0);
    let windows = cache.join("windows.csv");
    assert!(windows.exists());
    let run = run_config(
        root,
        "cached.json",
        &format!(r#", "output_dir": "cached", "windows": {:?}"#, s(&windows)),
    );
    assert_eq!(code(&longadapt(&["evaluate", "--config", &s(&run)])), 0);
    assert_eq!(
        std::fs::read(root.join("out/results.csv")).unwrap(),
        std::fs::read(root.join("cached/results.csv")).unwrap()
    );
}

#[test]
fn evaluate_input_errors() {
    let root = evaluated();
    let empty = run_config(root, "empty.json", r#", "output_dir": "x", "methods": []"#);
    assert_eq!(code(&longadapt(&["evaluate", "--config", &s(&empty)])), 2);
    let dir = tempfile::tempdir().unwrap();
    let missing = run_config(dir.path(), "missing.json", r#", "output_dir": "x""#);
    assert_eq!(code(&longadapt(&["evaluate", "--config", &s(&missing)])), 2);
    let ok = run_config(root, "threads.json", r#", "output_dir": "x""#);
    let o = Command::new(env!("CARGO_BIN_EXE_longadapt"))
        .args(["evaluate", "--config", &s(&ok)])
        .env("LONGADAPT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("LONGADAPT_THREADS"));
}

#[test]
fn stats_records() {
    let root = evaluated();
    let results = s(&root.join("out/results.csv"));
    let o = longadapt(&["stats", "--results", &results, "--compare", "PER:GEN"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let recs = v.as_array().unwrap();
    // three metrics for each task
    assert_eq!(recs.len(), 6);
    let metrics: Vec<&str> = recs.iter().map(|r| r["metric"].as_str().unwrap()).collect();
    assert_eq!(metrics[..3], ["auroc", "f1_pos", "f1_neg"]);
    assert!(recs[..3].iter().all(|r| r["task"] == recs[0]["task"]));
    assert!(recs.iter().all(|r| r["comparison"] == "PER:GEN"));

    let o = longadapt(&["stats", "--results", &results, "--compare", "IND:IND"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.as_array().unwrap().iter().all(|r| r["error"].is_string() && r["p"].is_null()));

    assert_eq!(code(&longadapt(&["stats", "--results", &results, "--compare", "PER:XYZ"])), 2);
}

#[test]
fn stats_rejects_unpaired_rows() {
    let root = evaluated();
    let text = std::fs::read_to_string(root.join("out/results.csv")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let idx = lines.iter().position(|l| l.contains(",personalized_sda,")).unwrap();
    lines.remove(idx);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = longadapt(&["stats", "--results", &s(&path), "--compare", "PER:GEN"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn report_outputs() {
    let root = evaluated();
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("out");
    std::fs::create_dir_all(copy.join("roc")).unwrap();
    std::fs::copy(root.join("out/results.csv"), copy.join("results.csv")).unwrap();
    for e in std::fs::read_dir(root.join("out/roc")).unwrap() {
        let p = e.unwrap().path();
        std::fs::copy(&p, copy.join("roc").join(p.file_name().unwrap())).unwrap();
    }
    let o = longadapt(&["report", "--results", &s(&copy)]);
    assert_eq!(code(&o), 0);
    let first = std::fs::read_to_string(copy.join("report.md")).unwrap();
    assert!(first.contains("| wAVE |"));
    assert!(first.contains("Merged ROC curves"));
    assert!(copy.join("curves").read_dir().unwrap().next().is_some());
    assert_eq!(code(&longadapt(&["report", "--results", &s(&copy)])), 0);
    assert_eq!(first, std::fs::read_to_string(copy.join("report.md")).unwrap());

    std::fs::remove_dir_all(copy.join("roc")).unwrap();
    std::fs::remove_dir_all(copy.join("curves")).unwrap();
    let o = longadapt(&["report", "--results", &s(&copy)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: no ROC files found"));
    assert!(!std::fs::read_to_string(copy.join("report.md")).unwrap().contains("Merged ROC"));

    assert_eq!(code(&longadapt(&["report", "--results", &s(&dir.path().join("nope"))])), 2);
}
