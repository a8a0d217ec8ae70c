use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use longadapt::analysis::{class_distribution, wilcoxon_one_sided, AnalysisError, PairedSample, ZeroMethod};
use longadapt::dataset::{load_manifest, Task};
use longadapt::preprocess::{read_windows_csv, write_windows_csv, WindowConfig};
use longadapt::protocol::{
    read_results_csv, read_roc_file, run_study, write_results_csv, write_roc_files, Method,
    PreparedStudy, ResultRow, StudyLayout,
};
use longadapt::synthgen::{generate_study, SynthConfig};
use serde::Serialize;

use crate::config::{effective_threads, RunConfig, THREADS_ENV};
use crate::tables::{self, Metric};

pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

type CmdResult = Result<(), CliError>;

fn input<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError { code: 2, error: e.into() }
}

fn failure<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError { code: 1, error: e.into() }
}

fn overwrite(path: &Path) -> CliError {
    CliError {
        code: 3,
        error: anyhow!("{} exists; pass --force to overwrite", path.display()),
    }
}

fn write_file(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(failure)
}

pub fn synth(config: &Path, seed: Option<u64>, out: Option<&Path>, force: bool) -> CmdResult {
    let text = fs::read_to_string(config)
        .with_context(|| format!("reading {}", config.display()))
        .map_err(input)?;
    let mut cfg: SynthConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", config.display()))
        .map_err(input)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(input)?;
    let base = config.parent().unwrap_or(Path::new(""));
    let out_dir: PathBuf = match (out, &cfg.output_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => base.join(o),
        (None, None) => return Err(input(anyhow!("no output directory: pass --out or set output_dir"))),
    };
    let manifest_path = out_dir.join("manifest.json");
    if manifest_path.exists() && !force {
        return Err(overwrite(&manifest_path));
    }
    generate_study(&cfg, &out_dir).map_err(failure)?;
    println!("{}", manifest_path.display());
    Ok(())
}

pub fn preprocess(manifest: &Path, out: &Path, window: WindowConfig, force: bool) -> CmdResult {
    window.validate().map_err(input)?;
    let m = load_manifest(manifest).map_err(input)?;
    let path = out.join("windows.csv");
    if path.exists() && !force {
        return Err(overwrite(&path));
    }
    let study = PreparedStudy::load(&m, &window).map_err(input)?;
    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(failure)?;
    let windows: Vec<_> = study.all_windows().cloned().collect();
    write_windows_csv(&path, &m.schema, &windows).map_err(failure)?;
    let dists: Vec<_> = Task::ALL.iter().map(|&t| class_distribution(&windows, t)).collect();
    let json = serde_json::to_string_pretty(&dists).map_err(failure)? + "\n";
    write_file(&out.join("class_distribution.json"), &json)?;
    println!("{}", path.display());
    for d in &dists {
        println!(
            "{}: {} windows, negative fraction {:.3}",
            d.task, d.n_windows, d.overall_negative_fraction
        );
    }
    Ok(())
}

pub fn evaluate(config: &Path) -> CmdResult {
    let cfg = RunConfig::load(config).map_err(input)?;
    let env = std::env::var(THREADS_ENV).ok();
    let threads = effective_threads(cfg.threads, env.as_deref()).map_err(input)?;
    let study_cfg = cfg.study_config(threads);
    study_cfg.validate().map_err(input)?;
    cfg.window.validate().map_err(input)?;
    let manifest = load_manifest(&cfg.manifest).map_err(input)?;
    let study = match &cfg.windows {
        Some(w) => {
            let windows = read_windows_csv(w).map_err(input)?;
            PreparedStudy::from_windows(manifest.schema.clone(), StudyLayout::from(&manifest), windows)
                .map_err(input)?
        }
        None => PreparedStudy::load(&manifest, &cfg.window).map_err(input)?,
    };
    let results = run_study(&study, &study_cfg).map_err(failure)?;

    let out = &cfg.output_dir;
    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(failure)?;
    let rows = results.rows();
    write_results_csv(&rows, &out.join("results.csv")).map_err(failure)?;
    let json = serde_json::to_string_pretty(&results).map_err(failure)? + "\n";
    write_file(&out.join("results.json"), &json)?;
    let summaries = results.summaries(&study.layout);
    let json = serde_json::to_string_pretty(&summaries).map_err(failure)? + "\n";
    write_file(&out.join("summary.json"), &json)?;
    let roc_dir = out.join("roc");
    if roc_dir.exists() {
        fs::remove_dir_all(&roc_dir)
            .with_context(|| format!("clearing {}", roc_dir.display()))
            .map_err(failure)?;
    }
    write_roc_files(&results, &roc_dir).map_err(failure)?;

    let (mut ok, mut skipped, mut failed) = (0, 0, 0);
    for c in &results.cells {
        match &c.status {
            longadapt::protocol::CellStatus::Ok { .. } => ok += 1,
            longadapt::protocol::CellStatus::Skipped { reason } => {
                skipped += 1;
                log::info!("skipped {}: {reason}", c.plan.key());
            }
            longadapt::protocol::CellStatus::Failed { reason } => {
                failed += 1;
                eprintln!("cell {} failed: {reason}", c.plan.key());
            }
        }
    }
    for (kind, task) in tables::groups(&rows) {
        println!("AUROC wAVE, {kind}, {task}\n");
        println!("{}", tables::wave_table(&rows, kind, task, Metric::Auroc));
    }
    println!("cells: {ok} ok, {skipped} skipped, {failed} failed");
    if ok == 0 {
        return Err(failure(anyhow!("no cell succeeded")));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct StatsRecord {
    comparison: String,
    method_a: Method,
    method_b: Method,
    kind: String,
    task: Task,
    metric: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_pairs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_effective: Option<usize>,
    #[serde(rename = "W_plus", skip_serializing_if = "Option::is_none")]
    w_plus: Option<f64>,
    #[serde(rename = "Z", skip_serializing_if = "Option::is_none")]
    z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<longadapt::analysis::WilcoxonMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn parse_comparison(s: &str) -> anyhow::Result<(Method, Method)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("comparison {s:?} must look like PER:GEN"))?;
    let m = |x: &str| Method::parse(x).ok_or_else(|| anyhow!("unknown method {x:?}"));
    Ok((m(a)?, m(b)?))
}

pub fn stats(results: &Path, compare: &[String], pratt: bool, out: Option<&Path>) -> CmdResult {
    let rows = read_results_csv(results).map_err(input)?;
    let comparisons = compare
        .iter()
        .map(|c| parse_comparison(c))
        .collect::<anyhow::Result<Vec<_>>>()
        .map_err(input)?;
    let zero = if pratt { ZeroMethod::Pratt } else { ZeroMethod::Wilcox };
    let mut records = Vec::new();
    for (a, b) in comparisons {
        let groups: Vec<_> = tables::groups(&rows)
            .into_iter()
            .filter(|(k, t)| rows.iter().any(|r| r.kind == *k && r.task == *t && (r.method == a || r.method == b)))
            .collect();
        if groups.is_empty() {
            return Err(input(anyhow!("no cells for {} or {}", a.abbrev(), b.abbrev())));
        }
        for (kind, task) in groups {
            let side = |m: Method| -> BTreeMap<(usize, u32), &ResultRow> {
                rows.iter()
                    .filter(|r| r.kind == kind && r.task == task && r.method == m)
                    .map(|r| ((r.round, r.test_session), r))
                    .collect()
            };
            let (left, right) = (side(a), side(b));
            if left.keys().ne(right.keys()) {
                let missing = left
                    .keys()
                    .chain(right.keys())
                    .find(|k| !(left.contains_key(k) && right.contains_key(k)))
                    .expect("key sets differ");
                return Err(input(anyhow!(
                    "{}:{} {kind} {task}: cell (round {}, session {}) present for only one method",
                    a.abbrev(),
                    b.abbrev(),
                    missing.0,
                    missing.1
                )));
            }
            let metrics: [(&str, fn(&ResultRow) -> f64); 3] =
                [("auroc", |r| r.auroc), ("f1_pos", |r| r.f1_pos), ("f1_neg", |r| r.f1_neg)];
            for (name, get) in metrics {
                let va: Vec<f64> = left.values().map(|r| get(r)).collect();
                let vb: Vec<f64> = right.values().map(|r| get(r)).collect();
                let mut rec = StatsRecord {
                    comparison: format!("{}:{}", a.abbrev(), b.abbrev()),
                    method_a: a,
                    method_b: b,
                    kind: kind.to_string(),
                    task,
                    metric: name,
                    n_pairs: Some(va.len()),
                    n_effective: None,
                    w_plus: None,
                    z: None,
                    p: None,
                    r: None,
                    mode: None,
                    error: None,
                };
                let sample = PairedSample::new(a.abbrev(), b.abbrev(), va, vb).map_err(input)?;
                match wilcoxon_one_sided(&sample, zero) {
                    Ok(o) => {
                        rec.n_effective = Some(o.n_effective);
                        rec.w_plus = Some(o.w_plus);
                        rec.z = Some(o.z);
                        rec.p = Some(o.p_one_sided);
                        rec.r = Some(o.effect_size_r);
                        rec.mode = Some(o.mode);
                    }
                    Err(e @ AnalysisError::AllZeroDifferences) => rec.error = Some(e.to_string()),
                    Err(e) => return Err(failure(e)),
                }
                records.push(rec);
            }
        }
    }
    let json = serde_json::to_string_pretty(&records).map_err(failure)? + "\n";
    print!("{json}");
    if let Some(path) = out {
        write_file(path, &json)?;
    }
    Ok(())
}

pub fn report(dir: &Path) -> CmdResult {
    let csv_path = dir.join("results.csv");
    if !csv_path.exists() {
        return Err(input(anyhow!("{} not found", csv_path.display())));
    }
    let rows = read_results_csv(&csv_path).map_err(input)?;
    let roc_dir = dir.join("roc");

    let mut md = String::from("# Evaluation report\n\n");
    let _ = writeln!(md, "{} result cells.\n", rows.len());
    let mut curves_written = 0;
    for (kind, task) in tables::groups(&rows) {
        let _ = writeln!(md, "## {kind}, {task}\n");
        for metric in [Metric::Auroc, Metric::F1Pos, Metric::F1Neg] {
            let _ = writeln!(md, "### {} (wAVE)\n", metric.name());
            md.push_str(&tables::wave_table(&rows, kind, task, metric));
            md.push('\n');
        }
        md.push_str("### AUROC per session\n\n");
        md.push_str(&tables::session_table(&rows, kind, task));
        md.push('\n');

        let mut merged_any = false;
        for method in tables::methods(&rows) {
            let mut curves = Vec::new();
            for r in rows.iter().filter(|r| r.kind == kind && r.task == task && r.method == method) {
                let path = roc_dir.join(format!("{}.roc.csv", r.key()));
                if path.exists() {
                    curves.push(read_roc_file(&path).map_err(input)?);
                }
            }
            if curves.is_empty() {
                continue;
            }
            let curve_dir = dir.join("curves");
            fs::create_dir_all(&curve_dir)
                .with_context(|| format!("creating {}", curve_dir.display()))
                .map_err(failure)?;
            let name = format!("{method}_{kind}_{task}.csv");
            let mut text = String::from("fpr,tpr\n");
            for (x, y) in tables::merge_curves(&curves) {
                let _ = writeln!(text, "{x},{y}");
            }
            write_file(&curve_dir.join(&name), &text)?;
            if !merged_any {
                md.push_str("### Merged ROC curves\n\n");
                merged_any = true;
            }
            let _ = writeln!(md, "- {}: `curves/{name}` ({} sessions)", method.abbrev(), curves.len());
            curves_written += 1;
        }
        if merged_any {
            md.push('\n');
        }
    }
    if curves_written == 0 {
        log::warn!("no ROC files under {}; report has no curves", roc_dir.display());
        eprintln!("warning: no ROC files found; curves omitted");
    }
    let path = dir.join("report.md");
    write_file(&path, &md)?;
    println!("{}", path.display());
    Ok(())
}
