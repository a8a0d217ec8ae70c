use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use longadapt::adaptation::AdaptationConfig;
use longadapt::classifiers::{Hyperparameters, ModelKind};
use longadapt::dataset::Task;
use longadapt::preprocess::WindowConfig;
use longadapt::protocol::{Method, StudyConfig};
use serde::{Deserialize, Serialize};

pub const THREADS_ENV: &str = "LONGADAPT_THREADS";

fn all_tasks() -> Vec<Task> {
    Task::ALL.to_vec()
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn gbdt() -> Vec<ModelKind> {
    vec![ModelKind::Gbdt]
}

/// Settings of one `evaluate` run. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    /// Window cache written by `preprocess`; windows are recomputed from the
    /// manifest when absent.
    #[serde(default)]
    pub windows: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default = "all_tasks")]
    pub tasks: Vec<Task>,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "gbdt")]
    pub kinds: Vec<ModelKind>,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub adaptation: AdaptationConfig,
    #[serde(default)]
    pub hyperparameters: Vec<Hyperparameters>,
    #[serde(default)]
    pub seed: u64,
    /// Upper bound on worker threads; 0 means no bound.
    #[serde(default)]
    pub threads: usize,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.manifest = base.join(&cfg.manifest);
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.windows = cfg.windows.map(|w| base.join(w));
        Ok(cfg)
    }

    pub fn study_config(&self, threads: usize) -> StudyConfig {
        StudyConfig {
            methods: self.methods.clone(),
            kinds: self.kinds.clone(),
            tasks: self.tasks.clone(),
            adaptation: self.adaptation.clone(),
            hyperparameters: self.hyperparameters.clone(),
            seed: self.seed,
            threads,
        }
    }
}

/// Combines the configured thread count with `LONGADAPT_THREADS`; the
/// smaller positive value wins.
pub fn effective_threads(configured: usize, env: Option<&str>) -> anyhow::Result<usize> {
    let cap = match env {
        None => return Ok(configured),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => bail!("{THREADS_ENV} must be a positive integer, got {v:?}"),
        },
    };
    Ok(if configured == 0 { cap } else { configured.min(cap) })
}
