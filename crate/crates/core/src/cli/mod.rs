//! Config-driven experiment runner: TOML configs in, JSON/CSV/JSONL out.

pub mod experiments;
pub mod report;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FieldError, Result};
use crate::gradcore::Rng;
use crate::jsonio::write_json;
use crate::manifoldgen::write_path_manifest;
use crate::pdebench::write_pde_csv;
use crate::teacherflow::{generate_dataset, Task};
use crate::trainlab::write_pareto_csv;
pub use experiments::*;
pub use report::{report, MetricSummary, Summary};

/// Environment variable that replaces the output root.
pub const OUT_ENV: &str = "FIELDLAB_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Teacherflow,
    Pde,
    Reveal,
    Continual,
    Pareto,
    MetricsReport,
}

/// One experiment. Only the sub-config matching `kind` is used; all of
/// them are materialized with defaults into the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; defaults to `runs/<config stem>`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub teacherflow: TeacherflowExp,
    #[serde(default)]
    pub pde: PdeExp,
    #[serde(default)]
    pub reveal: RevealExp,
    #[serde(default)]
    pub continual: ContinualExp,
    #[serde(default)]
    pub pareto: ParetoExp,
    #[serde(default)]
    pub metrics_report: MetricsReportExp,
}

/// Nested seeds that must agree with the top-level one when given.
const NESTED_SEEDS: [[&str; 3]; 2] = [["reveal", "model", "seed"], ["continual", "model", "seed"]];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| FieldError::Config(e.to_string()))?;
        let value: toml::Table =
            toml::from_str(text).map_err(|e| FieldError::Config(e.to_string()))?;
        for path in NESTED_SEEDS {
            let mut node = Some(&value);
            for key in &path[..2] {
                node = node.and_then(|t| t.get(*key)).and_then(|v| v.as_table());
            }
            if let Some(v) = node.and_then(|t| t.get(path[2])) {
                if v.as_integer() != Some(cfg.seed as i64) {
                    return Err(FieldError::Config(format!(
                        "{} = {v} conflicts with seed = {}; set only the top-level seed",
                        path.join("."),
                        cfg.seed
                    )));
                }
            }
        }
        let seed = cfg.seed;
        Ok(cfg.with_seed(seed))
    }

    /// Sets the run seed everywhere it appears.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.reveal.model.seed = seed;
        self.continual.model.seed = seed;
        self
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| FieldError::Config(e.to_string()))
    }
}

/// Parsed config plus the raw bytes it came from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub config: ExperimentConfig,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let bytes = std::fs::read(path)
        .map_err(|e| FieldError::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| FieldError::Config(format!("{}: {e}", path.display())))?;
    let config = ExperimentConfig::from_toml(text).map_err(|e| match e {
        FieldError::Config(msg) => FieldError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    Ok(LoadedConfig {
        path: path.to_path_buf(),
        config,
        sha256: sha256_hex(&bytes),
    })
}

/// `output` (or `runs/<stem>`), re-rooted under `env_root` when given.
pub fn output_dir(cfg: &ExperimentConfig, config_path: &Path, env_root: Option<&Path>) -> PathBuf {
    let dir = cfg.output.clone().unwrap_or_else(|| {
        let stem = config_path
            .file_stem()
            .map_or("run".into(), |s| s.to_string_lossy().into_owned());
        Path::new("runs").join(stem)
    });
    match env_root {
        Some(root) => root.join(dir.file_name().unwrap_or(dir.as_os_str())),
        None => dir,
    }
}

fn env_root() -> Option<PathBuf> {
    std::env::var_os(OUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: Kind,
    pub seed: u64,
    pub config_sha256: String,
    pub version: String,
    pub seconds: f64,
    pub files: Vec<String>,
    pub config: ExperimentConfig,
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| FieldError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Runs `cfg` and writes its result files into `dir`; returns their names.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>> {
    mkdir(dir)?;
    let seed = cfg.seed;
    let mut files = vec!["results.json".to_string()];
    let results = dir.join("results.json");
    match cfg.kind {
        Kind::Teacherflow => {
            let exp = &cfg.teacherflow;
            write_json(&results, &teacherflow_experiment(exp, seed)?)?;
            if exp.export_data {
                let rng = Rng::new(seed);
                for (name, n) in [("train", exp.samples), ("test", exp.test_samples)] {
                    let data = generate_dataset(&exp.spec, n, Task::A, 0.0, &rng.stream(name))?;
                    let file = format!("teacher_{name}.jsonl");
                    data.write_jsonl(&dir.join(&file))?;
                    files.push(file);
                }
            }
        }
        Kind::Pde => {
            let out = pde_experiment(&cfg.pde, seed)?;
            write_json(&results, &out)?;
            write_pde_csv(&dir.join("pde.csv"), &out.rows)?;
            files.push("pde.csv".into());
        }
        Kind::Reveal => {
            let (data, out) = reveal_experiment(&cfg.reveal, seed)?;
            write_json(&results, &out)?;
            write_path_manifest(&dir.join("paths.json"), &data.paths)?;
            files.push("paths.json".into());
        }
        Kind::Continual => {
            let out = continual_experiment(&cfg.continual, seed)?;
            out.write(dir)?;
            if out.phase0.is_some() {
                files.extend(
                    [
                        "accuracy_matrix.json",
                        "drift_records.csv",
                        "correlation_report.json",
                    ]
                    .map(String::from),
                );
            }
            if out.phase3.is_some() {
                files.push("budget_results.json".into());
            }
        }
        Kind::Pareto => {
            let rows = pareto_experiment(&cfg.pareto, seed)?;
            // wall-clock stays out of results.json so it is reproducible
            let timeless: Vec<_> = rows
                .iter()
                .map(|r| crate::trainlab::ParetoRow {
                    seconds: 0.0,
                    ..r.clone()
                })
                .collect();
            write_json(&results, &timeless)?;
            write_pareto_csv(&dir.join("pareto.csv"), &rows)?;
            files.push("pareto.csv".into());
        }
        Kind::MetricsReport => {
            write_json(
                &results,
                &metrics_report_experiment(&cfg.metrics_report, seed)?,
            )?;
        }
    }
    Ok(files)
}

fn finish(
    cfg: &ExperimentConfig,
    sha256: &str,
    dir: &Path,
    start: Instant,
    files: Vec<String>,
) -> Result<Manifest> {
    let manifest = Manifest {
        kind: cfg.kind,
        seed: cfg.seed,
        config_sha256: sha256.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seconds: start.elapsed().as_secs_f64(),
        files,
        config: cfg.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// `run <config>`: loads, runs and writes results plus `manifest.json`.
/// Returns the output directory.
pub fn run_config(path: &Path) -> Result<PathBuf> {
    let loaded = load_config(path)?;
    let dir = output_dir(&loaded.config, path, env_root().as_deref());
    let start = Instant::now();
    let files = run_experiment(&loaded.config, &dir)?;
    finish(&loaded.config, &loaded.sha256, &dir, start, files)?;
    Ok(dir)
}

/// `sweep <config> --seeds ... --jobs n`: one independent run per seed in
/// `<output>/seed_<s>` on up to `jobs` threads, then a summary over all.
pub fn sweep(path: &Path, seeds: &[u64], jobs: usize) -> Result<(PathBuf, Summary)> {
    if seeds.is_empty() {
        return Err(FieldError::Config("sweep needs at least one seed".into()));
    }
    let loaded = load_config(path)?;
    let base = output_dir(&loaded.config, path, env_root().as_deref());
    let next = AtomicUsize::new(0);
    let errors = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, seeds.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = seeds.get(i) else { break };
                let cfg = loaded.config.clone().with_seed(seed);
                let dir = base.join(format!("seed_{seed}"));
                let start = Instant::now();
                let res = run_experiment(&cfg, &dir)
                    .and_then(|files| finish(&cfg, &loaded.sha256, &dir, start, files));
                match res {
                    Ok(_) => log::info!("seed {seed} done"),
                    Err(e) => errors.lock().expect("poisoned").push((seed, e)),
                }
            });
        }
    });
    let mut errors = errors.into_inner().expect("poisoned");
    errors.sort_by_key(|(seed, _)| *seed);
    if let Some((seed, e)) = errors.into_iter().next() {
        log::error!("seed {seed} failed");
        return Err(e);
    }
    let summary = report(&base)?;
    Ok((base, summary))
}

/// Process exit code for a command result.
pub fn exit_code<T>(r: &Result<T>) -> i32 {
    match r {
        Ok(_) => 0,
        Err(FieldError::Config(_)) => 2,
        Err(_) => 1,
    }
}
