//! Median/IQR summaries over every `results.json` below a directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{FieldError, Result};
use crate::fieldmetrics::median_iqr;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub n: usize,
    pub median: f64,
    pub iqr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: Vec<PathBuf>,
    pub metrics: Vec<MetricSummary>,
    pub warnings: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FieldError + '_ {
    move |source| FieldError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn find_results(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io_err(dir))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_results(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "results.json") {
            out.push(p);
        }
    }
    Ok(())
}

/// Numeric leaves keyed by dotted path; array elements by index.
pub fn flatten(value: &Value, prefix: &str, out: &mut BTreeMap<String, f64>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match value {
        Value::Number(n) => {
            if let Some(x) = n.as_f64() {
                out.insert(prefix.to_string(), x);
            }
        }
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(v, &key(k), out)),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(v, &key(&i.to_string()), out)),
        _ => {}
    }
}

/// Aggregates all result files below `dir` into `summary.csv` and
/// `summary.txt`. Unreadable files are skipped and listed in the footer.
pub fn report(dir: &Path) -> Result<Summary> {
    let mut files = Vec::new();
    find_results(dir, &mut files)?;
    let mut runs = Vec::new();
    let mut warnings = Vec::new();
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for f in files {
        let parsed = std::fs::read_to_string(&f)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<Value>(&t).map_err(|e| e.to_string()));
        let rel = f.strip_prefix(dir).unwrap_or(&f).to_path_buf();
        match parsed {
            Ok(v) => {
                let mut leaves = BTreeMap::new();
                flatten(&v, "", &mut leaves);
                for (k, x) in leaves {
                    values.entry(k).or_default().push(x);
                }
                runs.push(rel);
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", f.display());
                warnings.push(format!("skipped {}: {e}", rel.display()));
            }
        }
    }
    let metrics: Vec<MetricSummary> = values
        .into_iter()
        .filter_map(|(metric, v)| {
            let (median, iqr) = median_iqr(&v)?;
            Some(MetricSummary {
                metric,
                n: v.len(),
                median,
                iqr,
            })
        })
        .collect();
    let summary = Summary {
        runs,
        metrics,
        warnings,
    };
    write_summary(dir, &summary)?;
    Ok(summary)
}

fn write_summary(dir: &Path, s: &Summary) -> Result<()> {
    let csv_path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for m in &s.metrics {
        w.serialize(m)?;
    }
    w.flush().map_err(io_err(&csv_path))?;

    let width = s
        .metrics
        .iter()
        .map(|m| m.metric.len())
        .max()
        .unwrap_or(6)
        .max(6);
    let mut text = format!(
        "{} run(s)\n\n{:<width$}  {:>3}  {:>12}  {:>12}\n",
        s.runs.len(),
        "metric",
        "n",
        "median",
        "iqr"
    );
    for m in &s.metrics {
        let _ = writeln!(
            text,
            "{:<width$}  {:>3}  {:>12.6e}  {:>12.6e}",
            m.metric, m.n, m.median, m.iqr
        );
    }
    if !s.warnings.is_empty() {
        text.push_str("\nwarnings:\n");
        for w in &s.warnings {
            let _ = writeln!(text, "  {w}");
        }
    }
    let txt_path = dir.join("summary.txt");
    std::fs::write(&txt_path, text).map_err(io_err(&txt_path))
}
