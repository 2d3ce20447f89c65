//! On-disk layout shared by the stages and the external harness.
//!
//! ```text
//! <out>/manifest.json
//! <out>/<dataset>/original.csv
//! <out>/<dataset>/tuning.json
//! <out>/<dataset>/splits.json
//! <out>/<dataset>/variants/<label>.csv
//! <out>/<dataset>/variants/<label>.risk.json
//! <out>/<dataset>/variants/<label>.scores.csv   (score_audit only)
//! <out>/tasks/task.json                          (external learners)
//! <out>/results/{validation,oracle}.jsonl
//! <out>/warnings/<stage>.json
//! <out>/reports/...
//! ```
//!
//! Paths stored in the manifest are relative to `<out>`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::EvalRecord;
use crate::tabular::{load_csv, Dataset};
use crate::transforms::{Technique, VariantSpec};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantEntry {
    pub label: String,
    pub path: String,
    pub spec: VariantSpec,
    pub risk_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub source: PathBuf,
    pub target: String,
    pub qi: Vec<String>,
    /// Minority label of the original data, scored as the positive class.
    pub positive: String,
    pub dropped_columns: Vec<String>,
    pub original: String,
    pub tuning: String,
    pub splits: String,
    pub applicable: Vec<Technique>,
    pub chosen: BTreeMap<Technique, f64>,
    pub variants: Vec<VariantEntry>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedDataset {
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantManifest {
    pub seed: u64,
    pub datasets: Vec<DatasetEntry>,
    #[serde(default)]
    pub failed: Vec<FailedDataset>,
}

impl VariantManifest {
    pub fn load(out_dir: &Path) -> Result<Self> {
        let path = out_dir.join(MANIFEST);
        if !path.is_file() {
            return Err(Error::MissingStages(format!("transform (no {})", path.display())));
        }
        read_json(&path)
    }

    /// True when every file the manifest references is present.
    pub fn files_exist(&self, out_dir: &Path) -> bool {
        self.datasets.iter().all(|d| {
            [&d.original, &d.tuning, &d.splits]
                .into_iter()
                .chain(d.variants.iter().map(|v| &v.path))
                .all(|p| out_dir.join(p).is_file())
        })
    }
}

impl DatasetEntry {
    /// Loads a stored CSV with this entry's target and QI.
    pub fn load(&self, out_dir: &Path, rel: &str, name: &str) -> Result<Dataset> {
        let raw = load_csv(&out_dir.join(rel), &self.target)?;
        let qi: Vec<String> = self.qi.iter().filter(|q| raw.column(q).is_some()).cloned().collect();
        Dataset::new(name, raw.columns().to_vec(), &self.target, Some(qi))
    }

    pub fn load_original(&self, out_dir: &Path) -> Result<Dataset> {
        self.load(out_dir, &self.original, &self.name)
    }

    pub fn load_variant(&self, out_dir: &Path, v: &VariantEntry) -> Result<Dataset> {
        self.load(out_dir, &v.path, &v.label)
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp"))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    let tmp = temp_path(path);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    ensure_parent(path)?;
    let tmp = temp_path(path);
    ds.write_csv(&tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_jsonl(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).map_err(|e| Error::json(path, e))?);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// Reads JSON lines, skipping blank lines.
pub fn read_jsonl(path: &Path) -> Result<Vec<EvalRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(out)
}

pub fn variant_csv(dataset: &str, label: &str) -> String {
    format!("{dataset}/variants/{label}.csv")
}

pub fn variant_risk(dataset: &str, label: &str) -> String {
    format!("{dataset}/variants/{label}.risk.json")
}

pub fn variant_scores(dataset: &str, label: &str) -> String {
    format!("{dataset}/variants/{label}.scores.csv")
}

pub fn warnings_path(out_dir: &Path, stage: &str) -> PathBuf {
    out_dir.join("warnings").join(format!("{stage}.json"))
}
