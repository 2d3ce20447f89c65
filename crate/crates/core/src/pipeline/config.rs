//! Run configuration, read from a TOML file.
//!
//! ```toml
//! out_dir = "runs/demo"
//! seed = 7
//! learners = "builtin"          # or "external"
//!
//! [[dataset]]
//! path = "data/credit.csv"      # relative to the config file
//! target = "class"
//!
//! [grids]
//! ep = [0.5, 2, 4, 8, 16]
//!
//! [similarity.blocking]
//! method = "sorted-neighborhood"
//! window = 100
//! ```
//!
//! Every section is optional except `[[dataset]]`; see the README for the
//! full list of keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{FScoreMode, LearnerSpec, BUILTIN_LOGREG};
use crate::linkage::SimilarityConfig;
use crate::stats::{Rope, Scenario, SignTestConfig};
use crate::transforms::{NoiseScale, ParamGrids};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub target: String,
    /// Defaults to the file stem.
    #[serde(default)]
    pub name: Option<String>,
    /// Defaults to every non-target column.
    #[serde(default)]
    pub qi: Option<Vec<String>>,
}

impl DatasetConfig {
    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LearnerMode {
    #[default]
    Builtin,
    External,
}

/// Hyper-parameter grid of the built-in logistic regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuiltinGrid {
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub max_iter: Vec<f64>,
}

impl Default for BuiltinGrid {
    fn default() -> Self {
        BuiltinGrid {
            c: vec![0.001, 1.0, 10000.0],
            max_iter: vec![10000.0, 1000000.0],
        }
    }
}

impl BuiltinGrid {
    pub fn spec(&self) -> LearnerSpec {
        LearnerSpec {
            algorithm: BUILTIN_LOGREG.to_string(),
            grid: vec![("C".into(), self.c.clone()), ("max_iter".into(), self.max_iter.clone())],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignTestSection {
    pub rope: [f64; 2],
    pub n_samples: usize,
    pub prior: [f64; 3],
}

impl Default for SignTestSection {
    fn default() -> Self {
        let d = SignTestConfig::default();
        SignTestSection {
            rope: [d.rope.lo, d.rope.hi],
            n_samples: d.n_samples,
            prior: d.prior,
        }
    }
}

impl SignTestSection {
    pub fn to_config(&self) -> SignTestConfig {
        SignTestConfig {
            rope: Rope {
                lo: self.rope[0],
                hi: self.rope[1],
            },
            n_samples: self.n_samples,
            prior: self.prior,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("deidbench-out")
}

fn default_seed() -> u64 {
    42
}

fn default_scenarios() -> Vec<Scenario> {
    Scenario::ALL.to_vec()
}

fn default_external_results() -> PathBuf {
    PathBuf::from("external_results.jsonl")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "dataset")]
    pub datasets: Vec<DatasetConfig>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub learners: LearnerMode,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<Scenario>,
    /// Harness output, relative to `out_dir` unless absolute.
    #[serde(default = "default_external_results")]
    pub external_results: PathBuf,
    #[serde(default)]
    pub fscore: FScoreMode,
    #[serde(default)]
    pub noise_scale: NoiseScale,
    /// Also write per-record linkage scores next to each risk report.
    #[serde(default)]
    pub score_audit: bool,
    #[serde(default)]
    pub grids: ParamGrids,
    #[serde(default)]
    pub similarity: SimilarityConfig,
    #[serde(default)]
    pub learner: BuiltinGrid,
    #[serde(default)]
    pub sign_test: SignTestSection,
}

impl RunConfig {
    /// Minimal config over the given datasets, all defaults otherwise.
    pub fn new(datasets: Vec<DatasetConfig>, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            datasets,
            out_dir: out_dir.into(),
            seed: default_seed(),
            learners: LearnerMode::default(),
            jobs: None,
            scenarios: default_scenarios(),
            external_results: default_external_results(),
            fscore: FScoreMode::default(),
            noise_scale: NoiseScale::default(),
            score_audit: false,
            grids: ParamGrids::default(),
            similarity: SimilarityConfig::default(),
            learner: BuiltinGrid::default(),
            sign_test: SignTestSection::default(),
        }
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for d in &mut cfg.datasets {
            if d.path.is_relative() {
                d.path = base_dir.join(&d.path);
            }
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base_dir.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_toml(&text, base)
    }

    pub fn external_results_path(&self) -> PathBuf {
        if self.external_results.is_absolute() {
            self.external_results.clone()
        } else {
            self.out_dir.join(&self.external_results)
        }
    }

    /// Checks every invariant that can be checked before running anything.
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("no [[dataset]] entries".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for d in &self.datasets {
            if !d.path.is_file() {
                return Err(Error::Config(format!("dataset file {} does not exist", d.path.display())));
            }
            if !names.insert(d.name()) {
                return Err(Error::Config(format!("duplicate dataset name `{}`", d.name())));
            }
        }
        self.grids.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.similarity.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.learner.spec().configs().map_err(|e| Error::Config(e.to_string()))?;
        let st = self.sign_test.to_config();
        if st.rope.lo.partial_cmp(&st.rope.hi) != Some(std::cmp::Ordering::Less) || st.n_samples == 0 || st.prior.iter().any(|p| *p < 0.0) {
            return Err(Error::Config("invalid [sign_test] section".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }
}
