//! Per-technique parameter selection: the parameter with the fewest matched
//! records wins, earliest grid position on ties.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linkage::{assess_risk, RiskReport, SimilarityConfig};
use crate::seed;
use crate::tabular::Dataset;
use crate::transforms::{apply_technique, applicable_techniques, ParamGrids, Technique, TransformOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSelection {
    pub technique: Technique,
    pub grid: Vec<f64>,
    /// One report per grid value, in grid order.
    pub risks: Vec<RiskReport>,
    pub chosen: f64,
}

impl ParamSelection {
    pub fn chosen_report(&self) -> &RiskReport {
        let i = self.grid.iter().position(|p| *p == self.chosen).expect("chosen from grid");
        &self.risks[i]
    }

    pub fn to_json(&self, dataset: &str) -> SelectionJson {
        SelectionJson {
            dataset: dataset.to_string(),
            technique: self.technique,
            grid: self.grid.clone(),
            risks: self.risks.iter().map(RiskReport::risk).collect(),
            matched: self.risks.iter().map(RiskReport::matched_count).collect(),
            chosen: self.chosen,
        }
    }
}

/// JSON form of a [`ParamSelection`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionJson {
    pub dataset: String,
    pub technique: Technique,
    pub grid: Vec<f64>,
    pub risks: Vec<f64>,
    pub matched: Vec<usize>,
    pub chosen: f64,
}

/// Applies `technique` alone at every grid value, links each result back to
/// `ds` and keeps the value with the fewest matched records. Noise draws use
/// one stream per `(seed, dataset, technique, parameter)`.
pub fn select_best_param(
    ds: &Dataset,
    technique: Technique,
    grid: &[f64],
    cfg: &SimilarityConfig,
    seed: u64,
    opts: &TransformOptions,
    grids: &ParamGrids,
) -> Result<ParamSelection> {
    if grid.is_empty() {
        return Err(Error::Empty(format!("parameter grid for {technique}")));
    }
    if !applicable_techniques(ds, grids).contains(&technique) {
        return Err(Error::NotApplicable(technique.to_string()));
    }
    let risks = grid
        .par_iter()
        .map(|&p| {
            let label = format!("{}{}", technique.letter(), p);
            let s = seed::derive(seed, &["tuning", ds.name(), &label]);
            let out = apply_technique(ds, technique, p, s, opts)?;
            assess_risk(ds, &out.dataset.renamed(label), cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let best = risks
        .iter()
        .enumerate()
        .min_by_key(|(i, r)| (r.matched_count(), *i))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    Ok(ParamSelection {
        technique,
        grid: grid.to_vec(),
        chosen: grid[best],
        risks,
    })
}

/// Runs [`select_best_param`] for every applicable technique.
pub fn select_all(
    ds: &Dataset,
    grids: &ParamGrids,
    cfg: &SimilarityConfig,
    seed: u64,
    opts: &TransformOptions,
) -> Result<BTreeMap<Technique, ParamSelection>> {
    applicable_techniques(ds, grids)
        .into_iter()
        .map(|t| Ok((t, select_best_param(ds, t, grids.grid(t), cfg, seed, opts, grids)?)))
        .collect()
}
