//! Distance-based record linkage between an original dataset and a
//! transformed variant.
//!
//! Every variant record is scored against candidate original records by
//! summing per-attribute similarities over the shared quasi-identifiers. A
//! variant record is *matched* (at risk) when its best score reaches
//! `match_fraction` of the number of shared columns.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{Column, ColumnKind, Dataset};

/// Above this many original rows `Blocking::Auto` switches to sorted neighbourhood.
pub const AUTO_BLOCKING_ROWS: usize = 5000;
pub const AUTO_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum Blocking {
    /// Full index for small inputs, sorted neighbourhood for large ones.
    #[default]
    Auto,
    None,
    /// Each variant record is compared with the `window` original records
    /// nearest to it in the order of the key column.
    SortedNeighborhood { window: usize, key: Option<String> },
    /// Only pairs that agree exactly on `column`.
    BlockOn { column: String },
}

impl fmt::Display for Blocking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Blocking::Auto => f.write_str("auto"),
            Blocking::None => f.write_str("none"),
            Blocking::SortedNeighborhood { window, key: Some(k) } => {
                write!(f, "sorted-neighborhood(window={window},key={k})")
            }
            Blocking::SortedNeighborhood { window, key: None } => {
                write!(f, "sorted-neighborhood(window={window})")
            }
            Blocking::BlockOn { column } => write!(f, "block-on({column})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityConfig {
    /// Per-column scale overrides for the numeric kernel. Columns not listed
    /// use the standard deviation of the original column.
    pub numeric_scale: HashMap<String, f64>,
    pub match_fraction: f64,
    pub blocking: Blocking,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            numeric_scale: HashMap::new(),
            match_fraction: 0.7,
            blocking: Blocking::Auto,
        }
    }
}

impl SimilarityConfig {
    pub fn with_blocking(blocking: Blocking) -> Self {
        SimilarityConfig {
            blocking,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.match_fraction > 0.0 && self.match_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "match_fraction {} outside (0, 1]",
                self.match_fraction
            )));
        }
        if let Some((c, s)) = self.numeric_scale.iter().find(|(_, s)| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(format!("numeric scale {s} for `{c}`")));
        }
        if let Blocking::SortedNeighborhood { window: 0, .. } = self.blocking {
            return Err(Error::InvalidParameter("sorted-neighborhood window of 0".into()));
        }
        Ok(())
    }
}

/// A single cell as seen by the similarity function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell<'a> {
    Missing,
    Text(&'a str),
    Number(f64),
}

/// Similarity in `[0, 1]`: equality for nominal values, `exp(-|a-b| / scale)`
/// for numeric ones, 0 when either side is missing.
pub fn attribute_similarity(orig: Cell<'_>, variant: Cell<'_>, kind: ColumnKind, scale: f64) -> f64 {
    match (orig, variant) {
        (Cell::Missing, _) | (_, Cell::Missing) => 0.0,
        (Cell::Number(a), Cell::Number(b)) if kind.is_numeric() => numeric_similarity(a, b, scale),
        (Cell::Text(a), Cell::Text(b)) => (a == b) as u8 as f64,
        (Cell::Number(a), Cell::Number(b)) => (a == b) as u8 as f64,
        _ => 0.0,
    }
}

#[inline]
fn numeric_similarity(a: f64, b: f64, scale: f64) -> f64 {
    (-(a - b).abs() / scale).exp()
}

/// Sample standard deviation of a column, or 1 when it is not positive.
pub fn default_scale(col: &Column) -> f64 {
    let v = col.numeric_values();
    if v.len() < 2 {
        return 1.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd > 0.0 && sd.is_finite() {
        sd
    } else {
        1.0
    }
}

/// Column pair prepared for fast scoring.
enum Prepared {
    /// `NaN` marks a missing cell.
    Numeric { orig: Vec<f64>, var: Vec<f64>, scale: f64 },
    /// `u32::MAX` marks a missing cell.
    Codes { orig: Vec<u32>, var: Vec<u32> },
}

const MISSING_CODE: u32 = u32::MAX;

impl Prepared {
    fn build(orig: &Column, var: &Column, cfg: &SimilarityConfig) -> Self {
        if orig.kind().is_numeric() && var.kind().is_numeric() {
            let scale = cfg
                .numeric_scale
                .get(&orig.name)
                .copied()
                .unwrap_or_else(|| default_scale(orig));
            let num = |c: &Column| (0..c.len()).map(|i| c.numeric(i).unwrap_or(f64::NAN)).collect();
            Prepared::Numeric {
                orig: num(orig),
                var: num(var),
                scale,
            }
        } else {
            let mut dict: HashMap<String, u32> = HashMap::new();
            let mut codes = |c: &Column| -> Vec<u32> {
                (0..c.len())
                    .map(|i| {
                        if c.is_missing(i) {
                            MISSING_CODE
                        } else {
                            let n = dict.len() as u32;
                            *dict.entry(c.cell_string(i)).or_insert(n)
                        }
                    })
                    .collect()
            };
            let orig = codes(orig);
            let var = codes(var);
            Prepared::Codes { orig, var }
        }
    }

    #[inline]
    fn score(&self, a: usize, b: usize) -> f64 {
        match self {
            Prepared::Numeric { orig, var, scale } => {
                let (x, y) = (orig[a], var[b]);
                if x.is_nan() || y.is_nan() {
                    0.0
                } else {
                    numeric_similarity(x, y, *scale)
                }
            }
            Prepared::Codes { orig, var } => {
                let (x, y) = (orig[a], var[b]);
                (x != MISSING_CODE && x == y) as u8 as f64
            }
        }
    }
}

/// Names of the original's QI columns still present in the variant.
pub fn shared_columns(original: &Dataset, variant: &Dataset) -> Vec<String> {
    original
        .qi()
        .iter()
        .filter(|q| variant.column(q).is_some())
        .cloned()
        .collect()
}

/// Resolves `Auto` and a missing sorted-neighbourhood key against the data.
pub fn resolve_blocking(original: &Dataset, shared: &[String], blocking: &Blocking) -> Blocking {
    let best_key = || {
        let cols: Vec<&Column> = shared.iter().filter_map(|s| original.column(s)).collect();
        let numeric: Vec<&&Column> = cols.iter().filter(|c| c.kind().is_numeric()).collect();
        let pool: Vec<&Column> = if numeric.is_empty() {
            cols.clone()
        } else {
            numeric.into_iter().copied().collect()
        };
        // highest cardinality, first on ties
        pool.into_iter()
            .fold(None::<(&Column, usize)>, |best, c| {
                let d = c.distinct_count();
                match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((c, d)),
                }
            })
            .map(|(c, _)| c.name.clone())
    };
    match blocking {
        Blocking::Auto if original.n_rows() > AUTO_BLOCKING_ROWS => Blocking::SortedNeighborhood {
            window: AUTO_WINDOW,
            key: best_key(),
        },
        Blocking::Auto => Blocking::None,
        Blocking::SortedNeighborhood { window, key: None } => Blocking::SortedNeighborhood {
            window: *window,
            key: best_key(),
        },
        other => other.clone(),
    }
}

/// Sort key of a cell; missing sorts last.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
enum SortKey {
    Num(f64),
    Text(String),
    Missing,
}

fn sort_key(col: &Column, row: usize, numeric: bool) -> SortKey {
    if col.is_missing(row) {
        SortKey::Missing
    } else if numeric {
        SortKey::Num(col.numeric(row).expect("numeric cell"))
    } else {
        SortKey::Text(col.cell_string(row))
    }
}

fn cmp_keys(a: &SortKey, b: &SortKey) -> std::cmp::Ordering {
    use std::cmp::Ordering::*;
    match (a, b) {
        (SortKey::Num(x), SortKey::Num(y)) => x.total_cmp(y),
        (SortKey::Text(x), SortKey::Text(y)) => x.cmp(y),
        (SortKey::Missing, SortKey::Missing) => Equal,
        (SortKey::Missing, _) => Greater,
        (_, SortKey::Missing) => Less,
        (SortKey::Num(_), SortKey::Text(_)) => Less,
        (SortKey::Text(_), SortKey::Num(_)) => Greater,
    }
}

/// Candidate originals for each variant row.
enum CandidateIndex {
    Full { n_orig: usize },
    Window { order: Vec<usize>, starts: Vec<usize>, window: usize },
    Blocks { blocks: Vec<Vec<usize>> },
}

impl CandidateIndex {
    fn build(original: &Dataset, variant: &Dataset, blocking: &Blocking) -> Result<Self> {
        let n_orig = original.n_rows();
        match blocking {
            Blocking::None | Blocking::Auto => Ok(CandidateIndex::Full { n_orig }),
            Blocking::SortedNeighborhood { window, key } => {
                let Some(key) = key else {
                    return Ok(CandidateIndex::Full { n_orig });
                };
                let oc = original.column(key).ok_or_else(|| Error::UnknownColumn(key.clone()))?;
                let vc = variant.column(key).ok_or_else(|| Error::UnknownColumn(key.clone()))?;
                let numeric = oc.kind().is_numeric() && vc.kind().is_numeric();
                let okeys: Vec<SortKey> = (0..n_orig).map(|i| sort_key(oc, i, numeric)).collect();
                let mut order: Vec<usize> = (0..n_orig).collect();
                order.sort_by(|&a, &b| cmp_keys(&okeys[a], &okeys[b]).then(a.cmp(&b)));
                let sorted: Vec<&SortKey> = order.iter().map(|&i| &okeys[i]).collect();
                let window = (*window).min(n_orig);
                let starts = (0..variant.n_rows())
                    .map(|b| {
                        let k = sort_key(vc, b, numeric);
                        // centre the window on the run of equal keys
                        let lo = sorted.partition_point(|s| cmp_keys(s, &k).is_lt());
                        let hi = sorted.partition_point(|s| cmp_keys(s, &k).is_le());
                        ((lo + hi) / 2).saturating_sub(window / 2).min(n_orig - window)
                    })
                    .collect();
                Ok(CandidateIndex::Window { order, starts, window })
            }
            Blocking::BlockOn { column } => {
                let oc = original.column(column).ok_or_else(|| Error::UnknownColumn(column.clone()))?;
                let vc = variant.column(column).ok_or_else(|| Error::UnknownColumn(column.clone()))?;
                let mut by_key: HashMap<String, Vec<usize>> = HashMap::new();
                for a in 0..n_orig {
                    if !oc.is_missing(a) {
                        by_key.entry(oc.cell_string(a)).or_default().push(a);
                    }
                }
                let blocks = (0..variant.n_rows())
                    .map(|b| {
                        if vc.is_missing(b) {
                            Vec::new()
                        } else {
                            by_key.get(&vc.cell_string(b)).cloned().unwrap_or_default()
                        }
                    })
                    .collect();
                Ok(CandidateIndex::Blocks { blocks })
            }
        }
    }

    fn for_each(&self, b: usize, mut f: impl FnMut(usize)) {
        match self {
            CandidateIndex::Full { n_orig } => (0..*n_orig).for_each(f),
            CandidateIndex::Window { order, starts, window } => {
                order[starts[b]..starts[b] + window].iter().for_each(|&a| f(a))
            }
            CandidateIndex::Blocks { blocks } => blocks[b].iter().for_each(|&a| f(a)),
        }
    }
}

/// Record pairs `(original row, variant row)` to be compared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePairs {
    pub pairs: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
}

pub fn candidate_pairs(original: &Dataset, variant: &Dataset, cfg: &SimilarityConfig) -> Result<CandidatePairs> {
    cfg.validate()?;
    let shared = shared_columns(original, variant);
    if shared.is_empty() {
        return Ok(CandidatePairs {
            pairs: Vec::new(),
            warnings: vec![no_shared_warning(variant)],
        });
    }
    let blocking = resolve_blocking(original, &shared, &cfg.blocking);
    let index = CandidateIndex::build(original, variant, &blocking)?;
    let mut pairs = Vec::new();
    for b in 0..variant.n_rows() {
        index.for_each(b, |a| pairs.push((a, b)));
    }
    Ok(CandidatePairs {
        pairs,
        warnings: Vec::new(),
    })
}

fn no_shared_warning(variant: &Dataset) -> String {
    format!("{}: no quasi-identifier shared with the original; risk is 0", variant.name())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub variant: String,
    pub shared_columns: Vec<String>,
    pub blocking: Blocking,
    pub threshold: f64,
    /// Best linkage score of each variant row.
    pub best_scores: Vec<f64>,
    /// Variant rows whose best score reaches the threshold, ascending.
    pub matched: Vec<usize>,
    pub n_rows: usize,
    pub warnings: Vec<String>,
}

impl RiskReport {
    pub fn matched_count(&self) -> usize {
        self.matched.len()
    }

    pub fn risk(&self) -> f64 {
        if self.n_rows == 0 {
            0.0
        } else {
            self.matched.len() as f64 / self.n_rows as f64
        }
    }

    pub fn summary(&self, scores_path: Option<String>) -> RiskSummary {
        RiskSummary {
            variant: self.variant.clone(),
            matched_count: self.matched_count(),
            n_rows: self.n_rows,
            risk: self.risk(),
            threshold: self.threshold,
            blocking: self.blocking.to_string(),
            scores_path,
        }
    }

    /// Per-record audit file: `row,best_score,matched`.
    pub fn write_scores_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("row,best_score,matched\n");
        let mut m = self.matched.iter().peekable();
        for (row, s) in self.best_scores.iter().enumerate() {
            let hit = m.next_if(|&&r| r == row).is_some();
            out.push_str(&format!("{row},{s},{}\n", hit as u8));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// JSON form of a [`RiskReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    pub variant: String,
    pub matched_count: usize,
    pub n_rows: usize,
    pub risk: f64,
    pub threshold: f64,
    pub blocking: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scores_path: Option<String>,
}

/// Links every variant record to its best-scoring original candidate. Row
/// order is not assumed to correspond between the two datasets.
pub fn assess_risk(original: &Dataset, variant: &Dataset, cfg: &SimilarityConfig) -> Result<RiskReport> {
    cfg.validate()?;
    let shared = shared_columns(original, variant);
    let n_rows = variant.n_rows();
    if shared.is_empty() {
        return Ok(RiskReport {
            variant: variant.name().to_string(),
            shared_columns: shared,
            blocking: cfg.blocking.clone(),
            threshold: 0.0,
            best_scores: vec![0.0; n_rows],
            matched: Vec::new(),
            n_rows,
            warnings: vec![no_shared_warning(variant)],
        });
    }
    let blocking = resolve_blocking(original, &shared, &cfg.blocking);
    let index = CandidateIndex::build(original, variant, &blocking)?;
    let prepared: Vec<Prepared> = shared
        .iter()
        .map(|name| {
            let o = original.column(name).expect("shared column");
            let v = variant.column(name).expect("shared column");
            Prepared::build(o, v, cfg)
        })
        .collect();

    let best_scores: Vec<f64> = (0..n_rows)
        .into_par_iter()
        .map(|b| {
            let mut best = 0.0f64;
            index.for_each(b, |a| {
                let s: f64 = prepared.iter().map(|p| p.score(a, b)).sum();
                if s > best {
                    best = s;
                }
            });
            best
        })
        .collect();

    let threshold = cfg.match_fraction * shared.len() as f64;
    // absorbs summation rounding on exact matches
    let tol = 1e-9 * shared.len() as f64;
    let matched = best_scores
        .iter()
        .enumerate()
        .filter(|(_, s)| **s + tol >= threshold)
        .map(|(b, _)| b)
        .collect();
    Ok(RiskReport {
        variant: variant.name().to_string(),
        shared_columns: shared,
        blocking,
        threshold,
        best_scores,
        matched,
        n_rows,
        warnings: Vec::new(),
    })
}
