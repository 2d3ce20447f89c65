//! Privacy-preserving transforms and their combinations.
//!
//! Five attribute-level techniques are supported, always applied in the fixed
//! order suppression, top-and-bottom coding, noise, rounding, global re-coding.
//! Each transform is a pure function from one [`Dataset`] to another; rows are
//! never removed, only columns (by suppression).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::tabular::{equivalence_classes, Column, ColumnData, ColumnKind, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Technique {
    #[serde(rename = "S")]
    Suppression,
    #[serde(rename = "T")]
    TopBottom,
    #[serde(rename = "N")]
    Noise,
    #[serde(rename = "R")]
    Rounding,
    #[serde(rename = "G")]
    GlobalRecode,
}

impl Technique {
    /// Canonical application order.
    pub const ALL: [Technique; 5] = [
        Technique::Suppression,
        Technique::TopBottom,
        Technique::Noise,
        Technique::Rounding,
        Technique::GlobalRecode,
    ];

    pub fn letter(self) -> char {
        match self {
            Technique::Suppression => 'S',
            Technique::TopBottom => 'T',
            Technique::Noise => 'N',
            Technique::Rounding => 'R',
            Technique::GlobalRecode => 'G',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        Technique::ALL.into_iter().find(|t| t.letter() == c)
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Parameter grid per technique. Defaults are the standard grids:
/// `uniq_per` {0.7, 0.8, 0.9}, `outlier` {1.5, 3}, `ep` {0.5, 2, 4, 8, 16},
/// `base` {0.2, 5, 10}, `std_magnitude` {0.5, 1.5}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamGrids {
    pub uniq_per: Vec<f64>,
    pub outlier: Vec<f64>,
    pub ep: Vec<f64>,
    pub base: Vec<f64>,
    pub std_magnitude: Vec<f64>,
}

impl Default for ParamGrids {
    fn default() -> Self {
        ParamGrids {
            uniq_per: vec![0.7, 0.8, 0.9],
            outlier: vec![1.5, 3.0],
            ep: vec![0.5, 2.0, 4.0, 8.0, 16.0],
            base: vec![0.2, 5.0, 10.0],
            std_magnitude: vec![0.5, 1.5],
        }
    }
}

impl ParamGrids {
    pub fn grid(&self, technique: Technique) -> &[f64] {
        match technique {
            Technique::Suppression => &self.uniq_per,
            Technique::TopBottom => &self.outlier,
            Technique::Noise => &self.ep,
            Technique::Rounding => &self.base,
            Technique::GlobalRecode => &self.std_magnitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in Technique::ALL {
            let grid = self.grid(t);
            if grid.is_empty() {
                return Err(Error::InvalidParameter(format!("empty grid for {t}")));
            }
            for &p in grid {
                check_param(t, p)?;
            }
        }
        Ok(())
    }
}

fn check_param(technique: Technique, p: f64) -> Result<()> {
    let ok = match technique {
        Technique::Suppression => p > 0.0 && p < 1.0,
        _ => p.is_finite() && p > 0.0,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{technique}{p}")))
    }
}

/// How the noise parameter `diam / ep` is turned into a Laplace distribution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseScale {
    /// `diam / ep` is the Laplace scale `b` (variance `2 b²`).
    #[default]
    Scale,
    /// `diam / ep` is the variance, so `b = sqrt(diam / (2 ep))`.
    Variance,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformOptions {
    pub noise_scale: NoiseScale,
}

/// A transformed dataset plus the warnings raised while producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformOutput {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

impl TransformOutput {
    fn clean(dataset: Dataset) -> Self {
        TransformOutput {
            dataset,
            warnings: Vec::new(),
        }
    }
}

/// An ordered selection of techniques with their parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub techniques: Vec<Technique>,
    pub params: BTreeMap<Technique, f64>,
    pub seed: u64,
}

impl VariantSpec {
    /// Builds a spec, putting the techniques in canonical order.
    pub fn new(params: BTreeMap<Technique, f64>, seed: u64) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::InvalidParameter("variant without techniques".into()));
        }
        for (&t, &p) in &params {
            check_param(t, p)?;
        }
        Ok(VariantSpec {
            techniques: params.keys().copied().collect(),
            params,
            seed,
        })
    }

    /// `S0.7_T1.5_N8_R5_G1.5` style label.
    pub fn label(&self) -> String {
        self.techniques
            .iter()
            .map(|t| format!("{}{}", t.letter(), self.params[t]))
            .collect::<Vec<_>>()
            .join("_")
    }

    pub fn from_label(label: &str, seed: u64) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("malformed variant label `{label}`"));
        let mut params = BTreeMap::new();
        let mut last: Option<Technique> = None;
        for part in label.split('_') {
            let mut chars = part.chars();
            let t = chars.next().and_then(Technique::from_letter).ok_or_else(bad)?;
            if last.is_some_and(|l| l >= t) {
                return Err(bad());
            }
            let p = f64::from_str(chars.as_str()).map_err(|_| bad())?;
            params.insert(t, p);
            last = Some(t);
        }
        VariantSpec::new(params, seed)
    }
}

fn rebuild(ds: &Dataset, columns: Vec<Column>) -> Result<Dataset> {
    ds.with_columns(columns)
}

/// Removes every predictor whose distinct fraction is strictly above `uniq_per`.
pub fn suppress(ds: &Dataset, uniq_per: f64) -> Result<TransformOutput> {
    check_param(Technique::Suppression, uniq_per)?;
    let fractions: Vec<(&Column, f64)> = ds.predictors().map(|c| (c, c.distinct_fraction())).collect();
    let doomed: BTreeSet<&str> = fractions
        .iter()
        .filter(|(_, f)| *f > uniq_per)
        .map(|(c, _)| c.name.as_str())
        .collect();
    if doomed.is_empty() {
        return Ok(TransformOutput::clean(ds.clone()));
    }
    let mut warnings = Vec::new();
    let mut keep_anyway: Option<&str> = None;
    if doomed.len() == fractions.len() {
        let (col, _) = fractions
            .iter()
            .fold(None::<(&Column, f64)>, |best, &(c, f)| match best {
                Some((_, bf)) if bf <= f => best,
                _ => Some((c, f)),
            })
            .expect("at least one predictor");
        keep_anyway = Some(col.name.as_str());
        warnings.push(format!(
            "{}: suppression at {uniq_per} would remove every predictor; kept `{}`",
            ds.name(),
            col.name
        ));
    }
    let columns = ds
        .columns()
        .iter()
        .filter(|c| !doomed.contains(c.name.as_str()) || keep_anyway == Some(c.name.as_str()))
        .cloned()
        .collect();
    Ok(TransformOutput {
        dataset: rebuild(ds, columns)?,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TukeyFences {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower: f64,
    pub upper: f64,
    pub multiplier: f64,
}

pub fn compute_fences(q1: f64, q3: f64, multiplier: f64) -> TukeyFences {
    debug_assert!(q1 <= q3);
    let iqr = q3 - q1;
    TukeyFences {
        q1,
        q3,
        iqr,
        lower: q1 - multiplier * iqr,
        upper: q3 + multiplier * iqr,
        multiplier,
    }
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fences of a column's non-missing values; `None` when all are missing.
pub fn column_fences(col: &Column, multiplier: f64) -> Option<TukeyFences> {
    let mut values = col.numeric_values();
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(compute_fences(
        quantile(&values, 0.25),
        quantile(&values, 0.75),
        multiplier,
    ))
}

/// Replaces values outside the Tukey fences of each numeric predictor with
/// the nearest in-fence extreme (the whisker).
pub fn top_bottom(ds: &Dataset, multiplier: f64) -> Result<TransformOutput> {
    check_param(Technique::TopBottom, multiplier)?;
    let mut warnings = Vec::new();
    let columns = ds
        .columns()
        .iter()
        .map(|c| {
            if c.name == ds.target() || !c.kind().is_numeric() {
                return c.clone();
            }
            let Some(f) = column_fences(c, multiplier) else {
                return c.clone();
            };
            let inside = c.numeric_values().into_iter().filter(|v| *v >= f.lower && *v <= f.upper);
            let (lo, hi) = inside.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
            if lo > hi {
                warnings.push(format!("{}: no in-fence values in `{}`", ds.name(), c.name));
                return c.clone();
            }
            let clamp = |v: f64| {
                if v < f.lower {
                    lo
                } else if v > f.upper {
                    hi
                } else {
                    v
                }
            };
            let data = match &c.data {
                ColumnData::Integer(v) => {
                    ColumnData::Integer(v.iter().map(|x| x.map(|x| clamp(x as f64) as i64)).collect())
                }
                ColumnData::Float(v) => ColumnData::Float(v.iter().map(|x| x.map(clamp)).collect()),
                ColumnData::Nominal(_) => unreachable!(),
            };
            Column::new(c.name.clone(), data)
        })
        .collect();
    Ok(TransformOutput {
        dataset: rebuild(ds, columns)?,
        warnings,
    })
}

/// Laplace scale `b` for a diameter and privacy budget.
pub fn laplace_scale(diam: f64, ep: f64, mode: NoiseScale) -> f64 {
    match mode {
        NoiseScale::Scale => diam / ep,
        NoiseScale::Variance => (diam / (2.0 * ep)).sqrt(),
    }
}

/// One draw from Laplace(0, b), as the difference of two unit exponentials.
pub fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, b: f64) -> f64 {
    let e1: f64 = rng.sample(Exp1);
    let e2: f64 = rng.sample(Exp1);
    b * (e1 - e2)
}

fn diameter(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    (lo <= hi).then_some(hi - lo)
}

/// Adds Laplace noise to every float predictor.
///
/// Rows are grouped by the other QI columns; each group uses `diam / ep`
/// where `diam` is the max-min spread of the float values inside the group.
/// Singleton or zero-spread groups fall back to the whole-column spread.
/// Each column draws from its own stream keyed by `(seed, column name)`.
pub fn add_laplace_noise(ds: &Dataset, ep: f64, seed: u64, mode: NoiseScale) -> Result<TransformOutput> {
    check_param(Technique::Noise, ep)?;
    let mut warnings = Vec::new();
    let mut columns = Vec::with_capacity(ds.columns().len());
    for c in ds.columns() {
        let ColumnData::Float(values) = &c.data else {
            columns.push(c.clone());
            continue;
        };
        if c.name == ds.target() {
            columns.push(c.clone());
            continue;
        }
        let global = diameter(values.iter().flatten().copied()).unwrap_or(0.0);
        if global == 0.0 {
            warnings.push(format!("{}: float column `{}` is constant; no noise added", ds.name(), c.name));
            columns.push(c.clone());
            continue;
        }
        let others: Vec<&str> = ds
            .qi()
            .iter()
            .filter(|q| **q != c.name)
            .map(String::as_str)
            .collect();
        let classes = equivalence_classes(ds, &others)?;
        let mut scale = vec![0.0; ds.n_rows()];
        for class in classes.classes() {
            let diam = if class.len() > 1 {
                diameter(class.iter().filter_map(|&r| values[r])).unwrap_or(0.0)
            } else {
                0.0
            };
            let diam = if diam > 0.0 { diam } else { global };
            let b = laplace_scale(diam, ep, mode);
            for &r in class {
                scale[r] = b;
            }
        }
        let mut rng = seed::rng(seed, &["noise", &c.name]);
        let noisy = values
            .iter()
            .zip(&scale)
            .map(|(v, &b)| {
                // one draw per row keeps the stream aligned across missing cells
                let z = sample_laplace(&mut rng, b);
                v.map(|v| v + z)
            })
            .collect();
        columns.push(Column::new(c.name.clone(), ColumnData::Float(noisy)));
    }
    Ok(TransformOutput {
        dataset: rebuild(ds, columns)?,
        warnings,
    })
}

/// Nearest multiple of `base`, ties away from zero.
pub fn round_to_base(v: f64, base: f64) -> f64 {
    base * (v / base).round()
}

/// Rounds every numeric predictor to a multiple of `base`. Integer columns
/// are only rounded by whole-number bases so they stay integer.
pub fn round_values(ds: &Dataset, base: f64) -> Result<TransformOutput> {
    check_param(Technique::Rounding, base)?;
    let integral_base = base.fract() == 0.0;
    let columns = ds
        .columns()
        .iter()
        .map(|c| {
            if c.name == ds.target() {
                return c.clone();
            }
            match &c.data {
                ColumnData::Float(v) => Column::new(
                    c.name.clone(),
                    ColumnData::Float(v.iter().map(|x| x.map(|x| round_to_base(x, base))).collect()),
                ),
                ColumnData::Integer(v) if integral_base => Column::new(
                    c.name.clone(),
                    ColumnData::Integer(
                        v.iter()
                            .map(|x| x.map(|x| round_to_base(x as f64, base) as i64))
                            .collect(),
                    ),
                ),
                _ => c.clone(),
            }
        })
        .collect();
    Ok(TransformOutput::clean(rebuild(ds, columns)?))
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Bin width used by global re-coding for a column; `None` when the column
/// has fewer than two distinct values.
pub fn recode_width(col: &Column, std_magnitude: f64) -> Option<f64> {
    if col.distinct_count() < 2 {
        return None;
    }
    let w = sample_std(&col.numeric_values()) * std_magnitude;
    (w > 0.0).then_some(w)
}

/// Lower limit of the bin containing `v`, as the smallest integer in that bin.
pub fn recode_value(v: i64, min: i64, width: f64) -> i64 {
    let offset = (v - min) as f64;
    let lower = min as f64 + width * (offset / width).floor();
    let tol = 1e-9 * lower.abs().max(1.0);
    ((lower - tol).ceil() as i64).min(v)
}

/// Bins every integer predictor into ranges of `sample_std · std_magnitude`
/// anchored at the column minimum, reporting each value as its bin's lower limit.
pub fn global_recode(ds: &Dataset, std_magnitude: f64) -> Result<TransformOutput> {
    check_param(Technique::GlobalRecode, std_magnitude)?;
    let columns = ds
        .columns()
        .iter()
        .map(|c| {
            let ColumnData::Integer(values) = &c.data else {
                return c.clone();
            };
            if c.name == ds.target() {
                return c.clone();
            }
            let (Some(w), Some(min)) = (recode_width(c, std_magnitude), values.iter().flatten().min()) else {
                return c.clone();
            };
            Column::new(
                c.name.clone(),
                ColumnData::Integer(values.iter().map(|v| v.map(|v| recode_value(v, *min, w))).collect()),
            )
        })
        .collect();
    Ok(TransformOutput::clean(rebuild(ds, columns)?))
}

/// Techniques that would affect at least one predictor of `ds`.
pub fn applicable_techniques(ds: &Dataset, grids: &ParamGrids) -> BTreeSet<Technique> {
    let mut out = BTreeSet::new();
    let min_uniq = grids.uniq_per.iter().copied().fold(f64::INFINITY, f64::min);
    let kinds: BTreeSet<ColumnKind> = ds.predictors().map(Column::kind).collect();
    if ds.predictors().any(|c| c.distinct_fraction() > min_uniq) {
        out.insert(Technique::Suppression);
    }
    let numeric = kinds.contains(&ColumnKind::Integer) || kinds.contains(&ColumnKind::Float);
    if numeric {
        out.insert(Technique::TopBottom);
        out.insert(Technique::Rounding);
    }
    if kinds.contains(&ColumnKind::Float) {
        out.insert(Technique::Noise);
    }
    if kinds.contains(&ColumnKind::Integer) {
        out.insert(Technique::GlobalRecode);
    }
    out
}

/// Every non-empty combination of the applicable techniques, smallest first,
/// each carrying the chosen parameter of its techniques.
pub fn enumerate_variants(
    ds: &Dataset,
    chosen: &BTreeMap<Technique, f64>,
    grids: &ParamGrids,
    seed: u64,
) -> Result<(Vec<VariantSpec>, Vec<String>)> {
    let applicable: Vec<Technique> = applicable_techniques(ds, grids).into_iter().collect();
    if applicable.is_empty() {
        return Ok((
            Vec::new(),
            vec![format!("{}: no applicable technique", ds.name())],
        ));
    }
    for t in &applicable {
        if !chosen.contains_key(t) {
            return Err(Error::InvalidParameter(format!("no chosen parameter for {t}")));
        }
    }
    let k = applicable.len();
    let mut masks: Vec<u32> = (1..(1u32 << k)).collect();
    masks.sort_by_key(|m| {
        let bits: Vec<u32> = (0..k as u32).filter(|b| m & (1 << b) != 0).collect();
        (bits.len(), bits)
    });
    let specs = masks
        .into_iter()
        .map(|m| {
            let params = applicable
                .iter()
                .enumerate()
                .filter(|(i, _)| m & (1 << i) != 0)
                .map(|(_, t)| (*t, chosen[t]))
                .collect();
            VariantSpec::new(params, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((specs, Vec::new()))
}

/// Applies one technique with one parameter.
pub fn apply_technique(
    ds: &Dataset,
    technique: Technique,
    param: f64,
    seed: u64,
    opts: &TransformOptions,
) -> Result<TransformOutput> {
    match technique {
        Technique::Suppression => suppress(ds, param),
        Technique::TopBottom => top_bottom(ds, param),
        Technique::Noise => add_laplace_noise(ds, param, seed, opts.noise_scale),
        Technique::Rounding => round_values(ds, param),
        Technique::GlobalRecode => global_recode(ds, param),
    }
}

/// Sequential composition of the spec's techniques in canonical order. The
/// noise stream is keyed by `(spec.seed, label)`. Failures of a single
/// technique become warnings; the composition carries on.
pub fn apply_variant(ds: &Dataset, spec: &VariantSpec, opts: &TransformOptions) -> TransformOutput {
    let label = spec.label();
    let noise_seed = seed::derive(spec.seed, &[&label]);
    let mut current = ds.clone();
    let mut warnings = Vec::new();
    let mut ordered = spec.techniques.clone();
    ordered.sort();
    for t in ordered {
        let param = spec.params[&t];
        match apply_technique(&current, t, param, noise_seed, opts) {
            Ok(out) => {
                current = out.dataset;
                warnings.extend(out.warnings);
            }
            Err(e) => warnings.push(format!("{}: {label}: {t} failed: {e}", ds.name())),
        }
    }
    TransformOutput {
        dataset: current,
        warnings,
    }
}
