//! Percentage differences, the Bayes sign test with a region of practical
//! equivalence (ROPE), rank aggregation across datasets and the three
//! baseline-comparison scenarios.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// `(candidate - baseline) / baseline · 100`.
pub fn percentage_difference(candidate: f64, baseline: f64) -> Result<f64> {
    if baseline == 0.0 {
        return Err(Error::UndefinedBaseline);
    }
    Ok((candidate - baseline) / baseline * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rope {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Rope {
    /// ±1 percent.
    fn default() -> Self {
        Rope { lo: -1.0, hi: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTestConfig {
    pub rope: Rope,
    pub n_samples: usize,
    /// Dirichlet pseudo-counts for (lose, rope, win).
    pub prior: [f64; 3],
}

impl Default for SignTestConfig {
    fn default() -> Self {
        SignTestConfig {
            rope: Rope::default(),
            n_samples: 100_000,
            prior: [1.0, 1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesOutcome {
    pub p_lose: f64,
    pub p_rope: f64,
    pub p_win: f64,
    pub n_lose: usize,
    pub n_rope: usize,
    pub n_win: usize,
    pub rope: Rope,
    pub n_samples: usize,
}

/// Counts of diffs below, inside (closed) and above the ROPE.
pub fn sign_counts(diffs: &[f64], rope: Rope) -> [usize; 3] {
    let mut c = [0usize; 3];
    for &d in diffs {
        if d < rope.lo {
            c[0] += 1;
        } else if d > rope.hi {
            c[2] += 1;
        } else {
            c[1] += 1;
        }
    }
    c
}

const BLOCK: usize = 8192;

/// Bayes sign test. The posterior over (lose, rope, win) probabilities is a
/// Dirichlet with the prior plus the counts; each reported probability is the
/// Monte Carlo frequency with which that component is the largest of a draw.
/// Sampling is split into blocks with their own sub-seed, so the result does
/// not depend on the thread count.
pub fn bayes_sign_test(diffs: &[f64], cfg: &SignTestConfig, seed: u64) -> Result<BayesOutcome> {
    if diffs.is_empty() {
        return Err(Error::Empty("bayes_sign_test on no differences".into()));
    }
    if cfg.rope.lo.partial_cmp(&cfg.rope.hi) != Some(std::cmp::Ordering::Less) {
        return Err(Error::InvalidParameter(format!("rope [{}, {}]", cfg.rope.lo, cfg.rope.hi)));
    }
    if cfg.n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples = 0".into()));
    }
    let counts = sign_counts(diffs, cfg.rope);
    let alpha = [
        cfg.prior[0] + counts[0] as f64,
        cfg.prior[1] + counts[1] as f64,
        cfg.prior[2] + counts[2] as f64,
    ];
    let wins = dirichlet_argmax_counts(&alpha, cfg.n_samples, seed)?;
    let n = cfg.n_samples as f64;
    Ok(BayesOutcome {
        p_lose: wins[0] as f64 / n,
        p_rope: wins[1] as f64 / n,
        p_win: wins[2] as f64 / n,
        n_lose: counts[0],
        n_rope: counts[1],
        n_win: counts[2],
        rope: cfg.rope,
        n_samples: cfg.n_samples,
    })
}

/// How often each component is the largest in `n` draws from Dirichlet(`alpha`).
/// Components with a zero concentration never win.
fn dirichlet_argmax_counts(alpha: &[f64], n: usize, seed: u64) -> Result<Vec<usize>> {
    let gammas = alpha
        .iter()
        .map(|&a| {
            if a > 0.0 {
                Gamma::new(a, 1.0)
                    .map(Some)
                    .map_err(|e| Error::InvalidParameter(format!("dirichlet concentration {a}: {e}")))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let blocks = n.div_ceil(BLOCK);
    let partial: Vec<Vec<usize>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed::rng(seed, &["dirichlet", &b.to_string()]);
            let size = BLOCK.min(n - b * BLOCK);
            let mut wins = vec![0usize; alpha.len()];
            for _ in 0..size {
                wins[argmax_draw(&gammas, &mut rng)] += 1;
            }
            wins
        })
        .collect();
    Ok(partial.into_iter().fold(vec![0; alpha.len()], |mut acc, w| {
        acc.iter_mut().zip(w).for_each(|(a, x)| *a += x);
        acc
    }))
}

/// The normalising sum of a Dirichlet draw does not change the argmax, so
/// the unnormalised gamma variates are compared directly.
fn argmax_draw<R: Rng>(gammas: &[Option<Gamma<f64>>], rng: &mut R) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, g) in gammas.iter().enumerate() {
        let v = match g {
            Some(g) => g.sample(rng),
            None => f64::NEG_INFINITY,
        };
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankDirection {
    /// Largest value gets the largest rank (risk: high rank = high risk).
    HighValueHighRank,
    /// Largest value gets rank 1 (performance: low rank = best).
    HighValueLowRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub direction: RankDirection,
    /// Variants compared: those present in every dataset.
    pub variants: Vec<String>,
    pub datasets: Vec<String>,
    /// dataset → variant → rank.
    pub ranks: BTreeMap<String, BTreeMap<String, f64>>,
    pub mean_rank: BTreeMap<String, f64>,
}

impl RankTable {
    /// CSV with columns `variant,mean_rank,n_datasets`, sorted by mean rank.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(&String, &f64)> = self.mean_rank.iter().collect();
        rows.sort_by(|a, b| a.1.total_cmp(b.1).then_with(|| a.0.cmp(b.0)));
        let mut out = String::from("variant,mean_rank,n_datasets\n");
        for (v, r) in rows {
            out.push_str(&format!("{v},{r},{}\n", self.datasets.len()));
        }
        out
    }
}

/// Ranks 1..m with ties sharing the average of their positions.
pub fn average_ranks(values: &[f64], direction: RankDirection) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let c = values[a].total_cmp(&values[b]);
        match direction {
            RankDirection::HighValueHighRank => c,
            RankDirection::HighValueLowRank => c.reverse(),
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Ranks variants within each dataset, restricted to the variants every
/// dataset has, then averages ranks across datasets.
pub fn rank_variants(
    values: &BTreeMap<String, BTreeMap<String, f64>>,
    direction: RankDirection,
) -> Result<RankTable> {
    let mut common: Option<BTreeSet<String>> = None;
    for per_variant in values.values() {
        let keys: BTreeSet<String> = per_variant.keys().cloned().collect();
        common = Some(match common {
            None => keys,
            Some(c) => c.intersection(&keys).cloned().collect(),
        });
    }
    let variants: Vec<String> = common.unwrap_or_default().into_iter().collect();
    if variants.is_empty() {
        return Err(Error::Empty("no variant is shared by every dataset".into()));
    }
    let mut ranks = BTreeMap::new();
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for (ds, per_variant) in values {
        let v: Vec<f64> = variants.iter().map(|k| per_variant[k]).collect();
        let r = average_ranks(&v, direction);
        let row: BTreeMap<String, f64> = variants.iter().cloned().zip(r).collect();
        for (k, r) in &row {
            *sums.entry(k.clone()).or_default() += r;
        }
        ranks.insert(ds.clone(), row);
    }
    let n = values.len() as f64;
    Ok(RankTable {
        direction,
        variants,
        datasets: values.keys().cloned().collect(),
        ranks,
        mean_rank: sums.into_iter().map(|(k, s)| (k, s / n)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Baseline: best original-data F-score of the dataset.
    VsOriginalBest,
    /// Baseline: best F-score within the same variant.
    VsVariantBest,
    /// Baseline: best F-score among the dataset's minimum-risk variants.
    VsLowestRisk,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::VsOriginalBest, Scenario::VsVariantBest, Scenario::VsLowestRisk];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::VsOriginalBest => "vs_original_best",
            Scenario::VsVariantBest => "vs_variant_best",
            Scenario::VsLowestRisk => "vs_lowest_risk",
        }
    }
}

/// Label used for the untransformed data in score tables.
pub const ORIGINAL: &str = "original";

/// Mean test F-score per dataset → variant → algorithm. The untransformed
/// data appears under [`ORIGINAL`].
pub type ScoreTable = BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>;

/// Re-identification risk per dataset → variant.
pub type RiskTable = BTreeMap<String, BTreeMap<String, f64>>;

/// Key under which diffs pooled across algorithms are reported.
pub const ALL_ALGORITHMS: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario: Scenario,
    /// variant → algorithm (or [`ALL_ALGORITHMS`]) → outcome.
    pub outcomes: BTreeMap<String, BTreeMap<String, BayesOutcome>>,
    /// variant → algorithm → percentage differences, in dataset order.
    pub diffs: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    pub warnings: Vec<String>,
}

fn max_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
}

/// Minimum-risk variants of a dataset (all of them on ties).
pub fn lowest_risk_variants(risks: &BTreeMap<String, f64>) -> Vec<String> {
    let Some(min) = risks.values().copied().reduce(f64::min) else {
        return Vec::new();
    };
    risks
        .iter()
        .filter(|(_, r)| **r == min)
        .map(|(v, _)| v.clone())
        .collect()
}

/// Baseline F-score of one dataset for a scenario; `variant` matters only
/// for [`Scenario::VsVariantBest`].
fn baseline(
    scenario: Scenario,
    per_variant: &BTreeMap<String, BTreeMap<String, f64>>,
    variant: &str,
    risks: Option<&BTreeMap<String, f64>>,
) -> Result<Option<f64>> {
    Ok(match scenario {
        Scenario::VsOriginalBest => per_variant.get(ORIGINAL).and_then(|a| max_of(a.values().copied())),
        Scenario::VsVariantBest => per_variant.get(variant).and_then(|a| max_of(a.values().copied())),
        Scenario::VsLowestRisk => {
            let risks = risks.ok_or_else(|| Error::MissingStages("risk reports".into()))?;
            let lowest = lowest_risk_variants(risks);
            max_of(
                lowest
                    .iter()
                    .filter_map(|v| per_variant.get(v))
                    .flat_map(|a| a.values().copied()),
            )
        }
    })
}

/// Percentage differences of every (variant, algorithm) solution against the
/// scenario's baseline, pooled across datasets and fed to the sign test, per
/// algorithm and across all algorithms. Under [`Scenario::VsVariantBest`] no
/// candidate can beat its baseline, so the win component is excluded from
/// the posterior and reported as 0.
pub fn compare_scenario(
    scores: &ScoreTable,
    scenario: Scenario,
    risks: Option<&RiskTable>,
    cfg: &SignTestConfig,
    seed: u64,
) -> Result<ScenarioOutcome> {
    if scenario == Scenario::VsLowestRisk && risks.is_none() {
        return Err(Error::MissingStages("risk reports required for the lowest-risk scenario".into()));
    }
    let mut diffs: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (ds, per_variant) in scores {
        let ds_risks = match risks {
            Some(r) => Some(
                r.get(ds)
                    .ok_or_else(|| Error::MissingStages(format!("risk reports for `{ds}`")))?,
            ),
            None => None,
        };
        for (variant, per_algo) in per_variant {
            if variant == ORIGINAL {
                continue;
            }
            let Some(base) = baseline(scenario, per_variant, variant, ds_risks)? else {
                warnings.push(format!("{ds}: no baseline for {}", scenario.as_str()));
                continue;
            };
            for (algo, &score) in per_algo {
                match percentage_difference(score, base) {
                    Ok(d) => {
                        let entry = diffs.entry(variant.clone()).or_default();
                        entry.entry(algo.clone()).or_default().push(d);
                        entry.entry(ALL_ALGORITHMS.to_string()).or_default().push(d);
                    }
                    Err(_) => warnings.push(format!("{ds}/{variant}/{algo}: zero baseline skipped")),
                }
            }
        }
    }
    let mut outcomes = BTreeMap::new();
    for (variant, per_algo) in &diffs {
        let mut row = BTreeMap::new();
        for (algo, d) in per_algo {
            let s = seed::derive(seed, &[scenario.as_str(), variant, algo]);
            let outcome = if scenario == Scenario::VsVariantBest {
                sign_test_without_win(d, cfg, s)?
            } else {
                bayes_sign_test(d, cfg, s)?
            };
            row.insert(algo.clone(), outcome);
        }
        outcomes.insert(variant.clone(), row);
    }
    Ok(ScenarioOutcome {
        scenario,
        outcomes,
        diffs,
        warnings,
    })
}

fn sign_test_without_win(diffs: &[f64], cfg: &SignTestConfig, seed: u64) -> Result<BayesOutcome> {
    let mut cfg = *cfg;
    cfg.prior[2] = 0.0;
    let out = bayes_sign_test(diffs, &cfg, seed)?;
    debug_assert_eq!(out.p_win, 0.0);
    Ok(out)
}

/// Min, quartiles, median and max (linear-interpolation quantiles).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub n: usize,
}

pub fn five_number(values: &[f64]) -> Option<FiveNumber> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p| crate::transforms::quantile(&v, p);
    Some(FiveNumber {
        min: v[0],
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: v[v.len() - 1],
        n: v.len(),
    })
}

/// Per algorithm: percentage difference between the best F-score among each
/// dataset's minimum-risk variants and the original data's F-score for the
/// same algorithm, one value per dataset.
pub fn lowest_risk_differences(scores: &ScoreTable, risks: &RiskTable) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (ds, per_variant) in scores {
        let ds_risks = risks
            .get(ds)
            .ok_or_else(|| Error::MissingStages(format!("risk reports for `{ds}`")))?;
        let lowest = lowest_risk_variants(ds_risks);
        let Some(original) = per_variant.get(ORIGINAL) else {
            continue;
        };
        for (algo, &base) in original {
            let best = max_of(
                lowest
                    .iter()
                    .filter_map(|v| per_variant.get(v).and_then(|a| a.get(algo)).copied()),
            );
            if let Some(best) = best {
                if let Ok(d) = percentage_difference(best, base) {
                    out.entry(algo.clone()).or_default().push(d);
                }
            }
        }
    }
    Ok(out)
}
