//! Evaluation protocol: five disjoint 20% test folds, 5-fold grid-searched
//! cross-validation on each training part, and F-score on the test part.
//!
//! Two settings are produced from the same training runs:
//! * *validation*: the config with the best cross-validation F-score is
//!   retrained on the whole training part and scored on the test part;
//! * *oracle*: every config is retrained and scored on the test part and the
//!   best test score is kept.

pub mod logreg;
pub mod preprocess;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::tabular::Dataset;

pub use logreg::{train_builtin_logreg, LogRegModel, LogRegParams};

pub const N_REPEATS: usize = 5;
pub const CV_FOLDS: usize = 5;

/// A full hyper-parameter assignment.
pub type Config = BTreeMap<String, f64>;

/// Five disjoint test folds covering every row; repeat `i` tests on fold `i`
/// and trains on the rest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub n_rows: usize,
    pub test_folds: Vec<Vec<usize>>,
}

impl SplitPlan {
    pub fn repeats(&self) -> usize {
        self.test_folds.len()
    }

    pub fn test(&self, repeat: usize) -> &[usize] {
        &self.test_folds[repeat]
    }

    pub fn train(&self, repeat: usize) -> Vec<usize> {
        self.test_folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != repeat)
            .flat_map(|(_, f)| f.iter().copied())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

/// Stratified assignment of `rows` into `k` folds: each class is shuffled,
/// classes are concatenated in label order and position `i` goes to fold
/// `i mod k`. Fold sizes differ by at most one.
fn stratified_folds(rows: &[usize], labels: &[String], k: usize, rng: &mut impl rand::Rng) -> Vec<Vec<usize>> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &r in rows {
        by_class.entry(labels[r].as_str()).or_default().push(r);
    }
    let mut folds = vec![Vec::new(); k];
    let mut pos = 0;
    for members in by_class.values_mut() {
        members.shuffle(rng);
        for &r in members.iter() {
            folds[pos % k].push(r);
            pos += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

fn class_counts<'a>(rows: &[usize], labels: &'a [String]) -> BTreeMap<&'a str, usize> {
    let mut counts = BTreeMap::new();
    for &r in rows {
        *counts.entry(labels[r].as_str()).or_insert(0) += 1;
    }
    counts
}

pub fn make_splits(ds: &Dataset, seed: u64) -> Result<SplitPlan> {
    let n = ds.n_rows();
    if n < 10 {
        return Err(Error::InvalidDataset(format!("{} rows, need at least 10", n)));
    }
    let labels = ds.labels();
    let rows: Vec<usize> = (0..n).collect();
    if let Some((label, count)) = class_counts(&rows, &labels).into_iter().find(|(_, c)| *c < N_REPEATS) {
        return Err(Error::InsufficientMinorityClass {
            label: label.to_string(),
            count,
            needed: N_REPEATS,
        });
    }
    let mut rng = seed::rng(seed, &["splits"]);
    Ok(SplitPlan {
        seed,
        n_rows: n,
        test_folds: stratified_folds(&rows, &labels, N_REPEATS, &mut rng),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FScoreMode {
    /// F-score of the positive class.
    #[default]
    Binary,
    /// Unweighted mean of the per-label F-scores.
    Macro,
}

/// F-score of the `positive` label. Precision with no positive predictions
/// counts as 0; so does an F-score with precision and recall both 0.
pub fn f_score(predictions: &[String], truth: &[String], positive: &str) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch(predictions.len(), truth.len()));
    }
    if truth.is_empty() {
        return Err(Error::Empty("f_score on empty sequences".into()));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (p, t) in predictions.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

pub fn f_score_mode(
    predictions: &[String],
    truth: &[String],
    positive: &str,
    negative: &str,
    mode: FScoreMode,
) -> Result<f64> {
    match mode {
        FScoreMode::Binary => f_score(predictions, truth, positive),
        FScoreMode::Macro => {
            Ok((f_score(predictions, truth, positive)? + f_score(predictions, truth, negative)?) / 2.0)
        }
    }
}

/// An algorithm and its hyper-parameter grid. Parameters keep their declared
/// order; configs enumerate with the last parameter varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub algorithm: String,
    pub grid: Vec<(String, Vec<f64>)>,
}

impl LearnerSpec {
    /// Built-in logistic regression with `C` {0.001, 1, 10000} and
    /// `max_iter` {10000, 1000000}.
    pub fn builtin_logreg() -> Self {
        LearnerSpec {
            algorithm: BUILTIN_LOGREG.to_string(),
            grid: vec![
                ("C".into(), vec![0.001, 1.0, 10000.0]),
                ("max_iter".into(), vec![10000.0, 1000000.0]),
            ],
        }
    }

    pub fn configs(&self) -> Result<Vec<Config>> {
        if self.grid.is_empty() {
            return Err(Error::Empty(format!("grid of {}", self.algorithm)));
        }
        let mut out = vec![Config::new()];
        for (name, values) in &self.grid {
            if values.is_empty() {
                return Err(Error::Empty(format!("values of `{name}` in {}", self.algorithm)));
            }
            out = out
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.insert(name.clone(), *v);
                        c
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

pub const BUILTIN_LOGREG: &str = "logistic_regression";

/// Something that can be trained on one dataset and predict labels on another.
pub trait Learner: Sync {
    fn fit_predict(&self, train: &Dataset, test: &Dataset, config: &Config, positive: &str) -> Result<Vec<String>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinLogReg;

impl Learner for BuiltinLogReg {
    fn fit_predict(&self, train: &Dataset, test: &Dataset, config: &Config, positive: &str) -> Result<Vec<String>> {
        let model = train_builtin_logreg(train, LogRegParams::from_config(config)?, positive)?;
        Ok(model.predict(test))
    }
}

/// Shared inputs of the learning routines.
#[derive(Clone, Copy)]
pub struct EvalContext<'a> {
    pub learner: &'a dyn Learner,
    pub spec: &'a LearnerSpec,
    pub positive: &'a str,
    pub mode: FScoreMode,
}

impl EvalContext<'_> {
    fn score(&self, train: &Dataset, test: &Dataset, config: &Config, warnings: &mut Vec<String>) -> f64 {
        let truth = test.labels();
        let negative = train
            .label_set()
            .into_iter()
            .chain(test.label_set())
            .find(|l| l != self.positive)
            .unwrap_or_default();
        let scored = self
            .learner
            .fit_predict(train, test, config, self.positive)
            .and_then(|pred| f_score_mode(&pred, &truth, self.positive, &negative, self.mode));
        match scored {
            Ok(f) => f,
            Err(e) => {
                warnings.push(format!("{} {:?}: {e}; scored 0", self.spec.algorithm, config));
                0.0
            }
        }
    }
}

/// Mean cross-validation F-score of every config on `train`.
#[derive(Debug, Clone, PartialEq)]
pub struct CvScores {
    pub configs: Vec<Config>,
    pub scores: Vec<f64>,
    pub warnings: Vec<String>,
}

impl CvScores {
    /// Index of the best config, earliest on ties.
    pub fn best(&self) -> usize {
        self.scores
            .iter()
            .enumerate()
            .fold(0, |best, (i, s)| if *s > self.scores[best] { i } else { best })
    }
}

pub fn cv_scores(train: &Dataset, ctx: EvalContext<'_>, k: usize, seed: u64) -> Result<CvScores> {
    let configs = ctx.spec.configs()?;
    let labels = train.labels();
    let rows: Vec<usize> = (0..train.n_rows()).collect();
    let counts = class_counts(&rows, &labels);
    if counts.len() < 2 {
        return Err(Error::Training("training rows contain a single class".into()));
    }
    let minority = counts.values().copied().min().unwrap_or(0);
    let k = k.min(minority);
    if k < 2 {
        return Err(Error::InsufficientMinorityClass {
            label: counts.iter().min_by_key(|(_, c)| **c).map(|(l, _)| l.to_string()).unwrap_or_default(),
            count: minority,
            needed: 2,
        });
    }
    let mut rng = seed::rng(seed, &["cv"]);
    let folds = stratified_folds(&rows, &labels, k, &mut rng);
    let splits = (0..k)
        .map(|i| {
            let val: Vec<usize> = folds[i].clone();
            let fit: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            Ok((train.take_rows(&fit)?, train.take_rows(&val)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let cells: Vec<(f64, Vec<String>)> = configs
        .par_iter()
        .flat_map(|c| splits.par_iter().map(move |s| (c, s)))
        .map(|(config, (fit, val))| {
            let mut w = Vec::new();
            let s = ctx.score(fit, val, config, &mut w);
            (s, w)
        })
        .collect();
    let mut warnings = Vec::new();
    let scores = cells
        .chunks(k)
        .map(|chunk| chunk.iter().map(|(s, _)| s).sum::<f64>() / k as f64)
        .collect();
    for (_, w) in cells {
        warnings.extend(w);
    }
    Ok(CvScores {
        configs,
        scores,
        warnings,
    })
}

/// Best config by mean cross-validation F-score, earliest on ties.
pub fn grid_search_cv(train: &Dataset, ctx: EvalContext<'_>, k: usize, seed: u64) -> Result<(Config, f64)> {
    let cv = cv_scores(train, ctx, k, seed)?;
    let best = cv.best();
    Ok((cv.configs[best].clone(), cv.scores[best]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub config: Config,
    pub val_f1: f64,
    pub test_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    #[default]
    Validation,
    Oracle,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Validation => "validation",
            Setting::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub dataset: String,
    pub variant: String,
    pub algorithm: String,
    pub setting: Setting,
    pub repeats: Vec<RepeatResult>,
    pub warnings: Vec<String>,
}

impl EvalResult {
    pub fn mean_val_f1(&self) -> f64 {
        mean(self.repeats.iter().map(|r| r.val_f1))
    }

    pub fn mean_test_f1(&self) -> f64 {
        mean(self.repeats.iter().map(|r| r.test_f1))
    }

    pub fn records(&self) -> Vec<EvalRecord> {
        self.repeats
            .iter()
            .map(|r| EvalRecord {
                dataset: self.dataset.clone(),
                variant: self.variant.clone(),
                algorithm: self.algorithm.clone(),
                repeat: r.repeat,
                config: r.config.clone(),
                val_f1: r.val_f1,
                test_f1: r.test_f1,
                setting: self.setting,
            })
            .collect()
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// One JSON line: a single (dataset, variant, algorithm, repeat) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub dataset: String,
    pub variant: String,
    pub algorithm: String,
    pub repeat: usize,
    pub config: Config,
    pub val_f1: f64,
    pub test_f1: f64,
    #[serde(default)]
    pub setting: Setting,
}

/// Validation and oracle results from one pass over the split plan.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub validation: EvalResult,
    pub oracle: EvalResult,
}

/// Runs the full protocol on `ds`. Inner fold seeds depend on the plan seed
/// and repeat only, so a variant identical to the original scores identically.
pub fn evaluate_both(ds: &Dataset, variant: &str, ctx: EvalContext<'_>, plan: &SplitPlan) -> Result<EvalPair> {
    if plan.n_rows != ds.n_rows() {
        return Err(Error::LengthMismatch(plan.n_rows, ds.n_rows()));
    }
    let per_repeat: Vec<(RepeatResult, RepeatResult, Vec<String>)> = (0..plan.repeats())
        .into_par_iter()
        .map(|r| run_repeat(ds, ctx, plan, r))
        .collect();
    let mut validation = Vec::new();
    let mut oracle = Vec::new();
    let mut warnings = Vec::new();
    for (v, o, w) in per_repeat {
        validation.push(v);
        oracle.push(o);
        warnings.extend(w);
    }
    let make = |setting, repeats| EvalResult {
        dataset: ds.name().to_string(),
        variant: variant.to_string(),
        algorithm: ctx.spec.algorithm.clone(),
        setting,
        repeats,
        warnings: warnings.clone(),
    };
    Ok(EvalPair {
        validation: make(Setting::Validation, validation),
        oracle: make(Setting::Oracle, oracle),
    })
}

fn run_repeat(
    ds: &Dataset,
    ctx: EvalContext<'_>,
    plan: &SplitPlan,
    repeat: usize,
) -> (RepeatResult, RepeatResult, Vec<String>) {
    let failed = |msg: String, configs: Vec<Config>| {
        let config = configs.into_iter().next().unwrap_or_default();
        let r = RepeatResult {
            repeat,
            config,
            val_f1: 0.0,
            test_f1: 0.0,
        };
        (r.clone(), r, vec![msg])
    };
    let inner = || -> Result<(RepeatResult, RepeatResult, Vec<String>)> {
        let train = ds.take_rows(&plan.train(repeat))?;
        let test = ds.take_rows(plan.test(repeat))?;
        let cv = cv_scores(&train, ctx, CV_FOLDS, seed::derive(plan.seed, &["repeat", &repeat.to_string()]))?;
        let mut warnings = cv.warnings.clone();
        let tests: Vec<(f64, Vec<String>)> = cv
            .configs
            .par_iter()
            .map(|c| {
                let mut w = Vec::new();
                (ctx.score(&train, &test, c, &mut w), w)
            })
            .collect();
        let test_scores: Vec<f64> = tests.iter().map(|(s, _)| *s).collect();
        for (_, w) in tests {
            warnings.extend(w);
        }
        let chosen = cv.best();
        let best_test = test_scores
            .iter()
            .enumerate()
            .fold(0, |best, (i, s)| if *s > test_scores[best] { i } else { best });
        Ok((
            RepeatResult {
                repeat,
                config: cv.configs[chosen].clone(),
                val_f1: cv.scores[chosen],
                test_f1: test_scores[chosen],
            },
            RepeatResult {
                repeat,
                config: cv.configs[best_test].clone(),
                val_f1: cv.scores[best_test],
                test_f1: test_scores[best_test],
            },
            warnings,
        ))
    };
    match inner() {
        Ok(out) => out,
        Err(e) => failed(
            format!("{} repeat {repeat}: {e}; scored 0", ds.name()),
            ctx.spec.configs().unwrap_or_default(),
        ),
    }
}

/// Validation setting: config chosen by cross-validation, scored on test.
pub fn evaluate(ds: &Dataset, variant: &str, ctx: EvalContext<'_>, plan: &SplitPlan) -> Result<EvalResult> {
    Ok(evaluate_both(ds, variant, ctx, plan)?.validation)
}

/// Oracle setting: best test score over every config.
pub fn oracle_setting(ds: &Dataset, variant: &str, ctx: EvalContext<'_>, plan: &SplitPlan) -> Result<EvalResult> {
    Ok(evaluate_both(ds, variant, ctx, plan)?.oracle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::Column;

    fn labelled(n: usize) -> Dataset {
        Dataset::new(
            "l",
            vec![
                Column::float("x", (0..n).map(|i| i as f64)),
                Column::integer("y", (0..n as i64).map(|i| (i % 3 == 0) as i64)),
            ],
            "y",
            None,
        )
        .unwrap()
    }

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn split_partition() {
        let ds = labelled(100);
        let plan = make_splits(&ds, 4).unwrap();
        assert_eq!(plan.repeats(), 5);
        let mut all: Vec<usize> = plan.test_folds.iter().flatten().copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(plan.test_folds.iter().all(|f| f.len() == 20));
        assert_eq!(plan.train(0).len(), 80);
        assert_eq!(plan, make_splits(&ds, 4).unwrap());
        assert_ne!(plan, make_splits(&ds, 5).unwrap());

        let plan = make_splits(&labelled(103), 1).unwrap();
        let sizes: Vec<usize> = plan.test_folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, [21, 21, 21, 20, 20]);
    }

    #[test]
    fn split_errors() {
        assert!(make_splits(&labelled(9), 0).is_err());
        let ds = Dataset::new(
            "rare",
            vec![
                Column::float("x", (0..20).map(|i| i as f64)),
                Column::integer("y", (0..20).map(|i| (i < 4) as i64)),
            ],
            "y",
            None,
        )
        .unwrap();
        assert!(matches!(
            make_splits(&ds, 0),
            Err(Error::InsufficientMinorityClass { count: 4, .. })
        ));
    }

    #[test]
    fn every_fold_holds_both_classes() {
        let ds = labelled(60);
        let labels = ds.labels();
        let plan = make_splits(&ds, 9).unwrap();
        for f in &plan.test_folds {
            let c = class_counts(f, &labels);
            assert_eq!(c.len(), 2);
        }
    }

    #[test]
    fn f_score_examples() {
        assert_eq!(f_score(&s(&["a", "b"]), &s(&["a", "b"]), "a").unwrap(), 1.0);
        assert_eq!(f_score(&s(&["b", "a"]), &s(&["a", "b"]), "a").unwrap(), 0.0);
        // TP=2 FP=1 FN=1
        let f = f_score(&s(&["a", "a", "a", "b", "b"]), &s(&["a", "a", "b", "a", "b"]), "a").unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(f_score(&s(&["b", "b"]), &s(&["a", "b"]), "a").unwrap(), 0.0);
        assert!(f_score(&[], &[], "a").is_err());
        assert!(f_score(&s(&["a"]), &s(&["a", "b"]), "a").is_err());
        let m = f_score_mode(&s(&["a", "b"]), &s(&["a", "b"]), "a", "b", FScoreMode::Macro).unwrap();
        assert_eq!(m, 1.0);
    }

    #[test]
    fn config_enumeration_order() {
        let spec = LearnerSpec::builtin_logreg();
        let configs = spec.configs().unwrap();
        assert_eq!(configs.len(), 6);
        assert_eq!(configs[0]["C"], 0.001);
        assert_eq!(configs[1]["max_iter"], 1000000.0);
        assert_eq!(configs[2]["C"], 1.0);
        let empty = LearnerSpec {
            algorithm: "x".into(),
            grid: vec![("a".into(), vec![])],
        };
        assert!(empty.configs().is_err());
    }

    /// Scores each config by a fixed table, ignoring the data.
    struct Scripted(Vec<f64>);

    impl Learner for Scripted {
        fn fit_predict(&self, _train: &Dataset, test: &Dataset, config: &Config, positive: &str) -> Result<Vec<String>> {
            // config "i" predicts perfectly when its table entry is 1, otherwise all-negative
            let i = config["i"] as usize;
            let labels = test.labels();
            Ok(if self.0[i] >= 1.0 {
                labels
            } else {
                labels.iter().map(|_| format!("not-{positive}")).collect()
            })
        }
    }

    #[test]
    fn grid_search_choices() {
        let ds = labelled(60);
        let spec = LearnerSpec {
            algorithm: "scripted".into(),
            grid: vec![("i".into(), vec![0.0, 1.0, 2.0])],
        };
        let learner = Scripted(vec![0.0, 1.0, 1.0]);
        let ctx = EvalContext {
            learner: &learner,
            spec: &spec,
            positive: "1",
            mode: FScoreMode::Binary,
        };
        let (cfg, score) = grid_search_cv(&ds, ctx, 5, 0).unwrap();
        // configs 1 and 2 tie at 1.0, the earlier wins
        assert_eq!(cfg["i"], 1.0);
        assert_eq!(score, 1.0);

        let single = LearnerSpec {
            algorithm: "scripted".into(),
            grid: vec![("i".into(), vec![0.0])],
        };
        let ctx = EvalContext { spec: &single, ..ctx };
        let (cfg, score) = grid_search_cv(&ds, ctx, 5, 0).unwrap();
        assert_eq!(cfg["i"], 0.0);
        assert_eq!(score, 0.0);
    }

    struct Failing;

    impl Learner for Failing {
        fn fit_predict(&self, _: &Dataset, _: &Dataset, _: &Config, _: &str) -> Result<Vec<String>> {
            Err(Error::Training("boom".into()))
        }
    }

    #[test]
    fn failures_score_zero() {
        let ds = labelled(50);
        let spec = LearnerSpec {
            algorithm: "failing".into(),
            grid: vec![("i".into(), vec![0.0])],
        };
        let ctx = EvalContext {
            learner: &Failing,
            spec: &spec,
            positive: "1",
            mode: FScoreMode::Binary,
        };
        let plan = make_splits(&ds, 0).unwrap();
        let res = evaluate(&ds, "original", ctx, &plan).unwrap();
        assert_eq!(res.mean_test_f1(), 0.0);
        assert!(!res.warnings.is_empty());
    }

    #[test]
    fn records_carry_every_repeat() {
        let ds = labelled(50);
        let spec = LearnerSpec::builtin_logreg();
        let ctx = EvalContext {
            learner: &BuiltinLogReg,
            spec: &spec,
            positive: "1",
            mode: FScoreMode::Binary,
        };
        let plan = make_splits(&ds, 0).unwrap();
        let pair = evaluate_both(&ds, "original", ctx, &plan).unwrap();
        let recs = pair.validation.records();
        assert_eq!(recs.len(), 5);
        let line = serde_json::to_string(&recs[0]).unwrap();
        let back: EvalRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, recs[0]);
        for (v, o) in pair.validation.repeats.iter().zip(&pair.oracle.repeats) {
            assert!(o.test_f1 >= v.test_f1);
        }
    }
}
