//! Stage orchestration: transform → risk → evaluate → analyze.
//!
//! Each stage reads the artifacts of the previous ones from the output
//! directory and skips work whose outputs already exist unless forced.

pub mod artifacts;
pub mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::learning::{
    evaluate_both, make_splits, BuiltinLogReg, EvalContext, EvalRecord, Setting, SplitPlan, CV_FOLDS, N_REPEATS,
};
use crate::linkage::{assess_risk, RiskSummary};
use crate::seed;
use crate::stats::{
    compare_scenario, five_number, lowest_risk_differences, rank_variants, FiveNumber, RankDirection, RankTable,
    RiskTable, ScenarioOutcome, ScoreTable, ORIGINAL,
};
use crate::tabular::{drop_direct_identifiers, load_csv, Dataset};
use crate::transforms::{apply_variant, enumerate_variants, TransformOptions};
use crate::tuning::select_all;

pub use artifacts::{DatasetEntry, FailedDataset, VariantEntry, VariantManifest};
pub use config::{BuiltinGrid, DatasetConfig, LearnerMode, RunConfig};

use artifacts::*;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Recompute artifacts that already exist.
    pub force: bool,
}

fn transform_options(cfg: &RunConfig) -> TransformOptions {
    TransformOptions {
        noise_scale: cfg.noise_scale,
    }
}

fn load_input(dc: &DatasetConfig) -> Result<Dataset> {
    let raw = load_csv(&dc.path, &dc.target)?;
    Dataset::new(dc.name(), raw.columns().to_vec(), &dc.target, dc.qi.clone())
}

fn transform_dataset(cfg: &RunConfig, dc: &DatasetConfig) -> Result<DatasetEntry> {
    let out = &cfg.out_dir;
    let name = dc.name();
    let input = load_input(dc)?;
    let (ds, mut warnings) = drop_direct_identifiers(&input)?;
    let dropped: Vec<String> = input
        .columns()
        .iter()
        .filter(|c| ds.column(&c.name).is_none())
        .map(|c| c.name.clone())
        .collect();
    warnings.extend(dropped.iter().map(|c| format!("{name}: dropped direct identifier `{c}`")));
    let positive = ds.minority_label();
    let plan = make_splits(&ds, seed::derive(cfg.seed, &["splits", &name]))?;

    let opts = transform_options(cfg);
    let selections = select_all(&ds, &cfg.grids, &cfg.similarity, seed::derive(cfg.seed, &["tuning"]), &opts)?;
    let chosen: BTreeMap<_, _> = selections.iter().map(|(t, s)| (*t, s.chosen)).collect();
    let tuning: Vec<_> = selections.values().map(|s| s.to_json(&name)).collect();
    for s in selections.values() {
        for r in &s.risks {
            warnings.extend(r.warnings.iter().map(|w| format!("{name}: tuning: {w}")));
        }
    }

    let (specs, enum_warnings) =
        enumerate_variants(&ds, &chosen, &cfg.grids, seed::derive(cfg.seed, &["variant", &name]))?;
    warnings.extend(enum_warnings);
    let variants: Vec<(VariantEntry, Vec<String>)> = specs
        .into_par_iter()
        .map(|spec| {
            let label = spec.label();
            let produced = apply_variant(&ds, &spec, &opts);
            let path = variant_csv(&name, &label);
            write_dataset(&out.join(&path), &produced.dataset.renamed(label.clone()))?;
            Ok((
                VariantEntry {
                    risk_path: variant_risk(&name, &label),
                    label,
                    path,
                    spec,
                },
                produced.warnings,
            ))
        })
        .collect::<Result<_>>()?;

    let original = format!("{name}/original.csv");
    write_dataset(&out.join(&original), &ds)?;
    let tuning_path = format!("{name}/tuning.json");
    write_json(&out.join(&tuning_path), &tuning)?;
    let splits = format!("{name}/splits.json");
    write_json(&out.join(&splits), &plan)?;

    let mut entries = Vec::with_capacity(variants.len());
    for (v, w) in variants {
        warnings.extend(w);
        entries.push(v);
    }
    Ok(DatasetEntry {
        name,
        source: dc.path.clone(),
        target: dc.target.clone(),
        qi: ds.qi().to_vec(),
        positive,
        dropped_columns: dropped,
        original,
        tuning: tuning_path,
        splits,
        applicable: chosen.keys().copied().collect(),
        chosen,
        variants: entries,
        warnings,
    })
}

/// Tunes, enumerates and writes every variant of every dataset, then the
/// manifest. A dataset that fails is recorded and skipped.
pub fn cmd_transform(cfg: &RunConfig, opts: RunOptions) -> Result<VariantManifest> {
    let out = &cfg.out_dir;
    if !opts.force {
        if let Ok(m) = VariantManifest::load(out) {
            if m.seed == cfg.seed && m.files_exist(out) {
                log::info!("transform: up to date ({} datasets)", m.datasets.len());
                return Ok(m);
            }
        }
    }
    let results: Vec<(String, Result<DatasetEntry>)> = cfg
        .datasets
        .par_iter()
        .map(|dc| (dc.name(), transform_dataset(cfg, dc)))
        .collect();
    let mut manifest = VariantManifest {
        seed: cfg.seed,
        datasets: Vec::new(),
        failed: Vec::new(),
    };
    for (name, r) in results {
        match r {
            Ok(entry) => {
                for w in &entry.warnings {
                    log::warn!("{w}");
                }
                log::info!("transform: {name}: {} variants", entry.variants.len());
                manifest.datasets.push(entry);
            }
            Err(e) => {
                log::error!("transform: {name} failed: {e}");
                manifest.failed.push(FailedDataset {
                    name,
                    error: e.to_string(),
                });
            }
        }
    }
    write_json(&out.join(MANIFEST), &manifest)?;
    if manifest.datasets.is_empty() {
        return Err(Error::Empty("no dataset could be transformed".into()));
    }
    Ok(manifest)
}

fn risk_for_variant(cfg: &RunConfig, entry: &DatasetEntry, original: &Dataset, v: &VariantEntry, force: bool) -> Result<(RiskSummary, Vec<String>)> {
    let out = &cfg.out_dir;
    let path = out.join(&v.risk_path);
    if !force && path.is_file() {
        return Ok((read_json(&path)?, Vec::new()));
    }
    let variant = entry.load_variant(out, v)?;
    let report = assess_risk(original, &variant, &cfg.similarity)?;
    let scores = if cfg.score_audit {
        let rel = variant_scores(&entry.name, &v.label);
        report.write_scores_csv(&out.join(&rel))?;
        Some(rel)
    } else {
        None
    };
    let summary = report.summary(scores);
    write_json(&path, &summary)?;
    let warnings = report.warnings.iter().map(|w| format!("{}: {}: {w}", entry.name, v.label)).collect();
    Ok((summary, warnings))
}

/// Links every variant back to its original and writes one risk report
/// beside each variant file. Returns dataset → variant → risk.
pub fn cmd_risk(cfg: &RunConfig, opts: RunOptions) -> Result<RiskTable> {
    let out = &cfg.out_dir;
    let manifest = VariantManifest::load(out)?;
    let mut table = RiskTable::new();
    let mut warnings = Vec::new();
    for entry in &manifest.datasets {
        let original = entry.load_original(out)?;
        let done: Vec<(RiskSummary, Vec<String>)> = entry
            .variants
            .par_iter()
            .map(|v| risk_for_variant(cfg, entry, &original, v, opts.force))
            .collect::<Result<_>>()?;
        let row = table.entry(entry.name.clone()).or_default();
        for (summary, w) in done {
            row.insert(summary.variant.clone(), summary.risk);
            warnings.extend(w);
        }
        log::info!("risk: {}: {} variants", entry.name, entry.variants.len());
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    write_json(&warnings_path(out, "risk"), &warnings)?;
    Ok(table)
}

/// Loads every stored risk report. Fails naming the missing stage.
pub fn load_risks(cfg: &RunConfig, manifest: &VariantManifest) -> Result<RiskTable> {
    let mut table = RiskTable::new();
    for entry in &manifest.datasets {
        let row = table.entry(entry.name.clone()).or_default();
        for v in &entry.variants {
            let path = cfg.out_dir.join(&v.risk_path);
            if !path.is_file() {
                return Err(Error::MissingStages(format!("risk (no {})", path.display())));
            }
            let s: RiskSummary = read_json(&path)?;
            row.insert(v.label.clone(), s.risk);
        }
    }
    Ok(table)
}

/// Validation and oracle records of one evaluation run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalResults {
    pub validation: Vec<EvalRecord>,
    pub oracle: Vec<EvalRecord>,
}

impl EvalResults {
    pub fn setting(&self, s: Setting) -> &[EvalRecord] {
        match s {
            Setting::Validation => &self.validation,
            Setting::Oracle => &self.oracle,
        }
    }

    fn from_records(records: Vec<EvalRecord>) -> Self {
        let (oracle, validation) = records.into_iter().partition(|r| r.setting == Setting::Oracle);
        EvalResults { validation, oracle }
    }
}

fn results_path(out: &Path, s: Setting) -> PathBuf {
    out.join("results").join(format!("{}.jsonl", s.as_str()))
}

pub fn task_path(out: &Path) -> PathBuf {
    out.join("tasks").join("task.json")
}

/// Hyper-parameter grids for the external harness. `n_feat` stands for the
/// number of encoded features; sizes are floored and at least 1.
pub fn external_grids() -> serde_json::Value {
    json!({
        "random_forest": {"n_estimators": [100, 250, 500], "max_depth": [4, 6, 8, 10]},
        "bagging": {"n_estimators": [100, 250, 500]},
        "gradient_boosting": {
            "n_estimators": [100, 250, 500],
            "max_depth": [4, 6, 8, 10],
            "learning_rate": [0.1, 0.01, 0.001]
        },
        "logistic_regression": {"C": [0.001, 1, 10000], "max_iter": [10000, 1000000]},
        "neural_network": {
            "hidden_layer_sizes": [
                ["n_feat"], ["n_feat/2"], ["n_feat*2/3"],
                ["n_feat", "n_feat/2"], ["n_feat", "n_feat*2/3"], ["n_feat/2", "n_feat*2/3"],
                ["n_feat", "n_feat/2", "n_feat*2/3"]
            ],
            "alpha": [0.05, 0.001, 0.0001],
            "max_iter": [10000, 1000000]
        }
    })
}

/// Resolves the neural-network layer recipe for `n_feat` features.
pub fn hidden_layer_sizes(n_feat: usize) -> Vec<Vec<usize>> {
    let full = n_feat.max(1);
    let half = (n_feat / 2).max(1);
    let two_thirds = (n_feat * 2 / 3).max(1);
    vec![
        vec![full],
        vec![half],
        vec![two_thirds],
        vec![full, half],
        vec![full, two_thirds],
        vec![half, two_thirds],
        vec![full, half, two_thirds],
    ]
}

fn task_file(cfg: &RunConfig, manifest: &VariantManifest) -> Result<serde_json::Value> {
    let out = &cfg.out_dir;
    let abs = |rel: &str| out.join(rel).to_string_lossy().into_owned();
    let mut datasets = Vec::new();
    for d in &manifest.datasets {
        let plan: SplitPlan = read_json(&out.join(&d.splits))?;
        datasets.push(json!({
            "name": d.name,
            "target": d.target,
            "positive": d.positive,
            "original": abs(&d.original),
            "splits": plan.test_folds,
            "variants": d.variants.iter().map(|v| json!({"label": v.label, "path": abs(&v.path)})).collect::<Vec<_>>(),
        }));
    }
    Ok(json!({
        "manifest": abs(MANIFEST),
        "results": cfg.external_results_path().to_string_lossy(),
        "seed": cfg.seed,
        "n_repeats": N_REPEATS,
        "cv_folds": CV_FOLDS,
        "fscore": cfg.fscore,
        "original_variant": ORIGINAL,
        "algorithms": external_grids(),
        "datasets": datasets,
    }))
}

fn evaluate_builtin(cfg: &RunConfig, manifest: &VariantManifest) -> Result<(EvalResults, Vec<String>)> {
    let out = &cfg.out_dir;
    let spec = cfg.learner.spec();
    let learner = BuiltinLogReg;
    let mut results = EvalResults::default();
    let mut warnings = Vec::new();
    for entry in &manifest.datasets {
        let plan: SplitPlan = read_json(&out.join(&entry.splits))?;
        let ctx = EvalContext {
            learner: &learner,
            spec: &spec,
            positive: &entry.positive,
            mode: cfg.fscore,
        };
        let cells: Vec<Option<&VariantEntry>> = std::iter::once(None).chain(entry.variants.iter().map(Some)).collect();
        let pairs = cells
            .par_iter()
            .map(|v| {
                let (ds, label) = match v {
                    None => (entry.load_original(out)?, ORIGINAL),
                    Some(v) => (entry.load_variant(out, v)?, v.label.as_str()),
                };
                let mut pair = evaluate_both(&ds, label, ctx, &plan)?;
                pair.validation.dataset = entry.name.clone();
                pair.oracle.dataset = entry.name.clone();
                Ok(pair)
            })
            .collect::<Result<Vec<_>>>()?;
        for p in pairs {
            warnings.extend(p.validation.warnings.iter().map(|w| format!("{}: {}: {w}", entry.name, p.validation.variant)));
            results.validation.extend(p.validation.records());
            results.oracle.extend(p.oracle.records());
        }
        log::info!("evaluate: {}: {} cells", entry.name, entry.variants.len() + 1);
    }
    Ok((results, warnings))
}

fn ingest_external(cfg: &RunConfig, manifest: &VariantManifest) -> Result<(EvalResults, Vec<String>)> {
    let out = &cfg.out_dir;
    let task = task_path(out);
    write_json(&task, &task_file(cfg, manifest)?)?;
    let expected = cfg.external_results_path();
    if !expected.is_file() {
        return Err(Error::MissingExternalResults { task, expected });
    }
    let mut known: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for d in &manifest.datasets {
        known
            .entry(&d.name)
            .or_default()
            .extend(std::iter::once(ORIGINAL).chain(d.variants.iter().map(|v| v.label.as_str())));
    }
    let mut warnings = Vec::new();
    let mut kept = Vec::new();
    for r in read_jsonl(&expected)? {
        if known.get(r.dataset.as_str()).is_some_and(|vs| vs.contains(&r.variant.as_str())) {
            kept.push(r);
        } else {
            warnings.push(format!("external results: unknown cell {}/{}; ignored", r.dataset, r.variant));
        }
    }
    let results = EvalResults::from_records(kept);
    if results.oracle.is_empty() {
        warnings.push("external results carry no oracle records; oracle analysis skipped".into());
    }
    Ok((results, warnings))
}

/// Scores the original data and every variant, with the built-in learner or
/// by ingesting the external harness's JSON lines.
pub fn cmd_evaluate(cfg: &RunConfig, opts: RunOptions) -> Result<EvalResults> {
    let out = &cfg.out_dir;
    let manifest = VariantManifest::load(out)?;
    let val_path = results_path(out, Setting::Validation);
    let oracle_path = results_path(out, Setting::Oracle);
    if !opts.force && val_path.is_file() && oracle_path.is_file() {
        log::info!("evaluate: up to date");
        return load_results(cfg);
    }
    let (results, warnings) = match cfg.learners {
        LearnerMode::Builtin => evaluate_builtin(cfg, &manifest)?,
        LearnerMode::External => ingest_external(cfg, &manifest)?,
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    write_jsonl(&val_path, &results.validation)?;
    write_jsonl(&oracle_path, &results.oracle)?;
    write_json(&warnings_path(out, "evaluate"), &warnings)?;
    Ok(results)
}

pub fn load_results(cfg: &RunConfig) -> Result<EvalResults> {
    let mut results = EvalResults::default();
    for s in [Setting::Validation, Setting::Oracle] {
        let path = results_path(&cfg.out_dir, s);
        if !path.is_file() {
            return Err(Error::MissingStages(format!("evaluate (no {})", path.display())));
        }
        let records = read_jsonl(&path)?;
        match s {
            Setting::Validation => results.validation = records,
            Setting::Oracle => results.oracle = records,
        }
    }
    Ok(results)
}

/// Mean test F-score per (dataset, variant, algorithm).
pub fn score_table(records: &[EvalRecord]) -> ScoreTable {
    let mut sums: BTreeMap<(&str, &str, &str), (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = sums.entry((&r.dataset, &r.variant, &r.algorithm)).or_default();
        e.0 += r.test_f1;
        e.1 += 1;
    }
    let mut table = ScoreTable::new();
    for ((d, v, a), (s, n)) in sums {
        table
            .entry(d.to_string())
            .or_default()
            .entry(v.to_string())
            .or_default()
            .insert(a.to_string(), s / n as f64);
    }
    table
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingReport {
    /// algorithm → performance ranks (rank 1 = highest F-score).
    pub performance_ranks: BTreeMap<String, RankTable>,
    pub scenarios: Vec<ScenarioOutcome>,
    /// algorithm → five-number summary of the lowest-risk percentage differences.
    pub lowest_risk: BTreeMap<String, FiveNumber>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    /// Rank 1 = lowest risk.
    pub risk_ranks: Option<RankTable>,
    pub settings: BTreeMap<Setting, SettingReport>,
    pub warnings: Vec<String>,
}

fn analyze_setting(
    cfg: &RunConfig,
    setting: Setting,
    records: &[EvalRecord],
    risks: &RiskTable,
    warnings: &mut Vec<String>,
) -> Result<SettingReport> {
    let scores = score_table(records);
    let mut by_algo: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>> = BTreeMap::new();
    for (ds, per_variant) in &scores {
        for (variant, per_algo) in per_variant {
            if variant == ORIGINAL {
                continue;
            }
            for (algo, f) in per_algo {
                by_algo
                    .entry(algo.clone())
                    .or_default()
                    .entry(ds.clone())
                    .or_default()
                    .insert(variant.clone(), *f);
            }
        }
    }
    let mut performance_ranks = BTreeMap::new();
    for (algo, values) in by_algo {
        match rank_variants(&values, RankDirection::HighValueLowRank) {
            Ok(t) => {
                performance_ranks.insert(algo, t);
            }
            Err(e) => warnings.push(format!("{}: performance ranks for {algo}: {e}", setting.as_str())),
        }
    }
    let sign_cfg = cfg.sign_test.to_config();
    let mut scenarios = Vec::new();
    for &sc in &cfg.scenarios {
        let s = seed::derive(cfg.seed, &["stats", setting.as_str()]);
        let outcome = compare_scenario(&scores, sc, Some(risks), &sign_cfg, s)?;
        warnings.extend(outcome.warnings.iter().map(|w| format!("{} {}: {w}", setting.as_str(), sc.as_str())));
        scenarios.push(outcome);
    }
    let lowest_risk = lowest_risk_differences(&scores, risks)?
        .into_iter()
        .filter_map(|(a, v)| five_number(&v).map(|f| (a, f)))
        .collect();
    Ok(SettingReport {
        performance_ranks,
        scenarios,
        lowest_risk,
    })
}

fn five_number_csv(rows: &BTreeMap<String, FiveNumber>) -> String {
    let mut out = String::from("algorithm,min,q1,median,q3,max,n\n");
    for (a, f) in rows {
        out.push_str(&format!("{a},{},{},{},{},{},{}\n", f.min, f.q1, f.median, f.q3, f.max, f.n));
    }
    out
}

/// Builds every report from the stored risk reports and evaluation results.
/// Always recomputed: it is cheap and depends on every earlier stage.
pub fn cmd_analyze(cfg: &RunConfig, _opts: RunOptions) -> Result<AnalysisReport> {
    let out = &cfg.out_dir;
    let manifest = VariantManifest::load(out)?;
    let mut missing = Vec::new();
    let risks = load_risks(cfg, &manifest).map_err(|e| missing.push(e.to_string())).ok();
    let results = load_results(cfg).map_err(|e| missing.push(e.to_string())).ok();
    let (Some(risks), Some(results)) = (risks, results) else {
        return Err(Error::MissingStages(missing.join("; ")));
    };

    let mut warnings: Vec<String> = manifest.datasets.iter().flat_map(|d| d.warnings.clone()).collect();
    warnings.extend(manifest.failed.iter().map(|f| format!("{}: failed: {}", f.name, f.error)));
    for stage in ["risk", "evaluate"] {
        let p = warnings_path(out, stage);
        if p.is_file() {
            warnings.extend(read_json::<Vec<String>>(&p)?);
        }
    }

    let reports = out.join("reports");
    let risk_ranks = match rank_variants(&risks, RankDirection::HighValueHighRank) {
        Ok(t) => {
            write_atomic(&reports.join("risk_ranks.csv"), t.to_csv().as_bytes())?;
            Some(t)
        }
        Err(e) => {
            warnings.push(format!("risk ranks: {e}"));
            None
        }
    };
    let mut settings = BTreeMap::new();
    for s in [Setting::Validation, Setting::Oracle] {
        let records = results.setting(s);
        if records.is_empty() {
            warnings.push(format!("no {} results; skipped", s.as_str()));
            continue;
        }
        let rep = analyze_setting(cfg, s, records, &risks, &mut warnings)?;
        for (algo, t) in &rep.performance_ranks {
            let p = reports.join(format!("performance_ranks_{}_{algo}.csv", s.as_str()));
            write_atomic(&p, t.to_csv().as_bytes())?;
        }
        write_json(&reports.join(format!("bayes_{}.json", s.as_str())), &rep.scenarios)?;
        write_atomic(
            &reports.join(format!("lowest_risk_{}.csv", s.as_str())),
            five_number_csv(&rep.lowest_risk).as_bytes(),
        )?;
        settings.insert(s, rep);
    }
    let report = AnalysisReport {
        risk_ranks,
        settings,
        warnings,
    };
    write_json(&reports.join("run_report.json"), &report)?;
    Ok(report)
}

/// Every stage in order.
pub fn run_all(cfg: &RunConfig, opts: RunOptions) -> Result<AnalysisReport> {
    cmd_transform(cfg, opts)?;
    cmd_risk(cfg, opts)?;
    cmd_evaluate(cfg, opts)?;
    cmd_analyze(cfg, opts)
}
