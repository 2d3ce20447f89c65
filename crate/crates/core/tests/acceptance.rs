//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use deidbench::learning::{
    evaluate, evaluate_both, make_splits, BuiltinLogReg, EvalContext, FScoreMode, LearnerSpec, N_REPEATS,
};
use deidbench::linkage::{assess_risk, Blocking, SimilarityConfig};
use deidbench::pipeline::{cmd_transform, run_all, DatasetConfig, RunConfig, RunOptions, VariantManifest};
use deidbench::stats::{bayes_sign_test, percentage_difference, Rope, SignTestConfig};
use deidbench::transforms::{
    apply_variant, column_fences, global_recode, laplace_scale, recode_width, round_values,
    sample_laplace, top_bottom, NoiseScale, ParamGrids, Technique, TransformOptions,
};
use deidbench::tuning::select_best_param;
use deidbench::{Column, ColumnData, Dataset, VariantSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) {
    let mut text = header.join(",");
    text.push('\n');
    for r in rows {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

fn labelled(name: &str, mut columns: Vec<Column>, labels: Vec<&str>) -> Dataset {
    columns.push(Column::nominal("class", labels.into_iter().map(Some)));
    Dataset::new(name, columns, "class", None).unwrap()
}

// ---------------------------------------------------------------- variants

fn variant_counting() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let n = 100;
    let label = |i: usize| if i.is_multiple_of(3) { "pos" } else { "neg" }.to_string();
    let mut r = rng(1);
    // nominal only, one high-uniqueness column: suppression only
    let k1: Vec<Vec<String>> = (0..n).map(|i| vec![format!("c{}", i % 80), format!("g{}", i % 3), label(i)]).collect();
    write_csv(&dir.path().join("k1.csv"), &["code", "grp", "class"], &k1);
    // low-cardinality integers: top-and-bottom, rounding, re-coding
    let k3: Vec<Vec<String>> = (0..n)
        .map(|i| vec![(i % 10).to_string(), ((i * 7) % 13).to_string(), label(i)])
        .collect();
    write_csv(&dir.path().join("k3.csv"), &["a", "b", "class"], &k3);
    // floats plus integers plus a high-uniqueness column: all five
    let k5: Vec<Vec<String>> = (0..n)
        .map(|i| vec![format!("{:.4}", r.random::<f64>() * 100.0), (i % 10).to_string(), label(i)])
        .collect();
    write_csv(&dir.path().join("k5.csv"), &["x", "a", "class"], &k5);

    let datasets = ["k1", "k3", "k5"]
        .iter()
        .map(|n| DatasetConfig {
            path: dir.path().join(format!("{n}.csv")),
            target: "class".into(),
            name: None,
            qi: None,
        })
        .collect();
    let cfg = RunConfig::new(datasets, dir.path().join("out"));
    let m = cmd_transform(&cfg, RunOptions::default()).map_err(|e| e.to_string())?;
    let counts: BTreeMap<String, usize> = m.datasets.iter().map(|d| (d.name.clone(), d.variants.len())).collect();
    let expected: BTreeMap<String, usize> = [("k1", 1), ("k3", 7), ("k5", 31)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    ensure(counts == expected, format!("variant counts {counts:?}"))?;
    for d in &m.datasets {
        let on_disk = std::fs::read_dir(dir.path().join("out").join(&d.name).join("variants"))
            .map_err(|e| e.to_string())?
            .filter(|e| e.as_ref().is_ok_and(|e| e.path().extension().is_some_and(|x| x == "csv")))
            .count();
        ensure(on_disk == d.variants.len(), format!("{}: {on_disk} csv files", d.name))?;
    }
    Ok(format!("{counts:?}"))
}

// ----------------------------------------------------------------- laplace

fn laplace_mechanism() -> Check {
    let b = laplace_scale(4.0, 2.0, NoiseScale::Scale);
    ensure(b == 2.0, format!("scale {b}"))?;
    let mut r = rng(2);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| sample_laplace(&mut r, b)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    ensure(mean.abs() <= 0.05 * 4.0, format!("mean {mean}"))?;
    ensure((var - 8.0).abs() <= 0.15 * 8.0, format!("variance {var}"))?;
    Ok(format!("mean {mean:.4}, variance {var:.4}"))
}

// ----------------------------------------------------------------- linkage

fn mixed_fixture(seed: u64, n: usize) -> Dataset {
    let mut r = rng(seed);
    let normal = Normal::new(50.0, 12.0).unwrap();
    let x: Vec<f64> = (0..n).map(|_| (normal.sample(&mut r) * 1000.0_f64).round() / 1000.0).collect();
    let z: Vec<f64> = (0..n).map(|_| r.random::<f64>() * 1000.0).collect();
    let age: Vec<i64> = (0..n).map(|_| r.random_range(18..90)).collect();
    let city: Vec<Option<String>> = (0..n).map(|_| Some(format!("c{}", r.random_range(0..6)))).collect();
    let labels: Vec<&str> = (0..n).map(|i| if (x[i] + age[i] as f64) > 100.0 { "yes" } else { "no" }).collect();
    labelled(
        &format!("mixed{seed}"),
        vec![
            Column::float("x", x),
            Column::float("z", z),
            Column::integer("age", age),
            Column::new("city", ColumnData::Nominal(city)),
        ],
        labels,
    )
}

fn linkage_sanity() -> Check {
    let ds = mixed_fixture(3, 300);
    let cfg = SimilarityConfig::default();
    let same = assess_risk(&ds, &ds, &cfg).map_err(|e| e.to_string())?;
    ensure(same.risk() == 1.0, format!("risk(original, original) = {}", same.risk()))?;
    let target_only = vec![ds.target_column().clone()];
    let suppressed = ds.with_columns(target_only).map_err(|e| e.to_string())?;
    let none = assess_risk(&ds, &suppressed, &cfg).map_err(|e| e.to_string())?;
    ensure(none.risk() == 0.0, format!("risk with all QI suppressed = {}", none.risk()))?;
    Ok("1.0 / 0.0".into())
}

fn shuffled(ds: &Dataset, seed: u64) -> Dataset {
    let mut rows: Vec<usize> = (0..ds.n_rows()).collect();
    rows.shuffle(&mut rng(seed));
    ds.take_rows(&rows).unwrap()
}

fn blocking_oracle() -> Check {
    let mut totals = BTreeMap::new();
    for f in 0..12u64 {
        let ds = mixed_fixture(100 + f, 200);
        // variants that keep each record near its original in key order
        let params: Option<BTreeMap<Technique, f64>> = match f % 4 {
            0 => None,
            1 => Some([(Technique::Rounding, 5.0)].into()),
            2 => Some([(Technique::TopBottom, 1.5), (Technique::GlobalRecode, 1.5)].into()),
            _ => Some([(Technique::Suppression, 0.7), (Technique::Rounding, 10.0)].into()),
        };
        let transformed = match params {
            None => ds.clone(),
            Some(p) => {
                let spec = VariantSpec::new(p, f).map_err(|e| e.to_string())?;
                apply_variant(&ds, &spec, &TransformOptions::default()).dataset
            }
        };
        let variant = shuffled(&transformed, f);
        // the stricter threshold leaves partial matched sets
        for fraction in [0.7, 0.95] {
            let mut full = SimilarityConfig::with_blocking(Blocking::None);
            full.match_fraction = fraction;
            let mut window = SimilarityConfig::with_blocking(Blocking::SortedNeighborhood { window: 50, key: None });
            window.match_fraction = fraction;
            let a = assess_risk(&ds, &variant, &full).map_err(|e| e.to_string())?;
            let b = assess_risk(&ds, &variant, &window).map_err(|e| e.to_string())?;
            ensure(
                a.matched == b.matched,
                format!(
                    "fixture {f} at {fraction}: full {} vs window {} matches",
                    a.matched.len(),
                    b.matched.len()
                ),
            )?;
            *totals.entry(fraction.to_string()).or_insert(0) += a.matched.len();
        }
    }
    Ok(format!("12 fixtures agree; matches per threshold {totals:?} of 2400"))
}

// -------------------------------------------------------------- transforms

fn single_column(name: &str, col: Column) -> Dataset {
    let n = col.len();
    labelled(name, vec![col], (0..n).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect())
}

fn transform_properties() -> Check {
    let mut r = rng(5);
    let grids = ParamGrids::default();
    for case in 0..1000 {
        let n = r.random_range(5..60);
        let spread = 10f64.powi(r.random_range(-1..5));
        let mut values: Vec<f64> = (0..n).map(|_| (r.random::<f64>() - 0.5) * spread).collect();
        // a few outliers
        for _ in 0..r.random_range(0..3) {
            let i = r.random_range(0..n);
            values[i] *= 25.0;
        }
        let ints: Vec<i64> = values.iter().map(|v| v.round() as i64).collect();

        // rounding
        let base = grids.base[case % grids.base.len()];
        let ds = single_column("f", Column::float("v", values.clone()));
        let once = round_values(&ds, base).map_err(|e| e.to_string())?.dataset;
        let twice = round_values(&once, base).map_err(|e| e.to_string())?.dataset;
        ensure(once == twice.renamed(once.name()), format!("case {case}: rounding not idempotent"))?;
        let col = once.column("v").unwrap();
        for i in 0..n {
            let v = col.numeric(i).unwrap();
            let k = (v / base).round();
            ensure((v - k * base).abs() <= 1e-9, format!("case {case}: {v} not a multiple of {base}"))?;
        }

        // top-and-bottom
        let m = grids.outlier[case % grids.outlier.len()];
        let orig = ds.column("v").unwrap();
        let fences = column_fences(orig, m).unwrap();
        let tb = top_bottom(&ds, m).map_err(|e| e.to_string())?.dataset;
        let out = tb.column("v").unwrap();
        for i in 0..n {
            let (o, v) = (orig.numeric(i).unwrap(), out.numeric(i).unwrap());
            ensure(v >= fences.lower && v <= fences.upper, format!("case {case}: {v} outside fences"))?;
            if o >= fences.lower && o <= fences.upper {
                ensure(o == v, format!("case {case}: in-fence {o} changed to {v}"))?;
            }
        }

        // global re-coding
        let sm = grids.std_magnitude[case % grids.std_magnitude.len()];
        let ids = single_column("i", Column::integer("v", ints.clone()));
        let Some(w) = recode_width(ids.column("v").unwrap(), sm) else {
            continue;
        };
        let rc = global_recode(&ids, sm).map_err(|e| e.to_string())?.dataset;
        let out = rc.column("v").unwrap();
        for (i, &o) in ints.iter().enumerate() {
            let v = out.numeric(i).unwrap();
            ensure((v - o as f64).abs() < w, format!("case {case}: |{v} - {o}| >= {w}"))?;
        }
    }
    Ok("1000 random columns".into())
}

// ------------------------------------------------------------------ tuning

fn float_heavy(seed: u64, n: usize) -> Dataset {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let cols: Vec<Vec<f64>> = (0..4)
        .map(|k| (0..n).map(|_| normal.sample(&mut r) * (k + 1) as f64 * 10.0).collect())
        .collect();
    let grp: Vec<i64> = (0..n).map(|_| r.random_range(0..4)).collect();
    let labels: Vec<&str> = (0..n)
        .map(|i| if cols[0][i] + cols[1][i] / 2.0 > 0.0 { "hi" } else { "lo" })
        .collect();
    let mut columns: Vec<Column> = cols
        .into_iter()
        .enumerate()
        .map(|(k, v)| Column::float(&format!("f{k}"), v))
        .collect();
    columns.push(Column::integer("grp", grp));
    labelled(&format!("floaty{seed}"), columns, labels)
}

fn tuning_direction() -> Check {
    let ds = float_heavy(6, 400);
    let grids = ParamGrids::default();
    let sel = select_best_param(
        &ds,
        Technique::Noise,
        &grids.ep,
        &SimilarityConfig::default(),
        6,
        &TransformOptions::default(),
        &grids,
    )
    .map_err(|e| e.to_string())?;
    let matched: Vec<usize> = sel.risks.iter().map(|r| r.matched_count()).collect();
    ensure(sel.chosen == 0.5, format!("chosen ε = {} (matched {matched:?})", sel.chosen))?;
    Ok(format!("ε = 0.5, matched per ε {matched:?}"))
}

// ---------------------------------------------------------------- learning

fn separable(seed: u64, n: usize) -> Dataset {
    let mut r = rng(seed);
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut labels = Vec::new();
    while a.len() < n {
        let x: f64 = r.random_range(-1.0..1.0);
        let y: f64 = r.random_range(-1.0..1.0);
        let s = 2.0 * x - y;
        if s.abs() < 0.15 {
            continue;
        }
        a.push(x);
        b.push(y);
        labels.push(if s > 0.0 { "pos" } else { "neg" });
    }
    labelled("separable", vec![Column::float("x", a), Column::float("y", b)], labels)
}

fn learning_protocol() -> Check {
    let odd = mixed_fixture(7, 103);
    let plan = make_splits(&odd, 7).map_err(|e| e.to_string())?;
    let mut seen = BTreeSet::new();
    for r in 0..plan.repeats() {
        for &i in plan.test(r) {
            ensure(seen.insert(i), format!("row {i} in two test folds"))?;
        }
    }
    ensure(plan.repeats() == N_REPEATS, "repeat count")?;
    ensure(seen.len() == odd.n_rows(), format!("folds cover {} of {} rows", seen.len(), odd.n_rows()))?;

    let ds = separable(8, 500);
    let spec = LearnerSpec::builtin_logreg();
    let positive = ds.minority_label();
    let ctx = EvalContext {
        learner: &BuiltinLogReg,
        spec: &spec,
        positive: &positive,
        mode: FScoreMode::Binary,
    };
    let plan = make_splits(&ds, 8).map_err(|e| e.to_string())?;
    let res = evaluate(&ds, "original", ctx, &plan).map_err(|e| e.to_string())?;
    let f = res.mean_test_f1();
    ensure(f >= 0.95, format!("mean test F = {f}"))?;
    Ok(format!("folds disjoint and covering; mean test F {f:.4}"))
}

fn oracle_dominance() -> Check {
    let spec = LearnerSpec::builtin_logreg();
    let mut cells = 0;
    for seed in [11u64, 12] {
        let ds = mixed_fixture(seed, 240);
        let positive = ds.minority_label();
        let ctx = EvalContext {
            learner: &BuiltinLogReg,
            spec: &spec,
            positive: &positive,
            mode: FScoreMode::Binary,
        };
        let plan = make_splits(&ds, seed).map_err(|e| e.to_string())?;
        let variants: Vec<BTreeMap<Technique, f64>> = vec![
            [(Technique::Noise, 0.5)].into(),
            [(Technique::Rounding, 10.0)].into(),
            [(Technique::TopBottom, 1.5), (Technique::GlobalRecode, 1.5)].into(),
        ];
        let mut sets: Vec<(String, Dataset)> = vec![("original".into(), ds.clone())];
        for p in variants {
            let spec = VariantSpec::new(p, seed).map_err(|e| e.to_string())?;
            sets.push((spec.label(), apply_variant(&ds, &spec, &TransformOptions::default()).dataset));
        }
        for (label, v) in &sets {
            let pair = evaluate_both(v, label, ctx, &plan).map_err(|e| e.to_string())?;
            for (val, ora) in pair.validation.repeats.iter().zip(&pair.oracle.repeats) {
                ensure(
                    ora.test_f1 >= val.test_f1,
                    format!("{label} repeat {}: oracle {} < validation {}", val.repeat, ora.test_f1, val.test_f1),
                )?;
                cells += 1;
            }
        }
    }
    Ok(format!("{cells} (repeat, variant) cells"))
}

// -------------------------------------------------------------- sign test

/// xorshift64* with Marsaglia-Tsang gamma variates, independent of the
/// library's generator and gamma sampler.
struct XorShift(u64);

impl XorShift {
    fn next_u64(&mut self) -> u64 {
        self.0 ^= self.0 >> 12;
        self.0 ^= self.0 << 25;
        self.0 ^= self.0 >> 27;
        self.0.wrapping_mul(0x2545F4914F6CDD1D)
    }

    fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    fn normal(&mut self) -> f64 {
        let (u, v) = (self.uniform(), self.uniform());
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }

    fn gamma(&mut self, a: f64) -> f64 {
        if a < 1.0 {
            let u = self.uniform();
            return self.gamma(a + 1.0) * u.powf(1.0 / a);
        }
        let d = a - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let v = (1.0 + c * x).powi(3);
            if v <= 0.0 {
                continue;
            }
            let u = self.uniform();
            if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
                return d * v;
            }
        }
    }
}

fn oracle_sign_test(diffs: &[f64], rope: Rope, prior: [f64; 3], n: usize, seed: u64) -> [f64; 3] {
    let mut counts = [0.0; 3];
    for &d in diffs {
        let k = if d < rope.lo {
            0
        } else if d > rope.hi {
            2
        } else {
            1
        };
        counts[k] += 1.0;
    }
    let alpha: Vec<f64> = (0..3).map(|k| prior[k] + counts[k]).collect();
    let mut g = XorShift(seed | 1);
    let mut wins = [0usize; 3];
    for _ in 0..n {
        let draw: Vec<f64> = alpha.iter().map(|&a| g.gamma(a)).collect();
        let best = (0..3).fold(0, |b, k| if draw[k] > draw[b] { k } else { b });
        wins[best] += 1;
    }
    wins.map(|w| w as f64 / n as f64)
}

fn bayes_oracle() -> Check {
    let cfg = SignTestConfig::default();
    let mut r = rng(9);
    let mut worst: f64 = 0.0;
    for v in 0..25usize {
        let len = 1 + (v * 7) % 40;
        let (centre, spread) = [(0.0, 0.5), (-3.0, 4.0), (2.0, 3.0), (0.0, 10.0), (-10.0, 2.0)][v % 5];
        let diffs: Vec<f64> = (0..len)
            .map(|i| match i % 11 {
                // exact ROPE boundaries count as inside
                0 => 1.0,
                5 => -1.0,
                _ => centre + (r.random::<f64>() - 0.5) * 2.0 * spread,
            })
            .collect();
        let got = bayes_sign_test(&diffs, &cfg, v as u64).map_err(|e| e.to_string())?;
        let want = oracle_sign_test(&diffs, cfg.rope, cfg.prior, 1_000_000, 0x9E3779B97F4A7C15 ^ v as u64);
        for (g, w) in [got.p_lose, got.p_rope, got.p_win].into_iter().zip(want) {
            worst = worst.max((g - w).abs());
            ensure((g - w).abs() <= 0.02, format!("vector {v}: {g} vs oracle {w}"))?;
        }
    }
    let zeros = bayes_sign_test(&[0.0; 30], &cfg, 1).map_err(|e| e.to_string())?;
    ensure(zeros.p_rope >= 0.95, format!("all-zero p_rope = {}", zeros.p_rope))?;
    let pd = percentage_difference(0.0, 0.8).map_err(|e| e.to_string())?;
    ensure(pd == -100.0, format!("percentage_difference(0, b) = {pd}"))?;
    Ok(format!("max |Δp| {worst:.4}; all-zero p_rope {:.4}", zeros.p_rope))
}

// ---------------------------------------------------------------- trade-off

fn tradeoff_fixture(seed: u64, n: usize) -> Vec<Vec<String>> {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|_| {
            let a: f64 = normal.sample(&mut r) * 15.0 + 60.0;
            let b: f64 = normal.sample(&mut r) * 3.0;
            let c: i64 = r.random_range(0..40);
            let d: i64 = r.random_range(0..5);
            let score = (a - 60.0) / 15.0 + b / 3.0 + (c as f64 - 20.0) / 12.0 + 0.4 * normal.sample(&mut r);
            vec![
                format!("{a:.3}"),
                format!("{b:.4}"),
                c.to_string(),
                d.to_string(),
                if score > 0.8 { "yes" } else { "no" }.to_string(),
            ]
        })
        .collect()
}

fn tradeoff() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut datasets = Vec::new();
    for (k, n) in [1000usize, 1200, 1400, 1600, 2000].into_iter().enumerate() {
        let path = dir.path().join(format!("synth{k}.csv"));
        write_csv(&path, &["a", "b", "c", "d", "class"], &tradeoff_fixture(40 + k as u64, n));
        datasets.push(DatasetConfig {
            path,
            target: "class".into(),
            name: None,
            qi: None,
        });
    }
    let out = dir.path().join("out");
    let cfg = RunConfig::new(datasets, &out);
    run_all(&cfg, RunOptions::default()).map_err(|e| e.to_string())?;
    let manifest = VariantManifest::load(&out).map_err(|e| e.to_string())?;
    let risks = deidbench::pipeline::load_risks(&cfg, &manifest).map_err(|e| e.to_string())?;
    let scores = deidbench::pipeline::score_table(&deidbench::pipeline::load_results(&cfg).map_err(|e| e.to_string())?.validation);
    let mut lines = Vec::new();
    for d in &manifest.datasets {
        let rk = &risks[&d.name];
        let lo = rk.values().copied().fold(f64::INFINITY, f64::min);
        let hi = rk.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean_f = |target: f64| {
            let fs: Vec<f64> = rk
                .iter()
                .filter(|(_, r)| **r == target)
                .flat_map(|(v, _)| scores[&d.name][v].values().copied())
                .collect();
            fs.iter().sum::<f64>() / fs.len() as f64
        };
        let (f_lo, f_hi) = (mean_f(lo), mean_f(hi));
        ensure(
            f_lo <= f_hi,
            format!("{}: min-risk F {f_lo:.4} > max-risk F {f_hi:.4}", d.name),
        )?;
        let only = |set: &[Technique]| {
            d.variants
                .iter()
                .find(|v| v.spec.techniques == set)
                .map(|v| rk[&v.label])
                .ok_or_else(|| format!("{}: no {set:?} variant", d.name))
        };
        let (n, r, nr) = (
            only(&[Technique::Noise])?,
            only(&[Technique::Rounding])?,
            only(&[Technique::Noise, Technique::Rounding])?,
        );
        ensure(nr <= n.min(r), format!("{}: risk(N+R) {nr} > min(N {n}, R {r})", d.name))?;
        lines.push(format!("{} F {f_lo:.3}<={f_hi:.3} risk N+R {nr:.3}", d.name));
    }
    Ok(lines.join("; "))
}

fn main() {
    let checks: [Criterion; 10] = [
        ("variant counting", variant_counting),
        ("laplace mechanism", laplace_mechanism),
        ("linkage sanity", linkage_sanity),
        ("blocking oracle", blocking_oracle),
        ("transform properties", transform_properties),
        ("tuning direction", tuning_direction),
        ("learning protocol", learning_protocol),
        ("oracle dominance", oracle_dominance),
        ("bayes sign test oracle", bayes_oracle),
        ("trade-off demonstration", tradeoff),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
