//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spanfuse_core::aggregate::{
    agg_exs, agg_max, agg_noisy_or, agg_rrs, aggregate_system, AggregationStrategy, ScoreVector,
};
use spanfuse_core::calibrate::{fit_logreg, fit_penalized, stratified_folds, Calibrator, CalibrationDataset, CalibratorSet, LogRegConfig};
use spanfuse_core::fuse::{predict_ensemble, FusionConfig, Predictions, TypeFusion};
use spanfuse_core::ingest::{split_dev, ExampleCandidates, GoldAnnotation, GoldSet, Split, SplitMode, SystemPredictions};
use spanfuse_core::metrics::{evaluate, MetricConfig};
use spanfuse_core::search::{
    exhaustive_search, greedy_search, run_search, single_scores, CandidatePool, Objective, ScoreCache, SearchSpec,
    Strategy, Trace,
};
use spanfuse_core::span::argmax_span;
use spanfuse_core::synth::{generate, oracle_exhaustive, SynthSpec};
use spanfuse_core::{AnswerType, Candidate, ExampleId, Span};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn corpus(spec: &SynthSpec) -> (GoldSet, Vec<SystemPredictions>, Split) {
    let (gold, systems) = generate(spec).expect("valid synthetic spec");
    let split = split_dev(&gold, SplitMode::Files { train_files: 3 }).expect("five gold files");
    (gold, systems, split)
}

// 1. Aggregator formulas.
fn aggregators() -> Outcome {
    let v = |xs: &[f64]| ScoreVector::new(xs.to_vec()).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let mut failures = Vec::new();
    let no = agg_noisy_or(&v(&[0.5, 0.5])).unwrap();
    if !close(no, 0.75) {
        failures.push(format!("noisy-or = {no}"));
    }
    let exs = agg_exs(&v(&[0.8, 0.4]), 0.5);
    if !close(exs, 1.0) {
        failures.push(format!("exs = {exs}"));
    }
    let rrs = agg_rrs(&v(&[0.6, 0.6, 0.6]));
    if !close(rrs, 1.1) {
        failures.push(format!("rrs = {rrs}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let p: f64 = rng.random();
        let s = v(&[p]);
        let values = [agg_max(&s), agg_exs(&s, 0.5), agg_rrs(&s), agg_noisy_or(&s).unwrap()];
        if values.iter().any(|&x| !close(x, p)) {
            failures.push(format!("singleton {p}: {values:?}"));
            break;
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() { "noisy-or 0.75, exs 1.0, rrs 1.1, singletons agree".into() } else { failures.join("; ") },
    )
}

// 2. Exhaustive search equals the brute-force oracle.
fn exhaustive_oracle() -> Outcome {
    let start = Instant::now();
    let fusions = [
        FusionConfig::default(),
        FusionConfig {
            long: TypeFusion { aggregation: AggregationStrategy::Rrs, ..Default::default() },
            short: TypeFusion { aggregation: AggregationStrategy::exs(), ..Default::default() },
            restrict_short_to_long: true,
        },
    ];
    let metric = MetricConfig::default();
    let cals = CalibratorSet::default();
    let mut mismatches = Vec::new();
    let mut tie_instances = 0;
    for i in 0..25u64 {
        let n = 6 + (i % 5) as usize;
        let k = 2 + (i % 3) as usize;
        let mut spec = SynthSpec::pool(200, n, 100 + i);
        if i % 4 == 0 {
            // a byte-identical twin guarantees tied subsets
            spec.systems[n - 1].accuracy = spec.systems[0].accuracy;
        }
        let (gold, mut systems, split) = corpus(&spec);
        if i % 4 == 0 {
            systems[n - 1].examples = systems[0].examples.clone();
        }
        let fusion = fusions[(i % 2) as usize];
        let oracle = oracle_exhaustive(&systems, k, &gold, &split.train, &fusion, &cals, &metric).expect("oracle");
        let best_sa = oracle.scores.iter().map(|s| s.1).fold(f64::MIN, f64::max);
        let best_la = oracle.scores.iter().map(|s| s.2).fold(f64::MIN, f64::max);
        if oracle.scores.iter().filter(|s| s.1 == best_sa).count() > 1
            || oracle.scores.iter().filter(|s| s.2 == best_la).count() > 1
        {
            tie_instances += 1;
        }
        let pool = CandidatePool::new(systems).unwrap();
        let cache = ScoreCache::build(&pool, &gold, &fusion, &cals, &metric).unwrap();
        let obj = Objective::new(&cache, &split).unwrap();
        let all: Vec<usize> = (0..pool.len()).collect();
        let sel = exhaustive_search(&obj, &all, k, 1, None, &mut Trace::default()).unwrap();
        if pool.ids(&sel.s) != oracle.sa_best || pool.ids(&sel.l) != oracle.la_best {
            mismatches.push(format!("instance {i} (n={n}, k={k})"));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches.is_empty() && within(elapsed, 60),
        format!(
            "25 instances, {} mismatches, {tie_instances} with tied optima, {:.1}s{}",
            mismatches.len(),
            elapsed.as_secs_f64(),
            if mismatches.is_empty() { String::new() } else { format!(": {}", mismatches.join(", ")) }
        ),
    )
}

// 3. Greedy guarantees.
fn greedy_guarantees() -> Outcome {
    let start = Instant::now();
    let mut violations = Vec::new();
    let mut checks = 0;
    for seed in 0..10u64 {
        let spec = SynthSpec::pool(400, 12, 200 + seed);
        let (gold, systems, split) = corpus(&spec);
        let pool = CandidatePool::new(systems).unwrap();
        let cache = ScoreCache::build(&pool, &gold, &FusionConfig::default(), &CalibratorSet::default(), &MetricConfig::default()).unwrap();
        let obj = Objective::new(&cache, &split).unwrap();
        let mut trace = Trace::default();
        let singles = single_scores(&obj, &mut trace);
        let best_single_sa = singles.iter().map(|s| s.sa_f1).fold(f64::MIN, f64::max);
        let best_single_la = singles.iter().map(|s| s.la_f1).fold(f64::MIN, f64::max);
        let all: Vec<usize> = (0..pool.len()).collect();
        let k_s = (seed % 5) as usize;
        let sel = greedy_search(&obj, &all, 4, k_s, &mut trace).unwrap();
        if !sel.l.is_empty() {
            checks += 2;
            let l = obj.eval(&sel.l).la_f1;
            let lp = obj.eval(&sel.l_prime).la_f1;
            if l < best_single_la {
                violations.push(format!("seed {seed}: F1_L(L)={l} < best single {best_single_la}"));
            }
            if lp < l {
                violations.push(format!("seed {seed}: F1_L(L')={lp} < F1_L(L)={l}"));
            }
        }
        if !sel.s.is_empty() {
            checks += 2;
            let s = obj.eval(&sel.s).sa_f1;
            let sp = obj.eval(&sel.s_prime).sa_f1;
            if s < best_single_sa {
                violations.push(format!("seed {seed}: F1_S(S)={s} < best single {best_single_sa}"));
            }
            if sp < s {
                violations.push(format!("seed {seed}: F1_S(S')={sp} < F1_S(S)={s}"));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        violations.is_empty() && within(elapsed, 30),
        format!(
            "10 pools (n=12, k=4, k_S=0..4), {checks} inequalities, {} violations, {:.1}s{}",
            violations.len(),
            elapsed.as_secs_f64(),
            if violations.is_empty() { String::new() } else { format!(": {}", violations.join("; ")) }
        ),
    )
}

// 4. Metric fixtures.
fn metric_fixtures() -> Outcome {
    let sp = |s, e| Span::new(s, e).unwrap();
    let one = |long: Span, short: Vec<Span>| vec![GoldAnnotation::new(long, short).unwrap()];
    let mut gold = GoldSet::default();
    gold.push_file(vec![
        ("e1".to_string(), one(sp(0, 10), vec![sp(2, 3)])),
        ("e2".to_string(), one(sp(20, 30), vec![])),
        ("e3".to_string(), vec![GoldAnnotation::null()]),
    ])
    .unwrap();
    let ids: Vec<ExampleId> = ["e1", "e2", "e3"].map(String::from).to_vec();
    let metric = MetricConfig { threshold: 1, ..Default::default() };
    let pred = |pairs: &[(&str, Span, Span)]| -> Predictions {
        pairs.iter().map(|(id, l, s)| (id.to_string(), spanfuse_core::fuse::Prediction::new(*l, *s))).collect()
    };

    // hit on e1, miss (null) on e2, false alarm on e3
    let hand = evaluate(&pred(&[("e1", sp(0, 10), Span::Null), ("e3", sp(40, 50), Span::Null)]), &gold, "f", &ids, &metric).unwrap();
    let l = hand.long;
    let hand_ok = (l.tp, l.fp, l.fn_) == (1, 1, 1) && l.precision == 0.5 && l.recall == 0.5 && l.f1 == 0.5;

    let perfect = evaluate(&pred(&[("e1", sp(0, 10), sp(2, 3)), ("e2", sp(20, 30), Span::Null)]), &gold, "p", &ids, &metric).unwrap();
    let perfect_ok = perfect.long.f1 == 1.0 && perfect.short.f1 == 1.0;

    let null = evaluate(&Predictions::new(), &gold, "n", &ids, &metric).unwrap();
    let null_ok = null.long.recall == 0.0 && null.short.recall == 0.0;
    outcome(
        hand_ok && perfect_ok && null_ok,
        format!(
            "hand-count tp/fp/fn={}/{}/{} P/R/F1={}/{}/{}; perfect F1={}/{}; all-null recall={}/{}",
            l.tp, l.fp, l.fn_, l.precision, l.recall, l.f1, perfect.long.f1, perfect.short.f1, null.long.recall, null.short.recall
        ),
    )
}

// 5. Calibration recovery.
fn calibration_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<(f64, bool)> = (0..200)
        .map(|_| {
            let s: f64 = rng.random_range(-3.0..3.0);
            let p = 1.0 / (1.0 + (-(2.0 * s - 1.0)).exp());
            (s, rng.random_bool(p))
        })
        .collect();
    let c = 1e3;
    let (w, b) = fit_penalized(&rows, c);

    // brute force over [-5, 5]^2 at step 0.01 on the same penalized objective
    let nll = |w: f64, b: f64| {
        rows.iter()
            .map(|&(s, y)| {
                let z = w * s + b;
                let log1pexp = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                log1pexp - if y { z } else { 0.0 }
            })
            .sum::<f64>()
            / rows.len() as f64
            + w * w / (2.0 * c)
    };
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=1000 {
        let gw = -5.0 + 0.01 * i as f64;
        for j in 0..=1000 {
            let gb = -5.0 + 0.01 * j as f64;
            let f = nll(gw, gb);
            if f < best.0 {
                best = (f, gw, gb);
            }
        }
    }
    let param_ok = (w - best.1).abs() <= 0.15 && (b - best.2).abs() <= 0.15;

    // CV: recompute every grid point's held-out log-likelihood independently
    let config = LogRegConfig { seed: 5, ..Default::default() };
    let cal: Calibrator = fit_logreg("synthetic", AnswerType::Long, &CalibrationDataset { rows: rows.clone() }, &config).unwrap();
    let labels: Vec<bool> = rows.iter().map(|r| r.1).collect();
    let folds = stratified_folds(&labels, config.folds, config.seed);
    let held_out = |c: f64| {
        let mut total = 0.0;
        for k in 0..config.folds {
            let train: Vec<(f64, bool)> = rows.iter().zip(&folds).filter(|(_, f)| **f != k).map(|(r, _)| *r).collect();
            let (w, b) = fit_penalized(&train, c);
            for (&(s, y), _) in rows.iter().zip(&folds).filter(|(_, f)| **f == k) {
                let p = 1.0 / (1.0 + (-(w * s + b)).exp());
                total += if y { p.ln() } else { (1.0 - p).ln() };
            }
        }
        total / rows.len() as f64
    };
    let scores: Vec<f64> = config.c_grid.iter().map(|&c| held_out(c)).collect();
    let grid_best = scores.iter().cloned().fold(f64::MIN, f64::max);
    let chosen_idx = config.c_grid.iter().position(|&c| c == cal.chosen_c).expect("chosen c is on the grid");
    let cv_ok = (grid_best - scores[chosen_idx]).abs() <= 1e-6;
    let elapsed = start.elapsed();
    outcome(
        param_ok && cv_ok && within(elapsed, 10),
        format!(
            "fit (w,b)=({w:.4},{b:.4}) vs grid ({:.2},{:.2}); chosen c={:.3e} held-out LL {:.6} vs best {:.6}; {:.1}s",
            best.1,
            best.2,
            cal.chosen_c,
            scores[chosen_idx],
            grid_best,
            elapsed.as_secs_f64()
        ),
    )
}

// 6. Argmax invariances.
fn argmax_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = [0usize; 3];

    // (a) calibration with w > 0 keeps each system's top span
    for _ in 0..1000 {
        let n = rng.random_range(1..=20);
        let cands: Vec<Candidate> = (0..n)
            .map(|_| {
                let s = rng.random_range(0..30u32);
                let span = if rng.random_bool(0.1) { Span::Null } else { Span::new(s, s + rng.random_range(1..5)).unwrap() };
                Candidate::new(span, rng.random_range(-5.0..5.0))
            })
            .collect();
        let cal = Calibrator::fixed("s", AnswerType::Long, rng.random_range(0.05..2.0), rng.random_range(-3.0..3.0));
        let raw = aggregate_system("s", &cands, AggregationStrategy::Max, None).unwrap();
        let calibrated = aggregate_system("s", &cands, AggregationStrategy::Max, Some(&cal)).unwrap();
        if argmax_span(raw.iter()).map(|x| x.0) != argmax_span(calibrated.iter()).map(|x| x.0) {
            violations[0] += 1;
        }
    }

    // (b) scaling all scores, (c) adding an empty system
    let strategies = [AggregationStrategy::Max, AggregationStrategy::exs(), AggregationStrategy::Rrs];
    let mut compared = 0;
    for seed in 0..6u64 {
        let (gold, systems, _) = corpus(&SynthSpec::pool(300, 5, 600 + seed));
        let ids: Vec<ExampleId> = gold.examples.keys().cloned().collect();
        let agg = strategies[seed as usize % 3];
        let fusion = FusionConfig {
            long: TypeFusion { aggregation: agg, ..Default::default() },
            short: TypeFusion { aggregation: agg, ..Default::default() },
            restrict_short_to_long: seed % 2 == 1,
        };
        let cals = CalibratorSet::default();
        let refs: Vec<&SystemPredictions> = systems.iter().collect();
        let base = predict_ensemble(&refs, &ids, &fusion, &cals).unwrap();
        for alpha in [0.25, 0.5, 2.0, 8.0, 3.0, 0.1] {
            let scaled: Vec<SystemPredictions> = systems.iter().map(|s| scale(s, alpha)).collect();
            let refs: Vec<&SystemPredictions> = scaled.iter().collect();
            let p = predict_ensemble(&refs, &ids, &fusion, &cals).unwrap();
            violations[1] += base.iter().filter(|(id, pr)| p[*id] != **pr).count();
            compared += base.len();
        }
        let empty = SystemPredictions::new("zz-empty");
        let mut with_empty: Vec<&SystemPredictions> = systems.iter().collect();
        with_empty.push(&empty);
        let p = predict_ensemble(&with_empty, &ids, &fusion, &cals).unwrap();
        violations[2] += base.iter().filter(|(id, pr)| p[*id] != **pr).count();
    }
    outcome(
        violations == [0, 0, 0],
        format!(
            "violations: calibration {}/1000, scaling {}/{compared}, empty system {}/1800",
            violations[0], violations[1], violations[2]
        ),
    )
}

fn scale(s: &SystemPredictions, alpha: f64) -> SystemPredictions {
    let mut out = SystemPredictions::new(s.system_id.clone());
    for (id, ex) in &s.examples {
        let f = |cs: &[Candidate]| cs.iter().map(|c| Candidate::new(c.span, c.score * alpha)).collect();
        out.examples.insert(id.clone(), ExampleCandidates { long: f(&ex.long), short: f(&ex.short) });
    }
    out
}

// 7. Paper-shaped qualitative reproduction.
fn qualitative() -> Outcome {
    let start = Instant::now();
    let metric = MetricConfig::default();
    let cals = CalibratorSet::default();
    let mut pool_wins = 0;
    let mut pool_detail = Vec::new();
    for seed in 0..10u64 {
        let (gold, systems, split) = corpus(&SynthSpec::clustered(2000, 20, 21, 0.8, 700 + seed));
        let pool = CandidatePool::new(systems).unwrap();
        let full = SearchSpec { strategy: Strategy::Greedy, k: 4, k_s: 0, ..Default::default() };
        let top20 = SearchSpec { pool_top_n: Some(20), ..full.clone() };
        let (a, _) = run_search(&pool, &gold, &split, &full, &cals, &metric).unwrap();
        let (b, _) = run_search(&pool, &gold, &split, &top20, &cals, &metric).unwrap();
        let (fa, fb) = (a.final_reports.test.long.f1, b.final_reports.test.long.f1);
        if fa >= fb {
            pool_wins += 1;
        }
        pool_detail.push(format!("{fa:.3}/{fb:.3}"));
    }

    let mut seed_wins = 0;
    for seed in 0..50u64 {
        let (gold, systems, split) = corpus(&SynthSpec::seed_variants(1000, 4, 0.6, 0.8, 800 + seed));
        let fusion = FusionConfig::default();
        let single = predict_ensemble(&[&systems[0]], &split.test, &fusion, &cals).unwrap();
        let refs: Vec<&SystemPredictions> = systems.iter().collect();
        let ensemble = predict_ensemble(&refs, &split.test, &fusion, &cals).unwrap();
        let rs = evaluate(&single, &gold, "test", &split.test, &metric).unwrap();
        let re = evaluate(&ensemble, &gold, "test", &split.test, &metric).unwrap();
        if re.long.f1 > rs.long.f1 && re.short.f1 > rs.short.f1 {
            seed_wins += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        pool_wins >= 8 && seed_wins >= 45 && within(elapsed, 300),
        format!(
            "all-41 >= top-20 test LA F1 in {pool_wins}/10 ({}); 4-seed ensemble beats single (SA and LA) in {seed_wins}/50; {:.1}s",
            pool_detail.join(" "),
            elapsed.as_secs_f64()
        ),
    )
}

// 8. Determinism of every command under replay and thread count.
fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let bin = env!("CARGO_BIN_EXE_spanfuse");
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(bin)
            .args(args)
            .current_dir(root)
            .env_remove("SPANFUSE_JOBS")
            .output()
            .map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
        }
    };
    let data = ["--gold", "a/corpus", "--pred", "a/corpus/predictions", "--split-files", "3"];
    let with = |head: &[&'static str], tail: &[&'static str]| -> Vec<&'static str> {
        let mut v: Vec<&'static str> = head.to_vec();
        v.extend_from_slice(&data);
        v.extend_from_slice(tail);
        v
    };
    let steps: Vec<(&str, Vec<&str>, Vec<&str>)> = vec![
        ("corpus", vec!["synth", "--systems", "5", "--examples", "300", "--seed", "9"], vec!["gold_00.jsonl", "gold_04.jsonl", "predictions/m00.jsonl", "predictions/m04.jsonl"]),
        ("cal", with(&["calibrate", "--seed", "4"], &[]), vec!["m00.long.calibrator.json", "m03.short.calibrator.json"]),
        ("fuse", with(&["fuse", "--sa-agg", "exs", "--la-agg", "noisy-or"], &[]), vec!["predictions.jsonl", "report.json", "calibrators/m01.long.calibrator.json"]),
        ("greedy", with(&["search", "--strategy", "greedy", "--k", "3", "--ks", "1", "--calibrators", "a/cal"], &["--la-norm", "logreg", "--la-agg", "rrs"]), vec!["search_result.json", "predictions.jsonl", "report.json"]),
        ("exhaustive", with(&["search", "--strategy", "exhaustive", "--pool-top-n", "4", "--k", "2"], &[]), vec!["search_result.json", "predictions.jsonl", "report.json"]),
        ("msas", with(&["search", "--select-agg", "max", "--predict-agg", "noisy-or", "--k", "2"], &[]), vec!["search_result.json", "predictions.jsonl", "report.json"]),
        ("eval", vec!["eval", "--gold", "a/corpus", "--predictions", "a/fuse/predictions.jsonl", "--split-files", "3"], vec!["report.json"]),
    ];
    let mut compared = 0;
    let mut problems = Vec::new();
    for (name, args, outputs) in &steps {
        let a = format!("a/{name}");
        let mut first = args.clone();
        first.extend(["--out-dir", &a, "--jobs", "1"]);
        if let Err(e) = run(&first) {
            problems.push(e);
            break;
        }
        let cfg = format!("a/{name}/run_config.json");
        let command = args[0];
        for (dir, jobs) in [("b", "8"), ("c", "1")] {
            let out = format!("{dir}/{name}");
            if let Err(e) = run(&[command, "--config", &cfg, "--out-dir", &out, "--jobs", jobs]) {
                problems.push(e);
                continue;
            }
            for f in outputs {
                let (x, y) = (root.join(&a).join(f), root.join(&out).join(f));
                match (std::fs::read(&x), std::fs::read(&y)) {
                    (Ok(x), Ok(y)) if x == y => compared += 1,
                    (Ok(_), Ok(_)) => problems.push(format!("{name}: {f} differs under --jobs {jobs}")),
                    _ => problems.push(format!("{name}: {f} missing")),
                }
            }
        }
    }
    if problems.is_empty() {
        compared += env_override_matches(bin, root, &mut problems);
    }
    outcome(
        problems.is_empty(),
        format!(
            "{} commands replayed from run_config.json at --jobs 1 and 8, {compared} files byte-identical{}",
            steps.len(),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

/// `SPANFUSE_JOBS` overrides `--jobs` without changing outputs.
fn env_override_matches(bin: &str, root: &Path, problems: &mut Vec<String>) -> usize {
    let status = Command::new(bin)
        .args(["search", "--config", "a/greedy/run_config.json", "--out-dir", "env/greedy", "--jobs", "1"])
        .current_dir(root)
        .env("SPANFUSE_JOBS", "3")
        .output();
    match status {
        Ok(o) if o.status.success() => {
            let same = ["search_result.json", "predictions.jsonl", "report.json"]
                .iter()
                .all(|f| std::fs::read(root.join("a/greedy").join(f)).ok() == std::fs::read(root.join("env/greedy").join(f)).ok());
            if same {
                3
            } else {
                problems.push("SPANFUSE_JOBS run differs".into());
                0
            }
        }
        _ => {
            problems.push("SPANFUSE_JOBS run failed".into());
            0
        }
    }
}

// 9. Performance at paper scale.
fn performance() -> Outcome {
    // 7830 examples in five files: 4698 train (three files), 3132 test
    let (gold, systems, split) = corpus(&SynthSpec::clustered(7830, 20, 21, 0.8, 9));
    let pool = CandidatePool::new(systems).unwrap();
    let cals = CalibratorSet::default();
    let metric = MetricConfig::default();
    let t = Instant::now();
    let greedy = SearchSpec { strategy: Strategy::Greedy, k: 4, k_s: 0, ..Default::default() };
    let g = run_search(&pool, &gold, &split, &greedy, &cals, &metric);
    let greedy_time = t.elapsed();
    let t = Instant::now();
    let exhaustive = SearchSpec { strategy: Strategy::Exhaustive, k: 4, pool_top_n: Some(20), ..Default::default() };
    let e = run_search(&pool, &gold, &split, &exhaustive, &cals, &metric);
    let exhaustive_time = t.elapsed();
    let subsets = e.as_ref().map_or(0, |(r, _)| r.trace.iter().filter(|t| t.phase == "exhaustive").count());
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    outcome(
        g.is_ok() && e.is_ok() && subsets == 4845 && within(greedy_time, 60) && within(exhaustive_time, 300),
        format!(
            "41 systems x {} train examples on {threads} thread(s): greedy k=4 {:.1}s, exhaustive top-20 k=4 ({subsets} subsets) {:.1}s",
            split.train.len(),
            greedy_time.as_secs_f64(),
            exhaustive_time.as_secs_f64()
        ),
    )
}

fn main() {
    // `cargo test -- <filter>` passes arguments; run everything regardless,
    // but honor `--list` so test discovery tools do not execute the suite.
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        for i in 1..=9 {
            println!("criterion_{i}: test");
        }
        return;
    }
    let criteria: [Criterion; 9] = [
        ("aggregator formulas", aggregators),
        ("exhaustive search matches oracle", exhaustive_oracle),
        ("greedy guarantees", greedy_guarantees),
        ("metric fixtures", metric_fixtures),
        ("calibration recovery", calibration_recovery),
        ("argmax invariance", argmax_invariance),
        ("qualitative reproduction", qualitative),
        ("determinism", determinism),
        ("performance", performance),
    ];
    let mut results = BTreeMap::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        println!("criterion {} [{}] {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.insert(i + 1, o.pass);
    }
    let failed: Vec<String> = results.iter().filter(|(_, p)| !**p).map(|(i, _)| i.to_string()).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {}", failed.join(", "));
        std::process::exit(1);
    }
}
