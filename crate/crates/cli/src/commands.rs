use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use spanfuse_core::calibrate::{fit_calibrators, CalibratorSet};
use spanfuse_core::exec::try_par_map;
use spanfuse_core::fuse::{predict_ensemble, read_predictions_jsonl, write_predictions_jsonl, Predictions};
use spanfuse_core::ingest::{
    parse_gold_files, parse_predictions, split_dev, truncate_top_k, validate_ensemble_inputs, GoldSet, Split,
    SystemPredictions,
};
use spanfuse_core::metrics::{evaluate, EvalReport};
use spanfuse_core::search::{run_search, CandidatePool};
use spanfuse_core::synth::{generate, write_corpus, SynthSpec};
use spanfuse_core::ExampleId;

use crate::config::{write_json, EvalOn, RunConfig};
use crate::{SynthCmd, UsageError};

/// Files as given; directories expand to their `*.jsonl` files in name order.
pub fn expand_jsonl(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            files.sort();
            if files.is_empty() {
                anyhow::bail!("no .jsonl files in {}", p.display());
            }
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

struct Inputs {
    gold: GoldSet,
    systems: Vec<SystemPredictions>,
    split: Split,
}

fn load_inputs(cfg: &RunConfig) -> anyhow::Result<Inputs> {
    cfg.validate_data()?;
    let gold = parse_gold_files(&cfg.gold)?;
    let top_k = cfg.top_k;
    let systems = try_par_map(&cfg.predictions, |p| parse_predictions(p, None).map(|s| truncate_top_k(s, top_k)))?;
    validate_ensemble_inputs(&systems, &gold)?;
    let split = split_dev(&gold, cfg.split)?;
    Ok(Inputs { gold, systems, split })
}

/// Loads calibrators when a directory is configured, fits them on the train
/// split when fusion needs them, and returns an empty set otherwise.
fn calibrators_for(cfg: &RunConfig, inputs: &Inputs, needed: bool, out_dir: &Path) -> anyhow::Result<CalibratorSet> {
    if !needed {
        return Ok(CalibratorSet::default());
    }
    if let Some(dir) = &cfg.calibrators {
        return Ok(CalibratorSet::load(dir)?);
    }
    let set = fit_calibrators(&inputs.systems, &inputs.gold, &inputs.split.train, &cfg.metric, &cfg.logreg())?;
    set.save(&out_dir.join("calibrators"))?;
    Ok(set)
}

fn eval_ids<'a>(split: &'a Split, all: &'a [ExampleId], on: EvalOn) -> &'a [ExampleId] {
    match on {
        EvalOn::Train => &split.train,
        EvalOn::Test => &split.test,
        EvalOn::All => all,
    }
}

fn prepare_out_dir(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let dir = cfg.out_dir()?.to_path_buf();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub fn validate(cfg: &RunConfig) -> anyhow::Result<()> {
    let inputs = load_inputs(cfg)?;
    println!(
        "{} gold example(s) in {} file(s); {} system(s); split {} train / {} test",
        inputs.gold.len(),
        inputs.gold.file_sizes.len(),
        inputs.systems.len(),
        inputs.split.train.len(),
        inputs.split.test.len()
    );
    let report = validate_ensemble_inputs(&inputs.systems, &inputs.gold)?;
    for w in report.warnings() {
        println!("warning: {w}");
    }
    println!("ok");
    Ok(())
}

pub fn calibrate(cfg: &RunConfig) -> anyhow::Result<()> {
    let out = prepare_out_dir(cfg)?;
    let inputs = load_inputs(cfg)?;
    let set = fit_calibrators(&inputs.systems, &inputs.gold, &inputs.split.train, &cfg.metric, &cfg.logreg())?;
    let written = set.save(&out)?;
    cfg.save(&out)?;
    println!("{:<24} {:<6} {:>10} {:>10} {:>10}  cv log-likelihood by c", "system", "type", "c", "w", "b");
    for cal in set.by_key.values() {
        let cv: Vec<String> = cal.cv_log.iter().map(|(c, ll)| format!("{c:.3e}:{ll:.4}")).collect();
        println!(
            "{:<24} {:<6} {:>10.3e} {:>10.4} {:>10.4}  {}",
            cal.system_id,
            cal.answer_type.as_str(),
            cal.chosen_c,
            cal.w,
            cal.b,
            cv.join(" ")
        );
    }
    println!("wrote {} calibrator file(s) to {}", written.len(), out.display());
    Ok(())
}

pub fn fuse(cfg: &RunConfig) -> anyhow::Result<()> {
    let out = prepare_out_dir(cfg)?;
    let inputs = load_inputs(cfg)?;
    let cals = calibrators_for(cfg, &inputs, cfg.fusion.needs_calibration(), &out)?;
    let all: Vec<ExampleId> = inputs.gold.examples.keys().cloned().collect();
    let refs: Vec<&SystemPredictions> = inputs.systems.iter().collect();
    let preds = predict_ensemble(&refs, &all, &cfg.fusion, &cals)?;
    let name = format!("{:?}", cfg.eval_on).to_lowercase();
    let report = evaluate(&preds, &inputs.gold, &name, eval_ids(&inputs.split, &all, cfg.eval_on), &cfg.metric)?;
    write_predictions_jsonl(&out.join("predictions.jsonl"), &preds)?;
    write_json(&out.join("report.json"), &report)?;
    cfg.save(&out)?;
    println!("ensemble of {} system(s)", inputs.systems.len());
    println!("{}", report.summary());
    Ok(())
}

#[derive(Serialize)]
struct SplitReports<'a> {
    train: &'a EvalReport,
    test: &'a EvalReport,
}

pub fn search(cfg: &RunConfig) -> anyhow::Result<()> {
    let out = prepare_out_dir(cfg)?;
    let spec = cfg.search_spec();
    spec.validate()?;
    let inputs = load_inputs(cfg)?;
    let needed = spec.fusion.needs_calibration() || spec.selection_fusion.is_some_and(|f| f.needs_calibration());
    let cals = calibrators_for(cfg, &inputs, needed, &out)?;
    let pool = CandidatePool::new(inputs.systems)?;
    let (result, preds): (_, Predictions) = run_search(&pool, &inputs.gold, &inputs.split, &spec, &cals, &cfg.metric)?;

    write_json(&out.join("search_result.json"), &result)?;
    write_predictions_jsonl(&out.join("predictions.jsonl"), &preds)?;
    let reports = SplitReports {
        train: &result.final_reports.train,
        test: &result.final_reports.test,
    };
    write_json(&out.join("report.json"), &reports)?;
    cfg.save(&out)?;

    println!("pool: {} system(s); {} ensemble evaluation(s)", result.pool.len(), result.evaluations);
    println!("S' = {{{}}}", result.s_prime.join(", "));
    println!("L' = {{{}}}", result.l_prime.join(", "));
    if let Some(sel) = &result.selection_reports {
        println!("selection fusion:");
        println!("  {}", sel.train.summary());
        println!("  {}", sel.test.summary());
    }
    println!("{}", result.final_reports.train.summary());
    println!("{}", result.final_reports.test.summary());
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> anyhow::Result<()> {
    if cfg.gold.is_empty() {
        return Err(UsageError("no gold files given (--gold)".into()).into());
    }
    let path = cfg
        .eval_predictions
        .as_deref()
        .ok_or_else(|| UsageError("no prediction file given (--predictions)".into()))?;
    let gold = parse_gold_files(&cfg.gold)?;
    let preds = read_predictions_jsonl(path)?;
    let split = split_dev(&gold, cfg.split)?;
    let all: Vec<ExampleId> = gold.examples.keys().cloned().collect();
    let name = format!("{:?}", cfg.eval_on).to_lowercase();
    let report = evaluate(&preds, &gold, &name, eval_ids(&split, &all, cfg.eval_on), &cfg.metric)?;
    if cfg.out_dir.is_some() {
        let out = prepare_out_dir(cfg)?;
        write_json(&out.join("report.json"), &report)?;
        cfg.save(&out)?;
    }
    println!("{}", report.summary());
    Ok(())
}

fn synth_spec(cfg: &RunConfig, c: &SynthCmd) -> anyhow::Result<SynthSpec> {
    let preset_flags = c.preset.is_some() || c.systems.is_some() || c.examples.is_some();
    let mut spec = if let Some(path) = &c.spec {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?
    } else if let (Some(spec), false) = (&cfg.synth, preset_flags) {
        spec.clone()
    } else {
        let examples = c.examples.unwrap_or(500);
        let rho = c.rho.unwrap_or(0.8);
        match c.preset.as_deref().unwrap_or("pool") {
            "pool" => SynthSpec::pool(examples, c.systems.unwrap_or(6), cfg.seed),
            "clustered" => {
                let n = c.systems.unwrap_or(41);
                SynthSpec::clustered(examples, n / 2, n - n / 2, rho, cfg.seed)
            }
            "seed-variants" => SynthSpec::seed_variants(examples, c.systems.unwrap_or(4), 0.6, rho, cfg.seed),
            other => {
                return Err(UsageError(format!("unknown preset `{other}` (pool, clustered, seed-variants)")).into())
            }
        }
    };
    if let Some(seed) = c.run.seed {
        spec.seed = seed;
    }
    if let Some(rho) = c.rho {
        spec.rho = rho;
    }
    if let Some(sigma) = c.sigma {
        spec.sigma = sigma;
    }
    if let Some(n) = c.candidates {
        spec.candidates = n;
    }
    if let Some(n) = c.files {
        spec.n_files = n;
    }
    spec.validate()?;
    Ok(spec)
}

pub fn synth(cfg: &mut RunConfig, c: &SynthCmd) -> anyhow::Result<()> {
    let spec = synth_spec(cfg, c)?;
    let out = prepare_out_dir(cfg)?;
    let (gold, systems) = generate(&spec)?;
    let files = write_corpus(&out, &gold, &systems)?;
    cfg.seed = spec.seed;
    cfg.synth = Some(spec);
    cfg.save(&out)?;
    for f in &files {
        println!("{}", f.display());
    }
    Ok(())
}
