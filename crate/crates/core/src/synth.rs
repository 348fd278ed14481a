//! Synthetic corpora with controllable per-system accuracy and correlation,
//! plus an independent brute-force oracle for exhaustive search.
//!
//! Each example has a handful of paragraph spans. Every system decides per
//! example and answer type whether it is right, using a Gaussian copula: a
//! latent `u = sqrt(rho) * z_cluster + sqrt(1 - rho) * e_system` is drawn and
//! the system is right when `Phi(u) < accuracy`. Systems in the same cluster
//! therefore err together, and also share their distractor spans with
//! probability `rho`. A right system ranks the gold span (or the null span on
//! unanswerable examples) first; a wrong one ranks a distractor first. Raw
//! scores are an affinity for the rank plus Gaussian noise, kept positive.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::aggregate::AggregationStrategy;
use crate::calibrate::{CalibratorSet, Normalization};
use crate::error::{Error, Result};
use crate::fuse::FusionConfig;
use crate::ingest::{write_gold_to, write_predictions, ExampleCandidates, GoldAnnotation, GoldSet, SystemPredictions};
use crate::metrics::{MetricConfig, ShortMatch};
use crate::span::{AnswerType, Candidate, ExampleId, Span, SystemId};

/// Largest pool the oracle accepts.
pub const ORACLE_MAX_SYSTEMS: usize = 12;

const PARAGRAPH_STRIDE: u32 = 100;
const MIN_SCORE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub id: SystemId,
    /// Probability of getting an example right, per answer type.
    pub accuracy: f64,
    /// Systems sharing a cluster share latent draws and distractors.
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_examples: usize,
    pub systems: Vec<SystemSpec>,
    /// Within-cluster correlation of correctness.
    pub rho: f64,
    /// Standard deviation of score noise.
    pub sigma: f64,
    /// Fraction of examples with a gold long answer.
    pub answerable_fraction: f64,
    /// Fraction of long-answerable examples that also have a short answer.
    pub short_fraction: f64,
    /// Candidates per example and answer type, at most 20.
    pub candidates: usize,
    pub n_annotators: usize,
    /// Gold is written as this many files of near-equal size.
    pub n_files: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec::pool(500, 6, 0)
    }
}

impl SynthSpec {
    fn base(n_examples: usize, systems: Vec<SystemSpec>, seed: u64) -> Self {
        SynthSpec {
            n_examples,
            systems,
            rho: 0.5,
            sigma: 0.5,
            answerable_fraction: 0.6,
            short_fraction: 0.6,
            candidates: 8,
            n_annotators: 5,
            n_files: 5,
            seed,
        }
    }

    /// `n_systems` systems with accuracies spread over [0.4, 0.7], grouped
    /// in clusters of three.
    pub fn pool(n_examples: usize, n_systems: usize, seed: u64) -> Self {
        let systems = (0..n_systems)
            .map(|i| SystemSpec {
                id: format!("m{i:02}"),
                accuracy: 0.4 + 0.3 * i as f64 / (n_systems.max(2) - 1) as f64,
                cluster: i / 3,
            })
            .collect();
        SynthSpec::base(n_examples, systems, seed)
    }

    /// `n_strong` correlated strong systems in one cluster plus `n_weak`
    /// weaker systems, each in its own cluster.
    pub fn clustered(n_examples: usize, n_strong: usize, n_weak: usize, rho: f64, seed: u64) -> Self {
        let strong = (0..n_strong).map(|i| SystemSpec {
            id: format!("strong{i:02}"),
            accuracy: 0.66 + 0.04 * i as f64 / n_strong.max(2) as f64,
            cluster: 0,
        });
        let weak = (0..n_weak).map(|i| SystemSpec {
            id: format!("weak{i:02}"),
            accuracy: 0.48 + 0.06 * i as f64 / n_weak.max(2) as f64,
            cluster: 1 + i,
        });
        SynthSpec {
            rho,
            ..SynthSpec::base(n_examples, strong.chain(weak).collect(), seed)
        }
    }

    /// `n_variants` runs of one model trained with different seeds: same
    /// accuracy, one shared cluster.
    pub fn seed_variants(n_examples: usize, n_variants: usize, accuracy: f64, rho: f64, seed: u64) -> Self {
        let systems = (0..n_variants)
            .map(|i| SystemSpec {
                id: format!("seed{i}"),
                accuracy,
                cluster: 0,
            })
            .collect();
        SynthSpec {
            rho,
            ..SynthSpec::base(n_examples, systems, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        prob("rho", self.rho)?;
        prob("answerable_fraction", self.answerable_fraction)?;
        prob("short_fraction", self.short_fraction)?;
        for s in &self.systems {
            prob(&format!("accuracy of `{}`", s.id), s.accuracy)?;
        }
        if self.systems.is_empty() {
            return Err(Error::Config("synthetic spec has no systems".into()));
        }
        let mut ids: Vec<&str> = self.systems.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate system id `{}`", w[0])));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Config(format!("sigma = {} must be finite and >= 0", self.sigma)));
        }
        if !(2..=20).contains(&self.candidates) {
            return Err(Error::Config(format!("candidates = {} must be in 2..=20", self.candidates)));
        }
        if self.n_examples == 0 || self.n_annotators == 0 || self.n_files == 0 {
            return Err(Error::Config("n_examples, n_annotators and n_files must be >= 1".into()));
        }
        if self.n_files > self.n_examples {
            return Err(Error::Config("more gold files than examples".into()));
        }
        Ok(())
    }
}

/// Derives an independent RNG for one `(stream, a, b)` coordinate.
fn rng_for(seed: u64, stream: u64, a: u64, b: u64) -> ChaCha8Rng {
    fn splitmix(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^ (x >> 31)
    }
    let mut h = splitmix(seed);
    for v in [stream, a, b] {
        h = splitmix(h ^ v);
    }
    ChaCha8Rng::seed_from_u64(h)
}

const STREAM_GOLD: u64 = 1;
const STREAM_CLUSTER: u64 = 2;
const STREAM_SYSTEM: u64 = 3;

/// The document layout and gold of one example.
struct ExampleTruth {
    paragraphs: Vec<Span>,
    /// Index into `paragraphs`.
    gold_long: Option<usize>,
    gold_short: Option<Span>,
}

fn short_inside<R: Rng>(rng: &mut R, para: &Span) -> Span {
    let (start, end) = para.bounds().expect("paragraphs are non-null");
    let len = rng.random_range(1..=4u32);
    let offset = rng.random_range(0..(end - start - len));
    Span::new(start + offset, start + offset + len).expect("len >= 1")
}

fn example_truth(spec: &SynthSpec, e: usize) -> (ExampleTruth, Vec<GoldAnnotation>) {
    let mut rng = rng_for(spec.seed, STREAM_GOLD, e as u64, 0);
    let n_paragraphs = spec.candidates + 4;
    let paragraphs: Vec<Span> = (0..n_paragraphs as u32)
        .map(|p| {
            let start = p * PARAGRAPH_STRIDE;
            Span::new(start, start + rng.random_range(20..80)).expect("non-empty")
        })
        .collect();
    let gold_long = rng
        .random_bool(spec.answerable_fraction)
        .then(|| rng.random_range(0..n_paragraphs));
    let gold_short = gold_long
        .filter(|_| rng.random_bool(spec.short_fraction))
        .map(|p| short_inside(&mut rng, &paragraphs[p]));

    let n = spec.n_annotators;
    let mut anns = vec![GoldAnnotation::null(); n];
    match gold_long {
        Some(p) => {
            // all but possibly one annotator mark the answer
            let abstain = if n >= 3 && rng.random_bool(0.3) { Some(rng.random_range(0..n)) } else { None };
            for (i, a) in anns.iter_mut().enumerate() {
                if Some(i) != abstain {
                    *a = GoldAnnotation::new(paragraphs[p], gold_short.into_iter().collect()).expect("valid");
                }
            }
        }
        None => {
            // a lone dissenting annotator stays below the default threshold
            if n >= 2 && rng.random_bool(0.2) {
                let p = rng.random_range(0..n_paragraphs);
                anns[rng.random_range(0..n)] = GoldAnnotation::new(paragraphs[p], Vec::new()).expect("valid");
            }
        }
    }
    (
        ExampleTruth {
            paragraphs,
            gold_long,
            gold_short,
        },
        anns,
    )
}

/// Per-cluster draws for one example: latent z and a distractor ranking per type.
struct ClusterDraw {
    z: [f64; 2],
    long_distractors: Vec<usize>,
    short_distractors: Vec<Span>,
}

fn distractor_order<R: Rng>(rng: &mut R, truth: &ExampleTruth) -> Vec<usize> {
    let mut order: Vec<usize> = (0..truth.paragraphs.len())
        .filter(|&p| Some(p) != truth.gold_long)
        .collect();
    order.shuffle(rng);
    order
}

fn short_distractors<R: Rng>(rng: &mut R, truth: &ExampleTruth, count: usize) -> Vec<Span> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        // favor the gold paragraph, where real short-answer confusions live
        let p = match truth.gold_long {
            Some(g) if rng.random_bool(0.5) => g,
            _ => rng.random_range(0..truth.paragraphs.len()),
        };
        let s = short_inside(rng, &truth.paragraphs[p]);
        if Some(s) != truth.gold_short && !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

fn cluster_draw(spec: &SynthSpec, truth: &ExampleTruth, e: usize, cluster: usize) -> ClusterDraw {
    let mut rng = rng_for(spec.seed, STREAM_CLUSTER, e as u64, cluster as u64);
    ClusterDraw {
        z: [rng.sample(StandardNormal), rng.sample(StandardNormal)],
        long_distractors: distractor_order(&mut rng, truth),
        short_distractors: short_distractors(&mut rng, truth, spec.candidates),
    }
}

/// Ranked spans for one system and answer type, best first: the intended
/// top span, then the rest. Scores decrease with rank before noise.
fn scored<R: Rng>(rng: &mut R, spec: &SynthSpec, ranked: Vec<Span>, right: bool) -> Vec<Candidate> {
    let top_affinity = if right { 3.0 } else { 2.2 };
    let mut out: Vec<Candidate> = ranked
        .into_iter()
        .enumerate()
        .map(|(r, span)| {
            let noise: f64 = rng.sample(StandardNormal);
            let affinity = if r == 0 { top_affinity } else { 1.6 - 0.15 * r as f64 };
            Candidate::new(span, (affinity + spec.sigma * noise).max(MIN_SCORE))
        })
        .collect();
    out.sort_by(crate::span::compare_candidates);
    out
}

fn system_candidates(
    spec: &SynthSpec,
    sys: &SystemSpec,
    m: usize,
    e: usize,
    truth: &ExampleTruth,
    draw: &ClusterDraw,
    normal: &Normal,
) -> ExampleCandidates {
    let mut rng = rng_for(spec.seed, STREAM_SYSTEM, e as u64, m as u64);
    let mut right = [false; 2];
    for (t, r) in right.iter_mut().enumerate() {
        let eps: f64 = rng.sample(StandardNormal);
        let u = spec.rho.sqrt() * draw.z[t] + (1.0 - spec.rho).sqrt() * eps;
        *r = normal.cdf(u) < sys.accuracy;
    }
    let shared = rng.random_bool(spec.rho);
    let k = spec.candidates;

    let long_d = if shared { draw.long_distractors.clone() } else { distractor_order(&mut rng, truth) };
    let long_target = truth.gold_long.map(|p| truth.paragraphs[p]).unwrap_or(Span::Null);
    let long = ranked_spans(&mut rng, long_target, right[0], long_d.iter().map(|&p| truth.paragraphs[p]), k);

    let short_d = if shared { draw.short_distractors.clone() } else { short_distractors(&mut rng, truth, k) };
    let short_target = truth.gold_short.unwrap_or(Span::Null);
    let short = ranked_spans(&mut rng, short_target, right[1], short_d.into_iter(), k);

    ExampleCandidates {
        long: scored(&mut rng, spec, long, right[0]),
        short: scored(&mut rng, spec, short, right[1]),
    }
}

/// `k` distinct spans, always including the null span. A right system puts
/// `target` first; a wrong one a distractor, with `target` sometimes lower.
fn ranked_spans<R: Rng>(rng: &mut R, target: Span, right: bool, distractors: impl Iterator<Item = Span>, k: usize) -> Vec<Span> {
    let mut out = Vec::with_capacity(k);
    let mut distractors = distractors.filter(|s| *s != target && !s.is_null());
    if right {
        out.push(target);
    } else {
        out.extend(distractors.next());
        if rng.random_bool(0.6) {
            out.push(target);
        }
    }
    if !out.contains(&Span::Null) {
        out.push(Span::Null);
    }
    out.extend(distractors.take(k.saturating_sub(out.len())));
    out.truncate(k);
    out
}

/// Generates a gold set (split into `n_files` files) and one prediction set
/// per system. Deterministic in the spec.
pub fn generate(spec: &SynthSpec) -> Result<(GoldSet, Vec<SystemPredictions>)> {
    spec.validate()?;
    let normal = Normal::standard();
    let mut clusters: Vec<usize> = spec.systems.iter().map(|s| s.cluster).collect();
    clusters.sort_unstable();
    clusters.dedup();

    let mut systems: Vec<SystemPredictions> = spec.systems.iter().map(|s| SystemPredictions::new(s.id.clone())).collect();
    let mut examples: Vec<(ExampleId, Vec<GoldAnnotation>)> = Vec::with_capacity(spec.n_examples);
    let width = spec.n_examples.to_string().len();
    for e in 0..spec.n_examples {
        let id = format!("ex{e:0width$}");
        let (truth, anns) = example_truth(spec, e);
        let draws: BTreeMap<usize, ClusterDraw> = clusters.iter().map(|&c| (c, cluster_draw(spec, &truth, e, c))).collect();
        for (m, sys) in spec.systems.iter().enumerate() {
            let cands = system_candidates(spec, sys, m, e, &truth, &draws[&sys.cluster], &normal);
            systems[m].examples.insert(id.clone(), cands);
        }
        examples.push((id, anns));
    }

    let mut gold = GoldSet::default();
    let per_file = spec.n_examples / spec.n_files;
    let extra = spec.n_examples % spec.n_files;
    let mut rest = examples.into_iter();
    for f in 0..spec.n_files {
        let size = per_file + usize::from(f < extra);
        gold.push_file(rest.by_ref().take(size).collect())?;
    }
    Ok((gold, systems))
}

/// Writes `gold_NN.jsonl` files and `predictions/<system>.jsonl`; returns the
/// written paths, gold first.
pub fn write_corpus(dir: &Path, gold: &GoldSet, systems: &[SystemPredictions]) -> Result<Vec<PathBuf>> {
    let pred_dir = dir.join("predictions");
    std::fs::create_dir_all(&pred_dir).map_err(|e| Error::io(&pred_dir, e))?;
    let mut written = Vec::new();
    let mut entries = gold.examples.iter();
    for (f, &size) in gold.file_sizes.iter().enumerate() {
        let path = dir.join(format!("gold_{f:02}.jsonl"));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        write_gold_to(&mut w, entries.by_ref().take(size))
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    for sys in systems {
        let path = pred_dir.join(format!("{}.jsonl", sys.system_id));
        write_predictions(&path, sys)?;
        written.push(path);
    }
    Ok(written)
}

/// Argmax subsets found by [`oracle_exhaustive`], with every subset's train F1s
/// in enumeration order.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub sa_best: Vec<SystemId>,
    pub la_best: Vec<SystemId>,
    pub scores: Vec<(Vec<SystemId>, f64, f64)>,
}

/// Brute-force exhaustive search written straight from the definitions,
/// sharing only data types with the main pipeline: every `k`-subset is fused,
/// predicted and scored from the raw candidates.
pub fn oracle_exhaustive(
    systems: &[SystemPredictions],
    k: usize,
    gold: &GoldSet,
    train_ids: &[ExampleId],
    fusion: &FusionConfig,
    calibrators: &CalibratorSet,
    metric: &MetricConfig,
) -> Result<OracleResult> {
    if systems.len() > ORACLE_MAX_SYSTEMS {
        return Err(Error::Config(format!(
            "oracle supports at most {ORACLE_MAX_SYSTEMS} systems, got {}",
            systems.len()
        )));
    }
    if k == 0 || k > systems.len() {
        return Err(Error::Config(format!("k = {k} is not in 1..={}", systems.len())));
    }
    let mut sorted: Vec<&SystemPredictions> = systems.iter().collect();
    sorted.sort_by(|a, b| a.system_id.cmp(&b.system_id));

    // aggregated[s][type][example] = span -> score
    let mut aggregated: Vec<[Vec<BTreeMap<Span, f64>>; 2]> = Vec::new();
    for sys in &sorted {
        let mut per_type: [Vec<BTreeMap<Span, f64>>; 2] = [Vec::new(), Vec::new()];
        for (t, at) in AnswerType::ALL.into_iter().enumerate() {
            let tf = fusion.get(at);
            let cal = match tf.normalization {
                Normalization::None => None,
                Normalization::Logreg => Some(calibrators.get(&sys.system_id, at).ok_or_else(|| Error::MissingCalibrator {
                    system: sys.system_id.clone(),
                    answer_type: at,
                })?),
            };
            for id in train_ids {
                let mut by_span: BTreeMap<Span, Vec<f64>> = BTreeMap::new();
                for c in sys.candidates(id, at) {
                    let score = match cal {
                        Some(cal) => {
                            let z = cal.w * c.score + cal.b;
                            let p = if z >= 0.0 { 1.0 / (1.0 + (-z).exp()) } else { z.exp() / (1.0 + z.exp()) };
                            p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
                        }
                        None => c.score,
                    };
                    by_span.entry(c.span).or_default().push(score);
                }
                let mut collapsed = BTreeMap::new();
                for (span, mut scores) in by_span {
                    scores.sort_by(|a, b| b.total_cmp(a));
                    collapsed.insert(span, oracle_aggregate(&scores, tf.aggregation)?);
                }
                per_type[t].push(collapsed);
            }
        }
        aggregated.push(per_type);
    }

    let mut scores = Vec::new();
    let mut best_sa: Option<(f64, Vec<usize>)> = None;
    let mut best_la: Option<(f64, Vec<usize>)> = None;
    for subset in k_subsets(sorted.len(), k) {
        let mut counts = [[0u64; 3]; 2]; // [type][tp, fp, fn]
        for (e, id) in train_ids.iter().enumerate() {
            let anns = gold
                .annotations(id)
                .ok_or_else(|| Error::Validation(format!("train example `{id}` not in gold")))?;
            let fused = |t: usize| {
                let mut sum: BTreeMap<Span, f64> = BTreeMap::new();
                for &s in &subset {
                    for (&span, &v) in &aggregated[s][t][e] {
                        *sum.entry(span).or_insert(0.0) += v;
                    }
                }
                sum.into_iter().map(|(s, v)| (s, v / subset.len() as f64)).collect::<Vec<_>>()
            };
            let long_scores = fused(0);
            let long = oracle_best(long_scores.iter().copied());
            let short = if long.is_null() {
                Span::Null
            } else {
                let short_scores = fused(1);
                oracle_best(short_scores.into_iter().filter(|&(s, _)| {
                    !fusion.restrict_short_to_long || s.is_null() || long.contains(&s)
                }))
            };
            for (t, pred) in [(0, long), (1, short)] {
                let with_answer = anns
                    .iter()
                    .filter(|a| if t == 0 { !a.long.is_null() } else { !a.short.is_empty() })
                    .count();
                let answerable = with_answer >= metric.threshold;
                let hit = !pred.is_null()
                    && anns.iter().any(|a| {
                        if t == 0 {
                            a.long == pred
                        } else {
                            match metric.short_match {
                                ShortMatch::Strict => a.short == [pred],
                                ShortMatch::Relaxed => a.short.contains(&pred),
                            }
                        }
                    });
                if !pred.is_null() {
                    if answerable && hit {
                        counts[t][0] += 1;
                    } else {
                        counts[t][1] += 1;
                    }
                }
                if answerable && !(hit && !pred.is_null()) {
                    counts[t][2] += 1;
                }
            }
        }
        let f1 = |c: [u64; 3]| {
            let denom = 2 * c[0] + c[1] + c[2];
            if denom == 0 { 0.0 } else { (2 * c[0]) as f64 / denom as f64 }
        };
        let (la, sa) = (f1(counts[0]), f1(counts[1]));
        // subsets arrive in lexicographic order, so the first maximum wins ties
        if best_sa.as_ref().is_none_or(|b| sa > b.0) {
            best_sa = Some((sa, subset.clone()));
        }
        if best_la.as_ref().is_none_or(|b| la > b.0) {
            best_la = Some((la, subset.clone()));
        }
        scores.push((subset.iter().map(|&i| sorted[i].system_id.clone()).collect(), sa, la));
    }
    let ids = |v: Vec<usize>| v.into_iter().map(|i| sorted[i].system_id.clone()).collect();
    Ok(OracleResult {
        sa_best: ids(best_sa.expect("at least one subset").1),
        la_best: ids(best_la.expect("at least one subset").1),
        scores,
    })
}

fn oracle_aggregate(desc: &[f64], strategy: AggregationStrategy) -> Result<f64> {
    Ok(match strategy {
        AggregationStrategy::Max => desc[0],
        AggregationStrategy::Exs { beta } => desc.iter().enumerate().map(|(i, p)| p * beta.powi(i as i32)).sum(),
        AggregationStrategy::Rrs => desc.iter().enumerate().map(|(i, p)| p / (i + 1) as f64).sum(),
        AggregationStrategy::NoisyOr => {
            if desc.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Config("noisy-or needs scores in [0, 1]".into()));
            }
            1.0 - desc.iter().map(|p| 1.0 - p).product::<f64>()
        }
    })
}

/// Highest score, ties to the smaller span with null last; an unscored
/// null competes at 0.
fn oracle_best(entries: impl Iterator<Item = (Span, f64)>) -> Span {
    let entries: Vec<(Span, f64)> = entries.collect();
    let null_score = entries.iter().find(|e| e.0.is_null()).map_or(0.0, |e| e.1);
    let mut best = (Span::Null, null_score);
    for &(span, v) in entries.iter().filter(|e| !e.0.is_null()) {
        let wins = match v.total_cmp(&best.1) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => best.0.is_null() || span.bounds() < best.0.bounds(),
        };
        if wins {
            best = (span, v);
        }
    }
    best.0
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}
