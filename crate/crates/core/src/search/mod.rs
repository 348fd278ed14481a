//! Ensemble selection over a candidate pool.
//!
//! All strategies optimize on the train split only, through an
//! [`Objective`] that holds train positions and nothing else. Subsets are
//! sorted pool indices; since the pool is sorted by id, comparing index
//! vectors compares id sets. Every argmax over subsets breaks ties towards
//! the smaller set, then the lexicographically smaller one.

mod cache;

use std::cmp::Ordering;
use std::collections::BTreeSet;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

pub use cache::{CandidatePool, ScoreCache, SubsetScore};

use crate::calibrate::CalibratorSet;
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::fuse::{join_predictions, FusionConfig, Predictions};
use crate::ingest::{GoldSet, Split};
use crate::metrics::{evaluate, EvalReport, MetricConfig};
use crate::span::{AnswerType, SystemId};

pub const DEFAULT_BUDGET: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Exhaustive,
    Greedy,
    SimpleGreedy,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "exhaustive" | "es" => Ok(Strategy::Exhaustive),
            "greedy" | "gs" => Ok(Strategy::Greedy),
            "simple-greedy" => Ok(Strategy::SimpleGreedy),
            other => Err(format!("unknown strategy `{other}` (exhaustive, greedy, simple-greedy)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub strategy: Strategy,
    pub k: usize,
    /// Greedy steps spent on short-answer F1; `k - k_s` go to long-answer F1.
    pub k_s: usize,
    /// Fusion used for the final predictions.
    pub fusion: FusionConfig,
    /// Fusion used while selecting models, when different from `fusion`.
    #[serde(default)]
    pub selection_fusion: Option<FusionConfig>,
    /// Keep only the best `n` systems by single-model train SA+LA F1.
    #[serde(default)]
    pub pool_top_n: Option<usize>,
    #[serde(default = "default_budget")]
    pub budget: u128,
    #[serde(default)]
    pub force: bool,
}

fn default_budget() -> u128 {
    DEFAULT_BUDGET
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec {
            strategy: Strategy::Greedy,
            k: 4,
            k_s: 0,
            fusion: FusionConfig::default(),
            selection_fusion: None,
            pool_top_n: None,
            budget: DEFAULT_BUDGET,
            force: false,
        }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.k_s > self.k {
            return Err(Error::Config(format!("k_s = {} exceeds k = {}", self.k_s, self.k)));
        }
        if self.pool_top_n == Some(0) {
            return Err(Error::Config("pool_top_n must be at least 1".into()));
        }
        self.fusion.validate()?;
        if let Some(sel) = &self.selection_fusion {
            sel.validate()?;
        }
        Ok(())
    }

    pub fn k_l(&self) -> usize {
        self.k - self.k_s
    }
}

/// One evaluated ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub phase: String,
    pub members: Vec<SystemId>,
    pub sa_f1: f64,
    pub la_f1: f64,
}

/// Train-split objective. Holds train positions only.
pub struct Objective<'a> {
    cache: &'a ScoreCache,
    positions: Vec<u32>,
}

impl<'a> Objective<'a> {
    pub fn new(cache: &'a ScoreCache, train: &Split) -> Result<Self> {
        if train.train.is_empty() {
            return Err(Error::EmptySplit);
        }
        let test: BTreeSet<&String> = train.test.iter().collect();
        if let Some(id) = train.train.iter().find(|id| test.contains(id)) {
            return Err(Error::Validation(format!("example `{id}` is in both train and test")));
        }
        Ok(Objective {
            cache,
            positions: cache.example_positions(&train.train)?,
        })
    }

    pub fn eval(&self, subset: &[usize]) -> SubsetScore {
        self.cache.eval_subset(subset, &self.positions)
    }

    pub fn n_systems(&self) -> usize {
        self.cache.n_systems()
    }
}

/// Records evaluations in order.
#[derive(Debug, Default)]
pub struct Trace {
    entries: Vec<(String, Vec<usize>, f64, f64)>,
}

impl Trace {
    fn push(&mut self, phase: &str, subset: &[usize], score: &SubsetScore) {
        self.entries
            .push((phase.to_string(), subset.to_vec(), score.sa_f1, score.la_f1));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn into_entries(self, pool: &CandidatePool) -> Vec<TraceEntry> {
        self.entries
            .into_iter()
            .map(|(phase, subset, sa_f1, la_f1)| TraceEntry {
                phase,
                members: pool.ids(&subset),
                sa_f1,
                la_f1,
            })
            .collect()
    }
}

/// `a` beats `b`: higher objective, then smaller set, then lexicographically smaller.
fn better(a: (f64, &[usize]), b: (f64, &[usize])) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => (a.1.len(), a.1) < (b.1.len(), b.1),
    }
}

fn argmax_subset(scored: &[(Vec<usize>, SubsetScore)], at: AnswerType) -> usize {
    let mut best = 0;
    for i in 1..scored.len() {
        if better((scored[i].1.f1(at), &scored[i].0), (scored[best].1.f1(at), &scored[best].0)) {
            best = i;
        }
    }
    best
}

fn eval_all(obj: &Objective, subsets: Vec<Vec<usize>>, phase: &str, trace: &mut Trace) -> Vec<(Vec<usize>, SubsetScore)> {
    let scores = par_map(&subsets, |s| obj.eval(s));
    let out: Vec<_> = subsets.into_iter().zip(scores).collect();
    for (s, score) in &out {
        trace.push(phase, s, score);
    }
    out
}

/// The selected ensembles. `s`/`l` are the per-objective builds, `s_prime`/
/// `l_prime` the ensembles whose short/long predictions are joined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub s: Vec<usize>,
    pub l: Vec<usize>,
    pub s_prime: Vec<usize>,
    pub l_prime: Vec<usize>,
}

/// Single-model train scores for every pool member, in pool order.
pub fn single_scores(obj: &Objective, trace: &mut Trace) -> Vec<SubsetScore> {
    let singles = (0..obj.n_systems()).map(|i| vec![i]).collect();
    eval_all(obj, singles, "single", trace)
        .into_iter()
        .map(|(_, s)| s)
        .collect()
}

/// The best `n` candidates by single-model SA+LA F1 (ties by index), sorted.
pub fn top_by_single_f1(singles: &[SubsetScore], candidates: &[usize], n: usize) -> Vec<usize> {
    let mut ranked = candidates.to_vec();
    ranked.sort_by(|&a, &b| {
        let (fa, fb) = (singles[a].sa_f1 + singles[a].la_f1, singles[b].sa_f1 + singles[b].la_f1);
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    ranked.truncate(n);
    ranked.sort_unstable();
    ranked
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Scores every `k`-subset of `candidates`; returns the SA-best and LA-best
/// subsets. `k_s == 0` joins both answer types from the LA-best ensemble,
/// `k_s == k` from the SA-best one; otherwise short from SA-best and long
/// from LA-best.
pub fn exhaustive_search(
    obj: &Objective,
    candidates: &[usize],
    k: usize,
    k_s: usize,
    budget: Option<u128>,
    trace: &mut Trace,
) -> Result<Selection> {
    let k = k.min(candidates.len());
    let evaluations = binomial(candidates.len(), k);
    if let Some(budget) = budget {
        if evaluations > budget {
            return Err(Error::BudgetExceeded { evaluations, budget });
        }
    }
    let subsets: Vec<Vec<usize>> = candidates.iter().copied().combinations(k).collect();
    let scored = eval_all(obj, subsets, "exhaustive", trace);
    let s = scored[argmax_subset(&scored, AnswerType::Short)].0.clone();
    let l = scored[argmax_subset(&scored, AnswerType::Long)].0.clone();
    let (s_prime, l_prime) = if k_s == 0 {
        (l.clone(), l.clone())
    } else if k_s >= k {
        (s.clone(), s.clone())
    } else {
        (s.clone(), l.clone())
    };
    Ok(Selection { s, l, s_prime, l_prime })
}

fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut u: Vec<usize> = a.iter().chain(b).copied().collect();
    u.sort_unstable();
    u.dedup();
    u
}

/// Greedy forward build of up to `steps` members on `at`, truncated to its
/// best prefix (ties keep the shorter prefix). Returns members in addition order.
pub fn greedy_build(obj: &Objective, candidates: &[usize], steps: usize, at: AnswerType, trace: &mut Trace) -> Vec<usize> {
    let phase = format!("greedy-{at}");
    let mut order: Vec<usize> = Vec::new();
    let mut prefix_scores: Vec<f64> = Vec::new();
    for _ in 0..steps {
        let options: Vec<usize> = candidates.iter().copied().filter(|c| !order.contains(c)).collect();
        if options.is_empty() {
            break;
        }
        let subsets: Vec<Vec<usize>> = options.iter().map(|&x| union(&order, &[x])).collect();
        let scored = eval_all(obj, subsets, &phase, trace);
        let best = argmax_subset(&scored, at);
        order.push(options[best]);
        prefix_scores.push(scored[best].1.f1(at));
    }
    let mut best_len = 0;
    for (i, &score) in prefix_scores.iter().enumerate() {
        if best_len == 0 || score > prefix_scores[best_len - 1] {
            best_len = i + 1;
        }
    }
    order.truncate(best_len);
    order
}

/// `base ∪ x` for the best `x ⊆ extra` on `at` (the empty `x` included).
pub fn augment(obj: &Objective, base: &[usize], extra: &[usize], at: AnswerType, trace: &mut Trace) -> Vec<usize> {
    let base = union(base, &[]);
    let mut unions: BTreeSet<Vec<usize>> = BTreeSet::new();
    for r in 0..=extra.len() {
        for x in extra.iter().copied().combinations(r) {
            let u = union(&base, &x);
            if !u.is_empty() {
                unions.insert(u);
            }
        }
    }
    let scored = eval_all(obj, unions.into_iter().collect(), &format!("augment-{at}"), trace);
    scored[argmax_subset(&scored, at)].0.clone()
}

/// Greedy search with `k_s` short-answer steps and `k - k_s` long-answer
/// steps, each build augmented by the best subset of the other.
pub fn greedy_search(obj: &Objective, candidates: &[usize], k: usize, k_s: usize, trace: &mut Trace) -> Result<Selection> {
    if k_s > k {
        return Err(Error::Config(format!("k_s = {k_s} exceeds k = {k}")));
    }
    let s_order = greedy_build(obj, candidates, k_s, AnswerType::Short, trace);
    let l_order = greedy_build(obj, candidates, k - k_s, AnswerType::Long, trace);
    let s = union(&s_order, &[]);
    let l = union(&l_order, &[]);
    let (s_prime, l_prime) = if s.is_empty() {
        let l_prime = augment(obj, &l, &s, AnswerType::Long, trace);
        (l_prime.clone(), l_prime)
    } else if l.is_empty() {
        let s_prime = augment(obj, &s, &l, AnswerType::Short, trace);
        (s_prime.clone(), s_prime)
    } else {
        (
            augment(obj, &s, &l, AnswerType::Short, trace),
            augment(obj, &l, &s, AnswerType::Long, trace),
        )
    };
    Ok(Selection { s, l, s_prime, l_prime })
}

/// The `k` best single models by SA+LA train F1, used for both answer types.
pub fn simple_greedy(obj: &Objective, singles: &[SubsetScore], candidates: &[usize], k: usize, trace: &mut Trace) -> Selection {
    let chosen = top_by_single_f1(singles, candidates, k);
    let score = obj.eval(&chosen);
    trace.push("simple-greedy", &chosen, &score);
    Selection {
        s: chosen.clone(),
        l: chosen.clone(),
        s_prime: chosen.clone(),
        l_prime: chosen,
    }
}

/// Train/test reports for one fusion configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReports {
    pub fusion: FusionConfig,
    pub train: EvalReport,
    pub test: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub spec: SearchSpec,
    /// Pool after optional truncation.
    pub pool: Vec<SystemId>,
    pub s: Vec<SystemId>,
    pub l: Vec<SystemId>,
    pub s_prime: Vec<SystemId>,
    pub l_prime: Vec<SystemId>,
    /// Reports of the joined predictions under `spec.fusion`.
    pub final_reports: PhaseReports,
    /// Reports under `spec.selection_fusion`, when it differs.
    pub selection_reports: Option<PhaseReports>,
    pub evaluations: usize,
    pub trace: Vec<TraceEntry>,
}

fn joined_reports(
    cache: &ScoreCache,
    sel: &Selection,
    fusion: FusionConfig,
    gold: &GoldSet,
    split: &Split,
    metric: &MetricConfig,
) -> Result<(Predictions, PhaseReports)> {
    let short_src = cache.predict(&sel.s_prime);
    let long_src = cache.predict(&sel.l_prime);
    let joined = join_predictions(&short_src, &long_src)?;
    let train = evaluate(&joined, gold, "train", &split.train, metric)?;
    let test = evaluate(&joined, gold, "test", &split.test, metric)?;
    Ok((joined, PhaseReports { fusion, train, test }))
}

/// Runs the configured search and returns the result with the joined
/// predictions of `S'`/`L'` under the final fusion.
pub fn run_search(
    pool: &CandidatePool,
    gold: &GoldSet,
    split: &Split,
    spec: &SearchSpec,
    calibrators: &CalibratorSet,
    metric: &MetricConfig,
) -> Result<(SearchResult, Predictions)> {
    spec.validate()?;
    let selection_fusion = spec.selection_fusion.unwrap_or(spec.fusion);
    let sel_cache = ScoreCache::build(pool, gold, &selection_fusion, calibrators, metric)?;
    let obj = Objective::new(&sel_cache, split)?;
    let mut trace = Trace::default();

    let singles = single_scores(&obj, &mut trace);
    let all: Vec<usize> = (0..pool.len()).collect();
    let candidates = match spec.pool_top_n {
        Some(n) => top_by_single_f1(&singles, &all, n),
        None => all,
    };
    if candidates.len() < spec.k {
        return Err(Error::Config(format!(
            "pool has {} systems, fewer than k = {}",
            candidates.len(),
            spec.k
        )));
    }

    let sel = match spec.strategy {
        Strategy::Exhaustive => exhaustive_search(
            &obj,
            &candidates,
            spec.k,
            spec.k_s,
            (!spec.force).then_some(spec.budget),
            &mut trace,
        )?,
        Strategy::Greedy => greedy_search(&obj, &candidates, spec.k, spec.k_s, &mut trace)?,
        Strategy::SimpleGreedy => simple_greedy(&obj, &singles, &candidates, spec.k, &mut trace),
    };

    let distinct_selection = spec.selection_fusion.is_some_and(|f| f != spec.fusion);
    let (preds, final_reports, selection_reports) = if distinct_selection {
        let (_, sel_reports) = joined_reports(&sel_cache, &sel, selection_fusion, gold, split, metric)?;
        let final_cache = ScoreCache::build(pool, gold, &spec.fusion, calibrators, metric)?;
        let (preds, reports) = joined_reports(&final_cache, &sel, spec.fusion, gold, split, metric)?;
        (preds, reports, Some(sel_reports))
    } else {
        let (preds, reports) = joined_reports(&sel_cache, &sel, spec.fusion, gold, split, metric)?;
        (preds, reports, None)
    };

    let evaluations = trace.len();
    Ok((
        SearchResult {
            spec: spec.clone(),
            pool: pool.ids(&candidates),
            s: pool.ids(&sel.s),
            l: pool.ids(&sel.l),
            s_prime: pool.ids(&sel.s_prime),
            l_prime: pool.ids(&sel.l_prime),
            final_reports,
            selection_reports,
            evaluations,
            trace: trace.into_entries(pool),
        },
        preds,
    ))
}
