//! Per-system aggregated score cache.
//!
//! Every `(system, example, answer type)` is aggregated once. Within an
//! example, all spans any system scored are interned into one sorted table
//! (null last, so table order is the tie-break order), and each system's
//! entry stores `(table index, score)`. Evaluating a subset is then a
//! scatter-add into a scratch buffer followed by an argmax.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use crate::aggregate::aggregate_system;
use crate::calibrate::{CalibratorSet, Normalization};
use crate::error::{Error, Result};
use crate::exec::{par_map, try_par_map};
use crate::fuse::{FusionConfig, Prediction, Predictions};
use crate::ingest::{GoldSet, SystemPredictions};
use crate::metrics::{self, Counts, MetricConfig, Outcome};
use crate::span::{rank_cmp, AnswerType, ExampleId, Span, SystemId};

/// Systems available to a search, sorted by id so that index order is id order.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    systems: Vec<SystemPredictions>,
}

impl CandidatePool {
    pub fn new(mut systems: Vec<SystemPredictions>) -> Result<Self> {
        systems.sort_by(|a, b| a.system_id.cmp(&b.system_id));
        if let Some(w) = systems.windows(2).find(|w| w[0].system_id == w[1].system_id) {
            return Err(Error::Validation(format!("duplicate system_id `{}`", w[0].system_id)));
        }
        if systems.is_empty() {
            return Err(Error::Validation("empty candidate pool".into()));
        }
        Ok(CandidatePool { systems })
    }

    pub fn len(&self) -> usize {
        self.systems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.systems.is_empty()
    }

    pub fn systems(&self) -> &[SystemPredictions] {
        &self.systems
    }

    pub fn id(&self, index: usize) -> &SystemId {
        &self.systems[index].system_id
    }

    pub fn ids(&self, subset: &[usize]) -> Vec<SystemId> {
        subset.iter().map(|&i| self.id(i).clone()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.systems
            .binary_search_by(|s| s.system_id.as_str().cmp(id))
            .ok()
    }
}

/// Interned spans and per-system entries for one answer type.
#[derive(Debug, Default)]
struct TypeTable {
    /// `spans[span_offsets[e]..span_offsets[e + 1]]` is example `e`'s table.
    span_offsets: Vec<usize>,
    spans: Vec<Span>,
    /// Parallel to `spans`: the span exactly matches gold for its example.
    gold_match: Vec<bool>,
    answerable: Vec<bool>,
    /// Per system: `entries[s][entry_offsets[s][e]..entry_offsets[s][e + 1]]`.
    entry_offsets: Vec<Vec<u32>>,
    entry_index: Vec<Vec<u32>>,
    entry_score: Vec<Vec<f64>>,
    max_table: usize,
}

impl TypeTable {
    fn table(&self, e: usize) -> &[Span] {
        &self.spans[self.span_offsets[e]..self.span_offsets[e + 1]]
    }

    fn matches(&self, e: usize) -> &[bool] {
        &self.gold_match[self.span_offsets[e]..self.span_offsets[e + 1]]
    }

    fn entries(&self, s: usize, e: usize) -> (&[u32], &[f64]) {
        let (a, b) = (
            self.entry_offsets[s][e] as usize,
            self.entry_offsets[s][e + 1] as usize,
        );
        (&self.entry_index[s][a..b], &self.entry_score[s][a..b])
    }
}

/// Reusable buffers for one evaluating thread.
struct Scratch {
    acc: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<u32>,
}

impl Scratch {
    fn new(len: usize) -> Self {
        Scratch {
            acc: vec![0.0; len],
            seen: vec![false; len],
            touched: Vec::with_capacity(len),
        }
    }
}

pub struct ScoreCache {
    ids: Vec<SystemId>,
    examples: Vec<ExampleId>,
    example_index: HashMap<ExampleId, u32>,
    long: TypeTable,
    short: TypeTable,
    restrict_short_to_long: bool,
    aggregations: u64,
    lookups: AtomicU64,
}

/// Train F1s of one subset, plus the raw counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetScore {
    pub sa_f1: f64,
    pub la_f1: f64,
    pub long: Counts,
    pub short: Counts,
}

impl SubsetScore {
    pub fn f1(&self, answer_type: AnswerType) -> f64 {
        match answer_type {
            AnswerType::Long => self.la_f1,
            AnswerType::Short => self.sa_f1,
        }
    }
}

impl ScoreCache {
    /// Aggregates every system on every gold example under `fusion`.
    pub fn build(
        pool: &CandidatePool,
        gold: &GoldSet,
        fusion: &FusionConfig,
        calibrators: &CalibratorSet,
        metric: &MetricConfig,
    ) -> Result<Self> {
        fusion.validate()?;
        metric.validate()?;
        let examples: Vec<ExampleId> = gold.examples.keys().cloned().collect();
        let example_index = examples
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        let mut tables = [TypeTable::default(), TypeTable::default()];
        for (slot, at) in AnswerType::ALL.into_iter().enumerate() {
            let tf = fusion.get(at);
            // agg[s][e]: span-ordered aggregated scores
            let agg: Vec<Vec<Vec<(Span, f64)>>> = try_par_map(pool.systems(), |sys| {
                let cal = match tf.normalization {
                    Normalization::None => None,
                    Normalization::Logreg => Some(calibrators.get(&sys.system_id, at).ok_or_else(|| {
                        Error::MissingCalibrator {
                            system: sys.system_id.clone(),
                            answer_type: at,
                        }
                    })?),
                };
                examples
                    .iter()
                    .map(|id| aggregate_system(&sys.system_id, sys.candidates(id, at), tf.aggregation, cal))
                    .collect::<Result<Vec<_>>>()
            })?;
            tables[slot] = build_table(&agg, &examples, gold, at, metric);
        }
        let [long, short] = tables;
        Ok(ScoreCache {
            ids: pool.systems().iter().map(|s| s.system_id.clone()).collect(),
            aggregations: (pool.len() * examples.len() * 2) as u64,
            examples,
            example_index,
            long,
            short,
            restrict_short_to_long: fusion.restrict_short_to_long,
            lookups: AtomicU64::new(0),
        })
    }

    pub fn n_systems(&self) -> usize {
        self.ids.len()
    }

    pub fn examples(&self) -> &[ExampleId] {
        &self.examples
    }

    /// Number of per-system aggregations computed (all at build time).
    pub fn misses(&self) -> u64 {
        self.aggregations
    }

    /// Number of cached per-system maps read by evaluations so far.
    pub fn hits(&self) -> u64 {
        self.lookups.load(AtomicOrdering::Relaxed)
    }

    /// Positions of `ids` in the cache, failing on an unknown id.
    pub fn example_positions(&self, ids: &[ExampleId]) -> Result<Vec<u32>> {
        ids.iter()
            .map(|id| {
                self.example_index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("example `{id}` not in gold")))
            })
            .collect()
    }

    fn table(&self, at: AnswerType) -> &TypeTable {
        match at {
            AnswerType::Long => &self.long,
            AnswerType::Short => &self.short,
        }
    }

    /// Index (into the example's table) of the fused argmax for `subset`.
    /// The null span, last in every table, competes at 0 when unscored.
    fn argmax(
        &self,
        at: AnswerType,
        e: usize,
        subset: &[usize],
        scratch: &mut Scratch,
        within: Option<Span>,
    ) -> usize {
        let t = self.table(at);
        let table = t.table(e);
        let null = table.len() - 1;
        scratch.touched.clear();
        for &s in subset {
            let (idx, score) = t.entries(s, e);
            for (&i, &v) in idx.iter().zip(score) {
                let i = i as usize;
                if !scratch.seen[i] {
                    scratch.seen[i] = true;
                    scratch.acc[i] = 0.0;
                    scratch.touched.push(i as u32);
                }
                scratch.acc[i] += v;
            }
        }
        let n = subset.len() as f64;
        let null_score = if scratch.seen[null] { scratch.acc[null] / n } else { 0.0 };
        let mut best = (null, null_score);
        for &i in &scratch.touched {
            let i = i as usize;
            scratch.seen[i] = false;
            if i == null {
                continue;
            }
            if let Some(outer) = within {
                if !outer.contains(&table[i]) {
                    continue;
                }
            }
            let v = scratch.acc[i] / n;
            if rank_cmp((&table[i], v), (&table[best.0], best.1)).is_lt() {
                best = (i, v);
            }
        }
        best.0
    }

    /// `(long index, short index)` for one example; short is the null index
    /// whenever long is null.
    fn predict_indices(&self, e: usize, subset: &[usize], scratch: &mut Scratch) -> (usize, usize) {
        let li = self.argmax(AnswerType::Long, e, subset, scratch, None);
        let long_table = self.long.table(e);
        let short_null = self.short.table(e).len() - 1;
        if li == long_table.len() - 1 {
            return (li, short_null);
        }
        let within = self.restrict_short_to_long.then_some(long_table[li]);
        (li, self.argmax(AnswerType::Short, e, subset, scratch, within))
    }

    fn record_lookups(&self, subset: &[usize], n_examples: usize) {
        self.lookups
            .fetch_add((subset.len() * n_examples * 2) as u64, AtomicOrdering::Relaxed);
    }

    /// F1s of the ensemble `subset` (sorted pool indices) on `positions`.
    pub fn eval_subset(&self, subset: &[usize], positions: &[u32]) -> SubsetScore {
        assert!(!subset.is_empty(), "cannot evaluate an empty ensemble");
        debug_assert!(subset.windows(2).all(|w| w[0] < w[1]));
        let mut scratch = Scratch::new(self.long.max_table.max(self.short.max_table));
        let mut long = Counts::default();
        let mut short = Counts::default();
        for &e in positions {
            let e = e as usize;
            let (li, si) = self.predict_indices(e, subset, &mut scratch);
            for (at, i, counts) in [(AnswerType::Long, li, &mut long), (AnswerType::Short, si, &mut short)] {
                let t = self.table(at);
                let pred_null = i == t.table(e).len() - 1;
                counts.add(Outcome::from_flags(pred_null, t.answerable[e], t.matches(e)[i]));
            }
        }
        self.record_lookups(subset, positions.len());
        SubsetScore {
            sa_f1: short.f1(),
            la_f1: long.f1(),
            long,
            short,
        }
    }

    /// Ensemble predictions for every cached example.
    pub fn predict(&self, subset: &[usize]) -> Predictions {
        assert!(!subset.is_empty(), "cannot predict with an empty ensemble");
        let positions: Vec<usize> = (0..self.examples.len()).collect();
        let chunks: Vec<&[usize]> = positions.chunks(256).collect();
        let max = self.long.max_table.max(self.short.max_table);
        let parts = par_map(&chunks, |chunk| {
            let mut scratch = Scratch::new(max);
            chunk
                .iter()
                .map(|&e| {
                    let (li, si) = self.predict_indices(e, subset, &mut scratch);
                    let p = Prediction::new(self.long.table(e)[li], self.short.table(e)[si]);
                    (self.examples[e].clone(), p)
                })
                .collect::<Vec<_>>()
        });
        self.record_lookups(subset, positions.len());
        parts.into_iter().flatten().collect()
    }
}

fn build_table(
    agg: &[Vec<Vec<(Span, f64)>>],
    examples: &[ExampleId],
    gold: &GoldSet,
    at: AnswerType,
    metric: &MetricConfig,
) -> TypeTable {
    let positions: Vec<usize> = (0..examples.len()).collect();
    let per_example: Vec<(Vec<Span>, Vec<bool>, bool)> = par_map(&positions, |&e| {
        let mut spans: Vec<Span> = agg.iter().flat_map(|sys| sys[e].iter().map(|p| p.0)).collect();
        spans.push(Span::Null);
        spans.sort_unstable();
        spans.dedup();
        let anns = gold.annotations(&examples[e]).expect("cache examples come from gold");
        let matched = spans
            .iter()
            .map(|s| metrics::matches(s, anns, at, metric.short_match))
            .collect();
        let answerable = metrics::is_answerable(anns, at, metric.threshold).expect("validated threshold");
        (spans, matched, answerable)
    });

    let mut t = TypeTable {
        span_offsets: Vec::with_capacity(examples.len() + 1),
        ..Default::default()
    };
    t.span_offsets.push(0);
    for (spans, matched, answerable) in &per_example {
        t.max_table = t.max_table.max(spans.len());
        t.spans.extend_from_slice(spans);
        t.gold_match.extend_from_slice(matched);
        t.answerable.push(*answerable);
        t.span_offsets.push(t.spans.len());
    }

    let interned = par_map(agg, |sys| {
        let mut offsets = Vec::with_capacity(examples.len() + 1);
        let mut index = Vec::new();
        let mut score = Vec::new();
        offsets.push(0u32);
        for (e, entries) in sys.iter().enumerate() {
            let table = &per_example[e].0;
            for &(span, v) in entries {
                index.push(table.binary_search(&span).expect("span interned") as u32);
                score.push(v);
            }
            offsets.push(index.len() as u32);
        }
        (offsets, index, score)
    });
    for (offsets, index, score) in interned {
        t.entry_offsets.push(offsets);
        t.entry_index.push(index);
        t.entry_score.push(score);
    }
    t
}
