//! Cross-system fusion and final predictions.
//!
//! Each system's aggregated span scores are averaged over *all* systems in
//! the ensemble; a system that did not predict a span contributes zero.
//! The long answer is the top fused span (null competes at 0 when nobody
//! scored it), and a null long answer forces a null short answer.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_system, AggregationStrategy};
use crate::calibrate::{CalibratorSet, Normalization};
use crate::error::{Error, Result};
use crate::exec::try_par_map;
use crate::ingest::SystemPredictions;
use crate::span::{argmax_span, rank_cmp, AnswerType, ExampleId, Span};

/// Final answer for one example. `long == Null` implies `short == Null`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Prediction {
    pub long: Span,
    pub short: Span,
}

impl Default for Prediction {
    fn default() -> Self {
        Prediction {
            long: Span::Null,
            short: Span::Null,
        }
    }
}

impl Prediction {
    /// Applies the null-join rule.
    pub fn new(long: Span, short: Span) -> Self {
        Prediction {
            long,
            short: if long.is_null() { Span::Null } else { short },
        }
    }

    pub fn get(&self, answer_type: AnswerType) -> Span {
        match answer_type {
            AnswerType::Long => self.long,
            AnswerType::Short => self.short,
        }
    }
}

pub type Predictions = BTreeMap<ExampleId, Prediction>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeFusion {
    pub normalization: Normalization,
    pub aggregation: AggregationStrategy,
}

impl Default for TypeFusion {
    fn default() -> Self {
        TypeFusion {
            normalization: Normalization::None,
            aggregation: AggregationStrategy::Max,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub long: TypeFusion,
    pub short: TypeFusion,
    /// Only short spans inside the predicted long span may be predicted.
    #[serde(default)]
    pub restrict_short_to_long: bool,
}

impl FusionConfig {
    pub fn get(&self, answer_type: AnswerType) -> &TypeFusion {
        match answer_type {
            AnswerType::Long => &self.long,
            AnswerType::Short => &self.short,
        }
    }

    pub fn needs_calibration(&self) -> bool {
        AnswerType::ALL
            .iter()
            .any(|&at| self.get(at).normalization == Normalization::Logreg)
    }

    pub fn validate(&self) -> Result<()> {
        for at in AnswerType::ALL {
            let tf = self.get(at);
            tf.aggregation.validate()?;
            if tf.aggregation == AggregationStrategy::NoisyOr && tf.normalization != Normalization::Logreg {
                return Err(Error::Config(format!(
                    "noisy-or aggregation for {at} answers requires logreg normalization"
                )));
            }
        }
        Ok(())
    }
}

/// Zero-filled mean over `n_systems`: each span's scores are summed in the
/// order of `maps` and divided by `n_systems`. Output is in span order.
pub fn fuse_scores(maps: &[&[(Span, f64)]], n_systems: usize) -> Vec<(Span, f64)> {
    assert!(n_systems >= maps.len() && n_systems > 0);
    let mut acc: BTreeMap<Span, f64> = BTreeMap::new();
    for map in maps {
        for &(span, score) in *map {
            *acc.entry(span).or_insert(0.0) += score;
        }
    }
    let n = n_systems as f64;
    acc.into_iter().map(|(s, v)| (s, v / n)).collect()
}

fn best_with_implicit_null<'a, I>(entries: I) -> Span
where
    I: IntoIterator<Item = &'a (Span, f64)>,
{
    let mut saw_null = false;
    let best = argmax_span(entries.into_iter().inspect(|e| saw_null |= e.0.is_null()));
    match best {
        None => Span::Null,
        Some((span, _)) if saw_null => span,
        // nobody scored null: it competes at 0
        Some((span, score)) if rank_cmp((&span, score), (&Span::Null, 0.0)).is_le() => span,
        Some(_) => Span::Null,
    }
}

/// Picks the long span, then the short span (null if the long is null;
/// inside the long span if `restrict_short_to_long`).
pub fn predict_example(long: &[(Span, f64)], short: &[(Span, f64)], restrict_short_to_long: bool) -> Prediction {
    let long_span = best_with_implicit_null(long);
    if long_span.is_null() {
        return Prediction::default();
    }
    let short_span = if restrict_short_to_long {
        best_with_implicit_null(
            short
                .iter()
                .filter(|(s, _)| s.is_null() || long_span.contains(s)),
        )
    } else {
        best_with_implicit_null(short)
    };
    Prediction::new(long_span, short_span)
}

/// Long answers from `long_source`, short answers from `short_source`,
/// then the null-join rule.
pub fn join_predictions(short_source: &Predictions, long_source: &Predictions) -> Result<Predictions> {
    if short_source.len() != long_source.len() || short_source.keys().ne(long_source.keys()) {
        let missing = short_source
            .keys()
            .find(|k| !long_source.contains_key(*k))
            .or_else(|| long_source.keys().find(|k| !short_source.contains_key(*k)));
        return Err(Error::Validation(format!(
            "cannot join predictions over different example sets (e.g. `{}`)",
            missing.map_or("?", String::as_str)
        )));
    }
    Ok(long_source
        .iter()
        .map(|(id, l)| (id.clone(), Prediction::new(l.long, short_source[id].short)))
        .collect())
}

/// Fused span scores for one example.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusedScores {
    pub long: Vec<(Span, f64)>,
    pub short: Vec<(Span, f64)>,
}

/// Aggregates and fuses one example across `systems`, in the given order.
pub fn fuse_example(
    systems: &[&SystemPredictions],
    example_id: &str,
    config: &FusionConfig,
    calibrators: &CalibratorSet,
) -> Result<FusedScores> {
    let mut out = FusedScores::default();
    for at in AnswerType::ALL {
        let tf = config.get(at);
        let per_system = systems
            .iter()
            .map(|s| {
                let cal = match tf.normalization {
                    Normalization::None => None,
                    Normalization::Logreg => Some(calibrators.get(&s.system_id, at).ok_or_else(|| {
                        Error::MissingCalibrator {
                            system: s.system_id.clone(),
                            answer_type: at,
                        }
                    })?),
                };
                aggregate_system(&s.system_id, s.candidates(example_id, at), tf.aggregation, cal)
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[(Span, f64)]> = per_system.iter().map(Vec::as_slice).collect();
        let fused = fuse_scores(&refs, systems.len());
        match at {
            AnswerType::Long => out.long = fused,
            AnswerType::Short => out.short = fused,
        }
    }
    Ok(out)
}

/// Straight-line ensemble prediction over `example_ids`, without caching.
pub fn predict_ensemble(
    systems: &[&SystemPredictions],
    example_ids: &[ExampleId],
    config: &FusionConfig,
    calibrators: &CalibratorSet,
) -> Result<Predictions> {
    config.validate()?;
    if systems.is_empty() {
        return Err(Error::Config("ensemble needs at least one system".into()));
    }
    let preds = try_par_map(example_ids, |id| {
        let fused = fuse_example(systems, id, config, calibrators)?;
        Ok::<_, Error>((
            id.clone(),
            predict_example(&fused.long, &fused.short, config.restrict_short_to_long),
        ))
    })?;
    Ok(preds.into_iter().collect())
}

#[derive(Serialize, Deserialize)]
struct RawSpan {
    start: u32,
    end: u32,
}

#[derive(Serialize, Deserialize)]
struct RawPrediction {
    example_id: String,
    long: Option<RawSpan>,
    short: Option<RawSpan>,
}

fn to_raw(s: &Span) -> Option<RawSpan> {
    s.bounds().map(|(start, end)| RawSpan { start, end })
}

pub fn write_predictions_jsonl_to<W: Write>(w: &mut W, preds: &Predictions) -> std::io::Result<()> {
    for (id, p) in preds {
        let raw = RawPrediction {
            example_id: id.clone(),
            long: to_raw(&p.long),
            short: to_raw(&p.short),
        };
        writeln!(w, "{}", serde_json::to_string(&raw).expect("serializable"))?;
    }
    Ok(())
}

pub fn write_predictions_jsonl(path: &Path, preds: &Predictions) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_predictions_jsonl_to(&mut w, preds).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions_jsonl(path: &Path) -> Result<Predictions> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Predictions::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let perr = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let raw: RawPrediction = serde_json::from_str(&line).map_err(|e| perr(e.to_string()))?;
        let decode = |r: Option<RawSpan>| -> Result<Span> {
            match r {
                None => Ok(Span::Null),
                Some(RawSpan { start, end }) => {
                    Span::new(start, end).ok_or_else(|| perr(format!("span start {start} must be < end {end}")))
                }
            }
        };
        let p = Prediction::new(decode(raw.long)?, decode(raw.short)?);
        if out.insert(raw.example_id.clone(), p).is_some() {
            return Err(perr(format!("duplicate example_id `{}`", raw.example_id)));
        }
    }
    Ok(out)
}
