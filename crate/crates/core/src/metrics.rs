//! Exact-match long/short answer precision, recall and F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuse::Predictions;
use crate::ingest::{GoldAnnotation, GoldSet};
use crate::span::{AnswerType, ExampleId, Span};

/// How a predicted short span is compared with an annotator's short list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShortMatch {
    /// The annotator's short list must be exactly `{predicted}`.
    #[default]
    Strict,
    /// The predicted span must appear in the annotator's short list.
    Relaxed,
}

impl std::str::FromStr for ShortMatch {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "strict" => Ok(ShortMatch::Strict),
            "relaxed" => Ok(ShortMatch::Relaxed),
            other => Err(format!("unknown short-answer matching `{other}` (strict, relaxed)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Minimum number of non-null annotations for an example to count as answerable.
    pub threshold: usize,
    pub short_match: ShortMatch,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            threshold: 2,
            short_match: ShortMatch::Strict,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold < 1 {
            return Err(Error::Config("answerability threshold must be >= 1".into()));
        }
        Ok(())
    }
}

fn has_answer(a: &GoldAnnotation, answer_type: AnswerType) -> bool {
    match answer_type {
        AnswerType::Long => !a.long.is_null(),
        AnswerType::Short => !a.short.is_empty(),
    }
}

pub fn is_answerable(annotations: &[GoldAnnotation], answer_type: AnswerType, threshold: usize) -> Result<bool> {
    if threshold < 1 {
        return Err(Error::Config("answerability threshold must be >= 1".into()));
    }
    Ok(annotations.iter().filter(|a| has_answer(a, answer_type)).count() >= threshold)
}

/// Exact span match of a non-null prediction against any annotator.
pub fn matches(pred: &Span, annotations: &[GoldAnnotation], answer_type: AnswerType, short_match: ShortMatch) -> bool {
    if pred.is_null() {
        return false;
    }
    annotations.iter().any(|a| match answer_type {
        AnswerType::Long => a.long == *pred,
        AnswerType::Short => match short_match {
            ShortMatch::Strict => a.short.len() == 1 && a.short[0] == *pred,
            ShortMatch::Relaxed => a.short.contains(pred),
        },
    })
}

/// Contribution of one example's prediction to the counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Outcome {
    pub tp: bool,
    pub fp: bool,
    pub fn_: bool,
}

impl Outcome {
    pub fn from_flags(pred_null: bool, answerable: bool, matched: bool) -> Self {
        let correct = answerable && matched;
        Outcome {
            tp: !pred_null && correct,
            fp: !pred_null && !correct,
            fn_: answerable && (pred_null || !matched),
        }
    }
}

/// Scores one predicted span. The threshold must already be validated.
pub fn outcome(pred: &Span, annotations: &[GoldAnnotation], answer_type: AnswerType, config: &MetricConfig) -> Outcome {
    let answerable = annotations.iter().filter(|a| has_answer(a, answer_type)).count() >= config.threshold;
    let matched = matches(pred, annotations, answer_type, config.short_match);
    Outcome::from_flags(pred.is_null(), answerable, matched)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn add(&mut self, o: Outcome) {
        self.tp += o.tp as u64;
        self.fp += o.fp as u64;
        self.fn_ += o.fn_ as u64;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall, computed as 2tp/(2tp+fp+fn)
    /// so that equal count ratios give bit-identical values.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn report(&self) -> TypeReport {
        TypeReport {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            precision: self.precision(),
            recall: self.recall(),
            f1: self.f1(),
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeReport {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub n_examples: usize,
    pub long: TypeReport,
    pub short: TypeReport,
}

impl EvalReport {
    pub fn from_counts(split: &str, n_examples: usize, long: Counts, short: Counts) -> Self {
        EvalReport {
            split: split.to_string(),
            n_examples,
            long: long.report(),
            short: short.report(),
        }
    }

    pub fn get(&self, answer_type: AnswerType) -> &TypeReport {
        match answer_type {
            AnswerType::Long => &self.long,
            AnswerType::Short => &self.short,
        }
    }

    /// One-line, 4-decimal summary.
    pub fn summary(&self) -> String {
        format!(
            "{:<6} n={:<6} SA P={:.4} R={:.4} F1={:.4} | LA P={:.4} R={:.4} F1={:.4}",
            self.split,
            self.n_examples,
            self.short.precision,
            self.short.recall,
            self.short.f1,
            self.long.precision,
            self.long.recall,
            self.long.f1
        )
    }
}

/// Evaluates predictions on `ids`. An example without a prediction counts
/// as null for both answer types; an id absent from gold is skipped with a warning.
pub fn evaluate(
    preds: &Predictions,
    gold: &GoldSet,
    split_name: &str,
    ids: &[ExampleId],
    config: &MetricConfig,
) -> Result<EvalReport> {
    config.validate()?;
    let mut long = Counts::default();
    let mut short = Counts::default();
    let mut n = 0;
    for id in ids {
        let Some(anns) = gold.annotations(id) else {
            log::warn!("example `{id}` is not in the gold set; skipped");
            continue;
        };
        n += 1;
        let p = preds.get(id).copied().unwrap_or_default();
        long.add(outcome(&p.long, anns, AnswerType::Long, config));
        short.add(outcome(&p.short, anns, AnswerType::Short, config));
    }
    Ok(EvalReport::from_counts(split_name, n, long, short))
}
