//! Prediction and gold JSONL files, top-K truncation, and the dev split.
//!
//! Prediction file: optional header `{"system_id": ..}`, then one line per
//! example: `{"example_id", "long": [{"start","end","score"}], "short": [..]}`.
//! A null span is written as `"start": -1, "end": -1`.
//!
//! Gold file: `{"example_id", "annotations": [{"long": {"start","end"} | null,
//! "short": [{"start","end"}, ..]}]}`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::span::{compare_candidates, AnswerType, Candidate, ExampleId, Span, SystemId};

pub const DEFAULT_TOP_K: usize = 20;

/// Candidates of one system for one example, per answer type, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExampleCandidates {
    pub long: Vec<Candidate>,
    pub short: Vec<Candidate>,
}

impl ExampleCandidates {
    pub fn get(&self, answer_type: AnswerType) -> &[Candidate] {
        match answer_type {
            AnswerType::Long => &self.long,
            AnswerType::Short => &self.short,
        }
    }

    fn get_mut(&mut self, answer_type: AnswerType) -> &mut Vec<Candidate> {
        match answer_type {
            AnswerType::Long => &mut self.long,
            AnswerType::Short => &mut self.short,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemPredictions {
    pub system_id: SystemId,
    pub examples: BTreeMap<ExampleId, ExampleCandidates>,
}

impl SystemPredictions {
    pub fn new(system_id: impl Into<SystemId>) -> Self {
        SystemPredictions {
            system_id: system_id.into(),
            examples: BTreeMap::new(),
        }
    }

    /// Candidates for an example; an absent example has none.
    pub fn candidates(&self, example_id: &str, answer_type: AnswerType) -> &[Candidate] {
        self.examples
            .get(example_id)
            .map_or(&[][..], |c| c.get(answer_type))
    }
}

/// One annotator's labels. A null long answer implies no short answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldAnnotation {
    pub long: Span,
    pub short: Vec<Span>,
}

impl GoldAnnotation {
    pub fn new(long: Span, short: Vec<Span>) -> Result<Self> {
        if long.is_null() && !short.is_empty() {
            return Err(Error::Validation(
                "annotation has short answers but a null long answer".into(),
            ));
        }
        if short.iter().any(Span::is_null) {
            return Err(Error::Validation("short answer list contains a null span".into()));
        }
        Ok(GoldAnnotation { long, short })
    }

    pub fn null() -> Self {
        GoldAnnotation {
            long: Span::Null,
            short: Vec::new(),
        }
    }
}

/// Gold annotations in file order. `file_sizes` records how many examples
/// each source file contributed, for file-boundary splits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldSet {
    pub examples: IndexMap<ExampleId, Vec<GoldAnnotation>>,
    pub file_sizes: Vec<usize>,
}

impl GoldSet {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn annotations(&self, example_id: &str) -> Option<&[GoldAnnotation]> {
        self.examples.get(example_id).map(Vec::as_slice)
    }

    /// Appends one file's worth of examples.
    pub fn push_file(&mut self, examples: Vec<(ExampleId, Vec<GoldAnnotation>)>) -> Result<()> {
        let n = examples.len();
        for (id, annotations) in examples {
            if annotations.is_empty() {
                return Err(Error::Validation(format!("example `{id}` has no annotations")));
            }
            if self.examples.contains_key(&id) {
                return Err(Error::Validation(format!("duplicate gold example_id `{id}`")));
            }
            self.examples.insert(id, annotations);
        }
        self.file_sizes.push(n);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<ExampleId>,
    pub test: Vec<ExampleId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum SplitMode {
    /// The first `train_files` gold files form the train split.
    Files { train_files: usize },
    /// The first `ratio` fraction of examples (gold order) form the train split.
    Fraction { ratio: f64 },
}

impl Default for SplitMode {
    fn default() -> Self {
        SplitMode::Fraction { ratio: 0.6 }
    }
}

#[derive(Deserialize)]
struct RawCandidate {
    start: i64,
    end: i64,
    score: f64,
}

#[derive(Deserialize)]
struct RawPredictionLine {
    example_id: String,
    #[serde(default)]
    long: Vec<RawCandidate>,
    #[serde(default)]
    short: Vec<RawCandidate>,
}

#[derive(Serialize, Deserialize)]
struct RawSpan {
    start: i64,
    end: i64,
}

#[derive(Deserialize)]
struct RawAnnotation {
    long: Option<RawSpan>,
    #[serde(default)]
    short: Vec<RawSpan>,
}

#[derive(Deserialize)]
struct RawGoldLine {
    example_id: String,
    annotations: Vec<RawAnnotation>,
}

fn decode_span(start: i64, end: i64) -> std::result::Result<Span, String> {
    if start == -1 && end == -1 {
        return Ok(Span::Null);
    }
    if start < 0 || end < 0 {
        return Err(format!("negative token index in span ({start},{end})"));
    }
    let (s, e) = (
        u32::try_from(start).map_err(|_| format!("token index {start} out of range"))?,
        u32::try_from(end).map_err(|_| format!("token index {end} out of range"))?,
    );
    Span::new(s, e).ok_or_else(|| format!("span start {start} must be < end {end}"))
}

fn encode_span(span: &Span) -> (i64, i64) {
    match span.bounds() {
        Some((s, e)) => (s as i64, e as i64),
        None => (-1, -1),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Reads a prediction file. The system id comes from `system_id`, else the
/// header line, else the file stem.
pub fn parse_predictions(path: &Path, system_id: Option<&str>) -> Result<SystemPredictions> {
    let reader = open(path)?;
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut header_id: Option<String> = None;
    let mut examples = BTreeMap::new();
    let mut seen_body = false;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| perr(lineno, format!("malformed JSON: {e}")))?;
        let is_header = value.get("system_id").is_some() && value.get("example_id").is_none();
        if is_header {
            if seen_body || header_id.is_some() {
                return Err(perr(lineno, "system_id header must be the first line".into()));
            }
            header_id = Some(
                value["system_id"]
                    .as_str()
                    .ok_or_else(|| perr(lineno, "system_id must be a string".into()))?
                    .to_string(),
            );
            continue;
        }
        seen_body = true;
        let raw: RawPredictionLine =
            serde_json::from_value(value).map_err(|e| perr(lineno, format!("bad prediction line: {e}")))?;
        let convert = |cands: Vec<RawCandidate>| -> std::result::Result<Vec<Candidate>, String> {
            cands
                .into_iter()
                .map(|c| {
                    if !c.score.is_finite() {
                        return Err(format!("non-finite score {}", c.score));
                    }
                    Ok(Candidate::new(decode_span(c.start, c.end)?, c.score))
                })
                .collect()
        };
        let entry = ExampleCandidates {
            long: convert(raw.long).map_err(|m| perr(lineno, m))?,
            short: convert(raw.short).map_err(|m| perr(lineno, m))?,
        };
        if examples.insert(raw.example_id.clone(), entry).is_some() {
            return Err(perr(lineno, format!("duplicate example_id `{}`", raw.example_id)));
        }
    }

    if examples.is_empty() {
        log::warn!("{}: no predictions", path.display());
    }
    let system_id = system_id
        .map(str::to_string)
        .or(header_id)
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_default();
    Ok(SystemPredictions {
        system_id,
        examples,
    })
}

/// Writes a prediction file with a header line, examples in id order.
pub fn write_predictions(path: &Path, preds: &SystemPredictions) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_predictions_to(&mut w, preds).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_predictions_to<W: Write>(w: &mut W, preds: &SystemPredictions) -> std::io::Result<()> {
    let cands = |cs: &[Candidate]| -> Vec<serde_json::Value> {
        cs.iter()
            .map(|c| {
                let (start, end) = encode_span(&c.span);
                serde_json::json!({"start": start, "end": end, "score": c.score})
            })
            .collect()
    };
    writeln!(w, "{}", serde_json::json!({ "system_id": preds.system_id }))?;
    for (id, ex) in &preds.examples {
        let line = serde_json::json!({
            "example_id": id,
            "long": cands(&ex.long),
            "short": cands(&ex.short),
        });
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn parse_gold_lines(path: &Path) -> Result<Vec<(ExampleId, Vec<GoldAnnotation>)>> {
    let reader = open(path)?;
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawGoldLine =
            serde_json::from_str(&line).map_err(|e| perr(lineno, format!("malformed gold line: {e}")))?;
        if raw.annotations.is_empty() {
            return Err(perr(lineno, format!("example `{}` has no annotations", raw.example_id)));
        }
        let mut annotations = Vec::with_capacity(raw.annotations.len());
        for a in raw.annotations {
            let long = match a.long {
                Some(s) => decode_span(s.start, s.end).map_err(|m| perr(lineno, m))?,
                None => Span::Null,
            };
            let short = a
                .short
                .iter()
                .map(|s| decode_span(s.start, s.end))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|m| perr(lineno, m))?;
            let ann = GoldAnnotation::new(long, short).map_err(|e| perr(lineno, e.to_string()))?;
            annotations.push(ann);
        }
        if !ids.insert(raw.example_id.clone()) {
            return Err(perr(lineno, format!("duplicate example_id `{}`", raw.example_id)));
        }
        out.push((raw.example_id, annotations));
    }
    Ok(out)
}

pub fn parse_gold(path: &Path) -> Result<GoldSet> {
    parse_gold_files(&[path])
}

/// Reads gold files in order; each file is one split unit.
pub fn parse_gold_files<P: AsRef<Path>>(paths: &[P]) -> Result<GoldSet> {
    let mut gold = GoldSet::default();
    for path in paths {
        let path = path.as_ref();
        let lines = parse_gold_lines(path)?;
        gold.push_file(lines).map_err(|e| match e {
            Error::Validation(m) => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: m,
            },
            other => other,
        })?;
    }
    Ok(gold)
}

pub fn write_gold_to<'a, W, I>(w: &mut W, examples: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a ExampleId, &'a Vec<GoldAnnotation>)>,
{
    let raw = |s: &Span| {
        let (start, end) = encode_span(s);
        RawSpan { start, end }
    };
    for (id, anns) in examples {
        let anns: Vec<serde_json::Value> = anns
            .iter()
            .map(|a| {
                let short: Vec<RawSpan> = a.short.iter().map(raw).collect();
                serde_json::json!({
                    "long": (!a.long.is_null()).then(|| raw(&a.long)),
                    "short": short,
                })
            })
            .collect();
        writeln!(w, "{}", serde_json::json!({"example_id": id, "annotations": anns}))?;
    }
    Ok(())
}

/// Keeps the `k` best candidates per example and answer type, in rank order.
pub fn truncate_top_k(mut preds: SystemPredictions, k: usize) -> SystemPredictions {
    assert!(k >= 1, "top-k must be at least 1");
    for ex in preds.examples.values_mut() {
        for at in AnswerType::ALL {
            let cands = ex.get_mut(at);
            cands.sort_by(compare_candidates);
            cands.truncate(k);
        }
    }
    preds
}

pub fn split_dev(gold: &GoldSet, mode: SplitMode) -> Result<Split> {
    let ids: Vec<&ExampleId> = gold.examples.keys().collect();
    let n_train = match mode {
        SplitMode::Fraction { ratio } => {
            if !(ratio > 0.0 && ratio < 1.0) {
                return Err(Error::Config(format!("split fraction {ratio} must be in (0,1)")));
            }
            (ratio * ids.len() as f64).round() as usize
        }
        SplitMode::Files { train_files } => {
            let n_files = gold.file_sizes.len();
            if train_files == 0 || train_files >= n_files {
                return Err(Error::Config(format!(
                    "file split needs 1 <= train files < {n_files} gold files, got {train_files}"
                )));
            }
            gold.file_sizes[..train_files].iter().sum()
        }
    };
    let (train, test) = ids.split_at(n_train.min(ids.len()));
    log::info!("split: {} train / {} test examples", train.len(), test.len());
    Ok(Split {
        train: train.iter().map(|s| (*s).clone()).collect(),
        test: test.iter().map(|s| (*s).clone()).collect(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n_systems: usize,
    pub n_gold_examples: usize,
    /// Gold examples a system has no line for; these are treated as null-only.
    pub missing: BTreeMap<SystemId, Vec<ExampleId>>,
}

impl ValidationReport {
    pub fn warnings(&self) -> Vec<String> {
        self.missing
            .iter()
            .filter(|(_, ids)| !ids.is_empty())
            .map(|(sys, ids)| {
                format!(
                    "system `{sys}` has no predictions for {} gold example(s), e.g. `{}`; treated as null",
                    ids.len(),
                    ids[0]
                )
            })
            .collect()
    }
}

pub fn validate_ensemble_inputs(systems: &[SystemPredictions], gold: &GoldSet) -> Result<ValidationReport> {
    if systems.is_empty() {
        return Err(Error::Validation("no systems given".into()));
    }
    let mut ids = BTreeSet::new();
    for s in systems {
        if !ids.insert(s.system_id.as_str()) {
            return Err(Error::Validation(format!("duplicate system_id `{}`", s.system_id)));
        }
    }
    let mut report = ValidationReport {
        n_systems: systems.len(),
        n_gold_examples: gold.len(),
        missing: BTreeMap::new(),
    };
    for s in systems {
        if let Some(extra) = s.examples.keys().find(|id| !gold.examples.contains_key(*id)) {
            return Err(Error::Validation(format!(
                "system `{}` predicts example `{extra}`, which is not in the gold set",
                s.system_id
            )));
        }
        let missing: Vec<ExampleId> = gold
            .examples
            .keys()
            .filter(|id| !s.examples.contains_key(*id))
            .cloned()
            .collect();
        report.missing.insert(s.system_id.clone(), missing);
    }
    for w in report.warnings() {
        log::warn!("{w}");
    }
    Ok(report)
}
