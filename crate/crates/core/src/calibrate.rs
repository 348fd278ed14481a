//! Score normalization: identity, or a per-system logistic calibrator fitted
//! on the top-1 score of each train example, with the L2 strength chosen by
//! stratified k-fold cross-validation on held-out log-likelihood.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::try_par_map;
use crate::ingest::{GoldSet, SystemPredictions};
use crate::metrics::{self, MetricConfig};
use crate::span::{top_candidate, AnswerType, ExampleId, Span, SystemId};

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_GRAD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    None,
    Logreg,
}

impl std::str::FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(Normalization::None),
            "logreg" | "lr" => Ok(Normalization::Logreg),
            other => Err(format!("unknown normalization `{other}` (none, logreg)")),
        }
    }
}

pub fn normalize_none(score: f64) -> f64 {
    score
}

/// Logistic map `sigmoid(w * score + b)` for one system and answer type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibrator {
    pub system_id: SystemId,
    pub answer_type: AnswerType,
    pub w: f64,
    pub b: f64,
    /// Inverse L2 strength selected by cross-validation.
    pub chosen_c: f64,
    /// `(c, mean held-out log-likelihood)` for every grid point.
    pub cv_log: Vec<(f64, f64)>,
}

impl Calibrator {
    /// A calibrator with given parameters and no fitting history (`chosen_c` is 0).
    pub fn fixed(system_id: &str, answer_type: AnswerType, w: f64, b: f64) -> Self {
        Calibrator {
            system_id: system_id.to_string(),
            answer_type,
            w,
            b,
            chosen_c: 0.0,
            cv_log: Vec::new(),
        }
    }

    /// Strictly inside (0,1) for finite input; saturates at the nearest
    /// representable values away from 0 and 1.
    pub fn apply(&self, score: f64) -> f64 {
        apply_calibrator(self, score)
    }
}

pub fn apply_calibrator(cal: &Calibrator, score: f64) -> f64 {
    sigmoid(cal.w * score + cal.b).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// One row per train example: top-1 score and whether that prediction is correct.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibrationDataset {
    pub rows: Vec<(f64, bool)>,
}

impl CalibrationDataset {
    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|r| r.1).count()
    }
}

/// Labels each train example by the correctness of the system's top-1
/// candidate. An example with no candidates contributes `(0.0, NULL)`.
pub fn build_calibration_dataset(
    preds: &SystemPredictions,
    gold: &GoldSet,
    train_ids: &[ExampleId],
    answer_type: AnswerType,
    metric: &MetricConfig,
) -> Result<CalibrationDataset> {
    metric.validate()?;
    if train_ids.is_empty() {
        return Err(Error::EmptySplit);
    }
    let mut rows = Vec::with_capacity(train_ids.len());
    for id in train_ids {
        let anns = gold
            .annotations(id)
            .ok_or_else(|| Error::Validation(format!("train example `{id}` not in gold")))?;
        let (span, score) = top_candidate(preds.candidates(id, answer_type))
            .map_or((Span::Null, 0.0), |c| (c.span, c.score));
        let answerable = metrics::is_answerable(anns, answer_type, metric.threshold)?;
        let label = if span.is_null() {
            !answerable
        } else {
            answerable && metrics::matches(&span, anns, answer_type, metric.short_match)
        };
        rows.push((score, label));
    }
    Ok(CalibrationDataset { rows })
}

/// `logspace(-4, 4, 10)`.
pub fn default_c_grid() -> Vec<f64> {
    (0..10).map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 9.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            c_grid: default_c_grid(),
            folds: 5,
            seed: 0,
        }
    }
}

impl LogRegConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config("cross-validation needs at least 2 folds".into()));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Config("c grid must be non-empty and strictly positive".into()));
        }
        Ok(())
    }
}

/// Penalized mean negative log-likelihood of a single-feature logistic model.
pub fn objective(rows: &[(f64, bool)], w: f64, b: f64, c: f64) -> f64 {
    let n = rows.len() as f64;
    let nll: f64 = rows
        .iter()
        .map(|&(s, y)| {
            let z = w * s + b;
            softplus(z) - if y { z } else { 0.0 }
        })
        .sum();
    nll / n + w * w / (2.0 * c)
}

fn gradient_hessian(rows: &[(f64, bool)], w: f64, b: f64, c: f64) -> ([f64; 2], [f64; 3]) {
    let n = rows.len() as f64;
    let (mut gw, mut gb, mut hww, mut hwb, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(s, y) in rows {
        let p = sigmoid(w * s + b);
        let r = p - y as u8 as f64;
        let v = p * (1.0 - p);
        gw += r * s;
        gb += r;
        hww += v * s * s;
        hwb += v * s;
        hbb += v;
    }
    (
        [gw / n + w / c, gb / n],
        [hww / n + 1.0 / c, hwb / n, hbb / n],
    )
}

/// Damped Newton minimization of [`objective`] from the origin.
pub fn fit_penalized(rows: &[(f64, bool)], c: f64) -> (f64, f64) {
    let (mut w, mut b) = (0.0, 0.0);
    let mut f = objective(rows, w, b, c);
    for _ in 0..NEWTON_MAX_ITER {
        let (g, h) = gradient_hessian(rows, w, b, c);
        if g[0].hypot(g[1]) < NEWTON_GRAD_TOL {
            break;
        }
        let [mut hww, hwb, mut hbb] = h;
        let mut det = hww * hbb - hwb * hwb;
        if det <= 1e-14 * (hww * hbb).max(1e-300) {
            // near-singular, e.g. a training fold holding one class only
            hww += 1e-6;
            hbb += 1e-6;
            det = hww * hbb - hwb * hwb;
        }
        let dw = -(hbb * g[0] - hwb * g[1]) / det;
        let db = -(hww * g[1] - hwb * g[0]) / det;
        let slope = g[0] * dw + g[1] * db;
        let (dw, db, slope) = if slope < 0.0 {
            (dw, db, slope)
        } else {
            (-g[0], -g[1], -(g[0] * g[0] + g[1] * g[1]))
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let (nw, nb) = (w + t * dw, b + t * db);
            let nf = objective(rows, nw, nb, c);
            if nf <= f + 1e-4 * t * slope {
                w = nw;
                b = nb;
                f = nf;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (w, b)
}

/// Stratified fold index for every row. Each class is shuffled with the
/// seed and dealt round-robin, the second class continuing where the first
/// stopped, so every fold's class counts differ by at most one.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut assignment = vec![0; labels.len()];
    for (k, &i) in pos.iter().chain(neg.iter()).enumerate() {
        assignment[i] = k % folds;
    }
    assignment
}

fn held_out_log_likelihood(rows: &[(f64, bool)], folds: &[usize], n_folds: usize, c: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..n_folds {
        let train: Vec<(f64, bool)> = rows
            .iter()
            .zip(folds)
            .filter(|(_, &f)| f != k)
            .map(|(r, _)| *r)
            .collect();
        let held: Vec<&(f64, bool)> = rows.iter().zip(folds).filter(|(_, &f)| f == k).map(|(r, _)| r).collect();
        if held.is_empty() {
            continue;
        }
        let (w, b) = fit_penalized(&train, c);
        total += held
            .iter()
            .map(|&&(s, y)| {
                let z = w * s + b;
                (if y { z } else { 0.0 }) - softplus(z)
            })
            .sum::<f64>();
    }
    total / rows.len() as f64
}

/// Fits a calibrator: picks `c` by cross-validated held-out log-likelihood
/// (ties go to the larger `c`), then refits on all rows.
pub fn fit_logreg(
    system_id: &str,
    answer_type: AnswerType,
    data: &CalibrationDataset,
    config: &LogRegConfig,
) -> Result<Calibrator> {
    config.validate()?;
    if data.rows.iter().any(|r| !r.0.is_finite()) {
        return Err(Error::NonFiniteScore);
    }
    let positives = data.positives();
    if positives == 0 || positives == data.rows.len() {
        return Err(Error::SingleClass {
            system: system_id.to_string(),
            answer_type,
        });
    }
    let labels: Vec<bool> = data.rows.iter().map(|r| r.1).collect();
    let folds = stratified_folds(&labels, config.folds, config.seed);
    let cv_log: Vec<(f64, f64)> = config
        .c_grid
        .iter()
        .map(|&c| (c, held_out_log_likelihood(&data.rows, &folds, config.folds, c)))
        .collect();
    let &(chosen_c, _) = cv_log
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .expect("non-empty grid");
    let (w, b) = fit_penalized(&data.rows, chosen_c);
    Ok(Calibrator {
        system_id: system_id.to_string(),
        answer_type,
        w,
        b,
        chosen_c,
        cv_log,
    })
}

/// Fits one calibrator per `(system, answer type)` on the train split.
/// Fits run in parallel; the result does not depend on the thread count.
pub fn fit_calibrators(
    systems: &[SystemPredictions],
    gold: &GoldSet,
    train_ids: &[ExampleId],
    metric: &MetricConfig,
    config: &LogRegConfig,
) -> Result<CalibratorSet> {
    config.validate()?;
    let jobs: Vec<(&SystemPredictions, AnswerType)> = systems
        .iter()
        .flat_map(|s| AnswerType::ALL.into_iter().map(move |at| (s, at)))
        .collect();
    let fitted = try_par_map(&jobs, |&(sys, at)| {
        let data = build_calibration_dataset(sys, gold, train_ids, at, metric)?;
        fit_logreg(&sys.system_id, at, &data, config)
    })?;
    let mut set = CalibratorSet::default();
    for cal in fitted {
        set.insert(cal);
    }
    Ok(set)
}

/// Calibrators keyed by system and answer type.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibratorSet {
    pub by_key: BTreeMap<(SystemId, AnswerType), Calibrator>,
}

impl CalibratorSet {
    pub fn get(&self, system_id: &str, answer_type: AnswerType) -> Option<&Calibrator> {
        self.by_key.get(&(system_id.to_string(), answer_type))
    }

    pub fn insert(&mut self, cal: Calibrator) {
        self.by_key.insert((cal.system_id.clone(), cal.answer_type), cal);
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }

    pub fn file_name(system_id: &str, answer_type: AnswerType) -> String {
        format!("{system_id}.{answer_type}.calibrator.json")
    }

    pub fn save(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for cal in self.by_key.values() {
            let path = dir.join(Self::file_name(&cal.system_id, cal.answer_type));
            let mut json = serde_json::to_string_pretty(cal)?;
            json.push('\n');
            std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }

    /// Loads every `*.calibrator.json` in `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut set = CalibratorSet::default();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".calibrator.json"))
            .collect();
        paths.sort();
        for p in paths {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            set.insert(serde_json::from_str(&text)?);
        }
        Ok(set)
    }
}
