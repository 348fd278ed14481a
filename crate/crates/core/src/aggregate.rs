//! Within-system aggregation: one score per distinct span.
//!
//! A system may emit the same span several times (overlapping decode
//! windows). The scores for a span are collected into a descending
//! [`ScoreVector`] and collapsed by one of four strategies.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibrate::Calibrator;
use crate::error::{Error, Result};
use crate::span::{Candidate, Span};

pub const DEFAULT_BETA: f64 = 0.5;

/// Non-empty scores for one span, sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(mut scores: Vec<f64>) -> Option<Self> {
        if scores.is_empty() || scores.iter().any(|s| !s.is_finite()) {
            return None;
        }
        scores.sort_by(|a, b| b.total_cmp(a));
        Some(ScoreVector(scores))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum AggregationStrategy {
    Max,
    /// Exponentially decaying sum with ratio `beta`.
    Exs { beta: f64 },
    /// Reciprocal rank sum.
    Rrs,
    NoisyOr,
}

impl AggregationStrategy {
    pub fn exs() -> Self {
        AggregationStrategy::Exs { beta: DEFAULT_BETA }
    }

    pub fn validate(&self) -> Result<()> {
        if let AggregationStrategy::Exs { beta } = self {
            if !(*beta > 0.0 && *beta < 1.0) {
                return Err(Error::Config(format!("exs beta {beta} must be in (0,1)")));
            }
        }
        Ok(())
    }

    /// Strategy value for a descending score vector.
    pub fn apply(&self, p: &ScoreVector) -> std::result::Result<f64, f64> {
        match *self {
            AggregationStrategy::Max => Ok(agg_max(p)),
            AggregationStrategy::Exs { beta } => Ok(agg_exs(p, beta)),
            AggregationStrategy::Rrs => Ok(agg_rrs(p)),
            AggregationStrategy::NoisyOr => agg_noisy_or(p),
        }
    }
}

impl fmt::Display for AggregationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregationStrategy::Max => f.write_str("max"),
            AggregationStrategy::Exs { beta } if *beta == DEFAULT_BETA => f.write_str("exs"),
            AggregationStrategy::Exs { beta } => write!(f, "exs:{beta}"),
            AggregationStrategy::Rrs => f.write_str("rrs"),
            AggregationStrategy::NoisyOr => f.write_str("noisy-or"),
        }
    }
}

impl FromStr for AggregationStrategy {
    type Err = String;

    /// `max`, `exs`, `exs:<beta>`, `rrs`, `noisy-or`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let strategy = match s {
            "max" => AggregationStrategy::Max,
            "exs" => AggregationStrategy::exs(),
            "rrs" => AggregationStrategy::Rrs,
            "noisy-or" | "noisy_or" | "no" => AggregationStrategy::NoisyOr,
            other => match other.strip_prefix("exs:") {
                Some(b) => AggregationStrategy::Exs {
                    beta: b.parse().map_err(|_| format!("bad exs beta `{b}`"))?,
                },
                None => return Err(format!("unknown aggregation `{other}` (max, exs, rrs, noisy-or)")),
            },
        };
        strategy.validate().map_err(|e| e.to_string())?;
        Ok(strategy)
    }
}

/// Groups candidates by span; the map is in span order.
pub fn group_by_span(candidates: &[Candidate]) -> BTreeMap<Span, ScoreVector> {
    let mut raw: BTreeMap<Span, Vec<f64>> = BTreeMap::new();
    for c in candidates {
        raw.entry(c.span).or_default().push(c.score);
    }
    raw.into_iter()
        .map(|(span, scores)| (span, ScoreVector::new(scores).expect("finite, non-empty")))
        .collect()
}

pub fn agg_max(p: &ScoreVector) -> f64 {
    p.0[0]
}

/// `sum_i P_i * beta^(i-1)` over the descending vector.
pub fn agg_exs(p: &ScoreVector, beta: f64) -> f64 {
    p.0.iter()
        .enumerate()
        .map(|(i, s)| s * beta.powi(i as i32))
        .sum()
}

/// `sum_i P_i / i` over the descending vector.
pub fn agg_rrs(p: &ScoreVector) -> f64 {
    p.0.iter()
        .enumerate()
        .map(|(i, s)| s / (i + 1) as f64)
        .sum()
}

/// `1 - prod_i (1 - P_i)`. Errors with the first out-of-range element.
pub fn agg_noisy_or(p: &ScoreVector) -> std::result::Result<f64, f64> {
    if let Some(&bad) = p.0.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(bad);
    }
    Ok(1.0 - p.0.iter().map(|s| 1.0 - s).product::<f64>())
}

/// Calibrates every candidate (if a calibrator is given), groups by span,
/// and aggregates. Output is in span order.
pub fn aggregate_system(
    system_id: &str,
    candidates: &[Candidate],
    strategy: AggregationStrategy,
    calibrator: Option<&Calibrator>,
) -> Result<Vec<(Span, f64)>> {
    let calibrated: Vec<Candidate>;
    let cands = match calibrator {
        Some(cal) => {
            calibrated = candidates
                .iter()
                .map(|c| Candidate::new(c.span, cal.apply(c.score)))
                .collect();
            &calibrated[..]
        }
        None => candidates,
    };
    group_by_span(cands)
        .into_iter()
        .map(|(span, p)| {
            strategy
                .apply(&p)
                .map(|score| (span, score))
                .map_err(|value| Error::NoisyOrDomain {
                    system: system_id.to_string(),
                    span,
                    value,
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> ScoreVector {
        ScoreVector::new(xs.to_vec()).unwrap()
    }

    fn sp(s: u32, e: u32) -> Span {
        Span::new(s, e).unwrap()
    }

    #[test]
    fn grouping() {
        let a = sp(1, 2);
        let b = sp(3, 4);
        let g = group_by_span(&[
            Candidate::new(a, 0.3),
            Candidate::new(b, 0.5),
            Candidate::new(a, 0.7),
        ]);
        assert_eq!(g.len(), 2);
        assert_eq!(g[&a].as_slice(), &[0.7, 0.3]);
        assert_eq!(g[&b].as_slice(), &[0.5]);
        assert!(group_by_span(&[]).is_empty());
        let g = group_by_span(&[Candidate::new(Span::Null, 0.2)]);
        assert_eq!(g[&Span::Null].as_slice(), &[0.2]);
    }

    #[test]
    fn formulas() {
        assert_eq!(agg_max(&v(&[0.7, 0.3])), 0.7);
        assert_eq!(agg_max(&v(&[0.5])), 0.5);
        assert_eq!(agg_max(&v(&[-1.0, -2.0])), -1.0);

        assert!((agg_exs(&v(&[0.8, 0.4]), 0.5) - 1.0).abs() < 1e-12);
        assert_eq!(agg_exs(&v(&[0.5]), 0.3), 0.5);
        assert!((agg_exs(&v(&[0.6, 0.6, 0.6]), 0.5) - 1.05).abs() < 1e-12);

        assert!((agg_rrs(&v(&[0.8, 0.4])) - 1.0).abs() < 1e-12);
        assert_eq!(agg_rrs(&v(&[0.9])), 0.9);
        assert!((agg_rrs(&v(&[0.6, 0.6, 0.6])) - 1.1).abs() < 1e-12);

        assert!((agg_noisy_or(&v(&[0.5, 0.5])).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(agg_noisy_or(&v(&[0.37])).unwrap(), 0.37);
        assert_eq!(agg_noisy_or(&v(&[1.0, 0.3])).unwrap(), 1.0);
        assert_eq!(agg_noisy_or(&v(&[3.2])), Err(3.2));
    }

    #[test]
    fn vector_is_sorted_descending() {
        assert_eq!(v(&[0.1, 0.9, 0.5]).as_slice(), &[0.9, 0.5, 0.1]);
        assert!(ScoreVector::new(vec![]).is_none());
        assert!(ScoreVector::new(vec![f64::NAN]).is_none());
    }

    #[test]
    fn parse_names() {
        assert_eq!("max".parse::<AggregationStrategy>().unwrap(), AggregationStrategy::Max);
        assert_eq!("exs".parse::<AggregationStrategy>().unwrap(), AggregationStrategy::Exs { beta: 0.5 });
        assert_eq!("exs:0.25".parse::<AggregationStrategy>().unwrap(), AggregationStrategy::Exs { beta: 0.25 });
        assert!("exs:1.5".parse::<AggregationStrategy>().is_err());
        assert_eq!("noisy-or".parse::<AggregationStrategy>().unwrap(), AggregationStrategy::NoisyOr);
        assert!("mean".parse::<AggregationStrategy>().is_err());
        for s in ["max", "exs", "rrs", "noisy-or"] {
            assert_eq!(s.parse::<AggregationStrategy>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn aggregate_composition() {
        let a = sp(1, 2);
        let cands = [Candidate::new(a, 0.7), Candidate::new(a, 0.3)];
        let out = aggregate_system("s", &cands, AggregationStrategy::Max, None).unwrap();
        assert_eq!(out, vec![(a, 0.7)]);

        let raw = [Candidate::new(a, 3.2)];
        match aggregate_system("s1", &raw, AggregationStrategy::NoisyOr, None) {
            Err(Error::NoisyOrDomain { system, span, value }) => {
                assert_eq!(system, "s1");
                assert_eq!(span, a);
                assert_eq!(value, 3.2);
            }
            other => panic!("expected domain error, got {other:?}"),
        }

        let cal = Calibrator::fixed("s1", crate::span::AnswerType::Long, 1.0, 0.0);
        let out = aggregate_system("s1", &raw, AggregationStrategy::NoisyOr, Some(&cal)).unwrap();
        assert!((out[0].1 - 1.0 / (1.0 + (-3.2f64).exp())).abs() < 1e-15);
    }

    fn strategies() -> [AggregationStrategy; 4] {
        [
            AggregationStrategy::Max,
            AggregationStrategy::exs(),
            AggregationStrategy::Rrs,
            AggregationStrategy::NoisyOr,
        ]
    }

    proptest! {
        #[test]
        fn singleton_identity(p in 0.0f64..=1.0) {
            for s in strategies() {
                prop_assert!((s.apply(&v(&[p])).unwrap() - p).abs() <= 1e-12);
            }
        }

        #[test]
        fn permutation_invariant(
            mut cands in proptest::collection::vec((0u32..4, 0.0f64..1.0), 1..15),
        ) {
            let to_c = |cs: &[(u32, f64)]| -> Vec<Candidate> {
                cs.iter().map(|&(s, x)| Candidate::new(sp(s, s + 1), x)).collect()
            };
            let before = to_c(&cands);
            cands.reverse();
            let mid = cands.len() / 2;
            cands.rotate_left(mid);
            let after = to_c(&cands);
            for s in strategies() {
                prop_assert_eq!(
                    aggregate_system("s", &before, s, None).unwrap(),
                    aggregate_system("s", &after, s, None).unwrap()
                );
            }
        }

        #[test]
        fn noisy_or_dominates_max_and_is_monotone(
            xs in proptest::collection::vec(0.0f64..=1.0, 1..10),
            i in 0usize..10,
            bump in 0.0f64..=1.0,
        ) {
            let p = v(&xs);
            let no = agg_noisy_or(&p).unwrap();
            prop_assert!(no >= agg_max(&p) - 1e-15);
            prop_assert!((0.0..=1.0).contains(&no));
            let mut ys = xs.clone();
            let i = i % ys.len();
            ys[i] = (ys[i] + bump).min(1.0);
            let q = v(&ys);
            prop_assert!(agg_noisy_or(&q).unwrap() >= no - 1e-15);
            prop_assert!(agg_max(&q) >= agg_max(&p));
        }

        #[test]
        fn exs_tends_to_max(xs in proptest::collection::vec(-5.0f64..5.0, 2..10)) {
            let p = v(&xs);
            prop_assume!(p.as_slice()[0] > p.as_slice()[1]);
            prop_assert!((agg_exs(&p, 1e-9) - agg_max(&p)).abs() < 1e-6);
        }

        #[test]
        fn grouping_conserves_count(cands in proptest::collection::vec((0u32..5, -3.0f64..3.0), 0..30)) {
            let cs: Vec<Candidate> = cands.iter().map(|&(s, x)| Candidate::new(sp(s, s + 2), x)).collect();
            let g = group_by_span(&cs);
            prop_assert_eq!(g.values().map(ScoreVector::len).sum::<usize>(), cs.len());
        }
    }
}
