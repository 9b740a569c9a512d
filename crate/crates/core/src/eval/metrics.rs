use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::classifier::FAKE_THRESHOLD;
use crate::error::{Error, Result};
use crate::label::Label;

/// A sample's fake probability alongside its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub id: String,
    pub score: f64,
    pub label: Label,
}

impl ScoredSample {
    pub fn new(id: impl Into<String>, score: f64, label: Label) -> Self {
        Self {
            id: id.into(),
            score,
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub ap: f64,
    pub n_real: usize,
    pub n_fake: usize,
    pub pr_points: Vec<PrPoint>,
}

impl MetricsReport {
    /// ACC at the fixed 0.5 threshold, AP and the PR curve.
    pub fn compute(samples: &[ScoredSample]) -> Result<Self> {
        let n_fake = samples.iter().filter(|s| s.label.is_fake()).count();
        Ok(Self {
            acc: accuracy(samples, FAKE_THRESHOLD)?,
            ap: average_precision(samples)?,
            n_real: samples.len() - n_fake,
            n_fake,
            pr_points: pr_curve(samples)?,
        })
    }
}

fn check_scores(samples: &[ScoredSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(s) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::InvalidInput(format!("score for {} is not finite", s.id)));
    }
    Ok(())
}

/// Fraction of samples where `score >= threshold` agrees with the label
/// being fake.
pub fn accuracy(samples: &[ScoredSample], threshold: f64) -> Result<f64> {
    check_scores(samples)?;
    let hits = samples
        .iter()
        .filter(|s| (s.score >= threshold) == s.label.is_fake())
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Descending score, ties broken by ascending id.
fn ranking(samples: &[ScoredSample]) -> Vec<&ScoredSample> {
    let mut ranked: Vec<&ScoredSample> = samples.iter().collect();
    ranked.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => a.id.cmp(&b.id),
        o => o,
    });
    ranked
}

fn count_positives(samples: &[ScoredSample]) -> Result<usize> {
    check_scores(samples)?;
    match samples.iter().filter(|s| s.label.is_fake()).count() {
        0 => Err(Error::NoPositives),
        n => Ok(n),
    }
}

/// Mean of precision@k over the ranks k at which fakes appear.
pub fn average_precision(samples: &[ScoredSample]) -> Result<f64> {
    let positives = count_positives(samples)?;
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (k, s) in ranking(samples).into_iter().enumerate() {
        if s.label.is_fake() {
            tp += 1;
            sum += tp as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// One point per distinct score, thresholding at `score >= s` in descending
/// order of `s`.
pub fn pr_curve(samples: &[ScoredSample]) -> Result<Vec<PrPoint>> {
    let positives = count_positives(samples)? as f64;
    let ranked = ranking(samples);
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    for (i, s) in ranked.iter().enumerate() {
        seen += 1;
        if s.label.is_fake() {
            tp += 1;
        }
        let group_ends = ranked
            .get(i + 1)
            .is_none_or(|next| next.score != s.score);
        if group_ends {
            points.push(PrPoint {
                recall: tp as f64 / positives,
                precision: tp as f64 / seen as f64,
            });
        }
    }
    Ok(points)
}
