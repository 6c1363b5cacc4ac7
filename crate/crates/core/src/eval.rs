//! Ranking, ground-truth correctness, cumulative error curves, and the
//! APFD-style efficacy percentage.
//!
//! The efficacy of an ordering is the discrete area under its cumulative
//! error curve, `Σ_k cum_errors[k]`, divided by the area of the ideal curve
//! that front-loads all `m` errors, `Σ_{k=1..n} min(k, m)`.

use crate::error::{Error, Result};
use crate::format::{Labels, Task};
use crate::scorers::{Method, ScoreRecord};
use crate::tensor::{argmax, Tensor};

/// Default MAE threshold for regression correctness.
pub const DEFAULT_MAE_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectnessVector {
    pub correct: Vec<bool>,
    pub task: Task,
    /// MAE threshold; regression only.
    pub threshold: Option<f64>,
}

impl CorrectnessVector {
    pub fn len(&self) -> usize {
        self.correct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correct.is_empty()
    }

    pub fn error_count(&self) -> usize {
        self.correct.iter().filter(|c| !**c).count()
    }
}

/// Mean absolute error per row, in `f64`.
pub fn mean_absolute_error(prediction: &[f32], target: &[f32]) -> f64 {
    let sum: f64 = prediction
        .iter()
        .zip(target)
        .map(|(&p, &y)| (f64::from(p) - f64::from(y)).abs())
        .sum();
    sum / prediction.len() as f64
}

/// Marks each prediction correct or not. Classification compares the argmax
/// with the class label; regression accepts rows whose MAE is at most
/// `threshold` (default 0.25).
pub fn derive_correctness(
    predictions: &Tensor,
    labels: &Labels,
    task: Task,
    threshold: Option<f64>,
) -> Result<CorrectnessVector> {
    if predictions.rank() != 2 {
        return Err(Error::Dimension(format!(
            "predictions must be [N, out], got {:?}",
            predictions.shape()
        )));
    }
    let n = predictions.rows();
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {n} predictions",
            labels.len()
        )));
    }
    match (task, labels) {
        (Task::Classification, Labels::Classes(classes)) => {
            let out = predictions.row_len();
            if let Some(bad) = classes.iter().find(|&&c| c as usize >= out) {
                return Err(Error::Dimension(format!(
                    "label {bad} out of range for {out} classes"
                )));
            }
            let correct = (0..n)
                .map(|i| Ok(argmax(predictions.row(i))? == classes[i] as usize))
                .collect::<Result<_>>()?;
            Ok(CorrectnessVector {
                correct,
                task,
                threshold: None,
            })
        }
        (Task::Regression, Labels::Targets(targets)) => {
            if targets.shape() != predictions.shape() {
                return Err(Error::Dimension(format!(
                    "targets {:?} do not match predictions {:?}",
                    targets.shape(),
                    predictions.shape()
                )));
            }
            let threshold = threshold.unwrap_or(DEFAULT_MAE_THRESHOLD);
            if !(threshold.is_finite() && threshold >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "bad MAE threshold {threshold}"
                )));
            }
            let correct = (0..n)
                .map(|i| mean_absolute_error(predictions.row(i), targets.row(i)) <= threshold)
                .collect();
            Ok(CorrectnessVector {
                correct,
                task,
                threshold: Some(threshold),
            })
        }
        (Task::Classification, Labels::Targets(_)) => {
            Err(Error::Task("classification needs u32 class labels".into()))
        }
        (Task::Regression, Labels::Classes(_)) => {
            Err(Error::Task("regression needs f32 target labels".into()))
        }
    }
}

/// Input indices by descending score. Equal scores keep ascending input
/// order; infinite scores come first.
pub fn rank_by_score(scores: &[ScoreRecord]) -> Result<Vec<u32>> {
    let Some(first) = scores.first() else {
        return Ok(Vec::new());
    };
    let method: Method = first.method;
    if let Some(other) = scores.iter().find(|s| s.method != method) {
        return Err(Error::InvalidArgument(format!(
            "mixed methods `{method}` and `{}`",
            other.method
        )));
    }
    if let Some(bad) = scores.iter().find(|s| s.score.is_nan()) {
        return Err(Error::InvalidArgument(format!(
            "NaN score for input {}",
            bad.input_index
        )));
    }
    let mut order: Vec<&ScoreRecord> = scores.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("NaN scores rejected above")
            .then(a.input_index.cmp(&b.input_index))
    });
    Ok(order.into_iter().map(|s| s.input_index).collect())
}

/// `cum_errors[k]` counts incorrect inputs among the first `k + 1` of `perm`.
pub fn cumulative_error_curve(perm: &[u32], correctness: &CorrectnessVector) -> Result<Vec<u32>> {
    let n = correctness.len();
    if perm.len() != n {
        return Err(Error::Dimension(format!(
            "permutation of length {} for {n} inputs",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    let mut curve = Vec::with_capacity(n);
    let mut errors = 0u32;
    for &i in perm {
        let i = i as usize;
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidArgument(format!(
                "not a permutation of 0..{n}"
            )));
        }
        if !correctness.correct[i] {
            errors += 1;
        }
        curve.push(errors);
    }
    Ok(curve)
}

/// `100 · Σ cum_errors / Σ_{k=1..n} min(k, m)`.
pub fn apfd_score(cum_errors: &[u32], m: u32) -> Result<f64> {
    if m == 0 {
        return Err(Error::NoErrors);
    }
    let mut prev = 0u32;
    for &c in cum_errors {
        if c < prev || c - prev > 1 {
            return Err(Error::InvalidArgument(
                "cumulative error curve must rise by 0 or 1 per step".into(),
            ));
        }
        prev = c;
    }
    if prev != m {
        return Err(Error::InvalidArgument(format!(
            "curve ends at {prev} but m = {m}"
        )));
    }
    let auc: u64 = cum_errors.iter().map(|&c| u64::from(c)).sum();
    let ideal: u64 = (1..=cum_errors.len() as u64)
        .map(|k| k.min(u64::from(m)))
        .sum();
    Ok(100.0 * auc as f64 / ideal as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: Method,
    pub permutation: Vec<u32>,
    pub cum_errors: Vec<u32>,
    pub total_errors: u32,
    pub apfd_percent: f64,
}

impl EvalReport {
    pub fn n(&self) -> usize {
        self.permutation.len()
    }
}

/// Ranks `scores`, builds the cumulative error curve, and computes the
/// efficacy percentage.
pub fn evaluate(scores: &[ScoreRecord], correctness: &CorrectnessVector) -> Result<EvalReport> {
    let method = scores
        .first()
        .map(|s| s.method)
        .ok_or_else(|| Error::InvalidArgument("no scores".into()))?;
    let permutation = rank_by_score(scores)?;
    let cum_errors = cumulative_error_curve(&permutation, correctness)?;
    let total_errors = cum_errors.last().copied().unwrap_or(0);
    let apfd_percent = apfd_score(&cum_errors, total_errors)?;
    Ok(EvalReport {
        method,
        permutation,
        cum_errors,
        total_errors,
        apfd_percent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    Fraction(f64),
    Count(usize),
}

/// The highest-priority inputs: the first `⌈fraction · n⌉` (or `k`) entries
/// of [`rank_by_score`].
pub fn select_top(scores: &[ScoreRecord], selection: Selection) -> Result<Vec<u32>> {
    let n = scores.len();
    let k = match selection {
        Selection::Fraction(f) if f > 0.0 && f <= 1.0 => {
            // absorb representation error, e.g. 0.07 * 100 = 7.000000000000001
            let raw = f * n as f64;
            let k = (raw - raw * 1e-12).ceil() as usize;
            k.clamp(1, n)
        }
        Selection::Count(k) if (1..=n).contains(&k) => k,
        other => {
            return Err(Error::InvalidArgument(format!(
                "selection {other:?} out of range for {n} inputs"
            )))
        }
    };
    let mut perm = rank_by_score(scores)?;
    perm.truncate(k);
    Ok(perm)
}
