//! Distance-based surprise adequacy.
//!
//! For a query trace `q` with predicted class `c`:
//! `x_a` is the nearest training trace with predicted class `c`, and `x_b`
//! is the training trace of any other class nearest to `x_a`. The score is
//! `|q - x_a| / |x_a - x_b|`. All searches are exact scans with `f64`
//! accumulation; ties go to the smallest training index.

use std::sync::OnceLock;

use rayon::prelude::*;

use super::{Method, ScoreRecord};
use crate::engine::ActivationTraceSet;
use crate::error::{Error, Result};
use crate::tensor::l2_unchecked;

/// Training traces grouped by model-predicted class.
#[derive(Debug)]
pub struct DsaIndex {
    dim: usize,
    /// Row-major training traces in their original order.
    traces: Vec<f32>,
    classes: Vec<u32>,
    /// `buckets[c]` holds the training indices predicted as `c`, ascending.
    buckets: Vec<Vec<usize>>,
    /// Lazily computed nearest other-class neighbour of each training trace.
    nearest_other: Vec<OnceLock<(usize, f64)>>,
}

/// The full outcome of one DSA query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsaMatch {
    pub x_a: usize,
    pub x_b: usize,
    pub dist_a: f64,
    pub dist_b: f64,
    pub score: f64,
}

pub fn build_dsa_index(train: &ActivationTraceSet) -> Result<DsaIndex> {
    let classes = train
        .predicted_class
        .as_ref()
        .ok_or_else(|| Error::Task("DSA needs predicted classes for the training traces".into()))?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("no training traces".into()));
    }
    let num_classes = classes.iter().max().map_or(0, |&c| c as usize + 1);
    let mut buckets = vec![Vec::new(); num_classes];
    for (i, &c) in classes.iter().enumerate() {
        buckets[c as usize].push(i);
    }
    if buckets.iter().filter(|b| !b.is_empty()).count() < 2 {
        return Err(Error::InvalidArgument(
            "DSA needs training traces from at least two predicted classes".into(),
        ));
    }
    Ok(DsaIndex {
        dim: train.dim(),
        traces: train.traces.data().to_vec(),
        classes: classes.clone(),
        nearest_other: (0..train.len()).map(|_| OnceLock::new()).collect(),
        buckets,
    })
}

impl DsaIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.buckets.len()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Training indices whose predicted class is `class`, ascending.
    pub fn bucket(&self, class: usize) -> &[usize] {
        self.buckets.get(class).map_or(&[], Vec::as_slice)
    }

    fn trace(&self, i: usize) -> &[f32] {
        &self.traces[i * self.dim..(i + 1) * self.dim]
    }

    /// Nearest training index among `candidates` (ascending), ties to the
    /// earliest.
    fn nearest_in<'a>(
        &self,
        query: &[f32],
        candidates: impl Iterator<Item = &'a usize>,
    ) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for &i in candidates {
            let d = l2_unchecked(query, self.trace(i));
            match best {
                Some((bi, bd)) if d > bd || (d == bd && i > bi) => {}
                _ => best = Some((i, d)),
            }
        }
        best
    }

    fn nearest_other_class(&self, anchor: usize) -> Option<(usize, f64)> {
        if let Some(hit) = self.nearest_other[anchor].get() {
            return Some(*hit);
        }
        let own = self.classes[anchor] as usize;
        let others = self
            .buckets
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != own)
            .flat_map(|(_, b)| b.iter());
        let hit = self.nearest_in(self.trace(anchor), others)?;
        Some(*self.nearest_other[anchor].get_or_init(|| hit))
    }

    pub fn query(&self, trace: &[f32], class: u32) -> Result<DsaMatch> {
        if trace.len() != self.dim {
            return Err(Error::Dimension(format!(
                "query trace has {} dims, index has {}",
                trace.len(),
                self.dim
            )));
        }
        let (x_a, dist_a) = self
            .nearest_in(trace, self.bucket(class as usize).iter())
            .ok_or_else(|| {
                Error::InvalidArgument(format!("no training traces predicted as class {class}"))
            })?;
        let (x_b, dist_b) = self.nearest_other_class(x_a).ok_or_else(|| {
            Error::InvalidArgument(format!("no training traces outside class {class}"))
        })?;
        let score = if dist_a == 0.0 {
            0.0
        } else if dist_b == 0.0 {
            f64::INFINITY
        } else {
            dist_a / dist_b
        };
        Ok(DsaMatch {
            x_a,
            x_b,
            dist_a,
            dist_b,
            score,
        })
    }
}

pub fn score_dsa(
    index: &DsaIndex,
    test_trace: &[f32],
    class: u32,
    input_index: u32,
) -> Result<ScoreRecord> {
    Ok(ScoreRecord {
        input_index,
        method: Method::Dsa,
        score: index.query(test_trace, class)?.score,
    })
}

/// Scores every trace of `test` (row `i` gets input index `i`) in parallel
/// on the current rayon pool.
pub fn score_dsa_batch(index: &DsaIndex, test: &ActivationTraceSet) -> Result<Vec<ScoreRecord>> {
    let classes = test
        .predicted_class
        .as_ref()
        .ok_or_else(|| Error::Task("DSA needs predicted classes for the test traces".into()))?;
    let n =
        u32::try_from(test.len()).map_err(|_| Error::InvalidArgument("too many inputs".into()))?;
    (0..n)
        .into_par_iter()
        .map(|i| score_dsa(index, test.trace(i as usize), classes[i as usize], i))
        .collect()
}
