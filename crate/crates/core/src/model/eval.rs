//! Closing-bracket accuracy and the runner abstraction shared with
//! simplified models.

use super::forward::forward;
use super::params::ModelParameters;
use crate::dyck::vocab::closer_for;
use crate::dyck::{closing_eval_positions, DyckSample};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::par;

/// Anything that maps a token sequence to next-token logits (N × vocab).
pub trait Runner: Sync {
    fn logits(&self, tokens: &[u32]) -> Result<Tensor<f32>>;
}

impl Runner for ModelParameters<f32> {
    fn logits(&self, tokens: &[u32]) -> Result<Tensor<f32>> {
        forward(self, tokens, false).map(|o| o.logits)
    }
}

impl<R: Runner + ?Sized> Runner for &R {
    fn logits(&self, tokens: &[u32]) -> Result<Tensor<f32>> {
        (**self).logits(tokens)
    }
}

/// Scores the closer that matches the current stack top with 1, all else 0.
#[derive(Clone, Copy, Debug)]
pub struct OracleRunner {
    pub vocab_size: usize,
}

impl Runner for OracleRunner {
    fn logits(&self, tokens: &[u32]) -> Result<Tensor<f32>> {
        let n = tokens.len();
        let mut out = Tensor::zeros(&[n, self.vocab_size]);
        let eos = self.vocab_size as u32 - 1;
        let mut stack = Vec::new();
        for (i, &t) in tokens.iter().enumerate() {
            if t != 0 && t != eos {
                if t % 2 == 1 {
                    stack.push(t);
                } else {
                    stack.pop();
                }
            }
            if let Some(&o) = stack.last() {
                out.set(i, closer_for(o) as usize, 1.0);
            }
        }
        Ok(out)
    }
}

/// Constant zero logits.
#[derive(Clone, Copy, Debug)]
pub struct UniformRunner {
    pub vocab_size: usize,
}

impl Runner for UniformRunner {
    fn logits(&self, tokens: &[u32]) -> Result<Tensor<f32>> {
        Ok(Tensor::zeros(&[tokens.len(), self.vocab_size]))
    }
}

/// Highest-scoring closer among the `k` closing tokens; ties go to the
/// lowest id.
pub fn restricted_closer_argmax(row: &[f32], k: u32) -> u32 {
    let mut best = 2;
    for t in 2..=k {
        if row[2 * t as usize] > row[best as usize] {
            best = 2 * t;
        }
    }
    best
}

/// Full-vocabulary argmax; ties go to the lowest id.
pub fn full_argmax(row: &[f32]) -> u32 {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best as u32
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClosePrediction {
    pub position: usize,
    pub predicted: u32,
    pub target: u32,
}

/// Predictions at the scored closer positions of one sentence; the token at
/// `i` is predicted from logits row `i − 1`.
pub fn closer_predictions_from_logits(
    logits: &Tensor<f32>,
    sample: &DyckSample,
    k: u32,
    min_distance: usize,
) -> Vec<ClosePrediction> {
    closing_eval_positions(&sample.match_index, min_distance)
        .into_iter()
        .map(|i| ClosePrediction {
            position: i,
            predicted: restricted_closer_argmax(logits.row(i - 1), k),
            target: sample.tokens[i],
        })
        .collect()
}

pub fn closer_predictions(
    runner: &dyn Runner,
    sample: &DyckSample,
    k: u32,
    min_distance: usize,
) -> Result<Vec<ClosePrediction>> {
    let logits = runner.logits(&sample.tokens)?;
    Ok(closer_predictions_from_logits(&logits, sample, k, min_distance))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AccuracyReport {
    pub correct: usize,
    pub total: usize,
}

impl AccuracyReport {
    /// Fails with [`Error::Undefined`] when nothing was scored.
    pub fn accuracy(&self) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::Undefined("no closing-bracket evaluation positions".into()));
        }
        Ok(self.correct as f64 / self.total as f64)
    }
}

pub fn closing_bracket_counts(
    runner: &dyn Runner,
    samples: &[DyckSample],
    k: u32,
    min_distance: usize,
) -> Result<AccuracyReport> {
    let per: Vec<Result<AccuracyReport>> = par::map(samples, |s| {
        let preds = if closing_eval_positions(&s.match_index, min_distance).is_empty() {
            Vec::new()
        } else {
            closer_predictions(runner, s, k, min_distance)?
        };
        Ok(AccuracyReport {
            correct: preds.iter().filter(|p| p.predicted == p.target).count(),
            total: preds.len(),
        })
    });
    per.into_iter().try_fold(AccuracyReport::default(), |acc, r| {
        let r = r?;
        Ok(AccuracyReport {
            correct: acc.correct + r.correct,
            total: acc.total + r.total,
        })
    })
}

/// Fraction of long-range closers predicted correctly.
pub fn closing_bracket_accuracy(
    runner: &dyn Runner,
    samples: &[DyckSample],
    k: u32,
    min_distance: usize,
) -> Result<f64> {
    closing_bracket_counts(runner, samples, k, min_distance)?.accuracy()
}
