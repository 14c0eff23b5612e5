//! Agreement between a model and its simplified proxy, plus the error
//! breakdowns used to explain where the two diverge.

pub mod breakdown;
pub mod report;
pub mod svg;

pub use breakdown::{
    attention_error_profile, cluster_depth_profile, cluster_depth_profile_from, depth_error_grid, export_projection,
    AttentionErrorProfile, ClusterDepthProfile, DepthErrorGrid, ProjectionRow, ProjectionTable,
};

use serde::{Deserialize, Serialize};

use crate::code::CharVocab;
use crate::dyck::{closing_eval_positions, DyckSample};
use crate::error::{Error, Result};
use crate::model::eval::{full_argmax, restricted_closer_argmax};
use crate::model::forward::{forward, forward_with, Intervention};
use crate::model::ModelParameters;
use crate::numerics::divergence::jsd_unchecked;
use crate::numerics::Tensor;
use crate::par;
use crate::simplify::FittedSimplifier;

/// Which positions are scored and how a prediction is read off the logits.
#[derive(Clone, Copy, Debug)]
pub enum EvalSet<'a> {
    /// Long-range closers, restricted argmax over the `bracket_types` closers.
    Dyck {
        samples: &'a [DyckSample],
        bracket_types: u32,
        min_distance: usize,
    },
    /// Every character of `BOS text EOS` sequences, full-vocabulary argmax.
    Code { sequences: &'a [Vec<u32>] },
}

impl EvalSet<'_> {
    pub fn len(&self) -> usize {
        match self {
            EvalSet::Dyck { samples, .. } => samples.len(),
            EvalSet::Code { sequences } => sequences.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tokens(&self, i: usize) -> &[u32] {
        match self {
            EvalSet::Dyck { samples, .. } => &samples[i].tokens,
            EvalSet::Code { sequences } => &sequences[i],
        }
    }

    /// Scored positions of sequence `i`; position `p` is predicted from row `p − 1`.
    pub fn positions(&self, i: usize) -> Vec<usize> {
        match self {
            EvalSet::Dyck {
                samples, min_distance, ..
            } => closing_eval_positions(&samples[i].match_index, *min_distance),
            EvalSet::Code { sequences } => {
                let s = &sequences[i];
                (1..s.len()).filter(|&p| s[p] < CharVocab::BOS).collect()
            }
        }
    }

    fn predict(&self, row: &[f32]) -> u32 {
        match self {
            EvalSet::Dyck { bracket_types, .. } => restricted_closer_argmax(row, *bracket_types),
            EvalSet::Code { .. } => full_argmax(row),
        }
    }
}

/// Leaves every head untouched; comparing against it measures a model
/// against itself.
#[derive(Clone, Copy, Debug)]
pub struct Unchanged;

impl<T: crate::numerics::Scalar> Intervention<T> for Unchanged {
    fn targets(&self, _: usize, _: usize) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PositionOutcome {
    pub position: usize,
    pub target: u32,
    pub original: u32,
    pub simplified: u32,
}

/// Row-level comparison of one sequence at one head.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceComparison {
    /// JSD between original and proxy attention for every query row.
    pub row_jsd: Vec<f64>,
    pub outcomes: Vec<PositionOutcome>,
    /// Rows where the full-vocabulary argmax agrees.
    pub full_same: usize,
}

/// JSD between the causal prefixes of two attention rows.
pub fn attention_row_jsd(a: &Tensor<f32>, b: &Tensor<f32>, row: usize) -> f64 {
    let p: Vec<f64> = a.row(row)[..=row].iter().map(|&x| x as f64).collect();
    let q: Vec<f64> = b.row(row)[..=row].iter().map(|&x| x as f64).collect();
    jsd_unchecked(&p, &q)
}

pub fn compare_sequence<I: Intervention<f32>>(
    params: &ModelParameters,
    proxy: &I,
    layer: usize,
    head: usize,
    set: &EvalSet<'_>,
    index: usize,
) -> Result<SequenceComparison> {
    let tokens = set.tokens(index);
    let orig = forward(params, tokens, true)?;
    let simp = forward_with(params, tokens, true, Some(proxy))?;
    let (ot, st) = (orig.trace.expect("capture"), simp.trace.expect("capture"));
    let (oa, sa) = (&ot.get(layer, head).attention, &st.get(layer, head).attention);
    let row_jsd = (0..tokens.len()).map(|r| attention_row_jsd(oa, sa, r)).collect();
    let outcomes = set
        .positions(index)
        .into_iter()
        .map(|p| PositionOutcome {
            position: p,
            target: tokens[p],
            original: set.predict(orig.logits.row(p - 1)),
            simplified: set.predict(simp.logits.row(p - 1)),
        })
        .collect();
    let full_same = (0..tokens.len())
        .filter(|&r| full_argmax(orig.logits.row(r)) == full_argmax(simp.logits.row(r)))
        .count();
    Ok(SequenceComparison {
        row_jsd,
        outcomes,
        full_same,
    })
}

/// Additive tallies; merging is a plain sum, so records do not depend on how
/// sequences were grouped.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FaithfulnessCounts {
    pub rows: usize,
    pub jsd_sum: f64,
    pub eval_rows_jsd_sum: f64,
    pub positions: usize,
    pub same: usize,
    pub full_same: usize,
    pub original_correct: usize,
    pub simplified_correct: usize,
    pub same_when_correct: usize,
}

impl FaithfulnessCounts {
    pub fn from_comparison(c: &SequenceComparison) -> Self {
        let mut out = Self {
            rows: c.row_jsd.len(),
            jsd_sum: c.row_jsd.iter().sum(),
            full_same: c.full_same,
            positions: c.outcomes.len(),
            ..Self::default()
        };
        for o in &c.outcomes {
            out.eval_rows_jsd_sum += c.row_jsd[o.position - 1];
            let same = o.original == o.simplified;
            out.same += usize::from(same);
            if o.original == o.target {
                out.original_correct += 1;
                out.same_when_correct += usize::from(same);
            }
            out.simplified_correct += usize::from(o.simplified == o.target);
        }
        out
    }

    pub fn merge(&mut self, other: &Self) {
        self.rows += other.rows;
        self.jsd_sum += other.jsd_sum;
        self.eval_rows_jsd_sum += other.eval_rows_jsd_sum;
        self.positions += other.positions;
        self.same += other.same;
        self.full_same += other.full_same;
        self.original_correct += other.original_correct;
        self.simplified_correct += other.simplified_correct;
        self.same_when_correct += other.same_when_correct;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessRecord {
    pub split: String,
    pub layer: usize,
    pub head: usize,
    pub simplifier: String,
    pub strength: usize,
    /// Pooled over every query row of every sequence.
    pub mean_jsd: f64,
    /// Pooled over the rows that feed scored positions.
    pub mean_jsd_eval: f64,
    pub same_prediction_rate: f64,
    /// Full-vocabulary agreement over every row.
    pub same_prediction_full: f64,
    /// Agreement restricted to positions the original model gets right;
    /// `None` when it gets none right.
    pub same_prediction_when_correct: Option<f64>,
    pub accuracy_original: f64,
    pub accuracy_simplified: f64,
    pub n_eval_positions: usize,
    pub n_rows: usize,
    pub n_original_correct: usize,
}

impl FaithfulnessRecord {
    pub fn from_counts(split: &str, label: ProxyLabel<'_>, c: &FaithfulnessCounts) -> Result<Self> {
        if c.positions == 0 {
            return Err(Error::Undefined(format!("no evaluation positions in split `{split}`")));
        }
        let p = c.positions as f64;
        Ok(Self {
            split: split.to_string(),
            layer: label.layer,
            head: label.head,
            simplifier: label.name.to_string(),
            strength: label.strength,
            mean_jsd: c.jsd_sum / c.rows as f64,
            mean_jsd_eval: c.eval_rows_jsd_sum / p,
            same_prediction_rate: c.same as f64 / p,
            same_prediction_full: c.full_same as f64 / c.rows as f64,
            same_prediction_when_correct: (c.original_correct > 0)
                .then(|| c.same_when_correct as f64 / c.original_correct as f64),
            accuracy_original: c.original_correct as f64 / p,
            accuracy_simplified: c.simplified_correct as f64 / p,
            n_eval_positions: c.positions,
            n_rows: c.rows,
            n_original_correct: c.original_correct,
        })
    }
}

/// Identifies the proxy in a record.
#[derive(Clone, Copy, Debug)]
pub struct ProxyLabel<'a> {
    pub layer: usize,
    pub head: usize,
    pub name: &'a str,
    pub strength: usize,
}

impl<'a> From<&'a FittedSimplifier> for ProxyLabel<'a> {
    fn from(f: &'a FittedSimplifier) -> Self {
        Self {
            layer: f.spec.layer,
            head: f.spec.head,
            name: f.spec.kind.name(),
            strength: f.spec.kind.strength(),
        }
    }
}

/// Per-sequence comparisons for a whole set, in input order.
pub fn compare_all<I: Intervention<f32>>(
    params: &ModelParameters,
    proxy: &I,
    layer: usize,
    head: usize,
    set: &EvalSet<'_>,
) -> Result<Vec<SequenceComparison>> {
    par::map_range(set.len(), |i| compare_sequence(params, proxy, layer, head, set, i))
        .into_iter()
        .collect()
}

pub fn faithfulness_counts<I: Intervention<f32>>(
    params: &ModelParameters,
    proxy: &I,
    layer: usize,
    head: usize,
    set: &EvalSet<'_>,
) -> Result<FaithfulnessCounts> {
    let per = par::map_range(set.len(), |i| {
        compare_sequence(params, proxy, layer, head, set, i).map(|c| FaithfulnessCounts::from_comparison(&c))
    });
    let mut total = FaithfulnessCounts::default();
    for c in per {
        total.merge(&c?);
    }
    Ok(total)
}

/// Compares `params` with and without `fitted` on `set`.
pub fn evaluate_faithfulness(
    params: &ModelParameters,
    fitted: &FittedSimplifier,
    set: &EvalSet<'_>,
    split: &str,
) -> Result<FaithfulnessRecord> {
    let (layer, head) = (fitted.spec.layer, fitted.spec.head);
    let counts = faithfulness_counts(params, fitted, layer, head, set)?;
    FaithfulnessRecord::from_counts(split, fitted.into(), &counts)
}
