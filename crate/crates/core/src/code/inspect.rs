//! Attention patterns of one head on given texts, with previous-token and
//! induction scores.

use crate::error::Result;
use crate::model::forward::forward;
use crate::model::ModelParameters;
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct HeadInspection {
    pub layer: usize,
    pub head: usize,
    /// One causal attention matrix per input sequence.
    pub attention: Vec<Tensor<f32>>,
    pub previous_token_score: f64,
    pub induction_score: f64,
}

/// Positions `j + 1` for every earlier `j < i` holding the token at `i`.
pub fn induction_targets(tokens: &[u32], i: usize) -> Vec<usize> {
    (0..i).filter(|&j| tokens[j] == tokens[i]).map(|j| j + 1).collect()
}

/// Mean attention on position `i − 1`, over rows `i ≥ 1`.
pub fn previous_token_score(attention: &[Tensor<f32>]) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for a in attention {
        for i in 1..a.rows() {
            sum += a.get(i, i - 1) as f64;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean attention mass on induction targets, over rows that have one.
pub fn induction_score(sequences: &[Vec<u32>], attention: &[Tensor<f32>]) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (s, a) in sequences.iter().zip(attention) {
        for i in 0..s.len() {
            let targets = induction_targets(s, i);
            if targets.is_empty() {
                continue;
            }
            sum += targets.iter().map(|&j| a.get(i, j) as f64).sum::<f64>();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Both scores under uniform causal attention.
pub fn uniform_baseline(sequences: &[Vec<u32>]) -> (f64, f64) {
    let uniform: Vec<Tensor<f32>> = sequences
        .iter()
        .map(|s| {
            let n = s.len();
            let mut t = Tensor::zeros(&[n, n]);
            for i in 0..n {
                for j in 0..=i {
                    t.set(i, j, 1.0 / (i + 1) as f32);
                }
            }
            t
        })
        .collect();
    (previous_token_score(&uniform), induction_score(sequences, &uniform))
}

pub fn inspect_head(params: &ModelParameters, layer: usize, head: usize, sequences: &[Vec<u32>]) -> Result<HeadInspection> {
    let attention = sequences
        .iter()
        .map(|s| Ok(forward(params, s, true)?.trace.expect("capture").get(layer, head).attention.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(HeadInspection {
        layer,
        head,
        previous_token_score: previous_token_score(&attention),
        induction_score: induction_score(sequences, &attention),
        attention,
    })
}
