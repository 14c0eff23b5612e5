use super::{FittedSimplifier, FittedState};
use crate::error::Result;
use crate::model::eval::Runner;
use crate::model::forward::{forward_with, AttentionTrace, Intervention};
use crate::model::ModelParameters;
use crate::numerics::kmeans::nearest;
use crate::numerics::{Scalar, Tensor};

/// `x ← x·U·Uᵀ` row by row.
pub fn project_rows<T: Scalar>(x: &mut Tensor<T>, basis: &Tensor<f64>) {
    let (dh, r) = (basis.rows(), basis.cols());
    let mut coords = vec![0.0f64; r];
    for i in 0..x.rows() {
        let row = x.row_mut(i);
        coords.fill(0.0);
        for (j, &v) in row.iter().enumerate() {
            let v = v.to_f64();
            for (c, b) in coords.iter_mut().zip(basis.row(j)) {
                *c += v * b;
            }
        }
        for (j, out) in row.iter_mut().enumerate().take(dh) {
            let b = basis.row(j);
            *out = T::from_f64(coords.iter().zip(b).map(|(c, bv)| c * bv).sum());
        }
    }
}

/// Replaces every row by its nearest center.
pub fn quantize_rows<T: Scalar>(x: &mut Tensor<T>, centers: &Tensor<f64>) {
    let mut buf = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        let row = x.row_mut(i);
        for (b, &v) in buf.iter_mut().zip(row.iter()) {
            *b = v.to_f64();
        }
        let (c, _) = nearest(centers, &buf);
        for (o, &v) in row.iter_mut().zip(centers.row(c)) {
            *o = T::from_f64(v);
        }
    }
}

/// Indicator on the highest causal score of each row; ties go to the latest
/// position.
pub fn one_hot_rows<T: Scalar>(scores: &Tensor<T>, attention: &mut Tensor<T>) {
    for i in 0..scores.rows() {
        let s = scores.row(i);
        let mut best = 0;
        for j in 1..=i {
            if s[j] >= s[best] {
                best = j;
            }
        }
        let row = attention.row_mut(i);
        row.fill(T::ZERO);
        row[best] = T::ONE;
    }
}

impl<T: Scalar> Intervention<T> for FittedSimplifier {
    fn targets(&self, layer: usize, head: usize) -> bool {
        (layer, head) == (self.spec.layer, self.spec.head)
    }

    fn rewrite_qk(&self, _: usize, _: usize, queries: &mut Tensor<T>, keys: &mut Tensor<T>) {
        match &self.state {
            FittedState::Svd { basis, .. } => {
                project_rows(queries, basis);
                project_rows(keys, basis);
            }
            FittedState::KMeans {
                key_centers,
                query_centers,
            } => {
                quantize_rows(queries, query_centers);
                quantize_rows(keys, key_centers);
            }
            FittedState::OneHot => {}
        }
    }

    fn rewrite_attention(&self, _: usize, _: usize, scores: &Tensor<T>, attention: &mut Tensor<T>) {
        if let FittedState::OneHot = self.state {
            one_hot_rows(scores, attention);
        }
    }
}

/// Forward pass with the simplifier applied at its head.
pub fn run_simplified(
    params: &ModelParameters,
    fitted: &FittedSimplifier,
    tokens: &[u32],
) -> Result<(Tensor<f32>, AttentionTrace)> {
    let out = forward_with(params, tokens, true, Some(fitted))?;
    Ok((out.logits, out.trace.expect("capture requested")))
}

/// Model plus simplifier, usable wherever a [`Runner`] is expected.
#[derive(Clone, Copy)]
pub struct SimplifiedRunner<'a> {
    pub params: &'a ModelParameters,
    pub fitted: &'a FittedSimplifier,
}

impl Runner for SimplifiedRunner<'_> {
    fn logits(&self, tokens: &[u32]) -> Result<Tensor<f32>> {
        forward_with(self.params, tokens, false, Some(self.fitted)).map(|o| o.logits)
    }
}
