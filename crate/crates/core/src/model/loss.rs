use super::forward::{build_graph, next_token_targets, DropoutRng};
use super::params::ModelParameters;
use crate::dyck::splits::stream_seed;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, Tensor};
use crate::par;

/// Sequences per gradient work unit. Partial gradients are summed in chunk
/// order, so the result does not depend on the thread count.
pub const GRAD_CHUNK: usize = 8;

fn check_batch(batch: &[Vec<u32>]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if let Some(i) = batch.iter().position(|s| s.len() < 2) {
        return Err(Error::InvalidArgument(format!("sequence {i} has fewer than two tokens")));
    }
    Ok(())
}

/// Mean next-token negative log-likelihood over positions 2..n of one sequence.
pub fn sequence_loss<T: Scalar>(params: &ModelParameters<T>, tokens: &[u32]) -> Result<f64> {
    if tokens.len() < 2 {
        return Err(Error::InvalidArgument("sequence has fewer than two tokens".into()));
    }
    let layout = params.layout();
    let mut tape = Tape::new(&params.tensors);
    let (logits, _) = build_graph(&mut tape, &params.config, &layout, tokens, false, None, None)?;
    let ce = tape.cross_entropy(logits, &next_token_targets(tokens));
    Ok(tape.value(ce).data()[0].to_f64())
}

/// Mean over sequences of per-sequence mean NLL.
pub fn loss<T: Scalar + Send + Sync>(params: &ModelParameters<T>, batch: &[Vec<u32>]) -> Result<f64> {
    check_batch(batch)?;
    let per_seq: Vec<Result<f64>> = par::map(batch, |s| sequence_loss(params, s));
    let mut total = 0.0;
    for l in per_seq {
        total += l?;
    }
    Ok(total / batch.len() as f64)
}

/// Dropout settings for one training step.
#[derive(Clone, Copy, Debug)]
pub struct StepDropout {
    pub rate: f64,
    pub seed: u64,
}

/// Batch loss and its gradient with respect to every parameter tensor.
pub fn loss_and_grad<T: Scalar + Send + Sync>(
    params: &ModelParameters<T>,
    batch: &[Vec<u32>],
    dropout: Option<StepDropout>,
) -> Result<(f64, Vec<Tensor<T>>)> {
    check_batch(batch)?;
    let layout = params.layout();
    let weight = T::from_f64(1.0 / batch.len() as f64);
    let chunks = batch.len().div_ceil(GRAD_CHUNK);
    let partial: Vec<Result<(f64, Vec<Tensor<T>>)>> = par::map_range(chunks, |c| {
        let mut grads = params.zeros_like();
        let mut total = 0.0;
        let lo = c * GRAD_CHUNK;
        for (i, tokens) in batch.iter().enumerate().skip(lo).take(GRAD_CHUNK) {
            let mut rng = dropout
                .filter(|d| d.rate > 0.0)
                .map(|d| DropoutRng::new(d.rate, stream_seed(d.seed, i as u64)));
            let mut tape = Tape::new(&params.tensors);
            let (logits, _) = build_graph(&mut tape, &params.config, &layout, tokens, false, None, rng.as_mut())?;
            let ce = tape.cross_entropy(logits, &next_token_targets(tokens));
            total += tape.value(ce).data()[0].to_f64();
            tape.backward(ce, weight, &mut grads);
        }
        Ok((total, grads))
    });
    let mut total = 0.0;
    let mut grads = params.zeros_like();
    for p in partial {
        let (l, g) = p?;
        total += l;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            acc.add_assign(gi);
        }
    }
    Ok((total / batch.len() as f64, grads))
}

#[cfg(test)]
mod tests {
    use super::super::config::{LayerNormPlacement, ModelConfig};
    use super::super::forward::forward;
    use super::super::params::init_model;
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            layers: 1,
            heads: 1,
            model_dim: 6,
            head_dim: 3,
            mlp_dim: 5,
            max_len: 12,
            vocab_size: 7,
            dropout: 0.0,
            tie_embeddings: true,
            layer_norm: LayerNormPlacement::Pre,
        }
    }

    #[test]
    fn uniform_logits_give_log_vocab() {
        let mut c = cfg();
        c.layers = 0;
        c.layer_norm = LayerNormPlacement::None;
        let mut p = init_model(&c, 0).unwrap();
        for t in &mut p.tensors {
            t.data_mut().fill(0.0);
        }
        let l = loss(&p, &[vec![0, 1, 2], vec![0, 4]]).unwrap();
        assert!((l - (7f64).ln()).abs() < 1e-6);
    }

    #[test]
    fn batch_loss_is_mean_of_sequence_means() {
        let p = init_model(&cfg(), 2).unwrap().cast::<f64>();
        let batch = vec![vec![0u32, 1, 2, 6], vec![0, 3, 4, 5, 1, 2, 6]];
        // log-softmax evaluated directly from the logits
        let mut means = Vec::new();
        for s in &batch {
            let logits = forward(&p, s, false).unwrap().logits;
            let mut nll = 0.0;
            for i in 0..s.len() - 1 {
                let row = logits.row(i);
                let lse = row.iter().map(|x| x.exp()).sum::<f64>().ln();
                nll += lse - row[s[i + 1] as usize];
            }
            means.push(nll / (s.len() - 1) as f64);
        }
        let expected = (means[0] + means[1]) / 2.0;
        assert!((loss(&p, &batch).unwrap() - expected).abs() < 1e-12);
        let (l, _) = loss_and_grad(&p, &batch, None).unwrap();
        assert!((l - expected).abs() < 1e-12);
    }

    #[test]
    fn peaked_logits_drive_loss_to_zero() {
        let mut c = cfg();
        c.layers = 0;
        c.layer_norm = LayerNormPlacement::None;
        c.tie_embeddings = false;
        c.model_dim = 7;
        let mut p = init_model(&c, 0).unwrap().cast::<f64>();
        for t in &mut p.tensors {
            t.data_mut().fill(0.0);
        }
        // token t maps to coordinate t; output row (t+1) reads it with a large weight
        for t in 0..6 {
            p.get_mut("tok_emb").unwrap().set(t, t, 1.0);
            p.get_mut("output").unwrap().set(t + 1, t, 60.0);
        }
        let l = loss(&p, &[vec![0, 1, 2, 3]]).unwrap();
        assert!(l < 1e-20, "{l}");
    }

    #[test]
    fn gradient_is_independent_of_chunking() {
        let p = init_model(&cfg(), 3).unwrap();
        let batch: Vec<Vec<u32>> = (0..19).map(|i| vec![0, 1 + i % 5, 2, 3 + i % 3, 6]).collect();
        let (_, g1) = loss_and_grad(&p, &batch, None).unwrap();
        let (_, g2) = loss_and_grad(&p, &batch, None).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn empty_batch_errors() {
        let p = init_model(&cfg(), 3).unwrap();
        assert!(loss(&p, &[]).is_err());
        assert!(loss_and_grad(&p, &[vec![0]], None).is_err());
    }
}
