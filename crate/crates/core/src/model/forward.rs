//! Transformer forward pass on the tape, with attention capture and
//! per-head interventions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{LayerNormPlacement, ModelConfig};
use super::params::{ModelParameters, ParamLayout};
use crate::error::{Error, Result};
use crate::numerics::{NodeId, Scalar, Tape, Tensor};

/// Captured internals of one attention head for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadTrace<T: Scalar = f32> {
    /// N × d_h.
    pub queries: Tensor<T>,
    /// N × d_h.
    pub keys: Tensor<T>,
    /// N × d_h.
    pub values: Tensor<T>,
    /// N × N scaled scores (entries above the diagonal are not meaningful).
    pub scores: Tensor<T>,
    /// N × N causal attention; rows sum to one.
    pub attention: Tensor<T>,
    /// N × d contribution of the head to the residual stream.
    pub output: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTrace<T: Scalar = f32> {
    pub heads_per_layer: usize,
    /// Indexed by `layer * heads_per_layer + head`.
    pub heads: Vec<HeadTrace<T>>,
}

impl<T: Scalar> AttentionTrace<T> {
    pub fn get(&self, layer: usize, head: usize) -> &HeadTrace<T> {
        &self.heads[layer * self.heads_per_layer + head]
    }
}

/// Hook into the forward pass at particular heads. Rewritten values enter the
/// graph as constants, so interventions are for inference only.
pub trait Intervention<T: Scalar>: Sync {
    fn targets(&self, layer: usize, head: usize) -> bool;

    fn rewrite_qk(&self, _layer: usize, _head: usize, _queries: &mut Tensor<T>, _keys: &mut Tensor<T>) {}

    fn rewrite_attention(&self, _layer: usize, _head: usize, _scores: &Tensor<T>, _attention: &mut Tensor<T>) {}

    fn rewrite_output(&self, _layer: usize, _head: usize, _output: &mut Tensor<T>) {}
}

/// Applies `.0` then `.1`.
impl<T: Scalar, A: Intervention<T>, B: Intervention<T>> Intervention<T> for (A, B) {
    fn targets(&self, layer: usize, head: usize) -> bool {
        self.0.targets(layer, head) || self.1.targets(layer, head)
    }

    fn rewrite_qk(&self, layer: usize, head: usize, q: &mut Tensor<T>, k: &mut Tensor<T>) {
        if self.0.targets(layer, head) {
            self.0.rewrite_qk(layer, head, q, k);
        }
        if self.1.targets(layer, head) {
            self.1.rewrite_qk(layer, head, q, k);
        }
    }

    fn rewrite_attention(&self, layer: usize, head: usize, s: &Tensor<T>, a: &mut Tensor<T>) {
        if self.0.targets(layer, head) {
            self.0.rewrite_attention(layer, head, s, a);
        }
        if self.1.targets(layer, head) {
            self.1.rewrite_attention(layer, head, s, a);
        }
    }

    fn rewrite_output(&self, layer: usize, head: usize, o: &mut Tensor<T>) {
        if self.0.targets(layer, head) {
            self.0.rewrite_output(layer, head, o);
        }
        if self.1.targets(layer, head) {
            self.1.rewrite_output(layer, head, o);
        }
    }
}

/// Zeroes one head's output.
#[derive(Clone, Copy, Debug)]
pub struct HeadAblation {
    pub layer: usize,
    pub head: usize,
}

impl<T: Scalar> Intervention<T> for HeadAblation {
    fn targets(&self, layer: usize, head: usize) -> bool {
        (layer, head) == (self.layer, self.head)
    }

    fn rewrite_output(&self, _layer: usize, _head: usize, output: &mut Tensor<T>) {
        output.data_mut().fill(T::ZERO);
    }
}

/// Dropout source for one sequence; `None` at inference.
pub struct DropoutRng {
    pub rate: f64,
    pub rng: ChaCha8Rng,
}

impl DropoutRng {
    pub fn new(rate: f64, seed: u64) -> Self {
        Self {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn mask<T: Scalar>(&mut self, n: usize) -> Vec<T> {
        let keep = T::from_f64(1.0 / (1.0 - self.rate));
        (0..n)
            .map(|_| if self.rng.random::<f64>() < self.rate { T::ZERO } else { keep })
            .collect()
    }
}

pub fn check_tokens(config: &ModelConfig, tokens: &[u32]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("empty token sequence".into()));
    }
    if tokens.len() > config.max_len {
        return Err(Error::InvalidArgument(format!(
            "sequence of {} tokens exceeds max_len {}",
            tokens.len(),
            config.max_len
        )));
    }
    if let Some((i, &t)) = tokens.iter().enumerate().find(|(_, &t)| t as usize >= config.vocab_size) {
        return Err(Error::BadToken { token: t, position: i });
    }
    Ok(())
}

fn maybe_dropout<T: Scalar>(tape: &mut Tape<'_, T>, x: NodeId, dropout: &mut Option<&mut DropoutRng>) -> NodeId {
    match dropout {
        Some(d) if d.rate > 0.0 => {
            let mask = d.mask(tape.value(x).len());
            tape.dropout(x, mask)
        }
        _ => x,
    }
}

/// Records the forward pass for one sequence on `tape` and returns the logits
/// node (N × vocab).
pub fn build_graph<T: Scalar>(
    tape: &mut Tape<'_, T>,
    config: &ModelConfig,
    layout: &ParamLayout,
    tokens: &[u32],
    capture: bool,
    hook: Option<&dyn Intervention<T>>,
    mut dropout: Option<&mut DropoutRng>,
) -> Result<(NodeId, Option<AttentionTrace<T>>)> {
    check_tokens(config, tokens)?;
    let n = tokens.len();
    let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
    let positions: Vec<usize> = (0..n).collect();
    let tok = tape.param(layout.tok_emb);
    let pos = tape.param(layout.pos_emb);
    let te = tape.gather(tok, &ids);
    let pe = tape.gather(pos, &positions);
    let mut x = tape.add(te, pe);
    x = maybe_dropout(tape, x, &mut dropout);

    let placement = config.layer_norm;
    let inv_sqrt_dh = T::from_f64(1.0 / (config.head_dim as f64).sqrt());
    let mut trace = capture.then(|| AttentionTrace {
        heads_per_layer: config.heads,
        heads: Vec::with_capacity(config.head_count()),
    });

    for (l, slots) in layout.layers.iter().enumerate() {
        let h_in = match (placement, slots.ln1) {
            (LayerNormPlacement::Pre, Some((g, b))) => {
                let (g, b) = (tape.param(g), tape.param(b));
                tape.layer_norm(x, g, b)
            }
            _ => x,
        };
        let mut attn_sum: Option<NodeId> = None;
        for (h, &[wq, wk, wv, wo]) in slots.heads.iter().enumerate() {
            let hooked = hook.filter(|k| k.targets(l, h));
            let (wq, wk, wv, wo) = (tape.param(wq), tape.param(wk), tape.param(wv), tape.param(wo));
            let mut q = tape.matmul(h_in, wq);
            let mut k = tape.matmul(h_in, wk);
            let v = tape.matmul(h_in, wv);
            if let Some(hk) = hooked {
                let (mut qv, mut kv) = (tape.value(q).clone(), tape.value(k).clone());
                hk.rewrite_qk(l, h, &mut qv, &mut kv);
                q = tape.constant(qv);
                k = tape.constant(kv);
            }
            let raw = tape.matmul_bt(q, k);
            let scores = tape.scale(raw, inv_sqrt_dh);
            let mut attn = tape.causal_softmax(scores);
            if let Some(hk) = hooked {
                let mut av = tape.value(attn).clone();
                hk.rewrite_attention(l, h, tape.value(scores), &mut av);
                attn = tape.constant(av);
            }
            let ctx = tape.matmul(attn, v);
            let mut out = tape.matmul(ctx, wo);
            if let Some(hk) = hooked {
                let mut ov = tape.value(out).clone();
                hk.rewrite_output(l, h, &mut ov);
                out = tape.constant(ov);
            }
            if let Some(tr) = trace.as_mut() {
                tr.heads.push(HeadTrace {
                    queries: tape.value(q).clone(),
                    keys: tape.value(k).clone(),
                    values: tape.value(v).clone(),
                    scores: tape.value(scores).clone(),
                    attention: tape.value(attn).clone(),
                    output: tape.value(out).clone(),
                });
            }
            attn_sum = Some(match attn_sum {
                None => out,
                Some(s) => tape.add(s, out),
            });
        }
        let attn_out = maybe_dropout(tape, attn_sum.expect("layers have at least one head"), &mut dropout);
        x = tape.add(x, attn_out);
        if let (LayerNormPlacement::Post, Some((g, b))) = (placement, slots.ln1) {
            let (g, b) = (tape.param(g), tape.param(b));
            x = tape.layer_norm(x, g, b);
        }

        let m_in = match (placement, slots.ln2) {
            (LayerNormPlacement::Pre, Some((g, b))) => {
                let (g, b) = (tape.param(g), tape.param(b));
                tape.layer_norm(x, g, b)
            }
            _ => x,
        };
        let (w1, b1, w2, b2) = (
            tape.param(slots.w1),
            tape.param(slots.b1),
            tape.param(slots.w2),
            tape.param(slots.b2),
        );
        let a = tape.matmul(m_in, w1);
        let a = tape.add_row(a, b1);
        let a = tape.relu(a);
        let m = tape.matmul(a, w2);
        let m = tape.add_row(m, b2);
        let m = maybe_dropout(tape, m, &mut dropout);
        x = tape.add(x, m);
        if let (LayerNormPlacement::Post, Some((g, b))) = (placement, slots.ln2) {
            let (g, b) = (tape.param(g), tape.param(b));
            x = tape.layer_norm(x, g, b);
        }
    }

    if let Some((g, b)) = layout.ln_final {
        let (g, b) = (tape.param(g), tape.param(b));
        x = tape.layer_norm(x, g, b);
    }
    let theta = tape.param(layout.output);
    Ok((tape.matmul_bt(x, theta), trace))
}

#[derive(Clone, Debug)]
pub struct ForwardOutput<T: Scalar = f32> {
    /// N × vocab; row `i` scores the token at position `i + 1`.
    pub logits: Tensor<T>,
    pub trace: Option<AttentionTrace<T>>,
}

pub fn forward<T: Scalar>(params: &ModelParameters<T>, tokens: &[u32], capture: bool) -> Result<ForwardOutput<T>> {
    forward_with(params, tokens, capture, None)
}

pub fn forward_with<T: Scalar>(
    params: &ModelParameters<T>,
    tokens: &[u32],
    capture: bool,
    hook: Option<&dyn Intervention<T>>,
) -> Result<ForwardOutput<T>> {
    let layout = params.layout();
    let mut tape = Tape::new(&params.tensors);
    let (logits, trace) = build_graph(&mut tape, &params.config, &layout, tokens, capture, hook, None)?;
    Ok(ForwardOutput {
        logits: tape.value(logits).clone(),
        trace,
    })
}

/// Logits for many sequences; each result is identical to a lone call.
pub fn forward_batch<T: Scalar + Send + Sync>(params: &ModelParameters<T>, batch: &[Vec<u32>]) -> Result<Vec<Tensor<T>>> {
    crate::par::map(batch, |tokens| forward(params, tokens, false).map(|o| o.logits))
        .into_iter()
        .collect()
}

/// Next-token targets: row `i` predicts `tokens[i + 1]`; the last row has none.
pub fn next_token_targets(tokens: &[u32]) -> Vec<Option<usize>> {
    (0..tokens.len()).map(|i| tokens.get(i + 1).map(|&t| t as usize)).collect()
}

#[cfg(test)]
mod tests {
    use super::super::params::init_model;
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            layers: 2,
            heads: 2,
            model_dim: 8,
            head_dim: 4,
            mlp_dim: 12,
            max_len: 16,
            vocab_size: 6,
            dropout: 0.0,
            tie_embeddings: true,
            layer_norm: LayerNormPlacement::Pre,
        }
    }

    #[test]
    fn attention_rows_are_causal_distributions() {
        let p = init_model(&small(), 3).unwrap();
        let out = forward(&p, &[0, 1, 3, 4, 2, 5], true).unwrap();
        assert_eq!(out.logits.shape(), &[6, 6]);
        for h in &out.trace.unwrap().heads {
            let a = &h.attention;
            for i in 0..6 {
                let row = a.row(i);
                assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
                assert!(row[i + 1..].iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn single_token_attends_to_itself() {
        let p = init_model(&small(), 3).unwrap();
        let tr = forward(&p, &[0], true).unwrap().trace.unwrap();
        assert_eq!(tr.get(1, 1).attention.data(), &[1.0]);
    }

    #[test]
    fn zero_query_key_weights_give_uniform_attention() {
        let mut c = small();
        c.layers = 1;
        c.heads = 1;
        let mut p = init_model(&c, 4).unwrap();
        p.get_mut("l0.h0.wq").unwrap().data_mut().fill(0.0);
        p.get_mut("l0.h0.wk").unwrap().data_mut().fill(0.0);
        let tr = forward(&p, &[0, 1, 2, 3, 4], true).unwrap().trace.unwrap();
        let a = &tr.get(0, 0).attention;
        for i in 0..5 {
            for j in 0..=i {
                assert!((a.get(i, j) - 1.0 / (i + 1) as f32).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_layer_model_is_embedding_bigram() {
        let mut c = small();
        c.layers = 0;
        c.layer_norm = LayerNormPlacement::None;
        let p = init_model(&c, 5).unwrap();
        let toks = [0u32, 3, 1];
        let logits = forward(&p, &toks, false).unwrap().logits;
        let emb = p.get("tok_emb").unwrap();
        let pos = p.get("pos_emb").unwrap();
        for (i, &t) in toks.iter().enumerate() {
            for v in 0..c.vocab_size {
                let expected: f32 = (0..c.model_dim)
                    .map(|j| (emb.get(t as usize, j) + pos.get(i, j)) * emb.get(v, j))
                    .sum();
                assert!((logits.get(i, v) - expected).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = init_model(&small(), 3).unwrap();
        assert!(matches!(forward(&p, &[0, 6], false), Err(Error::BadToken { position: 1, .. })));
        assert!(forward(&p, &[0; 17], false).is_err());
        assert!(forward(&p, &[], false).is_err());
    }

    #[test]
    fn batching_does_not_change_logits() {
        let p = init_model(&small(), 8).unwrap();
        let batch = vec![vec![0, 1, 2], vec![0, 3, 4, 5, 2], vec![0]];
        let together = forward_batch(&p, &batch).unwrap();
        let mut rev = batch.clone();
        rev.reverse();
        let reversed = forward_batch(&p, &rev).unwrap();
        for (i, t) in batch.iter().enumerate() {
            let alone = forward(&p, t, false).unwrap().logits;
            assert_eq!(together[i], alone);
            assert_eq!(reversed[batch.len() - 1 - i], alone);
        }
    }

    #[test]
    fn ablating_a_head_changes_only_through_that_head() {
        let p = init_model(&small(), 9).unwrap();
        let toks = [0u32, 1, 2, 3, 4];
        let abl = HeadAblation { layer: 1, head: 0 };
        let out = forward_with(&p, &toks, true, Some(&abl)).unwrap();
        let tr = out.trace.unwrap();
        assert!(tr.get(1, 0).output.data().iter().all(|&x| x == 0.0));
        let plain = forward(&p, &toks, true).unwrap().trace.unwrap();
        // earlier layers are untouched
        assert_eq!(plain.get(0, 0), tr.get(0, 0));
        assert_eq!(plain.get(1, 0).attention, tr.get(1, 0).attention);
    }
}
