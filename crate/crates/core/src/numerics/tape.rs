//! Tensor-level reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the reverse of insertion order
//! is a valid reverse topological order for the backward pass.

use super::linalg::{gemm_acc, gemm_at_acc, gemm_bt_acc};
use super::tensor::{Scalar, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Op<T: Scalar> {
    Leaf,
    Param(usize),
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, T),
    Relu(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    CausalSoftmax(NodeId),
    Gather {
        table: NodeId,
        ids: Vec<usize>,
    },
    Dropout {
        x: NodeId,
        mask: Vec<T>,
    },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<Option<usize>>,
        probs: Vec<T>,
        count: usize,
    },
}

struct Node<T: Scalar> {
    op: Op<T>,
    value: Option<Tensor<T>>,
}

/// Records primitive operations over a borrowed parameter set and
/// accumulates parameter gradients on [`Tape::backward`].
pub struct Tape<'p, T: Scalar> {
    params: &'p [Tensor<T>],
    nodes: Vec<Node<T>>,
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p [Tensor<T>]) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        let node = &self.nodes[id.0];
        match node.op {
            Op::Param(i) => &self.params[i],
            _ => node.value.as_ref().expect("non-param node carries a value"),
        }
    }

    fn push(&mut self, op: Op<T>, value: Option<Tensor<T>>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param(&mut self, index: usize) -> NodeId {
        assert!(index < self.params.len(), "parameter index out of range");
        self.push(Op::Param(index), None)
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Leaf, Some(value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        assert_eq!(k, bv.rows(), "matmul inner dimension");
        let mut out = Tensor::zeros(&[m, n]);
        gemm_acc(av.data(), bv.data(), out.data_mut(), m, k, n);
        self.push(Op::MatMul(a, b), Some(out))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, n) = (av.rows(), av.cols(), bv.rows());
        assert_eq!(k, bv.cols(), "matmul_bt inner dimension");
        let mut out = Tensor::zeros(&[m, n]);
        gemm_bt_acc(av.data(), bv.data(), out.data_mut(), m, k, n);
        self.push(Op::MatMulBt(a, b), Some(out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        assert_eq!(out.shape(), self.value(b).shape(), "add shape");
        out.add_assign(self.value(b));
        self.push(Op::Add(a, b), Some(out))
    }

    /// Adds a length-`cols` bias to every row.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        let b = self.value(bias).data().to_vec();
        assert_eq!(out.cols(), b.len(), "bias length");
        for i in 0..out.rows() {
            for (o, &bv) in out.row_mut(i).iter_mut().zip(&b) {
                *o += bv;
            }
        }
        self.push(Op::AddRow(a, bias), Some(out))
    }

    pub fn scale(&mut self, a: NodeId, s: T) -> NodeId {
        let out = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), Some(out))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let out = self
            .value(a)
            .map(|x| if x > T::ZERO { x } else { T::ZERO });
        self.push(Op::Relu(a), Some(out))
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let eps = T::from_f64(LAYER_NORM_EPS);
        let inv_n = T::from_f64(1.0 / cols as f64);
        let mut xhat = vec![T::ZERO; rows * cols];
        let mut inv_std = vec![T::ZERO; rows];
        let mut out = Tensor::zeros(&[rows, cols]);
        for i in 0..rows {
            let r = xv.row(i);
            let mean = r.iter().copied().sum::<T>() * inv_n;
            let var = r.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_n;
            let is = T::ONE / (var + eps).sqrt();
            inv_std[i] = is;
            let o = out.row_mut(i);
            for j in 0..cols {
                let h = (r[j] - mean) * is;
                xhat[i * cols + j] = h;
                o[j] = h * g[j] + b[j];
            }
        }
        self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            Some(out),
        )
    }

    /// Row-wise softmax over the causal prefix: entry `(i, j)` with `j > i`
    /// is exactly zero.
    pub fn causal_softmax(&mut self, scores: NodeId) -> NodeId {
        let out = causal_softmax(self.value(scores));
        self.push(Op::CausalSoftmax(scores), Some(out))
    }

    /// Row lookup: output row `r` is `table[ids[r]]`.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = self.value(table);
        let cols = t.cols();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            data.extend_from_slice(t.row(id));
        }
        let out = Tensor::matrix(ids.len(), cols, data).expect("gather shape");
        self.push(
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            Some(out),
        )
    }

    /// Multiplies by a precomputed mask (entries 0 or 1/(1-p)).
    pub fn dropout(&mut self, x: NodeId, mask: Vec<T>) -> NodeId {
        let mut out = self.value(x).clone();
        assert_eq!(out.len(), mask.len(), "dropout mask length");
        for (o, &m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        self.push(Op::Dropout { x, mask }, Some(out))
    }

    /// Mean negative log-likelihood over rows with a target.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[Option<usize>]) -> NodeId {
        let lv = self.value(logits);
        assert_eq!(lv.rows(), targets.len(), "one target slot per row");
        let (rows, cols) = (lv.rows(), lv.cols());
        let mut probs = vec![T::ZERO; rows * cols];
        let mut total = 0.0f64;
        let mut count = 0usize;
        for i in 0..rows {
            let Some(t) = targets[i] else { continue };
            let r = lv.row(i);
            let mx = r.iter().copied().fold(r[0], T::max);
            let mut z = T::ZERO;
            for j in 0..cols {
                let e = (r[j] - mx).exp();
                probs[i * cols + j] = e;
                z += e;
            }
            for j in 0..cols {
                probs[i * cols + j] /= z;
            }
            total += (mx + z.ln() - r[t]).to_f64();
            count += 1;
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
            },
            Some(Tensor::scalar(T::from_f64(loss))),
        )
    }

    /// Backpropagates `seed · d(output)` and accumulates into `param_grads`,
    /// which must be shaped like the parameter slice.
    pub fn backward(&self, output: NodeId, seed: T, param_grads: &mut [Tensor<T>]) {
        assert_eq!(param_grads.len(), self.params.len());
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let out_shape = self.value(output).shape().to_vec();
        grads[output.0] = Some(Tensor::full(&out_shape, seed));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => param_grads[*p].add_assign(&g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                    let ga = slot(&mut grads, *a, av.shape());
                    gemm_bt_acc(g.data(), bv.data(), ga.data_mut(), m, n, k);
                    let gb = slot(&mut grads, *b, bv.shape());
                    gemm_at_acc(av.data(), g.data(), gb.data_mut(), m, k, n);
                }
                Op::MatMulBt(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                    let ga = slot(&mut grads, *a, av.shape());
                    gemm_acc(g.data(), bv.data(), ga.data_mut(), m, n, k);
                    let gb = slot(&mut grads, *b, bv.shape());
                    gemm_at_acc(g.data(), av.data(), gb.data_mut(), m, n, k);
                }
                Op::Add(a, b) => {
                    slot(&mut grads, *a, g.shape()).add_assign(&g);
                    slot(&mut grads, *b, g.shape()).add_assign(&g);
                }
                Op::AddRow(a, bias) => {
                    slot(&mut grads, *a, g.shape()).add_assign(&g);
                    let bshape = self.value(*bias).shape().to_vec();
                    let gb = slot(&mut grads, *bias, &bshape);
                    let gbd = gb.data_mut();
                    for i in 0..g.rows() {
                        for (o, &v) in gbd.iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                }
                Op::Scale(a, s) => {
                    let ga = slot(&mut grads, *a, g.shape());
                    for (o, &v) in ga.data_mut().iter_mut().zip(g.data()) {
                        *o += v * *s;
                    }
                }
                Op::Relu(a) => {
                    let av = self.value(*a);
                    let ga = slot(&mut grads, *a, g.shape());
                    for ((o, &v), &x) in ga.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        if x > T::ZERO {
                            *o += v;
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gain).data().to_vec();
                    let (rows, cols) = (g.rows(), g.cols());
                    let inv_n = T::from_f64(1.0 / cols as f64);
                    {
                        let gg = slot(&mut grads, *gain, &[cols]);
                        let ggd = gg.data_mut();
                        for i in 0..rows {
                            for j in 0..cols {
                                ggd[j] += g.get(i, j) * xhat[i * cols + j];
                            }
                        }
                    }
                    {
                        let gb = slot(&mut grads, *bias, &[cols]);
                        let gbd = gb.data_mut();
                        for i in 0..rows {
                            for (o, &v) in gbd.iter_mut().zip(g.row(i)) {
                                *o += v;
                            }
                        }
                    }
                    let gx = slot(&mut grads, *x, g.shape());
                    let mut dxhat = vec![T::ZERO; cols];
                    for i in 0..rows {
                        let mut s1 = T::ZERO;
                        let mut s2 = T::ZERO;
                        for j in 0..cols {
                            let d = g.get(i, j) * gv[j];
                            dxhat[j] = d;
                            s1 += d;
                            s2 += d * xhat[i * cols + j];
                        }
                        let row = gx.row_mut(i);
                        for j in 0..cols {
                            row[j] += inv_std[i]
                                * (dxhat[j] - inv_n * s1 - inv_n * xhat[i * cols + j] * s2);
                        }
                    }
                }
                Op::CausalSoftmax(s) => {
                    let a = node.value.as_ref().expect("softmax value");
                    let n = a.cols();
                    let gs = slot(&mut grads, *s, g.shape());
                    for i in 0..a.rows() {
                        let lim = (i + 1).min(n);
                        let ar = &a.row(i)[..lim];
                        let gr = &g.row(i)[..lim];
                        let inner: T = ar.iter().zip(gr).map(|(&p, &d)| p * d).sum();
                        let out = &mut gs.row_mut(i)[..lim];
                        for j in 0..lim {
                            out[j] += ar[j] * (gr[j] - inner);
                        }
                    }
                }
                Op::Gather { table, ids } => {
                    let tshape = self.value(*table).shape().to_vec();
                    let gt = slot(&mut grads, *table, &tshape);
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, &v) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                Op::Dropout { x, mask } => {
                    let gx = slot(&mut grads, *x, g.shape());
                    for ((o, &v), &m) in gx.data_mut().iter_mut().zip(g.data()).zip(mask) {
                        *o += v * m;
                    }
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                    count,
                } => {
                    if *count == 0 {
                        continue;
                    }
                    let lshape = self.value(*logits).shape().to_vec();
                    let cols = lshape[lshape.len() - 1];
                    let scale = g.data()[0] / T::from_f64(*count as f64);
                    let gl = slot(&mut grads, *logits, &lshape);
                    for (i, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        let row = gl.row_mut(i);
                        for j in 0..cols {
                            row[j] += scale * probs[i * cols + j];
                        }
                        row[t] -= scale;
                    }
                }
            }
        }
    }
}

fn slot<'a, T: Scalar>(
    grads: &'a mut [Option<Tensor<T>>],
    id: NodeId,
    shape: &[usize],
) -> &'a mut Tensor<T> {
    grads[id.0].get_or_insert_with(|| Tensor::zeros(shape))
}

/// Causal softmax of a square score matrix; masked entries are exactly zero.
pub fn causal_softmax<T: Scalar>(scores: &Tensor<T>) -> Tensor<T> {
    let (rows, cols) = (scores.rows(), scores.cols());
    let mut out = Tensor::zeros(&[rows, cols]);
    for i in 0..rows {
        let lim = (i + 1).min(cols);
        let r = &scores.row(i)[..lim];
        let mx = r.iter().copied().fold(r[0], T::max);
        let o = &mut out.row_mut(i)[..lim];
        let mut z = T::ZERO;
        for j in 0..lim {
            let e = (r[j] - mx).exp();
            o[j] = e;
            z += e;
        }
        for v in o.iter_mut() {
            *v /= z;
        }
    }
    out
}
