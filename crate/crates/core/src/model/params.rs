//! Named parameter storage and initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{LayerNormPlacement, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

/// Parameter indices for one layer.
#[derive(Clone, Debug)]
pub struct LayerSlots {
    pub ln1: Option<(usize, usize)>,
    /// `(wq, wk, wv, wo)` per head.
    pub heads: Vec<[usize; 4]>,
    pub ln2: Option<(usize, usize)>,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Positions of every tensor in the flat parameter list.
#[derive(Clone, Debug)]
pub struct ParamLayout {
    pub tok_emb: usize,
    pub pos_emb: usize,
    pub layers: Vec<LayerSlots>,
    pub ln_final: Option<(usize, usize)>,
    /// Output projection; equals `tok_emb` when tied.
    pub output: usize,
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
}

impl ParamLayout {
    pub fn new(c: &ModelConfig) -> Self {
        let mut names = Vec::new();
        let mut shapes = Vec::new();
        let mut add = |name: String, shape: Vec<usize>| {
            names.push(name);
            shapes.push(shape);
            names.len() - 1
        };
        let (d, dh, dm) = (c.model_dim, c.head_dim, c.mlp_dim);
        let tok_emb = add("tok_emb".into(), vec![c.vocab_size, d]);
        let pos_emb = add("pos_emb".into(), vec![c.max_len, d]);
        let has_ln = c.layer_norm != LayerNormPlacement::None;
        let mut layers = Vec::with_capacity(c.layers);
        for l in 0..c.layers {
            let ln1 = has_ln.then(|| (add(format!("l{l}.ln1.gain"), vec![d]), add(format!("l{l}.ln1.bias"), vec![d])));
            let heads = (0..c.heads)
                .map(|h| {
                    [
                        add(format!("l{l}.h{h}.wq"), vec![d, dh]),
                        add(format!("l{l}.h{h}.wk"), vec![d, dh]),
                        add(format!("l{l}.h{h}.wv"), vec![d, dh]),
                        add(format!("l{l}.h{h}.wo"), vec![dh, d]),
                    ]
                })
                .collect();
            let ln2 = has_ln.then(|| (add(format!("l{l}.ln2.gain"), vec![d]), add(format!("l{l}.ln2.bias"), vec![d])));
            layers.push(LayerSlots {
                ln1,
                heads,
                ln2,
                w1: add(format!("l{l}.mlp.w1"), vec![d, dm]),
                b1: add(format!("l{l}.mlp.b1"), vec![dm]),
                w2: add(format!("l{l}.mlp.w2"), vec![dm, d]),
                b2: add(format!("l{l}.mlp.b2"), vec![d]),
            });
        }
        let ln_final = (c.layer_norm == LayerNormPlacement::Pre)
            .then(|| (add("lnf.gain".into(), vec![d]), add("lnf.bias".into(), vec![d])));
        let output = if c.tie_embeddings {
            tok_emb
        } else {
            add("output".into(), vec![c.vocab_size, d])
        };
        Self {
            tok_emb,
            pos_emb,
            layers,
            ln_final,
            output,
            names,
            shapes,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn scalar_count(&self) -> usize {
        self.shapes.iter().map(|s| s.iter().product::<usize>()).sum()
    }
}

/// All learned tensors of a model in [`ParamLayout`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters<T: Scalar = f32> {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ModelParameters<T> {
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if tensors.len() != layout.len() {
            return Err(Error::Shape(format!("expected {} tensors, got {}", layout.len(), tensors.len())));
        }
        for ((t, shape), name) in tensors.iter().zip(&layout.shapes).zip(&layout.names) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Shape(format!("{name}: expected {shape:?}, got {:?}", t.shape())));
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(&self.config)
    }

    pub fn zeros_like(&self) -> Vec<Tensor<T>> {
        self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParameters<U> {
        ModelParameters {
            config: self.config.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.layout().index_of(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.layout().index_of(name).map(move |i| &mut self.tensors[i])
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }
}

/// Deterministic initialization: projection weights are `N(0, 1/fan_in)`,
/// embeddings `N(0, 1/d)`, layer-norm gains 1, all biases and offsets 0.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelParameters<f32>> {
    config.validate()?;
    let layout = ParamLayout::new(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = layout
        .names
        .iter()
        .zip(&layout.shapes)
        .map(|(name, shape)| {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = if name.ends_with(".gain") {
                vec![1.0; n]
            } else if name.ends_with(".bias") || name.ends_with(".b1") || name.ends_with(".b2") {
                vec![0.0; n]
            } else {
                let fan_in = if name.ends_with("emb") || name == "output" {
                    config.model_dim
                } else {
                    shape[0]
                };
                let normal = Normal::new(0.0f64, (1.0 / fan_in as f64).sqrt()).expect("positive std");
                (0..n).map(|_| normal.sample(&mut rng) as f32).collect()
            };
            Tensor::new(shape.clone(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    ModelParameters::from_tensors(config.clone(), tensors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyck_parameter_count_matches_closed_form() {
        let c = ModelConfig::dyck(20, 512);
        let p = init_model(&c, 0).unwrap();
        let (v, n, d, dh, dm, l, h) = (42, 512, 32, 32, 128, 2, 1);
        let per_layer = 2 * d + h * (3 * d * dh + dh * d) + 2 * d + d * dm + dm + dm * d + d;
        let expected = v * d + n * d + l * per_layer + 2 * d;
        assert_eq!(p.scalar_count(), expected);
        assert_eq!(expected, 1344 + 16384 + 2 * 12576 + 64);
    }

    #[test]
    fn untied_and_unnormalized_layouts() {
        let mut c = ModelConfig::dyck(2, 16);
        c.tie_embeddings = false;
        c.layer_norm = LayerNormPlacement::None;
        let l = ParamLayout::new(&c);
        assert_ne!(l.output, l.tok_emb);
        assert!(l.ln_final.is_none() && l.layers[0].ln1.is_none());
        assert_eq!(l.index_of("output"), Some(l.output));
    }

    #[test]
    fn init_is_deterministic() {
        let c = ModelConfig::dyck(3, 32);
        assert_eq!(init_model(&c, 5).unwrap(), init_model(&c, 5).unwrap());
        assert_ne!(init_model(&c, 5).unwrap(), init_model(&c, 6).unwrap());
    }

    #[test]
    fn wrong_shapes_rejected() {
        let c = ModelConfig::dyck(3, 32);
        let mut p = init_model(&c, 1).unwrap();
        p.tensors[0] = Tensor::zeros(&[1, 1]);
        assert!(ModelParameters::from_tensors(c, p.tensors).is_err());
    }
}
