//! Training loop: shuffled mini-batches, AdamW, periodic evaluation.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig};
use super::loss::{loss_and_grad, StepDropout};
use super::optim::AdamW;
use super::params::{init_model, ModelParameters};
use crate::dyck::splits::stream_seed;
use crate::error::{Error, Result};

/// One point of a training curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

/// Hooks called by [`train`]. All methods default to doing nothing.
pub trait TrainObserver {
    fn on_step(&mut self, _step: usize, _loss: f64) {}

    /// Called every `eval_every` steps and after the last step.
    fn evaluate(&mut self, _step: usize, _params: &ModelParameters) -> Result<Vec<CurvePoint>> {
        Ok(Vec::new())
    }

    /// Called every `checkpoint_every` steps, after the last step, and with
    /// `diagnostic = true` before aborting on a non-finite loss.
    fn checkpoint(&mut self, _step: usize, _params: &ModelParameters, _diagnostic: bool) -> Result<()> {
        Ok(())
    }
}

pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParameters,
    pub curve: Vec<CurvePoint>,
    /// Training loss at every step.
    pub losses: Vec<f64>,
}

/// Yields batches from per-epoch shuffles of `0..n`.
pub struct BatchOrder {
    n: usize,
    batch: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchOrder {
    pub fn new(n: usize, batch: usize, seed: u64) -> Self {
        let mut s = Self {
            n,
            batch,
            seed,
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.seed, 1_000_000 + self.epoch));
        self.order.shuffle(&mut rng);
        self.cursor = 0;
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch);
        while out.len() < self.batch {
            if self.cursor == self.n {
                self.epoch += 1;
                self.reshuffle();
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Trains from a fresh initialization seeded by `tc.seed`.
pub fn train(
    config: &ModelConfig,
    tc: &TrainConfig,
    dataset: &[Vec<u32>],
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    let params = init_model(config, tc.seed)?;
    train_from(params, tc, dataset, observer)
}

pub fn train_from(
    mut params: ModelParameters,
    tc: &TrainConfig,
    dataset: &[Vec<u32>],
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    tc.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut opt = AdamW::new(tc, &params.tensors.iter().collect::<Vec<_>>());
    let mut order = BatchOrder::new(dataset.len(), tc.batch_size, tc.seed);
    let mut curve = Vec::new();
    let mut losses = Vec::with_capacity(tc.steps);
    let mut window = 0.0;
    let mut window_len = 0usize;
    for step in 1..=tc.steps {
        let batch: Vec<Vec<u32>> = order.next_batch().into_iter().map(|i| dataset[i].clone()).collect();
        let dropout = (params.config.dropout > 0.0).then(|| StepDropout {
            rate: params.config.dropout,
            seed: stream_seed(tc.seed, step as u64),
        });
        let (loss, grads) = loss_and_grad(&params, &batch, dropout)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.all_finite()) {
            observer.checkpoint(step, &params, true)?;
            return Err(Error::Diverged { step, loss });
        }
        opt.step(&mut params.tensors, &grads, tc.learning_rate(step));
        losses.push(loss);
        observer.on_step(step, loss);
        window += loss;
        window_len += 1;
        let last = step == tc.steps;
        if (tc.eval_every > 0 && step % tc.eval_every == 0) || last {
            curve.push(CurvePoint {
                step,
                split: "train".into(),
                metric: "loss".into(),
                value: window / window_len as f64,
            });
            window = 0.0;
            window_len = 0;
            curve.extend(observer.evaluate(step, &params)?);
        }
        if (tc.checkpoint_every > 0 && step % tc.checkpoint_every == 0) || last {
            observer.checkpoint(step, &params, false)?;
        }
    }
    Ok(TrainOutcome { params, curve, losses })
}

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut out = String::from("step,split,metric,value\n");
    for p in curve {
        out.push_str(&format!("{},{},{},{}\n", p.step, p.split, p.metric, p.value));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
