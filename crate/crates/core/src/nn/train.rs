use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 200,
            seed: 0,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be a positive number"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

/// Mean loss over the whole training set before training and after each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
}

/// A model trainable by minibatch gradient descent.
///
/// Parameters are exposed as one or more flat groups; gradients come back
/// in the same grouping.
pub trait Trainable {
    type Example;

    fn loss(&self, example: &Self::Example) -> Result<f64>;

    fn loss_and_grad(&self, example: &Self::Example) -> Result<(f64, Vec<Vec<f64>>)>;

    fn param_groups_mut(&mut self) -> Vec<&mut [f64]>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub input: Vec<f64>,
    pub label: usize,
}

impl Trainable for Mlp {
    type Example = LabeledExample;

    fn loss(&self, ex: &LabeledExample) -> Result<f64> {
        super::cross_entropy_loss(&self.forward(&ex.input)?, ex.label)
    }

    fn loss_and_grad(&self, ex: &LabeledExample) -> Result<(f64, Vec<Vec<f64>>)> {
        let (loss, grads) = self.loss_and_gradients(&ex.input, ex.label)?;
        Ok((loss, vec![grads.values]))
    }

    fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.params_mut()]
    }
}

struct AdamState {
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

fn mean_loss<M: Trainable>(model: &M, data: &[M::Example]) -> Result<f64> {
    let mut total = 0.0;
    for ex in data {
        total += model.loss(ex)?;
    }
    Ok(total / data.len() as f64)
}

/// Minibatch training with a seeded shuffle per epoch. Single-threaded, so
/// identical inputs give a bit-identical parameter trajectory.
pub fn train<M: Trainable>(
    model: &mut M,
    data: &[M::Example],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let initial_loss = mean_loss(model, data)?;
    let mut rng = seed::substream(cfg.seed, "train/shuffle");
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut adam = AdamState {
        step: 0,
        first: model.param_groups_mut().iter().map(|g| vec![0.0; g.len()]).collect(),
        second: model.param_groups_mut().iter().map(|g| vec![0.0; g.len()]).collect(),
    };
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut sum: Option<Vec<Vec<f64>>> = None;
            for &i in batch {
                let (_, grads) = model.loss_and_grad(&data[i])?;
                match sum.as_mut() {
                    None => sum = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(grads) {
                            for (x, y) in a.iter_mut().zip(g) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            let mut grads = sum.expect("chunks are non-empty");
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().flatten().for_each(|g| *g *= scale);
            apply_update(model, &grads, cfg, &mut adam);
        }
        epoch_losses.push(mean_loss(model, data)?);
    }

    Ok(TrainReport {
        initial_loss,
        epoch_losses,
    })
}

fn apply_update<M: Trainable>(model: &mut M, grads: &[Vec<f64>], cfg: &TrainConfig, adam: &mut AdamState) {
    let lr = cfg.learning_rate;
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (params, g) in model.param_groups_mut().into_iter().zip(grads) {
                for (p, g) in params.iter_mut().zip(g) {
                    *p -= lr * g;
                }
            }
        }
        Optimizer::Adam => {
            adam.step += 1;
            let c1 = 1.0 - BETA1.powi(adam.step);
            let c2 = 1.0 - BETA2.powi(adam.step);
            for (((params, g), m), v) in model
                .param_groups_mut()
                .into_iter()
                .zip(grads)
                .zip(&mut adam.first)
                .zip(&mut adam.second)
            {
                for i in 0..params.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
                }
            }
        }
    }
}
