use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::joint::NodeKind;
use super::model::{ModelParams, Standardizer};
use super::network::{argmax, forward, loss_and_gradient, ClassWeights, TrainBatch};
use crate::construct::EDGE_FEATURE_DIM;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Seed of the per-epoch batch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss of each epoch, measured during the pass.
    pub losses: Vec<f64>,
    pub weights: ClassWeights,
}

/// Fits the input standardizers of `params` to the features in `dataset`.
pub fn fit_normalization(params: &mut ModelParams, dataset: &[TrainBatch]) {
    for kind in NodeKind::ALL {
        let dim = params.config.input_dim(kind);
        let rows = dataset
            .iter()
            .flat_map(|b| b.graph.nodes.iter())
            .filter(|n| n.kind == kind && n.features.len() == dim)
            .map(|n| n.features.as_slice());
        params.node_norm[kind.index()] = Standardizer::fit(dim, rows);
    }
    let rows = dataset
        .iter()
        .flat_map(|b| b.graph.candidates.iter())
        .map(|c| c.features.as_slice());
    params.edge_norm = Standardizer::fit(EDGE_FEATURE_DIM, rows);
}

/// Plain SGD over single-graph batches in seeded shuffled order. On a
/// non-finite loss the parameters are restored to the end of the last
/// finite epoch and a divergence error is returned.
pub fn train(
    params: &mut ModelParams,
    dataset: &[TrainBatch],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::Config("training needs at least one batch".into()));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate >= 0.0) {
        return Err(Error::Config("learning_rate must be >= 0".into()));
    }
    for b in dataset {
        b.validate(&params.config)?;
    }
    let weights = ClassWeights::from_dataset(dataset, &params.config);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let snapshot = params.clone();
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut failure = None;
        for &i in &order {
            match loss_and_gradient(params, &dataset[i], &weights) {
                Ok((loss, grad)) if loss.total.is_finite() => {
                    sum += loss.total;
                    for (p, g) in params.trainable_mut().into_iter().zip(grad.trainable()) {
                        p.axpy(-cfg.learning_rate, g.1);
                    }
                }
                Ok(_) => failure = Some("loss is not finite".to_string()),
                Err(Error::NonFinite(what)) => failure = Some(format!("{what} is not finite")),
                Err(e) => return Err(e),
            }
            if failure.is_none() && !params.is_finite() {
                failure = Some("parameters are not finite".into());
            }
            if let Some(msg) = failure {
                *params = snapshot;
                let last = match epoch {
                    0 => "none".to_string(),
                    e => (e - 1).to_string(),
                };
                return Err(Error::Diverged {
                    epoch,
                    msg: format!("{msg}; last finite epoch: {last}"),
                });
            }
        }
        losses.push(sum / dataset.len() as f64);
    }
    Ok(TrainReport { losses, weights })
}

/// Macro-averaged F1 over the classes occurring in `truth` or `pred`.
pub fn macro_f1(pred: &[usize], truth: &[usize]) -> f64 {
    let classes: BTreeSet<usize> = pred.iter().chain(truth).copied().collect();
    if classes.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for c in &classes {
        let tp = pred
            .iter()
            .zip(truth)
            .filter(|(p, t)| *p == c && *t == c)
            .count() as f64;
        let fp = pred
            .iter()
            .zip(truth)
            .filter(|(p, t)| *p == c && *t != c)
            .count() as f64;
        let fn_ = pred
            .iter()
            .zip(truth)
            .filter(|(p, t)| *p != c && *t == c)
            .count() as f64;
        if tp > 0.0 {
            sum += 2.0 * tp / (2.0 * tp + fp + fn_);
        }
    }
    sum / classes.len() as f64
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    pub node_pred: Vec<usize>,
    pub node_truth: Vec<usize>,
    pub edge_pred: Vec<usize>,
    pub edge_truth: Vec<usize>,
}

impl Evaluation {
    pub fn node_accuracy(&self) -> f64 {
        accuracy(&self.node_pred, &self.node_truth)
    }

    pub fn edge_accuracy(&self) -> f64 {
        accuracy(&self.edge_pred, &self.edge_truth)
    }

    pub fn node_macro_f1(&self) -> f64 {
        macro_f1(&self.node_pred, &self.node_truth)
    }

    pub fn edge_macro_f1(&self) -> f64 {
        macro_f1(&self.edge_pred, &self.edge_truth)
    }
}

/// Argmax predictions against the labels of every batch.
pub fn evaluate(params: &ModelParams, dataset: &[TrainBatch]) -> Result<Evaluation> {
    let mut ev = Evaluation::default();
    for b in dataset {
        let out = forward(params, &b.graph)?;
        for &(i, y) in &b.node_labels {
            let p = out.node_probs[i]
                .as_ref()
                .ok_or_else(|| Error::Schema(format!("node {i} has no class scores")))?;
            ev.node_pred.push(argmax(p));
            ev.node_truth.push(y);
        }
        for &(i, y) in &b.edge_labels {
            ev.edge_pred.push(argmax(&out.edge_probs[i]));
            ev.edge_truth.push(y);
        }
    }
    Ok(ev)
}
