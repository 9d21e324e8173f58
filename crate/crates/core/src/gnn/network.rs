//! Forward pass, composite loss, reverse-mode gradients and the
//! finite-difference gradient check.
//!
//! Layer update, per node `v`:
//! `h' = relu(W_self h_v + b + sum_t W_t mean{h_u : u ->t v})`,
//! with an absent neighbourhood contributing nothing. Neighbour vectors are
//! summed in a value-sorted order so outputs do not depend on node
//! numbering, bit for bit.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::joint::{JointGraph, MessageType, NodeKind};
use super::model::{Linear, ModelConfig, ModelParams};
use crate::error::{Error, Result};

/// One supervised graph. Labels index joint nodes / candidates and must
/// refer to local elements only.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub graph: JointGraph,
    /// `(joint node, class)`
    pub node_labels: Vec<(usize, usize)>,
    /// `(candidate, relation class)`
    pub edge_labels: Vec<(usize, usize)>,
}

impl TrainBatch {
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        for &(i, c) in &self.node_labels {
            let node = self
                .graph
                .nodes
                .get(i)
                .ok_or_else(|| Error::Schema(format!("label on missing node {i}")))?;
            if node.kind != NodeKind::Local {
                return Err(Error::Schema(format!("label on non-local node {i}")));
            }
            if c >= config.num_node_classes() {
                return Err(Error::Schema(format!("node class {c} out of range")));
            }
        }
        for &(i, c) in &self.edge_labels {
            if i >= self.graph.candidates.len() {
                return Err(Error::Schema(format!("label on missing candidate {i}")));
            }
            if c >= config.num_edge_classes() {
                return Err(Error::Schema(format!("relation class {c} out of range")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    /// Softmax class scores for local and global nodes; `None` for concepts.
    pub node_probs: Vec<Option<Vec<f64>>>,
    /// Softmax relation scores per candidate.
    pub edge_probs: Vec<Vec<f64>>,
}

struct Trace {
    /// Standardized inputs.
    x: Vec<Vec<f64>>,
    /// `[node][message type]` -> source nodes.
    inbox: Vec<Vec<Vec<usize>>>,
    /// Hidden states, `num_layers + 1` flat `n x H` blocks.
    h: Vec<Vec<f64>>,
    /// Pre-activations per layer.
    z: Vec<Vec<f64>>,
    /// Neighbour means per layer, `[node * COUNT + type]`, empty if none.
    means: Vec<Vec<Vec<f64>>>,
    edge_inputs: Vec<Vec<f64>>,
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

fn run(params: &ModelParams, g: &JointGraph) -> Result<(Outputs, Trace)> {
    let config = &params.config;
    g.validate(config)?;
    let hd = config.hidden_dim;
    let n = g.nodes.len();
    let count = MessageType::COUNT;

    let x: Vec<Vec<f64>> = g
        .nodes
        .iter()
        .map(|node| params.node_norm[node.kind.index()].apply(&node.features))
        .collect();
    let mut h0 = Vec::with_capacity(n * hd);
    for (node, xv) in g.nodes.iter().zip(&x) {
        h0.extend(params.input[node.kind.index()].apply(xv));
    }
    let mut inbox = vec![vec![Vec::new(); count]; n];
    for m in &g.messages {
        inbox[m.dst][m.kind.index()].push(m.src);
    }

    let mut h = vec![h0];
    let mut z_all = Vec::with_capacity(params.layers.len());
    let mut means_all = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let hl = h.last().expect("input layer");
        let mut z = Vec::with_capacity(n * hd);
        let mut means = vec![Vec::new(); n * count];
        for v in 0..n {
            let mut zv = layer.self_loop.b.data().to_vec();
            layer
                .self_loop
                .w
                .mul_add(&hl[v * hd..(v + 1) * hd], &mut zv);
            for t in 0..count {
                let srcs = &inbox[v][t];
                if srcs.is_empty() {
                    continue;
                }
                let mut rows: Vec<&[f64]> =
                    srcs.iter().map(|&u| &hl[u * hd..(u + 1) * hd]).collect();
                rows.sort_by(|a, b| lex(a, b));
                let mut mean = vec![0.0; hd];
                for r in rows {
                    for (m, x) in mean.iter_mut().zip(r) {
                        *m += x;
                    }
                }
                let k = srcs.len() as f64;
                for m in mean.iter_mut() {
                    *m /= k;
                }
                layer.message[t].mul_add(&mean, &mut zv);
                means[v * count + t] = mean;
            }
            z.extend(zv);
        }
        h.push(z.iter().map(|v| v.max(0.0)).collect());
        z_all.push(z);
        means_all.push(means);
    }

    let hl = h.last().expect("output layer");
    let node_probs = g
        .nodes
        .iter()
        .enumerate()
        .map(|(v, node)| {
            (node.kind != NodeKind::Concept)
                .then(|| softmax(&params.node_head.apply(&hl[v * hd..(v + 1) * hd])))
        })
        .collect();
    let mut edge_inputs = Vec::with_capacity(g.candidates.len());
    let mut edge_probs = Vec::with_capacity(g.candidates.len());
    for c in &g.candidates {
        let mut input = Vec::with_capacity(config.edge_input_dim());
        input.extend_from_slice(&hl[c.src * hd..(c.src + 1) * hd]);
        input.extend_from_slice(&hl[c.dst * hd..(c.dst + 1) * hd]);
        input.extend(params.edge_norm.apply(&c.features));
        edge_probs.push(softmax(&params.edge_head.apply(&input)));
        edge_inputs.push(input);
    }
    let outputs = Outputs {
        node_probs,
        edge_probs,
    };
    let finite = outputs
        .node_probs
        .iter()
        .flatten()
        .chain(&outputs.edge_probs)
        .all(|p| p.iter().all(|x| x.is_finite()));
    if !finite {
        return Err(Error::NonFinite("network output".into()));
    }
    Ok((
        outputs,
        Trace {
            x,
            inbox,
            h,
            z: z_all,
            means: means_all,
            edge_inputs,
        },
    ))
}

pub fn forward(params: &ModelParams, graph: &JointGraph) -> Result<Outputs> {
    run(params, graph).map(|(o, _)| o)
}

/// Per-class loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    pub node: Vec<f64>,
    pub edge: Vec<f64>,
}

impl ClassWeights {
    pub fn uniform(config: &ModelConfig) -> Self {
        Self {
            node: vec![1.0; config.num_node_classes()],
            edge: vec![1.0; config.num_edge_classes()],
        }
    }

    /// `clip(total / (K * count_c), lo, hi)`; unseen classes get `hi`.
    pub fn from_counts(counts: &[usize], [lo, hi]: [f64; 2]) -> Vec<f64> {
        let total: usize = counts.iter().sum();
        let k = counts.len() as f64;
        counts
            .iter()
            .map(|&c| {
                if c == 0 {
                    hi
                } else {
                    (total as f64 / (k * c as f64)).clamp(lo, hi)
                }
            })
            .collect()
    }

    pub fn from_dataset(dataset: &[TrainBatch], config: &ModelConfig) -> Self {
        let mut nodes = vec![0; config.num_node_classes()];
        let mut edges = vec![0; config.num_edge_classes()];
        for b in dataset {
            for &(_, c) in &b.node_labels {
                nodes[c] += 1;
            }
            for &(_, c) in &b.edge_labels {
                edges[c] += 1;
            }
        }
        Self {
            node: Self::from_counts(&nodes, config.class_weight_clip),
            edge: Self::from_counts(&edges, config.class_weight_clip),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub node: f64,
    pub edge: f64,
}

fn weighted_ce<'a>(terms: impl Iterator<Item = (&'a [f64], usize)>, weights: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (p, y) in terms {
        num += -weights[y] * p[y].max(f64::MIN_POSITIVE).ln();
        den += weights[y];
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Class-weighted cross-entropy over the labelled local nodes plus
/// `lambda_edge` times the same over labelled candidates. Each term is
/// normalized by its summed label weights.
pub fn composite_loss(
    outputs: &Outputs,
    batch: &TrainBatch,
    weights: &ClassWeights,
    lambda_edge: f64,
) -> Result<LossBreakdown> {
    let nodes = batch
        .node_labels
        .iter()
        .map(|&(i, y)| {
            outputs.node_probs[i]
                .as_deref()
                .map(|p| (p, y))
                .ok_or_else(|| Error::Schema(format!("node {i} has no class scores")))
        })
        .collect::<Result<Vec<_>>>()?;
    let node = weighted_ce(nodes.into_iter(), &weights.node);
    let edge = weighted_ce(
        batch
            .edge_labels
            .iter()
            .map(|&(i, y)| (outputs.edge_probs[i].as_slice(), y)),
        &weights.edge,
    );
    Ok(LossBreakdown {
        total: node + lambda_edge * edge,
        node,
        edge,
    })
}

/// Loss and exact gradients of every trainable tensor.
pub fn loss_and_gradient(
    params: &ModelParams,
    batch: &TrainBatch,
    weights: &ClassWeights,
) -> Result<(LossBreakdown, ModelParams)> {
    let config = &params.config;
    batch.validate(config)?;
    let (out, trace) = run(params, &batch.graph)?;
    let loss = composite_loss(&out, batch, weights, config.lambda_edge)?;
    let g = &batch.graph;
    let hd = config.hidden_dim;
    let n = g.nodes.len();
    let mut grad = params.zeros_like();
    let last = trace.h.last().expect("output layer");
    let mut dh = vec![0.0; n * hd];

    let head_backward = |head: &Linear,
                         grad_head: &mut Linear,
                         p: &[f64],
                         y: usize,
                         scale: f64,
                         input: &[f64],
                         d_in: &mut [f64]| {
        let mut go = p.to_vec();
        go[y] -= 1.0;
        for v in go.iter_mut() {
            *v *= scale;
        }
        grad_head.w.add_outer(&go, input);
        for (b, x) in grad_head.b.data_mut().iter_mut().zip(&go) {
            *b += x;
        }
        head.w.mul_t_add(&go, d_in);
    };

    let node_den: f64 = batch
        .node_labels
        .iter()
        .map(|&(_, y)| weights.node[y])
        .sum();
    for &(v, y) in &batch.node_labels {
        let p = out.node_probs[v].as_ref().expect("validated");
        let scale = weights.node[y] / node_den;
        head_backward(
            &params.node_head,
            &mut grad.node_head,
            p,
            y,
            scale,
            &last[v * hd..(v + 1) * hd],
            &mut dh[v * hd..(v + 1) * hd],
        );
    }
    let edge_den: f64 = batch
        .edge_labels
        .iter()
        .map(|&(_, y)| weights.edge[y])
        .sum();
    let mut d_edge = vec![0.0; config.edge_input_dim()];
    for &(c, y) in &batch.edge_labels {
        if config.lambda_edge == 0.0 {
            break;
        }
        let scale = config.lambda_edge * weights.edge[y] / edge_den;
        d_edge.iter_mut().for_each(|x| *x = 0.0);
        head_backward(
            &params.edge_head,
            &mut grad.edge_head,
            &out.edge_probs[c],
            y,
            scale,
            &trace.edge_inputs[c],
            &mut d_edge,
        );
        let cand = &g.candidates[c];
        for k in 0..hd {
            dh[cand.src * hd + k] += d_edge[k];
            dh[cand.dst * hd + k] += d_edge[hd + k];
        }
    }

    let count = MessageType::COUNT;
    for (l, layer) in params.layers.iter().enumerate().rev() {
        let z = &trace.z[l];
        let hl = &trace.h[l];
        let gz: Vec<f64> = dh
            .iter()
            .zip(z)
            .map(|(d, z)| if *z > 0.0 { *d } else { 0.0 })
            .collect();
        let mut dprev = vec![0.0; n * hd];
        let gl = &mut grad.layers[l];
        for v in 0..n {
            let gzv = &gz[v * hd..(v + 1) * hd];
            if gzv.iter().all(|x| *x == 0.0) {
                continue;
            }
            gl.self_loop.w.add_outer(gzv, &hl[v * hd..(v + 1) * hd]);
            for (b, x) in gl.self_loop.b.data_mut().iter_mut().zip(gzv) {
                *b += x;
            }
            layer
                .self_loop
                .w
                .mul_t_add(gzv, &mut dprev[v * hd..(v + 1) * hd]);
            for t in 0..count {
                let mean = &trace.means[l][v * count + t];
                if mean.is_empty() {
                    continue;
                }
                gl.message[t].add_outer(gzv, mean);
                let mut gm = vec![0.0; hd];
                layer.message[t].mul_t_add(gzv, &mut gm);
                let srcs = &trace.inbox[v][t];
                let k = srcs.len() as f64;
                for &u in srcs {
                    for (d, x) in dprev[u * hd..(u + 1) * hd].iter_mut().zip(&gm) {
                        *d += x / k;
                    }
                }
            }
        }
        dh = dprev;
    }
    for (v, node) in g.nodes.iter().enumerate() {
        let dv = &dh[v * hd..(v + 1) * hd];
        let gi = &mut grad.input[node.kind.index()];
        gi.w.add_outer(dv, &trace.x[v]);
        for (b, x) in gi.b.data_mut().iter_mut().zip(dv) {
            *b += x;
        }
    }
    if !grad.trainable().iter().all(|(_, m)| m.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok((loss, grad))
}

fn activation_pattern(params: &ModelParams, g: &JointGraph) -> Result<Vec<bool>> {
    let (_, trace) = run(params, g)?;
    Ok(trace.z.iter().flatten().map(|z| *z > 0.0).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub samples: usize,
    pub epsilon: f64,
    pub tolerance: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            samples: 200,
            epsilon: 1e-4,
            tolerance: 1e-4,
            floor: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub passed: usize,
    /// Coordinates whose perturbation flipped a ReLU; not comparable.
    pub skipped: usize,
    pub max_relative_error: f64,
    /// `(tensor, index, analytic, numeric)` of failing coordinates.
    pub failures: Vec<(String, usize, f64, f64)>,
}

/// Compares analytic gradients with central differences on randomly drawn
/// coordinates of the tensors that receive any gradient at all.
pub fn gradient_check(
    params: &ModelParams,
    batch: &TrainBatch,
    weights: &ClassWeights,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let (_, grad) = loss_and_gradient(params, batch, weights)?;
    let base_pattern = activation_pattern(params, &batch.graph)?;
    let grads = grad.trainable();
    let live: Vec<usize> = (0..grads.len())
        .filter(|&i| grads[i].1.data().iter().any(|x| *x != 0.0))
        .collect();
    let sizes: Vec<usize> = live.iter().map(|&i| grads[i].1.data().len()).collect();
    let total: usize = sizes.iter().sum();
    let mut report = GradCheckReport::default();
    if total == 0 {
        return Ok(report);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let loss_at = |p: &ModelParams| -> Result<(f64, Vec<bool>)> {
        let out = forward(p, &batch.graph)?;
        let l = composite_loss(&out, batch, weights, p.config.lambda_edge)?.total;
        Ok((l, activation_pattern(p, &batch.graph)?))
    };
    let mut attempts = 0;
    while report.checked < cfg.samples && attempts < cfg.samples * 50 {
        attempts += 1;
        let mut flat = rng.random_range(0..total);
        let mut slot = 0;
        while flat >= sizes[slot] {
            flat -= sizes[slot];
            slot += 1;
        }
        let tensor = live[slot];
        let analytic = grads[tensor].1.data()[flat];
        let mut p = params.clone();
        let original = p.trainable()[tensor].1.data()[flat];
        p.trainable_mut()[tensor].data_mut()[flat] = original + cfg.epsilon;
        let (plus, pat_plus) = loss_at(&p)?;
        p.trainable_mut()[tensor].data_mut()[flat] = original - cfg.epsilon;
        let (minus, pat_minus) = loss_at(&p)?;
        if pat_plus != base_pattern || pat_minus != base_pattern {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * cfg.epsilon);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(cfg.floor);
        report.checked += 1;
        report.max_relative_error = report.max_relative_error.max(rel);
        if rel < cfg.tolerance {
            report.passed += 1;
        } else {
            report
                .failures
                .push((grads[tensor].0.clone(), flat, analytic, numeric));
        }
    }
    Ok(report)
}

/// Index of the largest score (first on ties).
pub fn argmax(v: &[f64]) -> usize {
    crate::fusion::argmax(v).unwrap_or(0)
}
