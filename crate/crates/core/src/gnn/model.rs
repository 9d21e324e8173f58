//! Model configuration, parameters and the text checkpoint format.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::joint::{MessageType, NodeKind};
use super::mat::Mat;
use crate::construct::EDGE_FEATURE_DIM;
use crate::error::{Error, Result};
use crate::segment::D_GEO;
use crate::synth::CLASSES;

/// Edge relation classes, "none" first.
pub const RELATION_CLASSES: [&str; 5] = [
    "none",
    "supports",
    "supported_by",
    "contact",
    "same_supporter",
];

pub const CHECKPOINT_MAGIC: &str = "SSG-CHECKPOINT 1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub node_classes: Vec<String>,
    pub edge_classes: Vec<String>,
    /// Width of optional external per-object embeddings; 0 disables them.
    pub object_embedding_dim: usize,
    /// Width of concept embeddings; 0 means concepts carry a single zero.
    pub concept_dim: usize,
    pub lambda_edge: f64,
    pub class_weight_clip: [f64; 2],
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            num_layers: 2,
            node_classes: CLASSES.iter().map(|s| s.to_string()).collect(),
            edge_classes: RELATION_CLASSES.iter().map(|s| s.to_string()).collect(),
            object_embedding_dim: 0,
            concept_dim: 0,
            lambda_edge: 1.0,
            class_weight_clip: [0.1, 10.0],
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be >= 1".into()));
        }
        if self.node_classes.is_empty() || self.edge_classes.is_empty() {
            return Err(Error::Config("class lists must be non-empty".into()));
        }
        if !(self.lambda_edge.is_finite() && self.lambda_edge >= 0.0) {
            return Err(Error::Config("lambda_edge must be >= 0".into()));
        }
        let [lo, hi] = self.class_weight_clip;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return Err(Error::Config(
                "class_weight_clip must satisfy 0 < lo <= hi".into(),
            ));
        }
        Ok(())
    }

    pub fn num_node_classes(&self) -> usize {
        self.node_classes.len()
    }

    pub fn num_edge_classes(&self) -> usize {
        self.edge_classes.len()
    }

    pub fn input_dim(&self, kind: NodeKind) -> usize {
        match kind {
            NodeKind::Local => D_GEO + self.object_embedding_dim,
            NodeKind::Global => D_GEO + self.num_node_classes() + self.object_embedding_dim,
            NodeKind::Concept => self.concept_dim.max(1),
        }
    }

    pub fn edge_input_dim(&self) -> usize {
        2 * self.hidden_dim + EDGE_FEATURE_DIM
    }
}

/// Affine map `W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Mat,
    pub b: Mat,
}

impl Linear {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            w: Mat::zeros(out, inp),
            b: Mat::zeros(out, 1),
        }
    }

    fn glorot(out: usize, inp: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: Mat::glorot(out, inp, rng),
            b: Mat::zeros(out, 1),
        }
    }

    /// `W x + b` into a fresh vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.b.data().to_vec();
        self.w.mul_add(x, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub self_loop: Linear,
    /// Indexed by [`MessageType::index`].
    pub message: Vec<Mat>,
}

/// Fixed input standardization `(x - shift) * scale`; not trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub shift: Mat,
    pub scale: Mat,
}

impl Standardizer {
    fn identity(dim: usize) -> Self {
        Self {
            shift: Mat::zeros(1, dim),
            scale: Mat::from_vec(1, dim, vec![1.0; dim]).expect("shape"),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.shift.data().iter().zip(self.scale.data()))
            .map(|(v, (s, k))| (v - s) * k)
            .collect()
    }

    /// Mean / inverse standard deviation of the rows; constant columns
    /// keep scale 1.
    pub fn fit<'a>(dim: usize, rows: impl Iterator<Item = &'a [f64]>) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for r in rows {
            n += 1;
            for (i, v) in r.iter().enumerate() {
                sum[i] += v;
                sq[i] += v * v;
            }
        }
        if n == 0 {
            return Self::identity(dim);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let scale: Vec<f64> = (0..dim)
            .map(|i| {
                let var = (sq[i] / n as f64 - mean[i] * mean[i]).max(0.0);
                if var.sqrt() > 1e-9 {
                    1.0 / var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            shift: Mat::from_vec(1, dim, mean).expect("shape"),
            scale: Mat::from_vec(1, dim, scale).expect("shape"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// Input projections, indexed by [`NodeKind::index`].
    pub input: Vec<Linear>,
    pub layers: Vec<LayerParams>,
    pub node_head: Linear,
    pub edge_head: Linear,
    /// Per node kind, then one for candidate edge features.
    pub node_norm: Vec<Standardizer>,
    pub edge_norm: Standardizer,
}

impl ModelParams {
    /// Seeded Glorot-uniform weights, zero biases, identity standardization.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden_dim;
        let input = NodeKind::ALL
            .iter()
            .map(|k| Linear::glorot(h, config.input_dim(*k), &mut rng))
            .collect();
        let layers = (0..config.num_layers)
            .map(|_| LayerParams {
                self_loop: Linear::glorot(h, h, &mut rng),
                message: (0..MessageType::COUNT)
                    .map(|_| Mat::glorot(h, h, &mut rng))
                    .collect(),
            })
            .collect();
        Ok(Self {
            input,
            layers,
            node_head: Linear::glorot(config.num_node_classes(), h, &mut rng),
            edge_head: Linear::glorot(config.num_edge_classes(), config.edge_input_dim(), &mut rng),
            node_norm: NodeKind::ALL
                .iter()
                .map(|k| Standardizer::identity(config.input_dim(*k)))
                .collect(),
            edge_norm: Standardizer::identity(EDGE_FEATURE_DIM),
            config: config.clone(),
        })
    }

    /// Same shapes, all zeros (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let z = |m: &Mat| Mat::zeros(m.rows(), m.cols());
        let zl = |l: &Linear| Linear::zeros(l.w.rows(), l.w.cols());
        Self {
            config: self.config.clone(),
            input: self.input.iter().map(zl).collect(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    self_loop: zl(&l.self_loop),
                    message: l.message.iter().map(z).collect(),
                })
                .collect(),
            node_head: zl(&self.node_head),
            edge_head: zl(&self.edge_head),
            node_norm: self.node_norm.clone(),
            edge_norm: self.edge_norm.clone(),
        }
    }

    /// Trainable tensors with stable names, in a fixed order.
    pub fn trainable(&self) -> Vec<(String, &Mat)> {
        let mut out = Vec::new();
        for (k, l) in NodeKind::ALL.iter().zip(&self.input) {
            out.push((format!("input.{}.w", k.name()), &l.w));
            out.push((format!("input.{}.b", k.name()), &l.b));
        }
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.self.w"), &l.self_loop.w));
            out.push((format!("layer{i}.self.b"), &l.self_loop.b));
            for (t, m) in MessageType::ALL.iter().zip(&l.message) {
                out.push((format!("layer{i}.message.{}", t.name()), m));
            }
        }
        out.push(("node_head.w".into(), &self.node_head.w));
        out.push(("node_head.b".into(), &self.node_head.b));
        out.push(("edge_head.w".into(), &self.edge_head.w));
        out.push(("edge_head.b".into(), &self.edge_head.b));
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = Vec::new();
        for l in &mut self.input {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        for l in &mut self.layers {
            out.push(&mut l.self_loop.w);
            out.push(&mut l.self_loop.b);
            out.extend(l.message.iter_mut());
        }
        out.push(&mut self.node_head.w);
        out.push(&mut self.node_head.b);
        out.push(&mut self.edge_head.w);
        out.push(&mut self.edge_head.b);
        out
    }

    fn all_tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = self.trainable();
        for (k, s) in NodeKind::ALL.iter().zip(&self.node_norm) {
            out.push((format!("norm.{}.shift", k.name()), &s.shift));
            out.push((format!("norm.{}.scale", k.name()), &s.scale));
        }
        out.push(("norm.edge.shift".into(), &self.edge_norm.shift));
        out.push(("norm.edge.scale".into(), &self.edge_norm.scale));
        out
    }

    fn all_tensors_mut(&mut self) -> Vec<&mut Mat> {
        // same order as all_tensors
        let mut out: Vec<&mut Mat> = Vec::new();
        let ModelParams {
            input,
            layers,
            node_head,
            edge_head,
            node_norm,
            edge_norm,
            ..
        } = self;
        for l in input {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        for l in layers {
            out.push(&mut l.self_loop.w);
            out.push(&mut l.self_loop.b);
            out.extend(l.message.iter_mut());
        }
        out.push(&mut node_head.w);
        out.push(&mut node_head.b);
        out.push(&mut edge_head.w);
        out.push(&mut edge_head.b);
        for s in node_norm {
            out.push(&mut s.shift);
            out.push(&mut s.scale);
        }
        out.push(&mut edge_norm.shift);
        out.push(&mut edge_norm.scale);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|(_, m)| m.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.all_tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// Text checkpoint: magic line, config as one JSON line, then every
    /// tensor as `MATRIX name rows cols` followed by one line per row.
    /// Floats use the shortest round-trip representation.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        out.push_str(CHECKPOINT_MAGIC);
        out.push('\n');
        let config = serde_json::to_string(&self.config).expect("config serializes");
        let _ = writeln!(out, "CONFIG {config}");
        for (name, m) in self.all_tensors() {
            let _ = writeln!(out, "MATRIX {name} {} {}", m.rows(), m.cols());
            for r in 0..m.rows() {
                let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out.push_str("END\n");
        out
    }

    pub fn from_checkpoint(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let bad = |line: usize, msg: &str| Error::parse(path, line, msg);
        match lines.next() {
            Some((_, l)) if l == CHECKPOINT_MAGIC => {}
            _ => return Err(bad(1, "missing checkpoint header")),
        }
        let (ln, cfg) = lines.next().ok_or_else(|| bad(2, "missing CONFIG line"))?;
        let cfg = cfg
            .strip_prefix("CONFIG ")
            .ok_or_else(|| bad(ln, "expected CONFIG"))?;
        let config: ModelConfig = serde_json::from_str(cfg).map_err(|e| bad(ln, &e.to_string()))?;
        let mut params = Self::init(&config)?;
        let names: Vec<String> = params.all_tensors().into_iter().map(|(n, _)| n).collect();
        let mut filled = vec![false; names.len()];
        let mut ended = false;
        while let Some((ln, line)) = lines.next() {
            if line == "END" {
                ended = true;
                break;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let ["MATRIX", name, rows, cols] = parts[..] else {
                return Err(bad(ln, "expected MATRIX name rows cols"));
            };
            let idx = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| bad(ln, &format!("unknown tensor {name}")))?;
            if filled[idx] {
                return Err(bad(ln, &format!("duplicate tensor {name}")));
            }
            let (rows, cols): (usize, usize) = match (rows.parse(), cols.parse()) {
                (Ok(r), Ok(c)) => (r, c),
                _ => return Err(bad(ln, "bad shape")),
            };
            let mut tensors = params.all_tensors_mut();
            let target = &mut tensors[idx];
            if target.shape() != (rows, cols) {
                return Err(Error::Dimension(format!(
                    "{name}: checkpoint {rows}x{cols}, config implies {}x{}",
                    target.rows(),
                    target.cols()
                )));
            }
            for r in 0..rows {
                let (ln, row) = lines.next().ok_or_else(|| bad(ln, "truncated matrix"))?;
                let values: Vec<f64> = row
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e: std::num::ParseFloatError| bad(ln, &e.to_string()))?;
                if values.len() != cols {
                    return Err(bad(ln, &format!("expected {cols} values")));
                }
                for (c, v) in values.into_iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!("{name}[{r},{c}]")));
                    }
                    target.set(r, c, v);
                }
            }
            filled[idx] = true;
        }
        if !ended {
            return Err(bad(text.lines().count(), "missing END"));
        }
        if let Some(i) = filled.iter().position(|f| !f) {
            return Err(Error::Schema(format!(
                "checkpoint lacks tensor {}",
                names[i]
            )));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            hidden_dim: 5,
            num_layers: 2,
            seed: 11,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn init_is_seeded_and_shaped() {
        let a = ModelParams::init(&small()).unwrap();
        assert_eq!(a, ModelParams::init(&small()).unwrap());
        let c = ModelConfig {
            seed: 12,
            ..small()
        };
        assert_ne!(a, ModelParams::init(&c).unwrap());
        assert_eq!(a.input[NodeKind::Global.index()].w.shape(), (5, D_GEO + 7));
        assert_eq!(a.edge_head.w.shape(), (5, 2 * 5 + EDGE_FEATURE_DIM));
        assert_eq!(a.layers[1].message.len(), MessageType::COUNT);
        assert_eq!(a.trainable().len(), a.zeros_like().trainable_mut().len());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut p = ModelParams::init(&small()).unwrap();
        p.node_norm[0].shift.set(0, 3, 1.0 / 3.0);
        p.edge_norm.scale.set(0, 0, 7e-300);
        let text = p.to_checkpoint();
        let back = ModelParams::from_checkpoint(&text, Path::new("x.ckpt")).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_checkpoint(), text);
    }

    #[test]
    fn checkpoint_errors() {
        let p = ModelParams::init(&small()).unwrap();
        let text = p.to_checkpoint();
        let path = Path::new("x.ckpt");
        assert!(ModelParams::from_checkpoint("nope", path).is_err());
        let truncated: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
        assert!(ModelParams::from_checkpoint(&truncated, path).is_err());
        let reshaped = text.replacen("MATRIX node_head.b 7 1", "MATRIX node_head.b 6 1", 1);
        assert!(ModelParams::from_checkpoint(&reshaped, path).is_err());
    }

    #[test]
    fn standardizer_fit() {
        let rows = [vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(2, rows.iter().map(Vec::as_slice));
        assert_eq!(s.apply(&[1.0, 5.0]), vec![-1.0, 0.0]);
        assert_eq!(s.apply(&[3.0, 6.0]), vec![1.0, 1.0]);
    }
}
