//! Engine configuration file (TOML). Every section is optional and falls
//! back to library defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssg_core::gnn::{ContextMode, ModelConfig, TrainConfig};
use ssg_core::knowledge::ExtractionSpec;
use ssg_core::pipeline::PipelineConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMethod {
    None,
    Spectral,
    Numberbatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    pub method: EmbeddingMethod,
    pub dim: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        Self {
            method: EmbeddingMethod::None,
            dim: 16,
            iterations: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub kg_dump: Option<PathBuf>,
    /// Extracted knowledge graph (JSON) used by `infer`.
    pub kg: Option<PathBuf>,
    /// Numberbatch-style table for `kg-extract` / `kg-embed`.
    pub embeddings: Option<PathBuf>,
    /// `EMB` table keyed by segment id, attached to local nodes.
    pub segment_embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub context: ContextMode,
    /// Share of training labels flipped before supervision.
    pub label_noise: f64,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        let run = TrainConfig::default();
        Self {
            epochs: run.epochs,
            learning_rate: run.learning_rate,
            seed: run.seed,
            context: ContextMode::Off,
            label_noise: 0.0,
        }
    }
}

impl TrainingSettings {
    pub fn run(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub pipeline: PipelineConfig,
    pub extraction: ExtractionSpec,
    pub embedding: EmbeddingSettings,
    pub model: ModelConfig,
    pub training: TrainingSettings,
    pub paths: Paths,
}

impl EngineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let config: EngineConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    /// Checks every section; extraction is only checked when used.
    pub fn validate(&self) -> Result<(), CliError> {
        self.pipeline.validate()?;
        self.model.validate()?;
        if !(0.0..=1.0).contains(&self.training.label_noise) {
            return Err(CliError::Config(
                "training.label_noise must be in [0,1]".into(),
            ));
        }
        if self.embedding.method == EmbeddingMethod::Spectral && self.embedding.dim == 0 {
            return Err(CliError::Config("embedding.dim must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        let c: EngineConfig = toml::from_str("").unwrap();
        assert_eq!(c, EngineConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<EngineConfig>("voxel = 1").is_err());
        assert!(toml::from_str::<EngineConfig>("[pipeline]\nresolutoin = 0.1").is_err());
        assert!(toml::from_str::<EngineConfig>("[pipeline.construct]\nbogus = 1").is_err());
        assert!(toml::from_str::<EngineConfig>("[training]\nepoch = 3").is_err());
    }

    #[test]
    fn nested_sections_parse() {
        let c: EngineConfig = toml::from_str(
            r#"
            [pipeline]
            resolution = 0.04
            [pipeline.construct]
            edge_distance_threshold = 0.7
            [extraction]
            seed_classes = ["cup"]
            hops = 2
            [model]
            hidden_dim = 8
            [training]
            epochs = 3
            learning_rate = 0.05
            context = "ground_truth"
            [paths]
            checkpoint = "model.ckpt"
            "#,
        )
        .unwrap();
        assert_eq!(c.pipeline.resolution, 0.04);
        assert_eq!(c.pipeline.construct.edge_distance_threshold, 0.7);
        assert_eq!(c.extraction.hops, 2);
        assert_eq!(c.model.hidden_dim, 8);
        assert_eq!(c.training.epochs, 3);
        assert_eq!(c.training.context, ContextMode::GroundTruth);
        assert_eq!(c.paths.checkpoint.as_deref(), Some(Path::new("model.ckpt")));
    }
}
