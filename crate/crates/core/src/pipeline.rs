//! Per-frame orchestration: ingest, construct, match, fuse, and optionally
//! classify, enrich the global layer and ground it in a knowledge graph.

use serde::{Deserialize, Serialize};

use crate::construct::{build_local_graph, ConstructConfig};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::fusion::{enrich_global_features, fuse_frame, match_instances, FusionConfig};
use crate::geometry::DEFAULT_RESOLUTION;
use crate::gnn::{annotate_graph, predict_frame, FramePrediction, ModelParams};
use crate::graph::{NodeSpec, NodeType, SceneGraph};
use crate::knowledge::{ensure_knowledge_layer, link_global_to_concepts, KnowledgeGraph};
use crate::segment::{split_segments, DEFAULT_MIN_POINTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub resolution: f64,
    pub min_points: usize,
    pub construct: ConstructConfig,
    pub fusion: FusionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            min_points: DEFAULT_MIN_POINTS,
            construct: ConstructConfig::default(),
            fusion: FusionConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(Error::Config("resolution must be > 0".into()));
        }
        if self.min_points == 0 {
            return Err(Error::Config("min_points must be >= 1".into()));
        }
        self.construct.validate()?;
        self.fusion.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameSummary {
    pub frame_id: u64,
    pub segments: usize,
    pub dropped_segments: usize,
    pub local_nodes: usize,
    pub local_edges: usize,
    pub matched: usize,
    pub new_instances: usize,
    pub global_instances: usize,
    pub nodes: usize,
    pub edges: usize,
}

struct Classifier {
    params: ModelParams,
    use_context: bool,
}

/// Incremental builder of the persistent graph.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub graph: SceneGraph,
    pub summaries: Vec<FrameSummary>,
    /// Local graph of the most recent frame as built, before fusion.
    pub last_local: Option<SceneGraph>,
    /// Prediction of the most recent frame, if a model is attached.
    pub last_prediction: Option<FramePrediction>,
    classifier: Option<Classifier>,
    knowledge: Option<KnowledgeGraph>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let mut graph = SceneGraph::new();
        graph.add_node(NodeSpec::new(NodeType::VirtualGround))?;
        Ok(Self {
            config,
            graph,
            summaries: Vec::new(),
            last_local: None,
            last_prediction: None,
            classifier: None,
            knowledge: None,
        })
    }

    /// Classifies every frame's local layer. Without context the
    /// cross-layer edges carry no messages.
    pub fn with_model(mut self, params: ModelParams, use_context: bool) -> Self {
        self.classifier = Some(Classifier {
            params,
            use_context,
        });
        self
    }

    pub fn with_knowledge(mut self, kg: KnowledgeGraph) -> Result<Self> {
        ensure_knowledge_layer(&mut self.graph, &kg)?;
        self.knowledge = Some(kg);
        Ok(self)
    }

    /// Runs one frame through the pipeline. `segment_embeddings`, keyed by
    /// segment id, are attached to the local nodes.
    pub fn process(
        &mut self,
        frame: &Frame,
        segment_embeddings: Option<&EmbeddingTable>,
    ) -> Result<FrameSummary> {
        let split = split_segments(frame, self.config.resolution, self.config.min_points)?;
        let mut local = build_local_graph(&split.observations, &self.config.construct)?;
        if let Some(table) = segment_embeddings {
            let ids: Vec<_> = local
                .nodes_of_type(NodeType::LocalObject)
                .filter_map(|n| Some((n.id, n.segment_id?)))
                .collect();
            for (id, seg) in ids {
                if let Some(v) = table.get(&seg.to_string()) {
                    let v = v.to_vec();
                    local.update_node(id, |s| s.embedding = Some(v))?;
                }
            }
        }
        let matches = match_instances(&local, &self.graph, &self.config.fusion)?;
        let outcome = fuse_frame(
            &mut self.graph,
            &local,
            &matches,
            &self.config.fusion,
            &self.config.construct,
        )?;
        if let Some(c) = &self.classifier {
            let pred = predict_frame(&c.params, &self.graph, c.use_context)?;
            annotate_graph(&mut self.graph, &pred)?;
            enrich_global_features(
                &mut self.graph,
                &pred.enrichment,
                &c.params.config.node_classes,
            )?;
            self.last_prediction = Some(pred);
        }
        if let Some(kg) = &self.knowledge {
            link_global_to_concepts(&mut self.graph, kg)?;
        }
        let summary = FrameSummary {
            frame_id: frame.frame_id,
            segments: frame.segments().len(),
            dropped_segments: split.dropped.len(),
            local_nodes: outcome.local_to_joint.len(),
            local_edges: local.edge_count(),
            matched: matches.assignments.len(),
            new_instances: outcome.created.len(),
            global_instances: self.graph.nodes_of_type(NodeType::GlobalObject).count(),
            nodes: self.graph.node_count(),
            edges: self.graph.edge_count(),
        };
        self.summaries.push(summary.clone());
        self.last_local = Some(local);
        Ok(summary)
    }

    pub fn global_instances(&self) -> usize {
        self.graph.nodes_of_type(NodeType::GlobalObject).count()
    }
}
