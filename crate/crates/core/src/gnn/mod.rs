//! Expectation-biased scene-graph classifier: heterogeneous mean-aggregation
//! message passing over the joint local / global / knowledge graph, with
//! node and edge heads, an imbalance-weighted loss on local elements, and a
//! plain SGD trainer.

pub mod dataset;
pub mod joint;
pub mod mat;
pub mod model;
pub mod network;
pub mod predict;
pub mod train;

pub use dataset::{frame_batch, relation_labels, scene_batches, BatchOptions, ContextMode};
pub use joint::{
    assemble_joint_graph, Candidate, JointGraph, JointNode, Message, MessageType, NodeKind,
};
pub use mat::Mat;
pub use model::{Linear, ModelConfig, ModelParams, Standardizer, RELATION_CLASSES};
pub use network::{
    composite_loss, forward, gradient_check, loss_and_gradient, ClassWeights, GradCheckConfig,
    GradCheckReport, LossBreakdown, Outputs, TrainBatch,
};
pub use predict::{annotate_graph, predict_frame, EdgePrediction, FramePrediction, NodePrediction};
pub use train::{
    evaluate, fit_normalization, macro_f1, train, Evaluation, TrainConfig, TrainReport,
};
