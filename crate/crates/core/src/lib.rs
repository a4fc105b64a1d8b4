//! Multi-viewpoint self-organizing maps.
//!
//! One dataset is described under several viewpoints (independent feature
//! matrices). A map is trained per viewpoint, nodes are labelled and zoned
//! into information areas, and activity is propagated between maps through
//! the items they share to measure how consistently one viewpoint's
//! clusters explain another's.

mod cluster;
pub mod error;
pub mod ingest;
pub mod intermap;
pub mod pipeline;
pub mod quality;
pub mod som;
pub mod topology;
pub mod viewpoint;

pub use cluster::ClusterWeights;
pub use error::{Error, Result};
pub use intermap::{
    activate, chain_propagation, consistency_matrix, dispersion, node_posterior, propagate, propagation_consistency,
    Activation, ChainStep, ConsistencyMatrix, ConsistencyReport, MapRef, Modality, NodePosterior, PropagationResult,
    Selection, StepSource, DEFAULT_THETA,
};
pub use pipeline::{run_pipeline, PipelineConfig, WorkspaceBundle};
pub use quality::{f_measure, map_recall_precision, peculiar_features, scan_map_sizes, QualityReport, ScanResult};
pub use som::{
    best_matching_unit, project_data, quantization_error, train_som, Grid, Projection, SomMap, TrainingParams,
};
pub use topology::{dominant_label, label_nodes, zone_map, InformationArea};
pub use viewpoint::{
    build_viewpoint_matrix, cosine_similarity, validate_dataset, DataItem, Dataset, SparseVector, ViewpointMatrix,
};
