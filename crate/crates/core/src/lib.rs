//! Class-pathway analysis of ReLU classifiers.
//!
//! Trains small dense and convolutional networks, extracts one weight-derived
//! pathway per class, relates pathway distances to confusion counts and prunes
//! nodes that no pathway uses.

pub mod analysis;
pub mod arch;
pub mod data;
pub mod error;
mod linalg;
pub mod model_io;
pub mod nn;
pub mod pathway;
pub mod pruning;
pub mod reference;
pub mod tensor;
pub mod train;

pub use analysis::{
    average_distance, coverage_curve, distance_matrix, nearest_k, pathway_distance, rank_correlation, spearman,
    topk_coverage, ConfusionMatrix, CoverageReport, DistanceMatrix, RankCorrelation,
};
pub use arch::{ArchSpec, LayerSpec};
pub use data::{augment_noise, load_idx, load_mnist, Dataset, NoiseConfig, Split};
pub use error::{Error, Result};
pub use model_io::{persist_model, persist_model_with, restore_model};
pub use nn::{
    conv_pool_forward, dense_forward, network_forward, predict, predict_batch, Activation, ConvLayer, DenseLayer,
    Layer, NetworkDescriptor, PoolLayer, Shape,
};
pub use pathway::{
    extract_cnn_pathways, extract_mlp_pathways, extract_pathways, pathway_vector, reduce_cnn_to_mlp, ClassPathway,
    Normalization, PathwayConfig, PathwaySet,
};
pub use pruning::{
    apply_prune, apply_prune_masked, node_importance, prune_mask, prune_sweep, random_prune_mask, ImportanceVector,
    PruneMask, PruneMode, SweepCurve, SweepPoint,
};
pub use tensor::Tensor;
pub use train::{evaluate, train_sgd, train_sgd_observed, Evaluation, TrainConfig, TrainHistory};
