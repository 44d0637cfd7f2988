//! Multi-label classification of image/text pairs with classifier chains.
//!
//! Precomputed image and text embeddings are fused by element-wise product,
//! fed to a chain of L2-regularized logistic regressions, optionally passed
//! through a sigmoid, averaged over paraphrase groups, and thresholded with a
//! single global cut-off tuned by grid search.

pub mod calibrate;
pub mod chain;
pub mod dataset;
pub mod error;
pub mod fusion;
pub mod logreg;
pub mod pipeline;
pub mod synth;

pub use calibrate::{
    apply_threshold, average_groups, cooccurrence, f1_scores, tune_threshold, CooccurrenceMatrix,
    LabelScores, Metric, MetricsReport, Threshold,
};
pub use chain::{
    predict_chain, sharpen, train_chain, train_independent, ChainFeed, ChainModel,
    ProbabilityMatrix,
};
pub use dataset::{
    label_counts, parse_dataset, split_train_validation, Dataset, Example, Origin, Taxonomy,
};
pub use error::{Error, Result};
pub use fusion::{featurize, fuse, FeatureMode, FeatureVector};
pub use logreg::{predict_proba, train_binary, LinearModel, TrainConfig};
pub use pipeline::{
    train_with_validation, write_predictions, GroupScores, Pipeline, PipelineConfig, Predictions,
    TrainOutcome,
};
pub use synth::{generate, Augment, SynthConfig};
