//! Post-hoc class-imbalance bias mitigation for graph neural networks.
//!
//! A trained node classifier is probed with a *neutral graph*: a synthetic
//! graph that matches the reference data's node count, edge density and
//! feature mean/covariance but carries no class signal. The model's pooled
//! logits on that graph estimate its class bias, which is subtracted from
//! the logits of real nodes before the softmax.
//!
//! ```no_run
//! use neubm::prelude::*;
//!
//! let graph = generate_sbm(&SbmConfig::default())?;
//! let split = stratified_split(&graph, 0.1, 0.1, 5, 0)?;
//! let model = ModelConfig::gcn(graph.num_features(), 64, 5);
//! let (params, _report) = train(&graph, &split, &model, &TrainConfig::default())?;
//!
//! let stats = compute_dataset_stats(&graph, StatsScope::AllNodes)?;
//! let neutral = construct_neutral(&stats, Some(&graph), &NeutralConfig::default())?;
//! let out = predict_calibrated(&params, &graph, &neutral, &CalibrationSpec::SUBTRACT)?;
//! # Ok::<(), neubm::Error>(())
//! ```

pub mod calibration;
pub mod dataset;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod neutral;
pub mod numeric;
pub mod rng;

pub use error::{Error, ErrorCategory, Result};

pub mod prelude {
    pub use crate::calibration::{
        calibrate, check_bias_reduction, predict_calibrated, CalibratedOutput, CalibrationSpec,
        Position, Variant,
    };
    pub use crate::dataset::{
        generate_sbm, inject_noise, kfold_splits, load_canonical, save_canonical,
        stratified_split, NoiseKind, NoiseSpec, SbmConfig, SplitAssignment,
    };
    pub use crate::error::{Error, Result};
    pub use crate::gnn::{predict_logits, train, ModelConfig, ModelParams, TrainConfig};
    pub use crate::graph::{
        build_adjacency, compute_dataset_stats, symmetric_normalize, Graph, StatsScope,
    };
    pub use crate::metrics::{confusion, evaluate, f1_scores, imbalance_ratio, mmd_rbf, Bandwidth};
    pub use crate::neutral::{
        construct_neutral, neutral_logit_vector, sample_mvn, ConstructionVariant, NeutralConfig,
    };
}
