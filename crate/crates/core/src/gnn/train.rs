use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::config::{ModelConfig, TrainConfig};
use super::loss::gradients;
use super::model::{predict_prepared, PreparedGraph};
use super::params::ModelParams;
use crate::dataset::SplitAssignment;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::metrics::{confusion, f1_scores};
use crate::numeric::argmax_rows;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub loss_curve: Vec<f64>,
    pub val_metric_curve: Vec<f64>,
    pub wall_time_seconds: f64,
}

/// Maps eval-mode logits to predicted labels for validation scoring.
///
/// Receives the 1-based epoch and the current parameters.
pub type ValPredictor<'a> = dyn FnMut(usize, &ModelParams, &Array2<f64>) -> Result<Vec<usize>> + 'a;

pub fn train(
    graph: &Graph,
    split: &SplitAssignment,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    train_with_predictor(graph, split, model_config, train_config, None)
}

/// Full-batch Adam training with early stopping on validation F1-macro.
///
/// The first evaluation never stops training. From the second epoch on,
/// training stops once `patience` epochs have passed since the best one.
/// Returns the parameters of the best epoch (ties keep the earliest).
pub fn train_with_predictor(
    graph: &Graph,
    split: &SplitAssignment,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    mut predictor: Option<&mut ValPredictor<'_>>,
) -> Result<(ModelParams, TrainReport)> {
    model_config.validate()?;
    train_config.validate()?;
    let labels = graph
        .labels()
        .ok_or_else(|| Error::Input("training needs labels".into()))?;
    let c = graph
        .num_classes()
        .ok_or_else(|| Error::Input("training needs a class count".into()))?;
    if c != model_config.num_classes {
        return Err(Error::Shape(format!(
            "graph has {c} classes, model has {}",
            model_config.num_classes
        )));
    }
    let n = graph.num_nodes();
    let train_mask = split.train_mask(n);
    let (select_mask, select_idx) = if split.val.is_empty() {
        (train_mask.clone(), &split.train)
    } else {
        (split.val_mask(n), &split.val)
    };
    if select_idx.iter().any(|&i| labels[i].is_none()) {
        return Err(Error::Input("validation nodes must be labeled".into()));
    }

    let start = Instant::now();
    let prepared = PreparedGraph::new(graph)?;
    let mut params = ModelParams::init(model_config)?;
    let mut flat = params.flat();
    let mut adam = AdamState::new(flat.len());
    let truth: Vec<usize> = labels.iter().map(|l| l.unwrap_or(0)).collect();

    let mut best = (f64::NEG_INFINITY, 0usize, params.clone());
    let mut loss_curve = Vec::new();
    let mut val_curve = Vec::new();
    let mut epochs_run = 0;
    for epoch in 1..=train_config.max_epochs {
        let (loss, grads) = gradients(
            &params,
            &prepared,
            labels,
            &train_mask,
            train_config.weight_decay,
            Some(rng::derive(train_config.seed, epoch as u64)),
        )
        .map_err(|e| match e {
            Error::NonFiniteGradient(_) => Error::TrainingFailure { epoch, loss: f64::NAN },
            e => e,
        })?;
        if !loss.is_finite() {
            return Err(Error::TrainingFailure { epoch, loss });
        }
        adam_step(&mut adam, &mut flat, &grads.flat(), train_config.learning_rate)?;
        params.set_flat(&flat).map_err(|_| Error::TrainingFailure { epoch, loss: f64::NAN })?;

        let logits = predict_prepared(&params, &prepared)?;
        let pred = match predictor.as_mut() {
            Some(p) => p(epoch, &params, &logits)?,
            None => argmax_rows(&logits),
        };
        let cm = confusion(&pred, &truth, &select_mask, c)?;
        let metric = f1_scores(&cm).map(|r| r.f1_macro).unwrap_or(0.0);

        loss_curve.push(loss);
        val_curve.push(metric);
        epochs_run = epoch;
        if metric > best.0 {
            best = (metric, epoch, params.clone());
        }
        if epoch >= 2 && epoch - best.1 >= train_config.patience {
            break;
        }
    }

    let report = TrainReport {
        epochs_run,
        best_epoch: best.1,
        loss_curve,
        val_metric_curve: val_curve,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((best.2, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_sbm, stratified_split, SbmConfig};

    fn easy() -> (Graph, SplitAssignment) {
        let g = generate_sbm(&SbmConfig {
            num_classes: 2,
            total_nodes: 200,
            rho: 1.0,
            p_intra: 0.05,
            p_inter: 0.005,
            feature_dim: 4,
            class_mean_separation: 5.0,
            feature_std: 1.0,
            seed: 3,
        })
        .unwrap();
        let s = stratified_split(&g, 0.1, 0.1, 5, 1).unwrap();
        (g, s)
    }

    #[test]
    fn patience_zero_runs_two_epochs() {
        let (g, s) = easy();
        let tc = TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        };
        let (_, r) = train(&g, &s, &ModelConfig::gcn(4, 16, 2), &tc).unwrap();
        assert_eq!(r.epochs_run, 2);
        assert!(r.best_epoch <= r.epochs_run);
    }

    #[test]
    fn separable_data_fits_training_set() {
        let (g, s) = easy();
        let tc = TrainConfig {
            learning_rate: 0.01,
            max_epochs: 200,
            patience: 200,
            ..TrainConfig::default()
        };
        let (p, r) = train(&g, &s, &ModelConfig::gcn(4, 16, 2), &tc).unwrap();
        let pred = argmax_rows(&crate::gnn::predict_logits(&p, &g).unwrap());
        let labels = g.dense_labels().unwrap();
        let acc = s.train.iter().filter(|&&i| pred[i] == labels[i]).count() as f64 / s.train.len() as f64;
        assert_eq!(acc, 1.0);
        assert!(r.loss_curve.first().unwrap() > r.loss_curve.last().unwrap());
    }

    #[test]
    fn deterministic_reports() {
        let (g, s) = easy();
        let tc = TrainConfig {
            max_epochs: 30,
            patience: 30,
            ..TrainConfig::default()
        };
        for mc in [ModelConfig::gcn(4, 8, 2), ModelConfig::gat(4, 4, 2, 2)] {
            let (pa, a) = train(&g, &s, &mc, &tc).unwrap();
            let (pb, b) = train(&g, &s, &mc, &tc).unwrap();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.loss_curve), bits(&b.loss_curve));
            assert_eq!(bits(&pa.flat()), bits(&pb.flat()));
            assert_eq!(a.best_epoch, b.best_epoch);
        }
    }

    #[test]
    fn class_count_mismatch() {
        let (g, s) = easy();
        assert!(train(&g, &s, &ModelConfig::gcn(4, 8, 3), &TrainConfig::default()).is_err());
    }
}
