#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use neubm::gnn::{gradients, ModelConfig, ModelParams, PreparedGraph};
use neubm::graph::Graph;
use neubm::rng;

/// Random graph with Gaussian features, Bernoulli(p) edges and random labels.
pub fn random_graph(n: usize, f: usize, c: usize, p: f64, seed: u64) -> Graph {
    let mut r = rng::seeded(seed);
    let features = Array2::from_shape_fn((n, f), |_| StandardNormal.sample(&mut r));
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if r.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let labels = (0..n).map(|_| Some(r.random_range(0..c))).collect();
    Graph::new(features, edges, Some(labels), Some(c)).unwrap()
}

pub fn random_mask(n: usize, seed: u64) -> Vec<bool> {
    let mut r = rng::seeded(seed);
    let mut m: Vec<bool> = (0..n).map(|_| r.random::<f64>() < 0.6).collect();
    m[0] = true;
    m
}

/// Largest relative deviation between analytic and central-difference
/// gradients over all parameters.
pub fn max_fd_error(
    params: &ModelParams,
    graph: &Graph,
    mask: &[bool],
    weight_decay: f64,
    dropout_seed: Option<u64>,
    step: f64,
) -> f64 {
    let prepared = PreparedGraph::new(graph).unwrap();
    let labels = graph.labels().unwrap();
    let (_, analytic) = gradients(params, &prepared, labels, mask, weight_decay, dropout_seed).unwrap();
    let analytic = analytic.flat();
    let base = params.flat();
    let loss_at = |flat: &[f64]| {
        let p = ModelParams::from_flat(params.config(), flat).unwrap();
        gradients(&p, &prepared, labels, mask, weight_decay, dropout_seed).unwrap().0
    };
    let mut worst: f64 = 0.0;
    let mut probe = base.clone();
    for i in 0..base.len() {
        probe[i] = base[i] + step;
        let up = loss_at(&probe);
        probe[i] = base[i] - step;
        let down = loss_at(&probe);
        probe[i] = base[i];
        let numeric = (up - down) / (2.0 * step);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

pub fn gcn_config(f: usize, c: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        seed,
        ..ModelConfig::gcn(f, 6, c)
    }
}

pub fn gat_config(f: usize, c: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        seed,
        ..ModelConfig::gat(f, 3, c, 2)
    }
}

/// Per-class (precision, recall, f1, support) counted pair by pair.
pub struct OracleMetrics {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub micro_f1: f64,
}

pub fn brute_force_metrics(pred: &[usize], truth: &[usize], c: usize) -> OracleMetrics {
    let mut precision = vec![0.0; c];
    let mut recall = vec![0.0; c];
    let mut f1 = vec![0.0; c];
    let mut support = vec![0usize; c];
    let mut active = vec![false; c];
    for k in 0..c {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&p, &t) in pred.iter().zip(truth) {
            match (p == k, t == k) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        support[k] = tp + fn_;
        active[k] = tp + fp + fn_ > 0;
        precision[k] = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        recall[k] = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        // F1 from counts directly: 2tp / (2tp + fp + fn)
        f1[k] = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
    }
    let n_active = active.iter().filter(|a| **a).count() as f64;
    let macro_f1 = (0..c).filter(|&k| active[k]).map(|k| f1[k]).sum::<f64>() / n_active;
    let total = truth.len() as f64;
    let weighted_f1 = (0..c).map(|k| f1[k] * support[k] as f64).sum::<f64>() / total;
    // micro: pooled tp / fp / fn over all classes
    let tp: usize = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    let fp = pred.len() - tp;
    let micro_f1 = 2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fp as f64);
    OracleMetrics {
        precision,
        recall,
        f1,
        macro_f1,
        weighted_f1,
        micro_f1,
    }
}
