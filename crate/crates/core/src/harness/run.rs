use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::config::{digest, DatasetSource, ExperimentConfig};
use super::report::{aggregate, Report, ReportKind};
use crate::calibration::{calibrate, check_bias_reduction, CalibrationSpec};
use crate::dataset::{inject_noise, stratified_split, NoiseKind, NoiseSpec};
use crate::error::{Error, Result};
use crate::gnn::{predict_logits, train_with_predictor, ValPredictor};
use crate::graph::{compute_dataset_stats_with, Graph};
use crate::metrics::{evaluate, MetricsReport};
use crate::neutral::{
    construct_neutral, neutral_logit_vector, ConstructionVariant, NeutralConfig, RefreshingNeutral,
};
use crate::numeric::argmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub variable: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub final_loss: f64,
    pub best_val_f1_macro: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    pub majority_class: usize,
    pub majority_prob_before: f64,
    pub majority_prob_after: f64,
    pub majority_prob_decreased: bool,
    pub ordered_pairs: usize,
    pub ordering_violations: usize,
}

/// One (seed, fold, row) outcome. Wall-clock times live in [`Timing`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub group: String,
    pub label: String,
    pub spec_id: String,
    /// `None` calibrates against a zero reference.
    pub neutral_variant: Option<ConstructionVariant>,
    pub sweep: Option<SweepPoint>,
    pub seed: u64,
    pub fold_id: usize,
    pub split_seed: u64,
    pub neutral_seed: u64,
    pub train: Option<TrainSummary>,
    pub metrics: Option<MetricsReport>,
    pub bias: Option<BiasSummary>,
    pub error: Option<String>,
}

impl ResultRecord {
    pub fn key(&self) -> (String, u64, usize, String) {
        (self.config_hash.clone(), self.seed, self.fold_id, self.label.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub sweep: Option<SweepPoint>,
    pub seed: u64,
    pub fold_id: usize,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub epochs_run: usize,
    pub train_seconds: f64,
    pub calibrate_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub timings: Vec<Timing>,
}

/// A table row: one calibration spec against one kind of reference.
#[derive(Debug, Clone)]
struct Row {
    group: String,
    label: String,
    spec: CalibrationSpec,
    neutral: Option<ConstructionVariant>,
}

fn experiment_rows(config: &ExperimentConfig) -> Vec<Row> {
    config
        .calibration
        .iter()
        .map(|spec| Row {
            group: "main".into(),
            label: spec.id(),
            spec: *spec,
            neutral: Some(config.neutral.construction_variant),
        })
        .collect()
}

fn ablation_rows(config: &ExperimentConfig) -> Vec<Row> {
    let default_variant = Some(config.neutral.construction_variant);
    let row = |group: &str, label: String, spec, neutral| Row {
        group: group.into(),
        label: format!("{group}:{label}"),
        spec,
        neutral,
    };
    let mut rows = Vec::new();
    for (name, v) in [
        ("mean_cov", ConstructionVariant::MeanCov),
        ("random", ConstructionVariant::Random),
        ("class_balanced", ConstructionVariant::ClassBalanced),
    ] {
        rows.push(row("neutral", name.into(), CalibrationSpec::SUBTRACT, Some(v)));
    }
    rows.push(row("neutral", "no_neutral".into(), CalibrationSpec::SUBTRACT, None));

    let mut variants = vec![
        CalibrationSpec::NONE,
        CalibrationSpec::SUBTRACT,
        CalibrationSpec::normalize(),
    ];
    variants.extend(config.lambda_grid.iter().map(|&l| CalibrationSpec::scale(l)));
    for spec in variants {
        rows.push(row("variant", spec.id(), spec, default_variant));
    }
    for spec in [
        CalibrationSpec::NONE,
        CalibrationSpec::SUBTRACT,
        CalibrationSpec::SUBTRACT.post_softmax(),
    ] {
        rows.push(row("position", spec.id(), spec, default_variant));
    }
    rows
}

struct Job<'a> {
    graph: &'a Graph,
    config_hash: String,
    sweep: Option<SweepPoint>,
    run_index: usize,
    fold_id: usize,
}

fn majority_class(graph: &Graph, train: &[usize]) -> usize {
    let labels = graph.labels().unwrap_or(&[]);
    let mut counts = Array1::<f64>::zeros(graph.num_classes().unwrap_or(1).max(1));
    for &i in train {
        if let Some(l) = labels.get(i).copied().flatten() {
            counts[l] += 1.0;
        }
    }
    argmax(counts.view())
}

fn run_job(config: &ExperimentConfig, job: &Job<'_>, rows: &[Row]) -> (Vec<ResultRecord>, Option<Timing>) {
    let p = &config.protocol;
    let seed = p.run_seed(job.run_index);
    let split_seed = p.split_seed(job.run_index, job.fold_id);
    let neutral_seed = config.neutral.seed + seed;
    let blank = |row: &Row| ResultRecord {
        config_hash: job.config_hash.clone(),
        group: row.group.clone(),
        label: row.label.clone(),
        spec_id: row.spec.id(),
        neutral_variant: row.neutral,
        sweep: job.sweep.clone(),
        seed,
        fold_id: job.fold_id,
        split_seed,
        neutral_seed,
        train: None,
        metrics: None,
        bias: None,
        error: None,
    };
    let mut records: Vec<ResultRecord> = rows.iter().map(blank).collect();

    match evaluate_job(config, job, rows, seed, split_seed, neutral_seed) {
        Ok((summary, outcomes, timing)) => {
            for (rec, outcome) in records.iter_mut().zip(outcomes) {
                rec.train = Some(summary.clone());
                match outcome {
                    Ok((m, b)) => {
                        rec.metrics = Some(m);
                        rec.bias = Some(b);
                    }
                    Err(e) => rec.error = Some(e.to_string()),
                }
            }
            (records, Some(timing))
        }
        Err(e) => {
            for rec in &mut records {
                rec.error = Some(e.to_string());
            }
            (records, None)
        }
    }
}

type RowOutcome = Result<(MetricsReport, BiasSummary)>;

fn evaluate_job(
    config: &ExperimentConfig,
    job: &Job<'_>,
    rows: &[Row],
    seed: u64,
    split_seed: u64,
    neutral_seed: u64,
) -> Result<(TrainSummary, Vec<RowOutcome>, Timing)> {
    let p = &config.protocol;
    let graph = job.graph;
    let mut split = stratified_split(graph, p.train_frac, p.val_frac, p.min_per_class, split_seed)?;
    split.fold_id = Some(job.fold_id);
    let masked = split.apply(graph)?;
    let mut mc = config.model_for(graph)?;
    mc.seed = seed;
    let tc = crate::gnn::TrainConfig {
        seed,
        ..config.train.clone()
    };
    let stats = compute_dataset_stats_with(&masked, config.stats_scope, config.neutral.covariance_mode)?;
    let neutral_cfg = |variant| NeutralConfig {
        seed: neutral_seed,
        construction_variant: variant,
        ..config.neutral.clone()
    };

    let start = Instant::now();
    let (params, report) = if config.neutral.refresh_every.is_some() {
        let mut refresher = RefreshingNeutral::new(
            &stats,
            Some(&masked),
            neutral_cfg(config.neutral.construction_variant),
            CalibrationSpec::SUBTRACT,
        )?;
        let mut predictor = |epoch: usize, params: &_, logits: &_| refresher.predict(epoch, params, logits);
        train_with_predictor(graph, &split, &mc, &tc, Some(&mut predictor as &mut ValPredictor<'_>))?
    } else {
        train_with_predictor(graph, &split, &mc, &tc, None)?
    };
    let train_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let logits = predict_logits(&params, graph)?;
    let truth = graph.dense_labels().unwrap_or_else(|_| {
        graph
            .labels()
            .map(|l| l.iter().map(|x| x.unwrap_or(0)).collect())
            .unwrap_or_default()
    });
    let test_mask = split.test_mask(graph.num_nodes());
    let majority = majority_class(graph, &split.train);

    let mut references: BTreeMap<Option<ConstructionVariant>, Result<Array1<f64>>> = BTreeMap::new();
    for row in rows {
        references.entry(row.neutral).or_insert_with(|| match row.neutral {
            None => Ok(Array1::zeros(mc.num_classes)),
            Some(v) => construct_neutral(&stats, Some(&masked), &neutral_cfg(v))
                .and_then(|ng| neutral_logit_vector(&params, &ng)),
        });
    }

    let outcomes = rows
        .iter()
        .map(|row| {
            let reference = references[&row.neutral]
                .as_ref()
                .map_err(|e| Error::Input(format!("neutral reference failed: {e}")))?;
            let out = calibrate(&logits, reference, &row.spec)?;
            let metrics = evaluate(&out.predicted_labels, &truth, &test_mask, mc.num_classes)?;
            let b = check_bias_reduction(&logits, &out, reference, majority)?;
            Ok((
                metrics,
                BiasSummary {
                    majority_class: b.majority_class,
                    majority_prob_before: b.majority_prob_before,
                    majority_prob_after: b.majority_prob_after,
                    majority_prob_decreased: b.majority_prob_decreased,
                    ordered_pairs: b.ordered_pairs,
                    ordering_violations: b.ordering_violations.len(),
                },
            ))
        })
        .collect();

    let summary = TrainSummary {
        epochs_run: report.epochs_run,
        best_epoch: report.best_epoch,
        final_loss: report.loss_curve.last().copied().unwrap_or(f64::NAN),
        best_val_f1_macro: report
            .val_metric_curve
            .get(report.best_epoch.saturating_sub(1))
            .copied()
            .unwrap_or(0.0),
    };
    let timing = Timing {
        sweep: job.sweep.clone(),
        seed,
        fold_id: job.fold_id,
        num_nodes: graph.num_nodes(),
        num_edges: graph.num_edges(),
        epochs_run: report.epochs_run,
        train_seconds,
        calibrate_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((summary, outcomes, timing))
}

fn worker_count(config: &ExperimentConfig, jobs: usize) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    config.threads.unwrap_or(available).clamp(1, jobs.max(1))
}

/// Runs every job, possibly concurrently, and returns results in job order.
fn execute(config: &ExperimentConfig, jobs: &[Job<'_>], rows: &[Row]) -> (Vec<ResultRecord>, Vec<Timing>) {
    let slots: Vec<Mutex<Option<(Vec<ResultRecord>, Option<Timing>)>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..worker_count(config, jobs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let result = run_job(config, job, rows);
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    let mut records = Vec::new();
    let mut timings = Vec::new();
    for slot in slots {
        let (r, t) = slot.into_inner().expect("slot lock").expect("every job ran");
        records.extend(r);
        timings.extend(t);
    }
    (records, timings)
}

fn jobs_for<'a>(config: &ExperimentConfig, graph: &'a Graph, config_hash: &str, sweep: Option<SweepPoint>) -> Vec<Job<'a>> {
    let mut jobs = Vec::new();
    for run_index in 0..config.protocol.num_seeds {
        for fold_id in 0..config.protocol.k_folds {
            jobs.push(Job {
                graph,
                config_hash: config_hash.to_string(),
                sweep: sweep.clone(),
                run_index,
                fold_id,
            });
        }
    }
    jobs
}

fn finish(config: &ExperimentConfig, kind: ReportKind, records: Vec<ResultRecord>, timings: Vec<Timing>) -> RunOutput {
    RunOutput {
        report: Report::new(kind, config, aggregate(&records), records),
        timings,
    }
}

/// Seeds x folds x calibration specs, one training per (seed, fold).
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let graph = config.dataset.load()?;
    let hash = config.hash();
    let jobs = jobs_for(config, &graph, &hash, None);
    let (records, timings) = execute(config, &jobs, &experiment_rows(config));
    Ok(finish(config, ReportKind::Experiment, records, timings))
}

/// Neutral-construction, calibration-variant and position ablations.
pub fn run_ablations(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let graph = config.dataset.load()?;
    let hash = config.hash();
    let jobs = jobs_for(config, &graph, &hash, None);
    let (records, timings) = execute(config, &jobs, &ablation_rows(config));
    Ok(finish(config, ReportKind::Ablation, records, timings))
}

/// One experiment per imbalance ratio and/or noise level.
///
/// A ratio sweep regenerates the synthetic dataset at each point; a noise
/// sweep perturbs the loaded base dataset.
pub fn run_sensitivity(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    if config.rho_sweep.is_none() && config.noise.is_none() {
        return Err(Error::Config("sweep needs rho_sweep or noise".into()));
    }
    let hash = config.hash();
    let mut points: Vec<(SweepPoint, Graph)> = Vec::new();
    if let Some(rhos) = &config.rho_sweep {
        let DatasetSource::Sbm(base) = &config.dataset else {
            return Err(Error::Config("rho_sweep needs a synthetic dataset".into()));
        };
        for &rho in rhos {
            let cfg = crate::dataset::SbmConfig { rho, ..base.clone() };
            let point = SweepPoint {
                variable: "rho".into(),
                value: rho,
            };
            points.push((point, crate::dataset::generate_sbm(&cfg)?));
        }
    }
    if let Some(noise) = &config.noise {
        let base = config.dataset.load()?;
        let variable = match noise.kind {
            NoiseKind::Feature => "feature_noise",
            NoiseKind::Structural => "structural_noise",
        };
        for &level in &noise.levels {
            let spec = NoiseSpec {
                kind: noise.kind,
                level,
                seed: noise.seed,
            };
            let point = SweepPoint {
                variable: variable.into(),
                value: level,
            };
            points.push((point, inject_noise(&base, &spec)?));
        }
    }

    let rows = experiment_rows(config);
    let mut jobs = Vec::new();
    for (point, graph) in &points {
        let point_hash = digest(format!("{hash}:{}={}", point.variable, point.value).as_bytes());
        jobs.extend(jobs_for(config, graph, &point_hash, Some(point.clone())));
    }
    let (records, timings) = execute(config, &jobs, &rows);
    Ok(finish(config, ReportKind::Sweep, records, timings))
}
