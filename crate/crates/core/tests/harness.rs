use std::collections::HashSet;
use std::fs;

use neubm::calibration::CalibrationSpec;
use neubm::dataset::{NoiseKind, SbmConfig};
use neubm::gnn::{ModelConfig, TrainConfig};
use neubm::harness::*;

fn small_config(dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSource::Sbm(SbmConfig {
            num_classes: 3,
            total_nodes: 150,
            rho: 4.0,
            p_intra: 0.08,
            p_inter: 0.01,
            feature_dim: 6,
            class_mean_separation: 1.5,
            feature_std: 1.0,
            seed: 5,
        }),
        model: ModelConfig::gcn(0, 8, 0),
        train: TrainConfig {
            max_epochs: 40,
            patience: 20,
            ..TrainConfig::default()
        },
        neutral: Default::default(),
        stats_scope: Default::default(),
        calibration: vec![CalibrationSpec::NONE, CalibrationSpec::SUBTRACT],
        protocol: Protocol {
            num_seeds: 2,
            k_folds: 2,
            ..Protocol::default()
        },
        noise: None,
        rho_sweep: None,
        lambda_grid: vec![0.5, 1.0, 1.5],
        output_dir: dir.to_path_buf(),
        threads: Some(2),
    }
}

#[test]
fn single_run_has_zero_std() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.protocol.num_seeds = 1;
    cfg.protocol.k_folds = 1;
    cfg.calibration = vec![CalibrationSpec::NONE];
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.report.records.len(), 1);
    assert_eq!(out.report.rows.len(), 1);
    assert_eq!(out.report.rows[0].f1_macro.unwrap().std, 0.0);
}

#[test]
fn specs_share_one_training() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&small_config(dir.path())).unwrap();
    let recs = &out.report.records;
    assert_eq!(recs.len(), 2 * 2 * 2);
    for pair in recs.chunks(2) {
        assert_eq!(pair[0].seed, pair[1].seed);
        assert_eq!(pair[0].fold_id, pair[1].fold_id);
        assert!(pair[0].train.is_some());
        assert_eq!(pair[0].train, pair[1].train);
    }
    let keys: HashSet<_> = recs.iter().map(|r| r.key()).collect();
    assert_eq!(keys.len(), recs.len());
    assert_eq!(out.timings.len(), 4);
}

#[test]
fn aggregates_match_independent_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&small_config(dir.path())).unwrap();
    for row in &out.report.rows {
        let vals: Vec<f64> = out
            .report
            .records
            .iter()
            .filter(|r| r.label == row.label)
            .map(|r| r.metrics.as_ref().unwrap().f1_macro)
            .collect();
        // sum of squares around the running mean, accumulated in reverse
        let n = vals.len() as f64;
        let mean = vals.iter().rev().fold(0.0, |a, v| a + v / n);
        let var = vals.iter().rev().map(|v| (v - mean).powi(2) / n).sum::<f64>();
        let ms = row.f1_macro.unwrap();
        assert!((ms.mean - mean).abs() <= 1e-12);
        assert!((ms.std - var.sqrt()).abs() <= 1e-12);
        assert!(row.complete && row.failed == 0);
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let formats = [Format::Json, Format::Csv, Format::Svg];
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&ExperimentConfig {
        threads: Some(1),
        ..cfg.clone()
    })
    .unwrap();
    let fa = emit_report(&a.report, dir.path().join("a"), &formats).unwrap();
    let fb = emit_report(&b.report, dir.path().join("b"), &formats).unwrap();
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }
    let back = load_report(&fa[0]).unwrap();
    assert_eq!(back.rows.len(), a.report.rows.len());
}

#[test]
fn empty_report_files_are_valid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let report = Report::new(ReportKind::Experiment, &cfg, vec![], vec![]);
    let files = emit_report(&report, dir.path(), &[Format::Json, Format::Csv, Format::Svg]).unwrap();
    assert_eq!(files.len(), 4);
    let back = load_report(dir.path().join("experiment.json")).unwrap();
    assert!(back.rows.is_empty() && back.records.is_empty());
    let csv = fs::read_to_string(dir.path().join("experiment_summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn ablation_identities() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.protocol.num_seeds = 1;
    let out = run_ablations(&cfg).unwrap();
    let row = |l: &str| out.report.row(l).unwrap_or_else(|| panic!("missing {l}"));

    let scale_rows = out
        .report
        .rows
        .iter()
        .filter(|r| r.label.starts_with("variant:scale("))
        .count();
    assert_eq!(scale_rows, 3);
    assert_eq!(row("variant:scale(1)@logits").f1_macro, row("variant:subtract@logits").f1_macro);
    assert_eq!(row("neutral:no_neutral").f1_macro, row("variant:none@logits").f1_macro);
    for v in ["mean_cov", "random", "class_balanced"] {
        assert!(row(&format!("neutral:{v}")).complete);
    }
    assert!(row("position:subtract@post_softmax").complete);

    let by_key = |label: &str| {
        out.report
            .records
            .iter()
            .filter(|r| r.label == label)
            .map(|r| r.metrics.clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(by_key("variant:scale(1)@logits"), by_key("variant:subtract@logits"));
    assert_eq!(by_key("neutral:no_neutral"), by_key("variant:none@logits"));
    let charts = charts(&out.report);
    assert!(charts.iter().any(|(name, svg)| name == "ablation_lambda.svg" && svg.contains("polyline")));
}

#[test]
fn noise_level_zero_matches_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.protocol.num_seeds = 1;
    cfg.protocol.k_folds = 1;
    let base = run_experiment(&cfg).unwrap();
    cfg.noise = Some(NoiseSweep {
        kind: NoiseKind::Feature,
        levels: vec![0.0, 0.3],
        seed: 9,
    });
    let sweep = run_sensitivity(&cfg).unwrap();
    assert_eq!(sweep.report.rows.len(), 4);
    let at_zero: Vec<_> = sweep
        .report
        .records
        .iter()
        .filter(|r| r.sweep.as_ref().unwrap().value == 0.0)
        .map(|r| (r.label.clone(), r.metrics.clone(), r.train.clone()))
        .collect();
    let baseline: Vec<_> = base
        .report
        .records
        .iter()
        .map(|r| (r.label.clone(), r.metrics.clone(), r.train.clone()))
        .collect();
    assert_eq!(at_zero, baseline);
    let keys: HashSet<_> = sweep.report.records.iter().map(|r| r.key()).collect();
    assert_eq!(keys.len(), sweep.report.records.len());
    let charts = charts(&sweep.report);
    assert_eq!(charts.len(), 1);
    assert_eq!(charts[0].0, "sweep_feature_noise.svg");
    assert_eq!(charts[0].1.matches("<polyline").count(), 2);
}

#[test]
fn rho_sweep_regenerates_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.protocol.num_seeds = 1;
    cfg.protocol.k_folds = 1;
    cfg.rho_sweep = Some(vec![1.0, 5.0]);
    let out = run_sensitivity(&cfg).unwrap();
    let rows: Vec<_> = out.report.rows.iter().map(|r| r.sweep.clone().unwrap().value).collect();
    assert_eq!(rows, vec![1.0, 1.0, 5.0, 5.0]);
    assert_ne!(out.timings[0].num_edges, 0);

    cfg.rho_sweep = None;
    assert!(matches!(run_sensitivity(&cfg), Err(neubm::Error::Config(_))));
}

#[test]
fn failed_runs_are_recorded_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.protocol.num_seeds = 1;
    cfg.protocol.k_folds = 1;
    // more per-class training nodes than the smallest class holds
    cfg.protocol.min_per_class = 1000;
    let out = run_experiment(&cfg).unwrap();
    assert!(out.report.records.iter().all(|r| r.error.is_some()));
    assert!(out.report.rows.iter().all(|r| !r.complete && r.f1_macro.is_none()));
}

#[test]
fn training_time_grows_at_most_linearly() {
    let sizes = [500usize, 1000, 2000];
    let mut per_node = Vec::new();
    for &n in &sizes {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.dataset = DatasetSource::Sbm(SbmConfig {
            total_nodes: n,
            p_intra: 10.0 / n as f64,
            p_inter: 2.0 / n as f64,
            ..SbmConfig::default()
        });
        cfg.protocol.num_seeds = 1;
        cfg.protocol.k_folds = 1;
        cfg.train = TrainConfig {
            max_epochs: 30,
            patience: 30,
            ..TrainConfig::default()
        };
        let out = run_experiment(&cfg).unwrap();
        let t = &out.timings[0];
        per_node.push(t.train_seconds / t.epochs_run as f64 / n as f64);
    }
    let growth = per_node[2] / per_node[0];
    assert!(growth < 3.0, "per-node epoch cost grew by {growth:.2}x");
}
