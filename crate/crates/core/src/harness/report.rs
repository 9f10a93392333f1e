use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{ResultRecord, SweepPoint, Timing};
use super::svg::{line_chart, Series};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Experiment,
    Ablation,
    Sweep,
}

impl ReportKind {
    pub fn stem(self) -> &'static str {
        match self {
            Self::Experiment => "experiment",
            Self::Ablation => "ablation",
            Self::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation (divides by n).
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

pub const METRICS: [&str; 5] = [
    "f1_macro",
    "f1_weighted",
    "f1_micro",
    "accuracy",
    "majority_prob_after",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: String,
    pub label: String,
    pub sweep: Option<SweepPoint>,
    pub runs: usize,
    pub failed: usize,
    /// False when any run of this cell failed.
    pub complete: bool,
    pub f1_macro: Option<MeanStd>,
    pub f1_weighted: Option<MeanStd>,
    pub f1_micro: Option<MeanStd>,
    pub accuracy: Option<MeanStd>,
    pub majority_prob_after: Option<MeanStd>,
    pub majority_prob_decreased_runs: usize,
}

impl AggregateRow {
    pub fn metric(&self, name: &str) -> Option<MeanStd> {
        match name {
            "f1_macro" => self.f1_macro,
            "f1_weighted" => self.f1_weighted,
            "f1_micro" => self.f1_micro,
            "accuracy" => self.accuracy,
            "majority_prob_after" => self.majority_prob_after,
            _ => None,
        }
    }
}

fn same_cell(a: &ResultRecord, row: &AggregateRow) -> bool {
    a.group == row.group && a.label == row.label && a.sweep == row.sweep
}

/// Mean and population std per (group, label, sweep point), in order of
/// first appearance.
pub fn aggregate(records: &[ResultRecord]) -> Vec<AggregateRow> {
    let mut rows: Vec<AggregateRow> = Vec::new();
    let mut members: Vec<Vec<&ResultRecord>> = Vec::new();
    for rec in records {
        match rows.iter().position(|r| same_cell(rec, r)) {
            Some(i) => members[i].push(rec),
            None => {
                rows.push(AggregateRow {
                    group: rec.group.clone(),
                    label: rec.label.clone(),
                    sweep: rec.sweep.clone(),
                    runs: 0,
                    failed: 0,
                    complete: true,
                    f1_macro: None,
                    f1_weighted: None,
                    f1_micro: None,
                    accuracy: None,
                    majority_prob_after: None,
                    majority_prob_decreased_runs: 0,
                });
                members.push(vec![rec]);
            }
        }
    }
    for (row, recs) in rows.iter_mut().zip(&members) {
        let ok: Vec<&ResultRecord> = recs.iter().copied().filter(|r| r.metrics.is_some()).collect();
        row.runs = recs.len();
        row.failed = recs.len() - ok.len();
        row.complete = row.failed == 0;
        let collect = |f: &dyn Fn(&ResultRecord) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
        row.f1_macro = MeanStd::of(&collect(&|r| r.metrics.as_ref().map(|m| m.f1_macro)));
        row.f1_weighted = MeanStd::of(&collect(&|r| r.metrics.as_ref().map(|m| m.f1_weighted)));
        row.f1_micro = MeanStd::of(&collect(&|r| r.metrics.as_ref().map(|m| m.f1_micro)));
        row.accuracy = MeanStd::of(&collect(&|r| r.metrics.as_ref().map(|m| m.accuracy)));
        row.majority_prob_after =
            MeanStd::of(&collect(&|r| r.bias.as_ref().map(|b| b.majority_prob_after)));
        row.majority_prob_decreased_runs = ok
            .iter()
            .filter(|r| r.bias.as_ref().is_some_and(|b| b.majority_prob_decreased))
            .count();
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: ReportKind,
    pub config_hash: String,
    pub std_convention: String,
    pub run_seeds: Vec<u64>,
    pub split_seeds: Vec<Vec<u64>>,
    pub rows: Vec<AggregateRow>,
    pub records: Vec<ResultRecord>,
}

impl Report {
    pub fn new(
        kind: ReportKind,
        config: &ExperimentConfig,
        rows: Vec<AggregateRow>,
        records: Vec<ResultRecord>,
    ) -> Self {
        let p = &config.protocol;
        Self {
            kind,
            config_hash: config.hash(),
            std_convention: "population (divide by n)".into(),
            run_seeds: (0..p.num_seeds).map(|r| p.run_seed(r)).collect(),
            split_seeds: (0..p.num_seeds)
                .map(|r| (0..p.k_folds).map(|f| p.split_seed(r, f)).collect())
                .collect(),
            rows,
            records,
        }
    }

    pub fn row(&self, label: &str) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.label == label && r.sweep.is_none())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "svg" => Ok(Self::Svg),
            _ => Err(Error::Config(format!("unknown report format '{s}'"))),
        }
    }
}

fn write(path: PathBuf, text: String) -> Result<PathBuf> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("group,label,sweep_variable,sweep_value,runs,failed,complete");
    for m in METRICS {
        write!(out, ",{m}_mean,{m}_std,{m}").unwrap();
    }
    out.push_str(",majority_prob_decreased_runs\n");
    for r in rows {
        let (var, val) = match &r.sweep {
            Some(p) => (p.variable.clone(), p.value.to_string()),
            None => (String::new(), String::new()),
        };
        write!(
            out,
            "{},{},{},{},{},{},{}",
            csv_field(&r.group),
            csv_field(&r.label),
            var,
            val,
            r.runs,
            r.failed,
            r.complete
        )
        .unwrap();
        for m in METRICS {
            let ms = r.metric(m);
            write!(
                out,
                ",{},{},{}",
                opt(ms.map(|x| x.mean)),
                opt(ms.map(|x| x.std)),
                ms.map(|x| x.to_string()).unwrap_or_default()
            )
            .unwrap();
        }
        writeln!(out, ",{}", r.majority_prob_decreased_runs).unwrap();
    }
    out
}

pub fn records_csv(records: &[ResultRecord]) -> String {
    let mut out = String::from(
        "config_hash,group,label,sweep_variable,sweep_value,seed,fold_id,split_seed,neutral_seed,\
         epochs_run,best_epoch,f1_macro,f1_weighted,f1_micro,accuracy,majority_prob_before,\
         majority_prob_after,ordering_violations,error\n",
    );
    for r in records {
        let (var, val) = match &r.sweep {
            Some(p) => (p.variable.clone(), p.value.to_string()),
            None => (String::new(), String::new()),
        };
        let m = r.metrics.as_ref();
        let b = r.bias.as_ref();
        let t = r.train.as_ref();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.config_hash,
            csv_field(&r.group),
            csv_field(&r.label),
            var,
            val,
            r.seed,
            r.fold_id,
            r.split_seed,
            r.neutral_seed,
            t.map(|t| t.epochs_run.to_string()).unwrap_or_default(),
            t.map(|t| t.best_epoch.to_string()).unwrap_or_default(),
            opt(m.map(|m| m.f1_macro)),
            opt(m.map(|m| m.f1_weighted)),
            opt(m.map(|m| m.f1_micro)),
            opt(m.map(|m| m.accuracy)),
            opt(b.map(|b| b.majority_prob_before)),
            opt(b.map(|b| b.majority_prob_after)),
            b.map(|b| b.ordering_violations.to_string()).unwrap_or_default(),
            csv_field(r.error.as_deref().unwrap_or("")),
        )
        .unwrap();
    }
    out
}

/// One chart per sweep variable, plus the lambda curve for ablations.
pub fn charts(report: &Report) -> Vec<(String, String)> {
    let mut charts = Vec::new();
    let mut variables: Vec<&str> = Vec::new();
    for r in &report.rows {
        if let Some(p) = &r.sweep {
            if !variables.contains(&p.variable.as_str()) {
                variables.push(&p.variable);
            }
        }
    }
    for var in variables {
        let mut series: Vec<Series> = Vec::new();
        for r in report.rows.iter().filter(|r| r.sweep.as_ref().is_some_and(|p| p.variable == var)) {
            let (Some(p), Some(m)) = (&r.sweep, r.f1_macro) else { continue };
            match series.iter_mut().find(|s| s.name == r.label) {
                Some(s) => s.points.push((p.value, m.mean)),
                None => series.push(Series {
                    name: r.label.clone(),
                    points: vec![(p.value, m.mean)],
                }),
            }
        }
        charts.push((
            format!("{}_{var}.svg", report.kind.stem()),
            line_chart(&format!("F1-macro vs {var}"), var, "F1-macro", &series),
        ));
    }
    if report.kind == ReportKind::Ablation {
        let mut points = Vec::new();
        for r in &report.rows {
            let lambda = r
                .label
                .strip_prefix("variant:scale(")
                .and_then(|s| s.split_once(')'))
                .and_then(|(l, _)| l.parse::<f64>().ok());
            if let (Some(l), Some(m)) = (lambda, r.f1_macro) {
                points.push((l, m.mean));
            }
        }
        let series = if points.is_empty() {
            vec![]
        } else {
            vec![Series {
                name: "scale".into(),
                points,
            }]
        };
        charts.push((
            "ablation_lambda.svg".into(),
            line_chart("F1-macro vs lambda", "lambda", "F1-macro", &series),
        ));
    }
    if charts.is_empty() {
        charts.push((
            format!("{}.svg", report.kind.stem()),
            line_chart(report.kind.stem(), "", "F1-macro", &[]),
        ));
    }
    charts
}

/// Writes the requested formats into `dir` and returns the files written.
pub fn emit_report(report: &Report, dir: impl AsRef<Path>, formats: &[Format]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = report.kind.stem();
    let mut written = Vec::new();
    for format in formats {
        match format {
            Format::Json => written.push(write(
                dir.join(format!("{stem}.json")),
                serde_json::to_string_pretty(report)? + "\n",
            )?),
            Format::Csv => {
                written.push(write(dir.join(format!("{stem}_summary.csv")), summary_csv(&report.rows))?);
                written.push(write(dir.join(format!("{stem}_records.csv")), records_csv(&report.records))?);
            }
            Format::Svg => {
                for (name, svg) in charts(report) {
                    written.push(write(dir.join(name), svg)?);
                }
            }
        }
    }
    Ok(written)
}

/// Wall-clock timings, kept out of the deterministic reports.
pub fn write_timings(timings: &[Timing], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, serde_json::to_string_pretty(timings)? + "\n").map_err(|e| Error::io(path, e))
}

/// Reads a JSON report back.
pub fn load_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
