use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use neubm::calibration::{calibrate, read_predictions_csv, write_predictions_csv, CalibrationSpec};
use neubm::dataset::{
    generate_sbm, load_canonical, save_canonical, stratified_split, DatasetSummary, SbmConfig,
    SplitAssignment,
};
use neubm::gnn::{predict_logits, train, Architecture, Checkpoint, ModelConfig, TrainConfig};
use neubm::graph::{compute_dataset_stats_with, CovarianceMode, StatsScope, TEST};
use neubm::harness::{
    charts, emit_report, load_report, run_ablations, run_experiment, run_sensitivity,
    write_timings, ExperimentConfig, Format, RunOutput, OUTPUT_ROOT_ENV,
};
use neubm::metrics::{evaluate, imbalance_ratio};
use neubm::neutral::{construct_neutral, neutral_logit_vector, save_neutral, ConstructionVariant, NeutralConfig};
use neubm::{Error, Result};

#[derive(Parser)]
#[command(name = "neubm", version, about = "Neutral-graph bias calibration for imbalanced node classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic imbalanced graph into a dataset directory.
    Gen(GenArgs),
    /// Print a dataset summary including the imbalance ratio.
    Stats(StatsArgs),
    /// Train a GCN or GAT and write a checkpoint.
    Train(TrainArgs),
    /// Calibrate a checkpoint's predictions against a neutral graph.
    Calibrate(CalibrateArgs),
    /// Score a predictions file against dataset labels.
    Eval(EvalArgs),
    /// Run seeds x folds x calibration specs from a config file.
    Experiment(RunArgs),
    /// Run the neutral-graph, calibration-variant and position ablations.
    Ablate(RunArgs),
    /// Run the imbalance-ratio and/or noise sweeps.
    Sweep(RunArgs),
    /// Re-render charts from a JSON report.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenArgs {
    /// JSON file with generator settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    p_intra: Option<f64>,
    #[arg(long)]
    p_inter: Option<f64>,
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also attach a stratified 10/10/80 split as masks.
    #[arg(long)]
    split: bool,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    data: PathBuf,
    #[arg(long, value_enum)]
    scope: Option<Scope>,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scope {
    AllNodes,
    TrainMask,
}

impl From<Scope> for StatsScope {
    fn from(s: Scope) -> Self {
        match s {
            Scope::AllNodes => StatsScope::AllNodes,
            Scope::TrainMask => StatsScope::TrainMask,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Arch {
    Gcn,
    Gat,
}

#[derive(Clone, Copy, ValueEnum)]
enum NeutralVariant {
    MeanCov,
    Random,
    ClassBalanced,
}

impl From<NeutralVariant> for ConstructionVariant {
    fn from(v: NeutralVariant) -> Self {
        match v {
            NeutralVariant::MeanCov => ConstructionVariant::MeanCov,
            NeutralVariant::Random => ConstructionVariant::Random,
            NeutralVariant::ClassBalanced => ConstructionVariant::ClassBalanced,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "gcn")]
    arch: Arch,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 1)]
    heads: usize,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long, default_value_t = 0.005)]
    lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    patience: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Split seed when the dataset carries no masks.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long, short)]
    out: PathBuf,
    /// Where to write the training report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// e.g. `subtract`, `scale(0.75)`, `normalize@post_softmax`.
    #[arg(long, default_value = "subtract")]
    spec: CalibrationSpec,
    #[arg(long, value_enum, default_value = "mean-cov")]
    variant: NeutralVariant,
    #[arg(long, value_enum, default_value = "all-nodes")]
    scope: Scope,
    #[arg(long)]
    diagonal: bool,
    #[arg(long, default_value_t = 0)]
    neutral_seed: u64,
    /// Also save the neutral graph as a dataset directory.
    #[arg(long)]
    save_neutral: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Mask to score; all labeled nodes when absent from the dataset.
    #[arg(long, default_value = TEST)]
    mask: String,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Replaces the config's output_dir.
    #[arg(long, env = OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "json,csv,svg")]
    formats: Vec<String>,
}

#[derive(Args)]
struct PlotArgs {
    report: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn gen(args: GenArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => SbmConfig::default(),
    };
    cfg.num_classes = args.classes.unwrap_or(cfg.num_classes);
    cfg.total_nodes = args.nodes.unwrap_or(cfg.total_nodes);
    cfg.rho = args.rho.unwrap_or(cfg.rho);
    cfg.p_intra = args.p_intra.unwrap_or(cfg.p_intra);
    cfg.p_inter = args.p_inter.unwrap_or(cfg.p_inter);
    cfg.feature_dim = args.features.unwrap_or(cfg.feature_dim);
    cfg.class_mean_separation = args.separation.unwrap_or(cfg.class_mean_separation);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    let mut graph = generate_sbm(&cfg)?;
    if args.split {
        graph = stratified_split(&graph, 0.1, 0.1, 5, cfg.seed)?.apply(&graph)?;
    }
    save_canonical(&graph, &args.out)?;
    println!("{}", DatasetSummary::of(&graph));
    Ok(())
}

fn stats(args: StatsArgs) -> Result<()> {
    let graph = load_canonical(&args.data)?;
    let summary = DatasetSummary::of(&graph);
    if let Some(scope) = args.scope {
        let s = compute_dataset_stats_with(&graph, scope.into(), CovarianceMode::Diagonal)?;
        if args.json {
            return write_json(&(summary, s), None);
        }
        println!("{summary}");
        println!("n_bar {}, d_bar {:.6}, source nodes {}", s.n_bar, s.d_bar, s.source_node_count);
        return Ok(());
    }
    if args.json {
        write_json(&summary, None)
    } else {
        println!("{summary}");
        Ok(())
    }
}

fn split_for(graph: &neubm::graph::Graph, seed: u64) -> Result<SplitAssignment> {
    match SplitAssignment::from_masks(graph) {
        Some(s) if !s.train.is_empty() => Ok(s),
        _ => stratified_split(graph, 0.1, 0.1, 5, seed),
    }
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let graph = load_canonical(&args.data)?;
    let c = graph
        .num_classes()
        .ok_or_else(|| Error::Input("dataset has no labels".into()))?;
    let mut mc = match args.arch {
        Arch::Gcn => ModelConfig::gcn(graph.num_features(), args.hidden, c),
        Arch::Gat => ModelConfig::gat(graph.num_features(), args.hidden, c, args.heads),
    };
    mc.dropout = args.dropout;
    mc.seed = args.seed;
    let tc = TrainConfig {
        learning_rate: args.lr,
        weight_decay: args.weight_decay,
        max_epochs: args.epochs,
        patience: args.patience,
        seed: args.seed,
    };
    let split = split_for(&graph, args.split_seed)?;
    let (params, report) = train(&graph, &split, &mc, &tc)?;
    Checkpoint::new(&params, args.seed).save(&args.out)?;
    let arch = match mc.architecture {
        Architecture::Gcn => "gcn",
        Architecture::Gat => "gat",
    };
    println!(
        "{arch}: {} epochs, best epoch {} (val F1-macro {:.4})",
        report.epochs_run,
        report.best_epoch,
        report.val_metric_curve[report.best_epoch - 1]
    );
    if let Some(p) = &args.report {
        write_json(&report, Some(p))?;
    }
    Ok(())
}

fn calibrate_cmd(args: CalibrateArgs) -> Result<()> {
    let graph = load_canonical(&args.data)?;
    let params = Checkpoint::load(&args.checkpoint)?.params()?;
    let mode = if args.diagonal {
        CovarianceMode::Diagonal
    } else {
        CovarianceMode::Full
    };
    let stats = compute_dataset_stats_with(&graph, args.scope.into(), mode)?;
    let config = NeutralConfig {
        covariance_mode: mode,
        construction_variant: args.variant.into(),
        seed: args.neutral_seed,
        ..NeutralConfig::default()
    };
    let neutral = construct_neutral(&stats, Some(&graph), &config)?;
    if let Some(dir) = &args.save_neutral {
        save_neutral(&neutral, dir)?;
    }
    let reference = neutral_logit_vector(&params, &neutral)?;
    let out = calibrate(&predict_logits(&params, &graph)?, &reference, &args.spec)?;
    write_predictions_csv(&out, &args.out)?;
    println!("{} predictions written ({})", out.predicted_labels.len(), args.spec);
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let graph = load_canonical(&args.data)?;
    let pred = read_predictions_csv(&args.predictions)?;
    if pred.len() != graph.num_nodes() {
        return Err(Error::Shape(format!(
            "{} predictions for {} nodes",
            pred.len(),
            graph.num_nodes()
        )));
    }
    let labels = graph
        .labels()
        .ok_or_else(|| Error::Input("dataset has no labels".into()))?;
    let c = graph.num_classes().unwrap_or(0);
    let labeled: Vec<bool> = labels.iter().map(Option::is_some).collect();
    let mask: Vec<bool> = match graph.mask(&args.mask) {
        Some(m) => m.iter().zip(&labeled).map(|(a, b)| *a && *b).collect(),
        None => labeled,
    };
    let truth: Vec<usize> = labels.iter().map(|l| l.unwrap_or(0)).collect();
    let report = evaluate(&pred, &truth, &mask, c)?;
    if args.out.is_none() {
        eprintln!(
            "F1-macro {:.4}, F1-weighted {:.4}, accuracy {:.4}, rho {:.2}",
            report.f1_macro,
            report.f1_weighted,
            report.accuracy,
            imbalance_ratio(labels, Some(&mask))?
        );
    }
    write_json(&report, args.out.as_deref())
}

fn run_cmd(args: RunArgs, runner: fn(&ExperimentConfig) -> Result<RunOutput>) -> Result<()> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(root) = args.output_root {
        config.output_dir = root;
    }
    let formats = args
        .formats
        .iter()
        .map(|f| f.parse())
        .collect::<Result<Vec<Format>>>()?;
    let out = runner(&config)?;
    let files = emit_report(&out.report, &config.output_dir, &formats)?;
    write_timings(
        &out.timings,
        config
            .output_dir
            .join(format!("{}_timings.json", out.report.kind.stem())),
    )?;
    for row in &out.report.rows {
        let point = row
            .sweep
            .as_ref()
            .map(|p| format!(" [{}={}]", p.variable, p.value))
            .unwrap_or_default();
        let f1 = row.f1_macro.map(|m| m.to_string()).unwrap_or_else(|| "n/a".into());
        let flag = if row.complete { "" } else { " (incomplete)" };
        println!("{:<36}{point} F1-macro {f1}{flag}", row.label);
    }
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn plot(args: PlotArgs) -> Result<()> {
    let report = load_report(&args.report)?;
    let dir = args
        .out
        .or_else(|| args.report.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (name, svg) in charts(&report) {
        let path = dir.join(name);
        fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Stats(a) => stats(a),
        Command::Train(a) => train_cmd(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Experiment(a) => run_cmd(a, run_experiment),
        Command::Ablate(a) => run_cmd(a, run_ablations),
        Command::Sweep(a) => run_cmd(a, run_sensitivity),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
