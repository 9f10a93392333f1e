//! Python bindings: graphs, training, neutral-graph calibration and metrics.
//!
//! Matrices cross the boundary as nested lists of floats.

use ndarray::{Array1, Array2};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use neubm::calibration::{calibrate as calibrate_logits, CalibrationSpec};
use neubm::dataset::{self, DatasetSummary, SbmConfig};
use neubm::gnn::{self, Checkpoint, ModelConfig, ModelParams, TrainConfig, TrainReport};
use neubm::graph::{compute_dataset_stats_with, CovarianceMode, StatsScope};
use neubm::harness::{self, ExperimentConfig};
use neubm::metrics::{self, Bandwidth};
use neubm::neutral::{self as neutral_mod, ConstructionVariant, NeutralConfig};
use neubm::{Error, ErrorCategory};

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.category() {
        ErrorCategory::Config | ErrorCategory::Data => PyValueError::new_err(msg),
        ErrorCategory::Numeric => PyArithmeticError::new_err(msg),
        ErrorCategory::Io => PyOSError::new_err(msg),
    }
}

fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows have unequal lengths"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn parse_scope(s: &str) -> PyResult<StatsScope> {
    match s {
        "all_nodes" => Ok(StatsScope::AllNodes),
        "train_mask" => Ok(StatsScope::TrainMask),
        _ => Err(PyValueError::new_err(format!("unknown scope '{s}'"))),
    }
}

fn parse_variant(s: &str) -> PyResult<ConstructionVariant> {
    match s {
        "mean_cov" => Ok(ConstructionVariant::MeanCov),
        "random" => Ok(ConstructionVariant::Random),
        "class_balanced" => Ok(ConstructionVariant::ClassBalanced),
        _ => Err(PyValueError::new_err(format!("unknown construction variant '{s}'"))),
    }
}

#[pyclass(name = "Graph", module = "neubm_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyGraph {
    inner: neubm::graph::Graph,
}

#[pymethods]
impl PyGraph {
    #[new]
    #[pyo3(signature = (features, edges, labels=None, num_classes=None))]
    fn new(
        features: Vec<Vec<f64>>,
        edges: Vec<(usize, usize)>,
        labels: Option<Vec<Option<usize>>>,
        num_classes: Option<usize>,
    ) -> PyResult<Self> {
        let inner = neubm::graph::Graph::new(to_array(features)?, edges, labels, num_classes).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Loads a canonical dataset directory.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: dataset::load_canonical(path).map_err(py_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (num_classes=5, total_nodes=2000, rho=10.0, p_intra=0.01, p_inter=0.002,
                        feature_dim=16, class_mean_separation=1.0, feature_std=1.0, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn sbm(
        num_classes: usize,
        total_nodes: usize,
        rho: f64,
        p_intra: f64,
        p_inter: f64,
        feature_dim: usize,
        class_mean_separation: f64,
        feature_std: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = SbmConfig {
            num_classes,
            total_nodes,
            rho,
            p_intra,
            p_inter,
            feature_dim,
            class_mean_separation,
            feature_std,
            seed,
        };
        Ok(Self {
            inner: dataset::generate_sbm(&cfg).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        dataset::save_canonical(&self.inner, path).map_err(py_err)
    }

    /// Copy with a stratified train/val/test split attached as masks.
    #[pyo3(signature = (train_frac=0.1, val_frac=0.1, min_per_class=5, seed=0))]
    fn with_split(&self, train_frac: f64, val_frac: f64, min_per_class: usize, seed: u64) -> PyResult<Self> {
        let split = dataset::stratified_split(&self.inner, train_frac, val_frac, min_per_class, seed)
            .map_err(py_err)?;
        Ok(Self {
            inner: split.apply(&self.inner).map_err(py_err)?,
        })
    }

    fn mask(&self, name: &str) -> Option<Vec<bool>> {
        self.inner.mask(name).map(<[bool]>::to_vec)
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    #[getter]
    fn num_features(&self) -> usize {
        self.inner.num_features()
    }

    #[getter]
    fn num_classes(&self) -> Option<usize> {
        self.inner.num_classes()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.features())
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<Option<usize>>> {
        self.inner.labels().map(<[Option<usize>]>::to_vec)
    }

    fn class_counts(&self) -> Option<Vec<usize>> {
        self.inner.class_counts()
    }

    /// Node/edge counts, class counts and imbalance ratio.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = DatasetSummary::of(&self.inner);
        let d = PyDict::new(py);
        d.set_item("nodes", s.nodes)?;
        d.set_item("edges", s.edges)?;
        d.set_item("features", s.features)?;
        d.set_item("classes", s.classes)?;
        d.set_item("class_counts", s.class_counts)?;
        d.set_item("rho", s.rho)?;
        Ok(d)
    }

    /// n_bar, d_bar, feature mean and covariance over the chosen scope.
    #[pyo3(signature = (scope="all_nodes"))]
    fn stats<'py>(&self, py: Python<'py>, scope: &str) -> PyResult<Bound<'py, PyDict>> {
        let s = compute_dataset_stats_with(&self.inner, parse_scope(scope)?, CovarianceMode::Full)
            .map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("n_bar", s.n_bar)?;
        d.set_item("d_bar", s.d_bar)?;
        d.set_item("mu_node", s.mu_node.to_vec())?;
        d.set_item("sigma_node", to_rows(&s.sigma_node.to_dense()))?;
        d.set_item("source_node_count", s.source_node_count)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Graph({})", DatasetSummary::of(&self.inner))
    }
}

#[pyclass(name = "Model", module = "neubm_py")]
pub struct PyModel {
    params: ModelParams,
    report: Option<TrainReport>,
    seed: u64,
}

#[pymethods]
impl PyModel {
    /// Trains on the graph's masks, or on a fresh 10/10/80 split if it has none.
    #[staticmethod]
    #[pyo3(signature = (graph, architecture="gcn", hidden_dim=64, num_heads=1, dropout=0.5,
                        learning_rate=0.005, weight_decay=5e-4, max_epochs=500, patience=100,
                        seed=0, split_seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        graph: &PyGraph,
        architecture: &str,
        hidden_dim: usize,
        num_heads: usize,
        dropout: f64,
        learning_rate: f64,
        weight_decay: f64,
        max_epochs: usize,
        patience: usize,
        seed: u64,
        split_seed: u64,
    ) -> PyResult<Self> {
        let g = &graph.inner;
        let c = g
            .num_classes()
            .ok_or_else(|| PyValueError::new_err("graph has no labels"))?;
        let mut mc = match architecture {
            "gcn" => ModelConfig::gcn(g.num_features(), hidden_dim, c),
            "gat" => ModelConfig::gat(g.num_features(), hidden_dim, c, num_heads),
            other => return Err(PyValueError::new_err(format!("unknown architecture '{other}'"))),
        };
        mc.dropout = dropout;
        mc.seed = seed;
        let tc = TrainConfig {
            learning_rate,
            weight_decay,
            max_epochs,
            patience,
            seed,
        };
        let split = match dataset::SplitAssignment::from_masks(g) {
            Some(s) if !s.train.is_empty() => s,
            _ => dataset::stratified_split(g, 0.1, 0.1, 5, split_seed).map_err(py_err)?,
        };
        let (params, report) = gnn::train(g, &split, &mc, &tc).map_err(py_err)?;
        Ok(Self {
            params,
            report: Some(report),
            seed,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ckpt = Checkpoint::load(path).map_err(py_err)?;
        Ok(Self {
            params: ckpt.params().map_err(py_err)?,
            report: None,
            seed: ckpt.seed,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        Checkpoint::new(&self.params, self.seed).save(path).map_err(py_err)
    }

    /// Eval-mode logits, one row per node.
    fn logits(&self, graph: &PyGraph) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&gnn::predict_logits(&self.params, &graph.inner).map_err(py_err)?))
    }

    #[getter]
    fn epochs_run(&self) -> Option<usize> {
        self.report.as_ref().map(|r| r.epochs_run)
    }

    #[getter]
    fn best_epoch(&self) -> Option<usize> {
        self.report.as_ref().map(|r| r.best_epoch)
    }

    #[getter]
    fn loss_curve(&self) -> Option<Vec<f64>> {
        self.report.as_ref().map(|r| r.loss_curve.clone())
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.params.len()
    }
}

#[pyclass(name = "NeutralGraph", module = "neubm_py")]
pub struct PyNeutralGraph {
    inner: neutral_mod::NeutralGraph,
}

#[pymethods]
impl PyNeutralGraph {
    /// Builds a neutral reference graph from `graph`'s statistics.
    #[staticmethod]
    #[pyo3(signature = (graph, scope="all_nodes", variant="mean_cov", diagonal=false, seed=0, num_nodes=None))]
    fn build(
        graph: &PyGraph,
        scope: &str,
        variant: &str,
        diagonal: bool,
        seed: u64,
        num_nodes: Option<usize>,
    ) -> PyResult<Self> {
        let mode = if diagonal {
            CovarianceMode::Diagonal
        } else {
            CovarianceMode::Full
        };
        let stats = compute_dataset_stats_with(&graph.inner, parse_scope(scope)?, mode).map_err(py_err)?;
        let config = NeutralConfig {
            node_count_override: num_nodes,
            covariance_mode: mode,
            construction_variant: parse_variant(variant)?,
            seed,
            ..NeutralConfig::default()
        };
        Ok(Self {
            inner: neutral_mod::construct_neutral(&stats, Some(&graph.inner), &config).map_err(py_err)?,
        })
    }

    /// Mean of the model's logits over the neutral nodes.
    fn logit_vector(&self, model: &PyModel) -> PyResult<Vec<f64>> {
        Ok(neutral_mod::neutral_logit_vector(&model.params, &self.inner)
            .map_err(py_err)?
            .to_vec())
    }

    fn graph(&self) -> PyGraph {
        PyGraph {
            inner: self.inner.graph.clone(),
        }
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.graph.num_nodes()
    }

    #[getter]
    fn density(&self) -> f64 {
        let n = self.inner.graph.num_nodes() as f64;
        if n < 2.0 {
            0.0
        } else {
            2.0 * self.inner.graph.num_edges() as f64 / (n * (n - 1.0))
        }
    }
}

/// Returns `(probabilities, predicted_labels)`; `spec` is e.g. `"subtract"`,
/// `"scale(0.75)"` or `"normalize@post_softmax"`.
#[pyfunction]
#[pyo3(signature = (logits, neutral_vector, spec="subtract"))]
fn calibrate(logits: Vec<Vec<f64>>, neutral_vector: Vec<f64>, spec: &str) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let spec: CalibrationSpec = spec.parse().map_err(py_err)?;
    let out = calibrate_logits(&to_array(logits)?, &Array1::from(neutral_vector), &spec).map_err(py_err)?;
    Ok((to_rows(&out.probabilities), out.predicted_labels))
}

/// F1-macro/weighted/micro, accuracy, imbalance ratio and per-class scores.
#[pyfunction]
#[pyo3(signature = (predicted, truth, num_classes, mask=None))]
fn evaluate<'py>(
    py: Python<'py>,
    predicted: Vec<usize>,
    truth: Vec<usize>,
    num_classes: usize,
    mask: Option<Vec<bool>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mask = mask.unwrap_or_else(|| vec![true; truth.len()]);
    let r = metrics::evaluate(&predicted, &truth, &mask, num_classes).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("f1_macro", r.f1_macro)?;
    d.set_item("f1_weighted", r.f1_weighted)?;
    d.set_item("f1_micro", r.f1_micro)?;
    d.set_item("accuracy", r.accuracy)?;
    d.set_item("rho", r.rho)?;
    d.set_item("precision", r.per_class.iter().map(|c| c.precision).collect::<Vec<_>>())?;
    d.set_item("recall", r.per_class.iter().map(|c| c.recall).collect::<Vec<_>>())?;
    d.set_item("f1", r.per_class.iter().map(|c| c.f1).collect::<Vec<_>>())?;
    d.set_item("support", r.per_class.iter().map(|c| c.support).collect::<Vec<_>>())?;
    Ok(d)
}

/// RBF-kernel MMD; median-heuristic bandwidth unless one is given.
#[pyfunction]
#[pyo3(signature = (x, y, bandwidth=None))]
fn mmd(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, bandwidth: Option<f64>) -> PyResult<f64> {
    let bw = bandwidth.map_or(Bandwidth::Median, Bandwidth::Fixed);
    metrics::mmd_rbf(&to_array(x)?, &to_array(y)?, bw).map_err(py_err)
}

/// Runs an experiment config file and returns the JSON report.
#[pyfunction]
#[pyo3(signature = (config_path, kind="experiment"))]
fn run_experiment(config_path: &str, kind: &str) -> PyResult<String> {
    let config = ExperimentConfig::load(config_path).map_err(py_err)?;
    let out = match kind {
        "experiment" => harness::run_experiment(&config),
        "ablation" => harness::run_ablations(&config),
        "sweep" => harness::run_sensitivity(&config),
        other => return Err(PyValueError::new_err(format!("unknown run kind '{other}'"))),
    }
    .map_err(py_err)?;
    serde_json::to_string(&out.report).map_err(|e| py_err(e.into()))
}

#[pymodule]
fn neubm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyNeutralGraph>()?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(mmd, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
