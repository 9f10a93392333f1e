//! Graph representation, adjacency construction and feature statistics.
//!
//! Graphs are undirected and unweighted. Edges are stored once as `(u, v)`
//! with `u < v`, sorted; self-loops are only introduced when building the
//! propagation operator.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRAIN: &str = "train";
pub const VAL: &str = "val";
pub const TEST: &str = "test";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    features: Array2<f64>,
    edges: Vec<(usize, usize)>,
    labels: Option<Vec<Option<usize>>>,
    num_classes: Option<usize>,
    masks: BTreeMap<String, Vec<bool>>,
}

impl Graph {
    /// Builds a graph, canonicalizing edge orientation and order.
    ///
    /// Rejects out-of-range endpoints, self-pairs, duplicate edges and
    /// labels outside `[0, num_classes)`.
    pub fn new(
        features: Array2<f64>,
        edges: Vec<(usize, usize)>,
        labels: Option<Vec<Option<usize>>>,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        let n = features.nrows();
        let mut canon = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Structural(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::Structural(format!("self-pair ({u}, {v}) in edge list")));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Structural(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }

        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Shape(format!(
                    "{} labels for {n} nodes",
                    labels.len()
                )));
            }
            let c = num_classes.ok_or_else(|| {
                Error::Input("labels given without a class count".into())
            })?;
            if let Some((i, l)) = labels
                .iter()
                .enumerate()
                .find_map(|(i, l)| l.filter(|&l| l >= c).map(|l| (i, l)))
            {
                return Err(Error::Structural(format!(
                    "node {i} has label {l}, outside 0..{c}"
                )));
            }
        }

        Ok(Self {
            features,
            edges: canon,
            labels,
            num_classes,
            masks: BTreeMap::new(),
        })
    }

    /// Attaches a named node mask. The standard split names must stay disjoint.
    pub fn with_mask(mut self, name: &str, mask: Vec<bool>) -> Result<Self> {
        self.set_mask(name, mask)?;
        Ok(self)
    }

    pub fn set_mask(&mut self, name: &str, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.num_nodes() {
            return Err(Error::Shape(format!(
                "mask '{name}' has length {}, graph has {} nodes",
                mask.len(),
                self.num_nodes()
            )));
        }
        if [TRAIN, VAL, TEST].contains(&name) {
            for other in [TRAIN, VAL, TEST].iter().filter(|o| **o != name) {
                if let Some(m) = self.masks.get(*other) {
                    if let Some(i) = (0..mask.len()).find(|&i| mask[i] && m[i]) {
                        return Err(Error::Structural(format!(
                            "node {i} is in both '{name}' and '{other}'"
                        )));
                    }
                }
            }
        }
        self.masks.insert(name.to_string(), mask);
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    pub fn mask(&self, name: &str) -> Option<&[bool]> {
        self.masks.get(name).map(Vec::as_slice)
    }

    pub fn masks(&self) -> &BTreeMap<String, Vec<bool>> {
        &self.masks
    }

    /// Same structure and labels with a different feature matrix of equal shape.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        if features.dim() != self.features.dim() {
            return Err(Error::Shape(format!(
                "replacement features {:?} vs {:?}",
                features.dim(),
                self.features.dim()
            )));
        }
        let mut g = self.clone();
        g.features = features;
        Ok(g)
    }

    /// Same nodes with a new edge set (validated and canonicalized).
    pub fn with_edges(&self, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut g = Graph::new(
            self.features.clone(),
            edges,
            self.labels.clone(),
            self.num_classes,
        )?;
        g.masks = self.masks.clone();
        Ok(g)
    }

    /// Labels as dense class indices, failing if any node is unlabeled.
    pub fn dense_labels(&self) -> Result<Vec<usize>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::Input("graph has no labels".into()))?;
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::Input(format!("node {i} is unlabeled"))))
            .collect()
    }

    /// Per-class node counts over labeled nodes.
    pub fn class_counts(&self) -> Option<Vec<usize>> {
        let c = self.num_classes?;
        let labels = self.labels.as_ref()?;
        let mut counts = vec![0; c];
        for l in labels.iter().flatten() {
            counts[*l] += 1;
        }
        Some(counts)
    }
}

/// Compressed sparse row storage for a square real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrAdjacency {
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrAdjacency {
    pub fn from_parts(
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.is_empty() || row_offsets[0] != 0 {
            return Err(Error::Structural("row offsets must start at 0".into()));
        }
        if col_indices.len() != values.len()
            || *row_offsets.last().unwrap() != col_indices.len()
        {
            return Err(Error::Structural("inconsistent CSR lengths".into()));
        }
        let n = row_offsets.len() - 1;
        for r in 0..n {
            if row_offsets[r] > row_offsets[r + 1] {
                return Err(Error::Structural(format!("row offsets decrease at row {r}")));
            }
            let cols = &col_indices[row_offsets[r]..row_offsets[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= n) {
                return Err(Error::Structural(format!("bad column indices in row {r}")));
            }
        }
        Ok(Self {
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(col, value)` pairs of one row, columns ascending.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.num_rows();
        let mut out = Array2::zeros((n, n));
        for r in 0..n {
            for (c, v) in self.row(r) {
                out[[r, c]] = v;
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.num_rows())
            .map(|r| self.row(r).map(|(_, v)| v).sum())
            .collect()
    }

    /// Sparse-dense product `self · rhs`.
    pub fn matmul(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        if rhs.nrows() != self.num_rows() {
            return Err(Error::Shape(format!(
                "sparse {}x{} times dense {:?}",
                self.num_rows(),
                self.num_rows(),
                rhs.dim()
            )));
        }
        let mut out = Array2::zeros((self.num_rows(), rhs.ncols()));
        for (r, mut out_row) in out.axis_iter_mut(Axis(0)).enumerate() {
            for (c, v) in self.row(r) {
                out_row.scaled_add(v, &rhs.row(c));
            }
        }
        Ok(out)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.num_rows()).all(|r| self.row(r).all(|(c, v)| (self.get(c, r) - v).abs() <= tol))
    }
}

/// Binary symmetric adjacency, optionally with unit diagonal (`A + I`).
pub fn build_adjacency(graph: &Graph, add_self_loops: bool) -> Result<CsrAdjacency> {
    let n = graph.num_nodes();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v) in graph.edges() {
        if u >= n || v >= n {
            return Err(Error::Structural(format!(
                "edge ({u}, {v}) references a node outside 0..{n}"
            )));
        }
        neighbors[u].push(v);
        neighbors[v].push(u);
    }
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    row_offsets.push(0);
    for (i, nb) in neighbors.iter_mut().enumerate() {
        if add_self_loops {
            nb.push(i);
        }
        nb.sort_unstable();
        col_indices.extend_from_slice(nb);
        row_offsets.push(col_indices.len());
    }
    let values = vec![1.0; col_indices.len()];
    Ok(CsrAdjacency {
        row_offsets,
        col_indices,
        values,
    })
}

/// `D^{-1/2} A D^{-1/2}` with degrees taken from row sums.
///
/// Rows of zero degree stay zero.
pub fn symmetric_normalize(adj: &CsrAdjacency) -> CsrAdjacency {
    let deg = adj.row_sums();
    let mut values = adj.values.clone();
    for r in 0..adj.num_rows() {
        for k in adj.row_offsets[r]..adj.row_offsets[r + 1] {
            let scale = deg[r] * deg[adj.col_indices[k]];
            values[k] = if scale > 0.0 { values[k] / scale.sqrt() } else { 0.0 };
        }
    }
    CsrAdjacency {
        row_offsets: adj.row_offsets.clone(),
        col_indices: adj.col_indices.clone(),
        values,
    }
}

/// Self-looped, symmetrically normalized propagation operator.
pub fn gcn_operator(graph: &Graph) -> Result<CsrAdjacency> {
    Ok(symmetric_normalize(&build_adjacency(graph, true)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsScope {
    #[default]
    AllNodes,
    TrainMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    #[default]
    Full,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    Full(Array2<f64>),
    Diagonal(Array1<f64>),
}

impl Covariance {
    pub fn dim(&self) -> usize {
        match self {
            Covariance::Full(m) => m.nrows(),
            Covariance::Diagonal(v) => v.len(),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            Covariance::Full(m) => m.clone(),
            Covariance::Diagonal(v) => Array2::from_diag(v),
        }
    }

    pub fn diagonal(&self) -> Array1<f64> {
        match self {
            Covariance::Full(m) => m.diag().to_owned(),
            Covariance::Diagonal(v) => v.clone(),
        }
    }
}

/// Structural and feature statistics of the reference data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_bar: f64,
    pub d_bar: f64,
    pub mu_node: Array1<f64>,
    pub sigma_node: Covariance,
    pub source_node_count: usize,
    pub scope: StatsScope,
}

pub fn compute_dataset_stats(graph: &Graph, scope: StatsScope) -> Result<DatasetStats> {
    compute_dataset_stats_with(graph, scope, CovarianceMode::Full)
}

/// Node count, edge density, feature mean and population covariance over
/// the in-scope nodes, treating the input as a single-graph dataset.
pub fn compute_dataset_stats_with(
    graph: &Graph,
    scope: StatsScope,
    mode: CovarianceMode,
) -> Result<DatasetStats> {
    let in_scope: Vec<bool> = match scope {
        StatsScope::AllNodes => vec![true; graph.num_nodes()],
        StatsScope::TrainMask => graph
            .mask(TRAIN)
            .ok_or_else(|| Error::Input("scope=train_mask but graph has no train mask".into()))?
            .to_vec(),
    };
    let idx: Vec<usize> = (0..in_scope.len()).filter(|&i| in_scope[i]).collect();
    let n = idx.len();
    if n == 0 {
        return Err(Error::EmptyScope);
    }
    if n < 2 {
        return Err(Error::DensityUndefined(n));
    }
    let scoped_edges = graph
        .edges()
        .iter()
        .filter(|(u, v)| in_scope[*u] && in_scope[*v])
        .count();
    let d_bar = 2.0 * scoped_edges as f64 / (n as f64 * (n as f64 - 1.0));

    let x = graph.features().select(Axis(0), &idx);
    let nf = n as f64;
    let mu = x.sum_axis(Axis(0)) / nf;
    let centered = &x - &mu;
    let sigma = match mode {
        CovarianceMode::Full => {
            let mut s = centered.t().dot(&centered) / nf;
            // exact symmetry
            for i in 0..s.nrows() {
                for j in 0..i {
                    let avg = 0.5 * (s[[i, j]] + s[[j, i]]);
                    s[[i, j]] = avg;
                    s[[j, i]] = avg;
                }
            }
            Covariance::Full(s)
        }
        CovarianceMode::Diagonal => {
            Covariance::Diagonal(centered.mapv(|v| v * v).sum_axis(Axis(0)) / nf)
        }
    };

    Ok(DatasetStats {
        n_bar: nf,
        d_bar,
        mu_node: mu,
        sigma_node: sigma,
        source_node_count: n,
        scope,
    })
}
