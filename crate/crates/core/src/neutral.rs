//! Neutral reference graph construction and the pooled neutral logit vector.
//!
//! The neutral graph mirrors the reference data's size, edge density and
//! feature distribution without carrying any class signal. A trained model's
//! mean output on it estimates the class bias that calibration removes.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, CalibrationSpec};
use crate::dataset::save_canonical;
use crate::error::{Error, Result};
use crate::gnn::{predict_logits, ModelParams};
use crate::graph::{Covariance, CovarianceMode, DatasetStats, Graph};
use crate::rng;

pub const NEUTRAL_META_FILE: &str = "neutral_meta.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstructionVariant {
    #[default]
    MeanCov,
    Random,
    ClassBalanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeutralConfig {
    /// Defaults to `floor(n_bar)`.
    #[serde(default)]
    pub node_count_override: Option<usize>,
    #[serde(default)]
    pub covariance_mode: CovarianceMode,
    /// Ridge added to the covariance: `eps = scale * trace(Sigma) / d`.
    #[serde(default = "default_eps_scale")]
    pub regularization_eps_scale: f64,
    #[serde(default)]
    pub construction_variant: ConstructionVariant,
    /// Rebuild the neutral graph every k epochs during validation scoring;
    /// `None` builds it once after training.
    #[serde(default)]
    pub refresh_every: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_eps_scale() -> f64 {
    1e-6
}

impl Default for NeutralConfig {
    fn default() -> Self {
        Self {
            node_count_override: None,
            covariance_mode: CovarianceMode::Full,
            regularization_eps_scale: default_eps_scale(),
            construction_variant: ConstructionVariant::MeanCov,
            refresh_every: None,
            seed: 0,
        }
    }
}

impl NeutralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.node_count_override == Some(0) {
            return Err(Error::Config("neutral node count must be at least 1".into()));
        }
        if !(self.regularization_eps_scale > 0.0) {
            return Err(Error::Config("regularization_eps_scale must be > 0".into()));
        }
        if let Some(k) = self.refresh_every {
            if !(1..=10).contains(&k) {
                return Err(Error::Config(format!("refresh_every {k} outside 1..=10")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeutralGraph {
    pub graph: Graph,
    pub stats_used: DatasetStats,
    pub config: NeutralConfig,
    pub seed: u64,
}

/// Draws `count` rows from `N(mu, sigma)`.
///
/// Full mode factors `sigma + eps I` by symmetric eigendecomposition with
/// negative eigenvalues clipped to zero. Diagonal mode draws each dimension
/// independently with variance `diag(sigma)`.
pub fn sample_mvn(
    mu: &Array1<f64>,
    sigma: &Covariance,
    count: usize,
    mode: CovarianceMode,
    eps_scale: f64,
    seed: u64,
) -> Result<Array2<f64>> {
    let d = mu.len();
    if sigma.dim() != d {
        return Err(Error::Shape(format!("mean has {d} entries, covariance is {}", sigma.dim())));
    }
    let mut rng = rng::seeded(seed);
    let mut out = Array2::zeros((count, d));
    match mode {
        CovarianceMode::Full => {
            let factor = covariance_factor(sigma, eps_scale)?;
            let mut z = Array1::<f64>::zeros(d);
            for mut row in out.rows_mut() {
                z.mapv_inplace(|_| StandardNormal.sample(&mut rng));
                row.assign(&(mu + &factor.dot(&z)));
            }
        }
        CovarianceMode::Diagonal => {
            let std = sigma.diagonal().mapv(|v| v.max(0.0).sqrt());
            for mut row in out.rows_mut() {
                for j in 0..d {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    row[j] = mu[j] + std[j] * z;
                }
            }
        }
    }
    Ok(out)
}

/// `U diag(sqrt(max(lambda, 0)))` for `sigma + eps I = U diag(lambda) U^T`.
pub fn covariance_factor(sigma: &Covariance, eps_scale: f64) -> Result<Array2<f64>> {
    let s = sigma.to_dense();
    let d = s.nrows();
    let asym = s
        .indexed_iter()
        .map(|((i, j), v)| (v - s[[j, i]]).abs())
        .fold(0.0, f64::max);
    if asym > 1e-8 {
        return Err(Error::Input(format!("covariance is not symmetric (max asymmetry {asym:e})")));
    }
    if d == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    let eps = eps_scale * s.diag().sum() / d as f64;
    let mut m = DMatrix::from_fn(d, d, |i, j| 0.5 * (s[[i, j]] + s[[j, i]]));
    for i in 0..d {
        m[(i, i)] += eps;
    }
    let eig = SymmetricEigen::new(m);
    Ok(Array2::from_shape_fn((d, d), |(i, k)| {
        eig.eigenvectors[(i, k)] * eig.eigenvalues[k].max(0.0).sqrt()
    }))
}

fn sample_edges(n: usize, p: f64, rng: &mut rng::Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    if p <= 0.0 {
        return edges;
    }
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Builds the neutral graph: `floor(n_bar)` nodes, each pair an edge with
/// probability `d_bar`, features drawn according to the construction variant.
///
/// Edges and features use separate random streams derived from
/// `config.seed`, so switching variants leaves the structure unchanged.
pub fn construct_neutral(
    stats: &DatasetStats,
    labeled_source: Option<&Graph>,
    config: &NeutralConfig,
) -> Result<NeutralGraph> {
    config.validate()?;
    if !(stats.n_bar >= 1.0) {
        return Err(Error::Infeasible(format!("average node count {} < 1", stats.n_bar)));
    }
    if !(0.0..=1.0).contains(&stats.d_bar) {
        return Err(Error::Input(format!("edge density {} outside [0, 1]", stats.d_bar)));
    }
    let n = config
        .node_count_override
        .unwrap_or(stats.n_bar.floor() as usize);
    let d = stats.mu_node.len();

    let mut edge_rng = rng::seeded(rng::derive(config.seed, 1));
    let edges = sample_edges(n, stats.d_bar, &mut edge_rng);

    let feature_seed = rng::derive(config.seed, 2);
    let features = match config.construction_variant {
        ConstructionVariant::MeanCov => sample_mvn(
            &stats.mu_node,
            &stats.sigma_node,
            n,
            config.covariance_mode,
            config.regularization_eps_scale,
            feature_seed,
        )?,
        ConstructionVariant::Random => {
            let src = labeled_source.ok_or_else(|| {
                Error::Input("random construction needs a source graph".into())
            })?;
            check_width(src, d)?;
            if src.num_nodes() == 0 {
                return Err(Error::Input("source graph is empty".into()));
            }
            let mut rng = rng::seeded(feature_seed);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..src.num_nodes())).collect();
            src.features().select(Axis(0), &idx)
        }
        ConstructionVariant::ClassBalanced => {
            let src = labeled_source.ok_or_else(|| {
                Error::Input("class-balanced construction needs a labeled source graph".into())
            })?;
            check_width(src, d)?;
            let labels = src.labels().ok_or_else(|| {
                Error::Input("class-balanced construction needs labels".into())
            })?;
            let c = src.num_classes().unwrap_or(0);
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
            for (i, l) in labels.iter().enumerate() {
                if let Some(l) = l {
                    by_class[*l].push(i);
                }
            }
            by_class.retain(|v| !v.is_empty());
            if by_class.is_empty() {
                return Err(Error::Input("source graph has no labeled nodes".into()));
            }
            let mut rng = rng::seeded(feature_seed);
            let idx: Vec<usize> = (0..n)
                .map(|_| {
                    let class = &by_class[rng.random_range(0..by_class.len())];
                    class[rng.random_range(0..class.len())]
                })
                .collect();
            src.features().select(Axis(0), &idx)
        }
    };

    Ok(NeutralGraph {
        graph: Graph::new(features, edges, None, None)?,
        stats_used: stats.clone(),
        config: config.clone(),
        seed: config.seed,
    })
}

fn check_width(src: &Graph, d: usize) -> Result<()> {
    if src.num_features() != d {
        return Err(Error::Shape(format!(
            "source graph has {} features, statistics have {d}",
            src.num_features()
        )));
    }
    Ok(())
}

/// Mean over rows: one reference vector per model.
pub fn pool_logits(logits: &Array2<f64>) -> Result<Array1<f64>> {
    logits
        .mean_axis(Axis(0))
        .ok_or_else(|| Error::Input("cannot pool logits of an empty graph".into()))
}

/// Eval-mode logits on the neutral graph, mean-pooled over its nodes.
pub fn neutral_logit_vector(params: &ModelParams, neutral: &NeutralGraph) -> Result<Array1<f64>> {
    pool_logits(&predict_logits(params, &neutral.graph)?)
}

#[derive(Serialize)]
struct NeutralMeta<'a> {
    stats: &'a DatasetStats,
    config: &'a NeutralConfig,
    seed: u64,
}

/// Canonical dataset directory plus `neutral_meta.json`.
pub fn save_neutral(neutral: &NeutralGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    save_canonical(&neutral.graph, dir)?;
    let meta = NeutralMeta {
        stats: &neutral.stats_used,
        config: &neutral.config,
        seed: neutral.seed,
    };
    let path = dir.join(NEUTRAL_META_FILE);
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(path, e))
}

/// Validation scoring that calibrates against a neutral graph rebuilt every
/// `config.refresh_every` epochs (seeded per rebuild).
pub struct RefreshingNeutral<'a> {
    stats: &'a DatasetStats,
    source: Option<&'a Graph>,
    config: NeutralConfig,
    spec: CalibrationSpec,
    current: Option<NeutralGraph>,
    pub rebuilds: usize,
}

impl<'a> RefreshingNeutral<'a> {
    pub fn new(
        stats: &'a DatasetStats,
        source: Option<&'a Graph>,
        config: NeutralConfig,
        spec: CalibrationSpec,
    ) -> Result<Self> {
        config.validate()?;
        spec.validate()?;
        Ok(Self {
            stats,
            source,
            config,
            spec,
            current: None,
            rebuilds: 0,
        })
    }

    pub fn predict(&mut self, epoch: usize, params: &ModelParams, logits: &Array2<f64>) -> Result<Vec<usize>> {
        let every = self.config.refresh_every.unwrap_or(usize::MAX);
        if self.current.is_none() || (epoch.saturating_sub(1)) % every == 0 {
            let cfg = NeutralConfig {
                seed: rng::derive(self.config.seed, epoch as u64),
                ..self.config.clone()
            };
            self.current = Some(construct_neutral(self.stats, self.source, &cfg)?);
            self.rebuilds += 1;
        }
        let neutral = self.current.as_ref().expect("built above");
        let reference = neutral_logit_vector(params, neutral)?;
        Ok(calibrate(logits, &reference, &self.spec)?.predicted_labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::ModelConfig;
    use crate::graph::{compute_dataset_stats, StatsScope};
    use ndarray::array;

    fn stats_1d(var: f64) -> DatasetStats {
        DatasetStats {
            n_bar: 10.0,
            d_bar: 0.0,
            mu_node: array![0.0],
            sigma_node: Covariance::Full(array![[var]]),
            source_node_count: 10,
            scope: StatsScope::AllNodes,
        }
    }

    #[test]
    fn zero_covariance_gives_mean_rows() {
        let mu = array![1.5, -2.0, 0.25];
        let x = sample_mvn(&mu, &Covariance::Full(Array2::zeros((3, 3))), 20, CovarianceMode::Full, 1e-6, 1).unwrap();
        for row in x.rows() {
            assert_eq!(row, mu);
        }
        let x = sample_mvn(&mu, &Covariance::Diagonal(Array1::zeros(3)), 5, CovarianceMode::Diagonal, 1e-6, 1).unwrap();
        assert!(x.rows().into_iter().all(|r| r == mu));
    }

    #[test]
    fn one_dimensional_std() {
        let s = stats_1d(4.0);
        let x = sample_mvn(&s.mu_node, &s.sigma_node, 100_000, CovarianceMode::Full, 1e-6, 5).unwrap();
        let std = x.column(0).std(0.0);
        assert!((1.97..=2.03).contains(&std), "{std}");
    }

    #[test]
    fn full_and_diagonal_marginals_agree() {
        let mu = array![1.0, -1.0];
        let sigma = Covariance::Full(array![[0.5, 0.0], [0.0, 3.0]]);
        let n = 40_000;
        let a = sample_mvn(&mu, &sigma, n, CovarianceMode::Full, 1e-6, 9).unwrap();
        let b = sample_mvn(&mu, &sigma, n, CovarianceMode::Diagonal, 1e-6, 9).unwrap();
        for j in 0..2 {
            let var = sigma.diagonal()[j];
            let se_mean = (var / n as f64).sqrt();
            let (ma, mb) = (a.column(j).mean().unwrap(), b.column(j).mean().unwrap());
            assert!((ma - mu[j]).abs() < 4.0 * se_mean && (mb - mu[j]).abs() < 4.0 * se_mean);
            // var of sample variance ~ 2 var^2 / n
            let se_var = (2.0 * var * var / n as f64).sqrt();
            assert!((a.column(j).var(0.0) - var).abs() < 4.0 * se_var);
            assert!((b.column(j).var(0.0) - var).abs() < 4.0 * se_var);
        }
    }

    #[test]
    fn rejects_asymmetric_covariance() {
        let err = sample_mvn(&array![0.0, 0.0], &Covariance::Full(array![[1.0, 0.5], [0.0, 1.0]]), 1, CovarianceMode::Full, 1e-6, 0)
            .unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn clipped_factor_is_psd() {
        // rank-deficient with a tiny negative eigenvalue from rounding
        let v = array![1.0, 2.0, -1.0];
        let mut s = Array2::from_shape_fn((3, 3), |(i, j)| v[i] * v[j]);
        s[[0, 0]] -= 1e-12;
        let f = covariance_factor(&Covariance::Full(s.clone()), 1e-6).unwrap();
        let rebuilt = f.dot(&f.t());
        let eps = 1e-6 * s.diag().sum() / 3.0;
        let diff = (&rebuilt - &s).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(diff <= eps + 1e-10, "{diff}");
        let jitter = DMatrix::from_fn(3, 3, |i, j| rebuilt[[i, j]] + if i == j { 1e-12 } else { 0.0 });
        assert!(jitter.cholesky().is_some());
    }

    #[test]
    fn neutral_structure_and_errors() {
        let mut s = stats_1d(1.0);
        let g = construct_neutral(&s, None, &NeutralConfig::default()).unwrap();
        assert_eq!(g.graph.num_nodes(), 10);
        assert_eq!(g.graph.num_edges(), 0);
        assert!(g.graph.labels().is_none());

        s.n_bar = 0.5;
        assert!(matches!(construct_neutral(&s, None, &NeutralConfig::default()), Err(Error::Infeasible(_))));

        let s = stats_1d(1.0);
        let cfg = NeutralConfig {
            construction_variant: ConstructionVariant::ClassBalanced,
            ..NeutralConfig::default()
        };
        let unlabeled = Graph::new(array![[1.0], [2.0]], vec![], None, None).unwrap();
        assert!(matches!(construct_neutral(&s, Some(&unlabeled), &cfg), Err(Error::Input(_))));
        assert!(construct_neutral(&s, None, &cfg).is_err());
    }

    #[test]
    fn variants_share_structure_and_are_reproducible() {
        let src = Graph::new(
            Array2::from_shape_fn((30, 2), |(i, j)| (i * 2 + j) as f64),
            (0..29).map(|i| (i, i + 1)).collect(),
            Some((0..30).map(|i| Some(usize::from(i >= 25))).collect()),
            Some(2),
        )
        .unwrap();
        let stats = compute_dataset_stats(&src, StatsScope::AllNodes).unwrap();
        let build = |v| {
            construct_neutral(
                &stats,
                Some(&src),
                &NeutralConfig {
                    construction_variant: v,
                    node_count_override: Some(40),
                    seed: 3,
                    ..NeutralConfig::default()
                },
            )
            .unwrap()
        };
        let a = build(ConstructionVariant::MeanCov);
        let b = build(ConstructionVariant::Random);
        let c = build(ConstructionVariant::ClassBalanced);
        assert_eq!(a.graph.edges(), b.graph.edges());
        assert_eq!(b.graph.edges(), c.graph.edges());
        assert_eq!(a, build(ConstructionVariant::MeanCov));
        assert_eq!(c, build(ConstructionVariant::ClassBalanced));
        // random rows come from the source
        for row in b.graph.features().rows() {
            assert!(src.features().rows().into_iter().any(|r| r == row));
        }
        // class-balanced draws the 5-node minority far more than 5/30 of the time
        let minority = c.graph.features().rows().into_iter().filter(|r| r[0] >= 50.0).count();
        assert!(minority >= 10, "{minority}");
    }

    #[test]
    fn zero_density_is_edgeless() {
        let mut s = stats_1d(1.0);
        s.n_bar = 50.0;
        assert_eq!(construct_neutral(&s, None, &NeutralConfig::default()).unwrap().graph.num_edges(), 0);
    }

    #[test]
    fn pooling() {
        let v = array![0.5, -1.0, 2.0];
        let rows = Array2::from_shape_fn((4, 3), |(_, j)| v[j]);
        assert_eq!(pool_logits(&rows).unwrap(), v);
        let r = array![[1.0, 2.0], [3.0, -4.0], [0.5, 0.25]];
        let p = pool_logits(&r).unwrap();
        assert!((p[0] - 4.5 / 3.0).abs() < 1e-12 && (p[1] + 1.75 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_params_zero_reference() {
        let s = DatasetStats {
            n_bar: 12.0,
            d_bar: 0.3,
            mu_node: array![1.0, 2.0],
            sigma_node: Covariance::Full(Array2::eye(2)),
            source_node_count: 12,
            scope: StatsScope::AllNodes,
        };
        let neutral = construct_neutral(&s, None, &NeutralConfig::default()).unwrap();
        let p = ModelParams::zeros(&ModelConfig::gcn(2, 4, 3)).unwrap();
        assert_eq!(neutral_logit_vector(&p, &neutral).unwrap(), Array1::<f64>::zeros(3));
    }

    #[test]
    fn save_writes_meta() {
        let neutral = construct_neutral(&stats_1d(1.0), None, &NeutralConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_neutral(&neutral, dir.path()).unwrap();
        let back = crate::dataset::load_canonical(dir.path()).unwrap();
        assert_eq!(back, neutral.graph);
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(NEUTRAL_META_FILE)).unwrap()).unwrap();
        assert_eq!(meta["seed"], 0);
        assert!(meta["stats"]["n_bar"].is_number());
    }
}
