//! Stochastic block model with a controllable class-size imbalance.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmConfig {
    pub num_classes: usize,
    pub total_nodes: usize,
    /// Target ratio between the largest and the smallest class.
    pub rho: f64,
    pub p_intra: f64,
    pub p_inter: f64,
    pub feature_dim: usize,
    /// Pairwise distance between class means.
    pub class_mean_separation: f64,
    pub feature_std: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            num_classes: 5,
            total_nodes: 2000,
            rho: 10.0,
            p_intra: 0.01,
            p_inter: 0.002,
            feature_dim: 16,
            class_mean_separation: 1.0,
            feature_std: 1.0,
            seed: 0,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be at least 1".into()));
        }
        if !(self.rho >= 1.0) || !self.rho.is_finite() {
            return Err(Error::Config(format!("rho must be >= 1, got {}", self.rho)));
        }
        if !prob(self.p_intra) || !prob(self.p_inter) {
            return Err(Error::Config("edge probabilities must lie in [0, 1]".into()));
        }
        if self.p_inter > self.p_intra {
            return Err(Error::Config(format!(
                "p_inter ({}) exceeds p_intra ({})",
                self.p_inter, self.p_intra
            )));
        }
        if !(self.class_mean_separation >= 0.0) {
            return Err(Error::Config("class_mean_separation must be >= 0".into()));
        }
        if !(self.feature_std > 0.0) {
            return Err(Error::Config("feature_std must be > 0".into()));
        }
        if self.feature_dim < self.num_classes {
            return Err(Error::Config(format!(
                "feature_dim ({}) must be at least num_classes ({}) to place equidistant means",
                self.feature_dim, self.num_classes
            )));
        }
        if self.total_nodes < self.num_classes {
            return Err(Error::Infeasible(format!(
                "{} nodes cannot populate {} classes",
                self.total_nodes, self.num_classes
            )));
        }
        Ok(())
    }
}

/// Class sizes decaying geometrically from the largest (class 0) to the
/// smallest (class C-1) with ratio `rho`, summing to `total`.
pub fn class_sizes(num_classes: usize, total: usize, rho: f64) -> Result<Vec<usize>> {
    if total < num_classes {
        return Err(Error::Infeasible(format!(
            "{total} nodes cannot populate {num_classes} classes"
        )));
    }
    if num_classes == 1 {
        return Ok(vec![total]);
    }
    let weights: Vec<f64> = (0..num_classes)
        .map(|k| rho.powf(-(k as f64) / (num_classes - 1) as f64))
        .collect();
    let wsum: f64 = weights.iter().sum();
    let raw: Vec<f64> = weights.iter().map(|w| total as f64 * w / wsum).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|r| (r.floor() as usize).max(1)).collect();

    // largest remainder, ties toward lower class index
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = sizes.iter().sum();
    let mut k = 0;
    while assigned < total {
        sizes[order[k % num_classes]] += 1;
        assigned += 1;
        k += 1;
    }
    while assigned > total {
        // floors forced up to 1 can overshoot; take from the largest class
        let big = (0..num_classes).max_by_key(|&i| (sizes[i], usize::MAX - i)).unwrap();
        sizes[big] -= 1;
        assigned -= 1;
    }
    Ok(sizes)
}

pub fn generate_sbm(config: &SbmConfig) -> Result<Graph> {
    config.validate()?;
    let sizes = class_sizes(config.num_classes, config.total_nodes, config.rho)?;
    let labels: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect();
    let n = labels.len();

    let mut rng = rng::seeded(config.seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] {
                config.p_intra
            } else {
                config.p_inter
            };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    // scaled basis vectors are pairwise `separation` apart
    let offset = config.class_mean_separation / std::f64::consts::SQRT_2;
    let mut features = Array2::zeros((n, config.feature_dim));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        for x in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = config.feature_std * z;
        }
        row[labels[i]] += offset;
    }

    Graph::new(
        features,
        edges,
        Some(labels.into_iter().map(Some).collect()),
        Some(config.num_classes),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn size_examples() {
        assert_eq!(class_sizes(2, 10, 4.0).unwrap(), vec![8, 2]);
        assert_eq!(class_sizes(5, 100, 1.0).unwrap(), vec![20; 5]);
        assert!(matches!(class_sizes(5, 3, 2.0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn generator_infeasible() {
        let cfg = SbmConfig {
            total_nodes: 3,
            ..SbmConfig::default()
        };
        assert!(matches!(generate_sbm(&cfg), Err(Error::Infeasible(_))));
    }

    #[test]
    fn rejects_heterophilous_config() {
        let cfg = SbmConfig {
            p_intra: 0.01,
            p_inter: 0.02,
            ..SbmConfig::default()
        };
        assert!(matches!(generate_sbm(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic() {
        let cfg = SbmConfig {
            total_nodes: 300,
            ..SbmConfig::default()
        };
        let a = generate_sbm(&cfg).unwrap();
        let b = generate_sbm(&cfg).unwrap();
        assert_eq!(a, b);
        let fa: Vec<u64> = a.features().iter().map(|v| v.to_bits()).collect();
        let fb: Vec<u64> = b.features().iter().map(|v| v.to_bits()).collect();
        assert_eq!(fa, fb);
        let c = generate_sbm(&SbmConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn intra_density_converges() {
        let cfg = SbmConfig {
            total_nodes: 2000,
            rho: 1.0,
            num_classes: 4,
            p_intra: 0.02,
            p_inter: 0.001,
            ..SbmConfig::default()
        };
        let g = generate_sbm(&cfg).unwrap();
        let labels = g.dense_labels().unwrap();
        let sizes = class_sizes(4, 2000, 1.0).unwrap();
        let pairs: f64 = sizes.iter().map(|&s| (s * (s - 1) / 2) as f64).sum();
        let intra = g
            .edges()
            .iter()
            .filter(|(u, v)| labels[*u] == labels[*v])
            .count() as f64;
        let sd = (pairs * cfg.p_intra * (1.0 - cfg.p_intra)).sqrt();
        assert!((intra - pairs * cfg.p_intra).abs() <= 3.0 * sd);
    }

    #[test]
    fn class_means_are_separated() {
        let cfg = SbmConfig {
            num_classes: 3,
            total_nodes: 3000,
            rho: 1.0,
            feature_dim: 3,
            class_mean_separation: 4.0,
            feature_std: 0.1,
            ..SbmConfig::default()
        };
        let g = generate_sbm(&cfg).unwrap();
        let labels = g.dense_labels().unwrap();
        let mut means = Array2::<f64>::zeros((3, 3));
        for (i, row) in g.features().rows().into_iter().enumerate() {
            let mut m = means.row_mut(labels[i]);
            m += &row;
        }
        means /= 1000.0;
        for a in 0..3 {
            for b in (a + 1)..3 {
                let d = (&means.row(a) - &means.row(b)).mapv(|x| x * x).sum().sqrt();
                assert!((d - 4.0).abs() < 0.05, "{d}");
            }
        }
    }

    proptest! {
        #[test]
        fn sizes_hit_ratio(c in 2usize..8, total in 20usize..3000, rho in 1.0f64..30.0) {
            prop_assume!(total as f64 >= rho * c as f64);
            let s = class_sizes(c, total, rho).unwrap();
            prop_assert_eq!(s.iter().sum::<usize>(), total);
            prop_assert!(s.iter().all(|&x| x >= 1));
            let max = *s.iter().max().unwrap() as f64;
            let min = *s.iter().min().unwrap() as f64;
            // within one node of the target on either extreme
            prop_assert!((max - 1.0) / (min + 1.0) <= rho + 1e-9);
            prop_assert!(rho <= (max + 1.0) / (min - 1.0).max(0.5) + 1e-9);
        }
    }
}
