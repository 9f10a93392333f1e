//! Feature and structural perturbations for robustness sweeps.
//!
//! Feature noise perturbs a fraction `level` of nodes (whole rows) with
//! zero-mean Gaussian noise scaled by each column's standard deviation.
//! Structural noise rewires a fraction `level` of edges to uniformly random
//! new pairs, keeping the edge count fixed.

use std::collections::HashSet;

use ndarray::Axis;
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Feature,
    Structural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: f64,
    pub seed: u64,
}

pub fn inject_noise(graph: &Graph, spec: &NoiseSpec) -> Result<Graph> {
    if !(0.0..=1.0).contains(&spec.level) {
        return Err(Error::Input(format!("noise level {} outside [0, 1]", spec.level)));
    }
    if spec.level == 0.0 {
        return Ok(graph.clone());
    }
    let mut rng = rng::seeded(spec.seed);
    match spec.kind {
        NoiseKind::Feature => {
            let n = graph.num_nodes();
            let count = ((spec.level * n as f64).round() as usize).min(n);
            let std = graph.features().std_axis(Axis(0), 0.0);
            let mut x = graph.features().clone();
            let mut chosen = index::sample(&mut rng, n, count).into_vec();
            chosen.sort_unstable();
            for i in chosen {
                for (v, s) in x.row_mut(i).iter_mut().zip(std.iter()) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += s * z;
                }
            }
            graph.with_features(x)
        }
        NoiseKind::Structural => {
            let n = graph.num_nodes();
            let m = graph.num_edges();
            let count = ((spec.level * m as f64).round() as usize).min(m);
            let capacity = n * n.saturating_sub(1) / 2;
            if m + count > capacity {
                return Err(Error::Infeasible(format!(
                    "cannot rewire {count} of {m} edges among {n} nodes without duplicates"
                )));
            }
            let mut chosen = index::sample(&mut rng, m, count).into_vec();
            chosen.sort_unstable();
            let removed: HashSet<(usize, usize)> =
                chosen.iter().map(|&k| graph.edges()[k]).collect();
            let mut present: HashSet<(usize, usize)> = graph
                .edges()
                .iter()
                .copied()
                .filter(|e| !removed.contains(e))
                .collect();
            let mut edges: Vec<(usize, usize)> = graph
                .edges()
                .iter()
                .copied()
                .filter(|e| !removed.contains(e))
                .collect();
            for _ in 0..count {
                loop {
                    let u = rng.random_range(0..n);
                    let v = rng.random_range(0..n);
                    if u == v {
                        continue;
                    }
                    let e = (u.min(v), u.max(v));
                    if removed.contains(&e) || !present.insert(e) {
                        continue;
                    }
                    edges.push(e);
                    break;
                }
            }
            graph.with_edges(edges)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::sbm::{generate_sbm, SbmConfig};

    fn base() -> Graph {
        let g = generate_sbm(&SbmConfig {
            num_classes: 2,
            total_nodes: 60,
            rho: 2.0,
            p_intra: 0.2,
            p_inter: 0.02,
            feature_dim: 4,
            ..SbmConfig::default()
        })
        .unwrap();
        // trim to exactly 100 edges
        let edges = g.edges()[..100].to_vec();
        g.with_edges(edges).unwrap()
    }

    #[test]
    fn zero_level_is_identity() {
        let g = base();
        for kind in [NoiseKind::Feature, NoiseKind::Structural] {
            let out = inject_noise(&g, &NoiseSpec { kind, level: 0.0, seed: 9 }).unwrap();
            assert_eq!(out, g);
        }
    }

    #[test]
    fn full_rewire_keeps_edge_count() {
        let g = base();
        assert_eq!(g.num_edges(), 100);
        let out = inject_noise(
            &g,
            &NoiseSpec {
                kind: NoiseKind::Structural,
                level: 1.0,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(out.num_edges(), 100);
        let old: HashSet<_> = g.edges().iter().collect();
        let rewired = out.edges().iter().filter(|e| !old.contains(e)).count();
        assert_eq!(rewired, 100);
        assert_eq!(out.labels(), g.labels());
    }

    #[test]
    fn structural_preserves_degree_sum() {
        let g = base();
        for level in [0.1, 0.35, 0.8] {
            let out = inject_noise(&g, &NoiseSpec { kind: NoiseKind::Structural, level, seed: 4 }).unwrap();
            let deg = |g: &Graph| {
                let mut d = vec![0usize; g.num_nodes()];
                for (u, v) in g.edges() {
                    d[*u] += 1;
                    d[*v] += 1;
                }
                d.iter().sum::<usize>()
            };
            assert_eq!(deg(&out), 2 * g.num_edges());
        }
    }

    #[test]
    fn feature_noise_touches_exact_row_count() {
        let g = base();
        let out = inject_noise(
            &g,
            &NoiseSpec {
                kind: NoiseKind::Feature,
                level: 0.4,
                seed: 2,
            },
        )
        .unwrap();
        let changed = g
            .features()
            .rows()
            .into_iter()
            .zip(out.features().rows())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 24);
        assert_eq!(out.edges(), g.edges());
    }

    #[test]
    fn rejects_bad_level() {
        let g = base();
        assert!(inject_noise(&g, &NoiseSpec { kind: NoiseKind::Feature, level: 1.5, seed: 0 }).is_err());
    }
}
