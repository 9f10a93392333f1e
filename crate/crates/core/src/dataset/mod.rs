//! Dataset storage, synthetic generation, splitting and perturbation.

mod canonical;
mod noise;
mod sbm;
mod split;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use canonical::{load_canonical, save_canonical, Meta};
pub use noise::{inject_noise, NoiseKind, NoiseSpec};
pub use sbm::{class_sizes, generate_sbm, SbmConfig};
pub use split::{kfold_splits, stratified_split, SplitAssignment};

use crate::graph::Graph;

/// Table-style dataset statistics as reported by `stats`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub classes: usize,
    pub class_counts: Vec<usize>,
    /// Largest over smallest class count.
    pub rho: Option<f64>,
    /// Smallest over largest class count.
    pub rho_min_over_max: Option<f64>,
}

impl DatasetSummary {
    pub fn of(graph: &Graph) -> Self {
        let class_counts = graph.class_counts().unwrap_or_default();
        let present: Vec<usize> = class_counts.iter().copied().filter(|&c| c > 0).collect();
        let (rho, inv) = match (present.iter().max(), present.iter().min()) {
            (Some(&max), Some(&min)) => (
                Some(max as f64 / min as f64),
                Some(min as f64 / max as f64),
            ),
            _ => (None, None),
        };
        Self {
            nodes: graph.num_nodes(),
            edges: graph.num_edges(),
            features: graph.num_features(),
            classes: graph.num_classes().unwrap_or(0),
            class_counts,
            rho,
            rho_min_over_max: inv,
        }
    }
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} nodes, {} edges, {} features, {} classes",
            self.nodes, self.edges, self.features, self.classes
        )?;
        if let (Some(r), Some(inv)) = (self.rho, self.rho_min_over_max) {
            write!(f, ", rho {r:.4} (min/max {inv:.4})")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn summary_line() {
        let g = Graph::new(
            Array2::zeros((6, 2)),
            vec![(0, 1), (2, 3)],
            Some(vec![Some(0), Some(0), Some(0), Some(0), Some(0), Some(1)]),
            Some(2),
        )
        .unwrap();
        let s = DatasetSummary::of(&g);
        assert_eq!(s.rho, Some(5.0));
        assert_eq!(s.rho_min_over_max, Some(0.2));
        assert!(s.to_string().starts_with("6 nodes, 2 edges, 2 features, 2 classes"));
    }
}
