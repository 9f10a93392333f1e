mod common;

use common::*;
use ndarray::{concatenate, Axis};
use neubm::gnn::{gradients, predict_logits, ModelParams, PreparedGraph};
use neubm::graph::Graph;

#[test]
fn gcn_matches_finite_differences() {
    for seed in 0..20 {
        let g = random_graph(12, 4, 3, 0.3, seed);
        let p = ModelParams::init(&gcn_config(4, 3, seed)).unwrap();
        let mask = random_mask(12, seed + 100);
        let err = max_fd_error(&p, &g, &mask, 5e-4, None, 1e-5);
        assert!(err <= 1e-4, "graph {seed}: relative error {err:e}");
        let err = max_fd_error(&p, &g, &mask, 0.0, Some(seed), 1e-5);
        assert!(err <= 1e-4, "graph {seed} with dropout: relative error {err:e}");
    }
}

#[test]
fn gat_matches_finite_differences() {
    for seed in 0..20 {
        let g = random_graph(12, 4, 3, 0.3, seed + 50);
        let p = ModelParams::init(&gat_config(4, 3, seed)).unwrap();
        let mask = random_mask(12, seed + 200);
        let err = max_fd_error(&p, &g, &mask, 5e-4, None, 1e-5);
        assert!(err <= 1e-4, "graph {seed}: relative error {err:e}");
    }
}

fn duplicated(g: &Graph) -> Graph {
    let n = g.num_nodes();
    let features = concatenate(Axis(0), &[g.features().view(), g.features().view()]).unwrap();
    let mut edges = g.edges().to_vec();
    edges.extend(g.edges().iter().map(|&(u, v)| (u + n, v + n)));
    let mut labels = g.labels().unwrap().to_vec();
    labels.extend_from_slice(g.labels().unwrap());
    Graph::new(features, edges, Some(labels), g.num_classes()).unwrap()
}

#[test]
fn duplicated_graph_leaves_mean_gradient_unchanged() {
    for (seed, gat) in [(1, false), (2, true)] {
        let g = random_graph(12, 4, 3, 0.3, seed);
        let cfg = if gat { gat_config(4, 3, seed) } else { gcn_config(4, 3, seed) };
        let p = ModelParams::init(&cfg).unwrap();
        let mask = random_mask(12, seed);
        let double_mask: Vec<bool> = mask.iter().chain(&mask).copied().collect();
        let g2 = duplicated(&g);

        let (l1, a) = gradients(&p, &PreparedGraph::new(&g).unwrap(), g.labels().unwrap(), &mask, 5e-4, None).unwrap();
        let (l2, b) =
            gradients(&p, &PreparedGraph::new(&g2).unwrap(), g2.labels().unwrap(), &double_mask, 5e-4, None).unwrap();
        assert!((l1 - l2).abs() <= 1e-12 * l1.abs().max(1.0));
        for (x, y) in a.flat().iter().zip(b.flat()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}

#[test]
fn forward_is_permutation_equivariant() {
    let perm = [3usize, 0, 4, 1, 2];
    for (seed, gat) in [(7, false), (8, true)] {
        let g = random_graph(5, 3, 2, 0.5, seed);
        let cfg = if gat { gat_config(3, 2, seed) } else { gcn_config(3, 2, seed) };
        let p = ModelParams::init(&cfg).unwrap();

        // node i of the permuted graph is node perm[i] of the original
        let mut inv = [0usize; 5];
        for (i, &o) in perm.iter().enumerate() {
            inv[o] = i;
        }
        let features = g.features().select(Axis(0), &perm);
        let edges = g
            .edges()
            .iter()
            .map(|&(u, v)| {
                let (a, b) = (inv[u], inv[v]);
                (a.min(b), a.max(b))
            })
            .collect();
        let labels = perm.iter().map(|&o| g.labels().unwrap()[o]).collect();
        let pg = Graph::new(features, edges, Some(labels), Some(2)).unwrap();

        let original = predict_logits(&p, &g).unwrap();
        let permuted = predict_logits(&p, &pg).unwrap();
        for (i, &o) in perm.iter().enumerate() {
            for k in 0..2 {
                assert!((permuted[[i, k]] - original[[o, k]]).abs() <= 1e-10);
            }
        }
    }
}
