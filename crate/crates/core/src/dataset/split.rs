//! Stratified train/val/test assignment with a per-class training floor.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, TEST, TRAIN, VAL};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub fold_id: Option<usize>,
}

impl SplitAssignment {
    fn to_mask(idx: &[usize], n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in idx {
            m[i] = true;
        }
        m
    }

    pub fn train_mask(&self, n: usize) -> Vec<bool> {
        Self::to_mask(&self.train, n)
    }

    pub fn val_mask(&self, n: usize) -> Vec<bool> {
        Self::to_mask(&self.val, n)
    }

    pub fn test_mask(&self, n: usize) -> Vec<bool> {
        Self::to_mask(&self.test, n)
    }

    /// Copy of `graph` with this split attached as train/val/test masks.
    pub fn apply(&self, graph: &Graph) -> Result<Graph> {
        let n = graph.num_nodes();
        let mut g = graph.clone();
        for name in [TRAIN, VAL, TEST] {
            g.set_mask(name, vec![false; n])?;
        }
        g.set_mask(TRAIN, self.train_mask(n))?;
        g.set_mask(VAL, self.val_mask(n))?;
        g.set_mask(TEST, self.test_mask(n))?;
        Ok(g)
    }

    /// Reads a split back from a graph's masks.
    pub fn from_masks(graph: &Graph) -> Option<Self> {
        let idx = |name| {
            graph
                .mask(name)
                .map(|m: &[bool]| (0..m.len()).filter(|&i| m[i]).collect::<Vec<_>>())
        };
        Some(Self {
            train: idx(TRAIN)?,
            val: idx(VAL).unwrap_or_default(),
            test: idx(TEST)?,
            seed: 0,
            fold_id: None,
        })
    }
}

fn round_count(frac: f64, size: usize) -> usize {
    (frac * size as f64).round() as usize
}

/// Per-class proportional split.
///
/// Train and train+val shares are rounded cumulatively per class; a class
/// whose rounded train share falls below `min_per_class` is topped up to it.
/// Everything left goes to test. Unlabeled nodes are never assigned.
pub fn stratified_split(
    graph: &Graph,
    train_frac: f64,
    val_frac: f64,
    min_per_class: usize,
    seed: u64,
) -> Result<SplitAssignment> {
    if !(0.0..=1.0).contains(&train_frac)
        || !(0.0..=1.0).contains(&val_frac)
        || train_frac + val_frac > 1.0
    {
        return Err(Error::Config(format!(
            "invalid split fractions {train_frac}/{val_frac}"
        )));
    }
    let c = graph
        .num_classes()
        .ok_or_else(|| Error::Input("stratified split needs labels".into()))?;
    let labels = graph
        .labels()
        .ok_or_else(|| Error::Input("stratified split needs labels".into()))?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            by_class[*l].push(i);
        }
    }

    let mut rng = rng::seeded(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (class, mut nodes) in by_class.into_iter().enumerate() {
        let size = nodes.len();
        if size == 0 {
            continue;
        }
        if size < min_per_class {
            return Err(Error::Infeasible(format!(
                "class {class} has {size} labeled node(s), fewer than min_per_class = {min_per_class}"
            )));
        }
        nodes.shuffle(&mut rng);
        let n_train = round_count(train_frac, size).max(min_per_class).min(size);
        let n_train_val = round_count(train_frac + val_frac, size).clamp(n_train, size);
        train.extend_from_slice(&nodes[..n_train]);
        val.extend_from_slice(&nodes[n_train..n_train_val]);
        test.extend_from_slice(&nodes[n_train_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitAssignment {
        train,
        val,
        test,
        seed,
        fold_id: None,
    })
}

/// `k` independently stratified splits; fold `i` uses seed `seed + i`.
pub fn kfold_splits(
    graph: &Graph,
    k: usize,
    train_frac: f64,
    val_frac: f64,
    min_per_class: usize,
    seed: u64,
) -> Result<Vec<SplitAssignment>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    (0..k)
        .map(|fold| {
            let mut s = stratified_split(
                graph,
                train_frac,
                val_frac,
                min_per_class,
                seed + fold as u64,
            )?;
            s.fold_id = Some(fold);
            Ok(s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn labeled(sizes: &[usize]) -> Graph {
        let labels: Vec<Option<usize>> = sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &s)| std::iter::repeat_n(Some(c), s))
            .collect();
        let n = labels.len();
        Graph::new(Array2::zeros((n, 1)), vec![], Some(labels), Some(sizes.len())).unwrap()
    }

    fn class_count(g: &Graph, idx: &[usize], class: usize) -> usize {
        let l = g.labels().unwrap();
        idx.iter().filter(|&&i| l[i] == Some(class)).count()
    }

    #[test]
    fn balanced_thousand() {
        let g = labeled(&[500, 500]);
        let s = stratified_split(&g, 0.1, 0.1, 5, 7).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (100, 100, 800));
        assert_eq!(class_count(&g, &s.train, 0), 50);
        assert_eq!(class_count(&g, &s.train, 1), 50);
    }

    #[test]
    fn minority_topped_up() {
        let g = labeled(&[55, 5]);
        let s = stratified_split(&g, 0.1, 0.1, 5, 3).unwrap();
        assert_eq!(class_count(&g, &s.train, 1), 5);
    }

    #[test]
    fn degenerate_all_test() {
        let g = labeled(&[10, 10]);
        let s = stratified_split(&g, 0.0, 0.0, 0, 0).unwrap();
        assert!(s.train.is_empty() && s.val.is_empty());
        assert_eq!(s.test.len(), 20);
    }

    #[test]
    fn too_small_class_is_named() {
        let g = labeled(&[50, 3]);
        match stratified_split(&g, 0.1, 0.1, 5, 0).unwrap_err() {
            Error::Infeasible(msg) => assert!(msg.contains("class 1")),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn kfold_examples() {
        let g = labeled(&[500, 300, 200]);
        let folds = kfold_splits(&g, 5, 0.1, 0.1, 5, 11).unwrap();
        assert_eq!(folds.len(), 5);
        for (i, f) in folds.iter().enumerate() {
            assert_eq!((f.train.len(), f.val.len(), f.test.len()), (100, 100, 800));
            assert_eq!(f.fold_id, Some(i));
            assert_eq!(f.seed, 11 + i as u64);
        }
        assert_ne!(folds[0].train, folds[1].train);
        assert_eq!(folds, kfold_splits(&g, 5, 0.1, 0.1, 5, 11).unwrap());

        let one = kfold_splits(&g, 1, 0.1, 0.1, 5, 11).unwrap();
        let single = stratified_split(&g, 0.1, 0.1, 5, 11).unwrap();
        assert_eq!(one[0].train, single.train);
        assert_eq!(one[0].val, single.val);
        assert_eq!(one[0].test, single.test);
    }

    #[test]
    fn masks_round_trip() {
        let g = labeled(&[30, 20]);
        let s = stratified_split(&g, 0.2, 0.2, 2, 1).unwrap();
        let with = s.apply(&g).unwrap();
        let back = SplitAssignment::from_masks(&with).unwrap();
        assert_eq!((back.train, back.val, back.test), (s.train, s.val, s.test));
    }

    proptest! {
        #[test]
        fn split_properties(
            sizes in proptest::collection::vec(10usize..200, 2..5),
            seed in any::<u64>(),
            min in 0usize..8,
        ) {
            let g = labeled(&sizes);
            let s = stratified_split(&g, 0.1, 0.1, min, seed).unwrap();
            prop_assert_eq!(&s, &stratified_split(&g, 0.1, 0.1, min, seed).unwrap());

            let mut seen = vec![0u8; g.num_nodes()];
            for i in s.train.iter().chain(&s.val).chain(&s.test) {
                seen[*i] += 1;
            }
            prop_assert!(seen.iter().all(|&c| c == 1));

            let total: usize = sizes.iter().sum();
            let topped = sizes.iter().any(|&z| ((0.1 * z as f64).round() as usize) < min);
            for (c, &size) in sizes.iter().enumerate() {
                let tr = class_count(&g, &s.train, c);
                prop_assert!(tr >= min.min((0.1 * size as f64).floor() as usize));
                prop_assert!(tr >= 1 || min == 0);
                if !topped {
                    let expected = size as f64 / total as f64 * s.test.len() as f64;
                    let got = class_count(&g, &s.test, c) as f64;
                    prop_assert!((got - expected).abs() <= 1.0 + 1e-9, "class {} {} vs {}", c, got, expected);
                }
            }
        }
    }
}
