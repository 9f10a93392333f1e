//! Imbalance-aware classification metrics and an MMD diagnostic.
//!
//! Precision, recall and F1 are 0 whenever their denominator vanishes.
//! Macro and weighted averages run over the classes that occur in either
//! the ground truth or the predictions.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[t][p]`: nodes of true class `t` predicted as `p`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }
}

pub fn confusion(
    pred: &[usize],
    truth: &[usize],
    mask: &[bool],
    num_classes: usize,
) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() || mask.len() != truth.len() {
        return Err(Error::Shape(format!(
            "pred {}, truth {}, mask {}",
            pred.len(),
            truth.len(),
            mask.len()
        )));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for i in (0..pred.len()).filter(|&i| mask[i]) {
        let (t, p) = (truth[i], pred[i]);
        if t >= num_classes || p >= num_classes {
            return Err(Error::Input(format!(
                "node {i}: label pair ({t}, {p}) outside 0..{num_classes}"
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1_macro: f64,
    pub f1_weighted: f64,
    pub f1_micro: f64,
    pub accuracy: f64,
    /// Largest over smallest support among classes present in the truth.
    pub rho: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_scores(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetrics("confusion matrix is empty".into()));
    }
    let c = cm.num_classes();
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|k| {
            let tp = cm.counts[k][k];
            let precision = ratio(tp, cm.predicted(k));
            let recall = ratio(tp, cm.support(k));
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support: cm.support(k),
            }
        })
        .collect();

    let active: Vec<usize> = (0..c)
        .filter(|&k| cm.support(k) > 0 || cm.predicted(k) > 0)
        .collect();
    let f1_macro = active.iter().map(|&k| per_class[k].f1).sum::<f64>() / active.len() as f64;
    let f1_weighted = per_class
        .iter()
        .map(|m| m.support as f64 * m.f1)
        .sum::<f64>()
        / total as f64;
    let correct: u64 = (0..c).map(|k| cm.counts[k][k]).sum();
    let accuracy = correct as f64 / total as f64;
    let supports: Vec<u64> = (0..c).map(|k| cm.support(k)).filter(|&s| s > 0).collect();
    let rho = *supports.iter().max().unwrap() as f64 / *supports.iter().min().unwrap() as f64;

    Ok(MetricsReport {
        f1_macro,
        f1_weighted,
        // single-label: global TP / total
        f1_micro: accuracy,
        accuracy,
        rho,
        per_class,
    })
}

/// Convenience: metrics of argmax predictions over masked nodes.
pub fn evaluate(
    pred: &[usize],
    truth: &[usize],
    mask: &[bool],
    num_classes: usize,
) -> Result<MetricsReport> {
    f1_scores(&confusion(pred, truth, mask, num_classes)?)
}

/// Largest over smallest class count among labeled, masked nodes.
pub fn imbalance_ratio(labels: &[Option<usize>], mask: Option<&[bool]>) -> Result<f64> {
    let mut counts = std::collections::BTreeMap::<usize, u64>::new();
    for (i, l) in labels.iter().enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        if let Some(l) = l {
            *counts.entry(*l).or_default() += 1;
        }
    }
    let max = counts.values().max().ok_or_else(|| Error::UndefinedMetrics("no labeled nodes".into()))?;
    let min = counts.values().min().unwrap();
    Ok(*max as f64 / *min as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    Median,
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median of pooled pairwise Euclidean distances; 1.0 if that median is 0.
pub fn median_bandwidth(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let pooled: Vec<_> = x.rows().into_iter().chain(y.rows()).collect();
    let mut d = Vec::new();
    for i in 0..pooled.len() {
        for j in (i + 1)..pooled.len() {
            d.push(sq_dist(pooled[i], pooled[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Biased (V-statistic) MMD with an RBF kernel `exp(-|a-b|^2 / (2 h^2))`.
pub fn mmd_rbf(x: &Array2<f64>, y: &Array2<f64>, bandwidth: Bandwidth) -> Result<f64> {
    if x.ncols() == 0 || y.ncols() == 0 {
        return Err(Error::Input("MMD needs at least one dimension".into()));
    }
    if x.ncols() != y.ncols() {
        return Err(Error::Shape(format!("{} vs {} dimensions", x.ncols(), y.ncols())));
    }
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::Input("MMD needs at least one sample per set".into()));
    }
    let h = match bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 => h,
        Bandwidth::Fixed(h) => return Err(Error::Input(format!("bandwidth {h} must be > 0"))),
        Bandwidth::Median => median_bandwidth(x, y),
    };
    let gamma = 1.0 / (2.0 * h * h);
    let mean_kernel = |a: &Array2<f64>, b: &Array2<f64>| {
        let mut s = 0.0;
        for ra in a.rows() {
            for rb in b.rows() {
                s += (-gamma * sq_dist(ra, rb)).exp();
            }
        }
        s / (a.nrows() * b.nrows()) as f64
    };
    let mmd2 = mean_kernel(x, x) + mean_kernel(y, y) - 2.0 * mean_kernel(x, y);
    Ok(mmd2.max(0.0).sqrt())
}
