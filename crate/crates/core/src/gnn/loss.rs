use ndarray::Array2;

use super::model::{backward, forward_cached, Mode, PreparedGraph};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;

fn masked_nodes(labels: &[Option<usize>], mask: &[bool], rows: usize) -> Result<Vec<(usize, usize)>> {
    if labels.len() != rows || mask.len() != rows {
        return Err(Error::Shape(format!(
            "{} labels / {} mask entries for {rows} logit rows",
            labels.len(),
            mask.len()
        )));
    }
    let nodes: Vec<(usize, usize)> = (0..rows)
        .filter(|&i| mask[i])
        .map(|i| {
            labels[i]
                .map(|l| (i, l))
                .ok_or_else(|| Error::Input(format!("masked node {i} has no label")))
        })
        .collect::<Result<_>>()?;
    if nodes.is_empty() {
        return Err(Error::Input("loss mask selects no nodes".into()));
    }
    Ok(nodes)
}

/// Mean cross-entropy over masked nodes and its gradient w.r.t. the logits.
pub fn cross_entropy_with_grad(
    logits: &Array2<f64>,
    labels: &[Option<usize>],
    mask: &[bool],
) -> Result<(f64, Array2<f64>)> {
    let nodes = masked_nodes(labels, mask, logits.nrows())?;
    let c = logits.ncols();
    if let Some(&(i, l)) = nodes.iter().find(|(_, l)| *l >= c) {
        return Err(Error::Shape(format!("node {i} label {l} exceeds {c} logit columns")));
    }
    let scale = 1.0 / nodes.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.dim());
    for (i, l) in nodes {
        let row = logits.row(i);
        let lse = log_sum_exp(row);
        loss += lse - row[l];
        let mut g = grad.row_mut(i);
        for k in 0..c {
            g[k] = (row[k] - lse).exp() * scale;
        }
        g[l] -= scale;
    }
    Ok((loss * scale, grad))
}

/// Mean masked cross-entropy plus `weight_decay * ||params||^2 / 2`.
pub fn cross_entropy_loss(
    logits: &Array2<f64>,
    labels: &[Option<usize>],
    mask: &[bool],
    weight_decay: f64,
    params: &ModelParams,
) -> Result<f64> {
    let (ce, _) = cross_entropy_with_grad(logits, labels, mask)?;
    Ok(ce + 0.5 * weight_decay * params.squared_norm())
}

/// Loss and its gradient w.r.t. every parameter.
///
/// `dropout_seed = None` evaluates the network in eval mode.
pub fn gradients(
    params: &ModelParams,
    graph: &PreparedGraph,
    labels: &[Option<usize>],
    mask: &[bool],
    weight_decay: f64,
    dropout_seed: Option<u64>,
) -> Result<(f64, ModelParams)> {
    let mode = if dropout_seed.is_some() { Mode::Train } else { Mode::Eval };
    let cache = forward_cached(params, graph, mode, dropout_seed.unwrap_or(0))?;
    let (ce, d_logits) = cross_entropy_with_grad(&cache.logits, labels, mask)?;
    let mut grads = backward(params, graph, &cache, &d_logits)?;
    if weight_decay != 0.0 {
        for (g, p) in grads.tensors_mut().iter_mut().zip(params.tensors()) {
            g.scaled_add(weight_decay, p);
        }
    }
    if let Some(i) = grads
        .tensors()
        .iter()
        .position(|t| t.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::NonFiniteGradient(params.tensor_name(i)));
    }
    Ok((ce + 0.5 * weight_decay * params.squared_norm(), grads))
}
