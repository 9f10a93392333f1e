//! Two-layer GCN and GAT forward passes with hand-written reverse mode.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng as _;

use super::config::Architecture;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::graph::{build_adjacency, symmetric_normalize, CsrAdjacency, Graph};
use crate::rng;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A graph with its propagation structures precomputed.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    /// Binary adjacency with self-loops; neighborhoods for attention.
    pub looped: CsrAdjacency,
    /// Symmetrically normalized `looped`.
    pub norm_adj: CsrAdjacency,
    pub features: Array2<f64>,
}

impl PreparedGraph {
    pub fn new(graph: &Graph) -> Result<Self> {
        let looped = build_adjacency(graph, true)?;
        let norm_adj = symmetric_normalize(&looped);
        Ok(Self {
            looped,
            norm_adj,
            features: graph.features().clone(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.nrows()
    }
}

/// Inverted-dropout mask with entries in `{0, 1/(1-p)}`.
pub fn dropout_mask(rows: usize, cols: usize, p: f64, seed: u64) -> Array2<f64> {
    if p == 0.0 {
        return Array2::ones((rows, cols));
    }
    let mut rng = rng::seeded(seed);
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn((rows, cols), || {
        if rng.random::<f64>() < p {
            0.0
        } else {
            keep
        }
    })
}

fn check_input(params: &ModelParams, features: &Array2<f64>, adj: &CsrAdjacency) -> Result<()> {
    let cfg = params.config();
    if features.ncols() != cfg.input_dim {
        return Err(Error::Shape(format!(
            "features have width {}, model expects {}",
            features.ncols(),
            cfg.input_dim
        )));
    }
    if features.nrows() != adj.num_rows() {
        return Err(Error::Shape(format!(
            "{} feature rows for a {}-node adjacency",
            features.nrows(),
            adj.num_rows()
        )));
    }
    Ok(())
}

/// Cached intermediates of one attention layer.
#[derive(Debug, Clone)]
pub struct GatLayerCache {
    z: Array2<f64>,
    /// Pre-LeakyReLU scores aligned with the adjacency's CSR entries.
    raw: Vec<f64>,
    /// Attention coefficients aligned with the adjacency's CSR entries.
    pub alpha: Vec<f64>,
    pub out: Array2<f64>,
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn leaky_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// `out_i = Σ_{j ∈ N(i) ∪ {i}} α_ij (W h_j)` with
/// `α_i· = softmax_j LeakyReLU(a_src·Wh_i + a_dst·Wh_j)`.
pub fn gat_layer_forward(
    adj: &CsrAdjacency,
    h: &Array2<f64>,
    w: &Array2<f64>,
    a_src: ArrayView1<f64>,
    a_dst: ArrayView1<f64>,
) -> GatLayerCache {
    let z = h.dot(w);
    let src = z.dot(&a_src);
    let dst = z.dot(&a_dst);
    let offsets = adj.row_offsets();
    let cols = adj.col_indices();
    let mut raw = vec![0.0; cols.len()];
    let mut alpha = vec![0.0; cols.len()];
    let mut out = Array2::zeros(z.dim());
    for i in 0..adj.num_rows() {
        let span = offsets[i]..offsets[i + 1];
        let mut max = f64::NEG_INFINITY;
        for k in span.clone() {
            raw[k] = src[i] + dst[cols[k]];
            max = max.max(leaky(raw[k]));
        }
        let mut denom = 0.0;
        for k in span.clone() {
            alpha[k] = (leaky(raw[k]) - max).exp();
            denom += alpha[k];
        }
        let mut row = out.row_mut(i);
        for k in span {
            alpha[k] /= denom;
            row.scaled_add(alpha[k], &z.row(cols[k]));
        }
    }
    GatLayerCache { z, raw, alpha, out }
}

pub struct GatLayerGrads {
    pub d_input: Array2<f64>,
    pub d_weight: Array2<f64>,
    pub d_src: Array1<f64>,
    pub d_dst: Array1<f64>,
}

pub fn gat_layer_backward(
    adj: &CsrAdjacency,
    h: &Array2<f64>,
    w: &Array2<f64>,
    a_src: ArrayView1<f64>,
    a_dst: ArrayView1<f64>,
    cache: &GatLayerCache,
    d_out: &Array2<f64>,
) -> GatLayerGrads {
    let offsets = adj.row_offsets();
    let cols = adj.col_indices();
    let z = &cache.z;
    let mut dz = Array2::<f64>::zeros(z.dim());
    let mut d_src_score = Array1::<f64>::zeros(z.nrows());
    let mut d_dst_score = Array1::<f64>::zeros(z.nrows());
    let mut d_alpha = vec![0.0; cols.len()];
    for i in 0..adj.num_rows() {
        let span = offsets[i]..offsets[i + 1];
        let g = d_out.row(i);
        let mut weighted = 0.0;
        for k in span.clone() {
            let j = cols[k];
            dz.row_mut(j).scaled_add(cache.alpha[k], &g);
            d_alpha[k] = g.dot(&z.row(j));
            weighted += cache.alpha[k] * d_alpha[k];
        }
        for k in span {
            let de = cache.alpha[k] * (d_alpha[k] - weighted);
            let du = de * leaky_grad(cache.raw[k]);
            d_src_score[i] += du;
            d_dst_score[cols[k]] += du;
        }
    }
    let d_src = z.t().dot(&d_src_score);
    let d_dst = z.t().dot(&d_dst_score);
    for i in 0..z.nrows() {
        let mut row = dz.row_mut(i);
        row.scaled_add(d_src_score[i], &a_src);
        row.scaled_add(d_dst_score[i], &a_dst);
    }
    GatLayerGrads {
        d_input: dz.dot(&w.t()),
        d_weight: h.t().dot(&dz),
        d_src,
        d_dst,
    }
}

/// Everything the backward pass needs from a forward pass.
pub struct ForwardCache {
    mask: Array2<f64>,
    /// Hidden pre-activation (before dropout).
    pre: Array2<f64>,
    hidden: Array2<f64>,
    gat_first: Vec<GatLayerCache>,
    gat_second: Option<GatLayerCache>,
    pub logits: Array2<f64>,
}

impl ForwardCache {
    /// Hidden-layer pre-activation, before dropout and ReLU.
    pub fn hidden_pre(&self) -> &Array2<f64> {
        &self.pre
    }
}

fn hidden_from_pre(pre: &Array2<f64>, mask: &Array2<f64>) -> Array2<f64> {
    let mut h = pre * mask;
    h.mapv_inplace(|v| v.max(0.0));
    h
}

pub fn forward_cached(
    params: &ModelParams,
    graph: &PreparedGraph,
    mode: Mode,
    dropout_seed: u64,
) -> Result<ForwardCache> {
    check_input(params, &graph.features, &graph.looped)?;
    let cfg = params.config();
    let n = graph.num_nodes();
    let width = cfg.hidden_width();
    let mask = match mode {
        Mode::Train => dropout_mask(n, width, cfg.dropout, dropout_seed),
        Mode::Eval => Array2::ones((n, width)),
    };
    let t = params.tensors();
    match cfg.architecture {
        Architecture::Gcn => {
            let pre = graph.norm_adj.matmul(&graph.features.dot(&t[0]))?;
            let hidden = hidden_from_pre(&pre, &mask);
            let logits = graph.norm_adj.matmul(&hidden.dot(&t[1]))?;
            Ok(ForwardCache {
                mask,
                pre,
                hidden,
                gat_first: Vec::new(),
                gat_second: None,
                logits,
            })
        }
        Architecture::Gat => {
            let h = cfg.hidden_dim;
            let mut pre = Array2::zeros((n, width));
            let mut gat_first = Vec::with_capacity(cfg.num_heads);
            for k in 0..cfg.num_heads {
                let c = gat_layer_forward(
                    &graph.looped,
                    &graph.features,
                    &t[3 * k],
                    params.row(3 * k + 1),
                    params.row(3 * k + 2),
                );
                pre.slice_mut(s![.., k * h..(k + 1) * h]).assign(&c.out);
                gat_first.push(c);
            }
            let hidden = hidden_from_pre(&pre, &mask);
            let last = 3 * cfg.num_heads;
            let second = gat_layer_forward(
                &graph.looped,
                &hidden,
                &t[last],
                params.row(last + 1),
                params.row(last + 2),
            );
            let logits = second.out.clone();
            Ok(ForwardCache {
                mask,
                pre,
                hidden,
                gat_first,
                gat_second: Some(second),
                logits,
            })
        }
    }
}

/// Gradients of a scalar objective given its gradient w.r.t. the logits.
pub fn backward(
    params: &ModelParams,
    graph: &PreparedGraph,
    cache: &ForwardCache,
    d_logits: &Array2<f64>,
) -> Result<ModelParams> {
    let cfg = params.config();
    let t = params.tensors();
    let mut grads: Vec<Array2<f64>> = Vec::with_capacity(t.len());
    let relu_back = |d_hidden: Array2<f64>| -> Array2<f64> {
        let mut d = d_hidden * &cache.mask;
        ndarray::Zip::from(&mut d)
            .and(&cache.hidden)
            .for_each(|d, &h| {
                if h <= 0.0 {
                    *d = 0.0;
                }
            });
        d
    };
    match cfg.architecture {
        Architecture::Gcn => {
            let d_z1 = graph.norm_adj.matmul(d_logits)?;
            let d_w1 = cache.hidden.t().dot(&d_z1);
            let d_pre = relu_back(d_z1.dot(&t[1].t()));
            let d_z0 = graph.norm_adj.matmul(&d_pre)?;
            let d_w0 = graph.features.t().dot(&d_z0);
            grads.push(d_w0);
            grads.push(d_w1);
        }
        Architecture::Gat => {
            let h = cfg.hidden_dim;
            let last = 3 * cfg.num_heads;
            let second = cache.gat_second.as_ref().expect("gat cache");
            let g2 = gat_layer_backward(
                &graph.looped,
                &cache.hidden,
                &t[last],
                params.row(last + 1),
                params.row(last + 2),
                second,
                d_logits,
            );
            let d_pre = relu_back(g2.d_input);
            for k in 0..cfg.num_heads {
                let d_head = d_pre.slice(s![.., k * h..(k + 1) * h]).to_owned();
                let g1 = gat_layer_backward(
                    &graph.looped,
                    &graph.features,
                    &t[3 * k],
                    params.row(3 * k + 1),
                    params.row(3 * k + 2),
                    &cache.gat_first[k],
                    &d_head,
                );
                grads.push(g1.d_weight);
                grads.push(g1.d_src.insert_axis(Axis(0)));
                grads.push(g1.d_dst.insert_axis(Axis(0)));
            }
            grads.push(g2.d_weight);
            grads.push(g2.d_src.insert_axis(Axis(0)));
            grads.push(g2.d_dst.insert_axis(Axis(0)));
        }
    }
    ModelParams::from_tensors(cfg, grads)
}

/// `Â · relu(dropout(Â X W0)) · W1` over a self-looped normalized adjacency.
pub fn gcn_forward(
    params: &ModelParams,
    norm_adj: &CsrAdjacency,
    features: &Array2<f64>,
    mode: Mode,
    dropout_seed: u64,
) -> Result<Array2<f64>> {
    if params.config().architecture != Architecture::Gcn {
        return Err(Error::Input("gcn_forward called with non-GCN parameters".into()));
    }
    check_input(params, features, norm_adj)?;
    let t = params.tensors();
    let pre = norm_adj.matmul(&features.dot(&t[0]))?;
    let mask = match mode {
        Mode::Train => dropout_mask(pre.nrows(), pre.ncols(), params.config().dropout, dropout_seed),
        Mode::Eval => Array2::ones(pre.dim()),
    };
    norm_adj.matmul(&hidden_from_pre(&pre, &mask).dot(&t[1]))
}

pub fn gat_forward(
    params: &ModelParams,
    graph: &Graph,
    features: &Array2<f64>,
    mode: Mode,
    dropout_seed: u64,
) -> Result<Array2<f64>> {
    if params.config().architecture != Architecture::Gat {
        return Err(Error::Input("gat_forward called with non-GAT parameters".into()));
    }
    let mut prepared = PreparedGraph::new(graph)?;
    prepared.features = features.clone();
    Ok(forward_cached(params, &prepared, mode, dropout_seed)?.logits)
}

/// Attention coefficients of one head of the first GAT layer, aligned
/// with `prepared.looped`'s CSR entries.
pub fn gat_attention(params: &ModelParams, prepared: &PreparedGraph, head: usize) -> Result<Vec<f64>> {
    let cfg = params.config();
    if cfg.architecture != Architecture::Gat || head >= cfg.num_heads {
        return Err(Error::Input(format!("no GAT head {head}")));
    }
    check_input(params, &prepared.features, &prepared.looped)?;
    let t = params.tensors();
    Ok(gat_layer_forward(
        &prepared.looped,
        &prepared.features,
        &t[3 * head],
        params.row(3 * head + 1),
        params.row(3 * head + 2),
    )
    .alpha)
}

/// Uncalibrated eval-mode logits.
pub fn predict_logits(params: &ModelParams, graph: &Graph) -> Result<Array2<f64>> {
    predict_prepared(params, &PreparedGraph::new(graph)?)
}

pub fn predict_prepared(params: &ModelParams, graph: &PreparedGraph) -> Result<Array2<f64>> {
    Ok(forward_cached(params, graph, Mode::Eval, 0)?.logits)
}
