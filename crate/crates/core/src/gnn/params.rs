use ndarray::{Array2, ArrayView1};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::{Architecture, ModelConfig};
use crate::error::{Error, Result};
use crate::rng;

/// Model weights as an ordered list of tensors.
///
/// GCN: `[W0 (in x hidden), W1 (hidden x C)]`.
/// GAT: per head `[W0_k (in x hidden), a_src_k (1 x hidden), a_dst_k (1 x hidden)]`,
/// then `[W1 (heads*hidden x C), a_src (1 x C), a_dst (1 x C)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    config: ModelConfig,
    tensors: Vec<Array2<f64>>,
}

pub(crate) fn tensor_shapes(config: &ModelConfig) -> Vec<(usize, usize)> {
    match config.architecture {
        Architecture::Gcn => vec![
            (config.input_dim, config.hidden_dim),
            (config.hidden_dim, config.num_classes),
        ],
        Architecture::Gat => {
            let mut shapes = Vec::new();
            for _ in 0..config.num_heads {
                shapes.push((config.input_dim, config.hidden_dim));
                shapes.push((1, config.hidden_dim));
                shapes.push((1, config.hidden_dim));
            }
            shapes.push((config.hidden_width(), config.num_classes));
            shapes.push((1, config.num_classes));
            shapes.push((1, config.num_classes));
            shapes
        }
    }
}

impl ModelParams {
    /// Glorot-uniform initialization from `config.seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::seeded(config.seed);
        let tensors = tensor_shapes(config)
            .into_iter()
            .map(|(r, c)| {
                // attention vectors are (1 x o): fan_in = o, fan_out = 1
                let (fan_in, fan_out) = if r == 1 { (c, 1) } else { (r, c) };
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Array2::from_shape_simple_fn((r, c), || rng.random_range(-limit..limit))
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            tensors: tensor_shapes(config)
                .into_iter()
                .map(Array2::zeros)
                .collect(),
        })
    }

    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Array2<f64>>) -> Result<Self> {
        config.validate()?;
        let shapes = tensor_shapes(config);
        if shapes.len() != tensors.len()
            || shapes.iter().zip(&tensors).any(|(s, t)| *s != t.dim())
        {
            return Err(Error::Shape("tensor shapes do not match model config".into()));
        }
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    pub fn from_flat(config: &ModelConfig, flat: &[f64]) -> Result<Self> {
        config.validate()?;
        let shapes = tensor_shapes(config);
        let total: usize = shapes.iter().map(|(r, c)| r * c).sum();
        if flat.len() != total {
            return Err(Error::Shape(format!(
                "flat parameter vector has {} entries, model needs {total}",
                flat.len()
            )));
        }
        if let Some(i) = flat.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("parameter {i} is not finite")));
        }
        let mut offset = 0;
        let tensors = shapes
            .into_iter()
            .map(|(r, c)| {
                let t = Array2::from_shape_vec((r, c), flat[offset..offset + r * c].to_vec())
                    .expect("length checked");
                offset += r * c;
                t
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Array2<f64>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(Array2::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for t in &self.tensors {
            out.extend(t.iter().copied());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        *self = Self::from_flat(&self.config, flat)?;
        Ok(())
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors.iter().flat_map(|t| t.iter()).map(|v| v * v).sum()
    }

    /// Human-readable name of tensor `i`, used in error messages.
    pub fn tensor_name(&self, i: usize) -> String {
        match self.config.architecture {
            Architecture::Gcn => format!("layer {i} weight"),
            Architecture::Gat => {
                let heads = self.config.num_heads;
                let kind = ["weight", "source attention", "target attention"];
                if i < 3 * heads {
                    format!("layer 0 head {} {}", i / 3, kind[i % 3])
                } else {
                    format!("layer 1 {}", kind[i - 3 * heads])
                }
            }
        }
    }

    pub(crate) fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.tensors[i].row(0)
    }
}
