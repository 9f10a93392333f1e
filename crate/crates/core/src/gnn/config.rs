use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Gcn,
    Gat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    #[serde(default)]
    pub input_dim: usize,
    pub hidden_dim: usize,
    #[serde(default)]
    pub num_classes: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// Attention heads in the first GAT layer; ignored for GCN.
    #[serde(default = "default_heads")]
    pub num_heads: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_dropout() -> f64 {
    0.5
}

fn default_heads() -> usize {
    1
}

impl ModelConfig {
    pub fn gcn(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        Self {
            architecture: Architecture::Gcn,
            input_dim,
            hidden_dim,
            num_classes,
            dropout: default_dropout(),
            num_heads: 1,
            seed: 0,
        }
    }

    pub fn gat(input_dim: usize, hidden_dim: usize, num_classes: usize, num_heads: usize) -> Self {
        Self {
            architecture: Architecture::Gat,
            num_heads,
            ..Self::gcn(input_dim, hidden_dim, num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.input_dim == 0 || self.num_classes == 0 {
            return Err(Error::Config("model dimensions must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.architecture == Architecture::Gat && self.num_heads == 0 {
            return Err(Error::Config("GAT needs at least one head".into()));
        }
        Ok(())
    }

    /// Width of the hidden representation fed to the output layer.
    pub fn hidden_width(&self) -> usize {
        match self.architecture {
            Architecture::Gcn => self.hidden_dim,
            Architecture::Gat => self.hidden_dim * self.num_heads,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_lr() -> f64 {
    0.005
}
fn default_wd() -> f64 {
    5e-4
}
fn default_max_epochs() -> usize {
    500
}
fn default_patience() -> usize {
    100
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            weight_decay: default_wd(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("learning rate must be > 0 and weight decay >= 0".into()));
        }
        Ok(())
    }
}
