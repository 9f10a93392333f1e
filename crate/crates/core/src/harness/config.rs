use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::CalibrationSpec;
use crate::dataset::{generate_sbm, load_canonical, NoiseKind, SbmConfig};
use crate::error::{Error, Result};
use crate::gnn::{ModelConfig, TrainConfig};
use crate::graph::{Graph, StatsScope};
use crate::neutral::NeutralConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// Canonical dataset directory.
    Path(PathBuf),
    Sbm(SbmConfig),
}

impl DatasetSource {
    pub fn load(&self) -> Result<Graph> {
        match self {
            Self::Path(p) => load_canonical(p),
            Self::Sbm(cfg) => generate_sbm(cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    #[serde(default = "default_five")]
    pub num_seeds: usize,
    #[serde(default = "default_five")]
    pub k_folds: usize,
    #[serde(default = "default_frac")]
    pub train_frac: f64,
    #[serde(default = "default_frac")]
    pub val_frac: f64,
    #[serde(default = "default_five")]
    pub min_per_class: usize,
    #[serde(default)]
    pub base_seed: u64,
}

fn default_five() -> usize {
    5
}

fn default_frac() -> f64 {
    0.1
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            num_seeds: 5,
            k_folds: 5,
            train_frac: 0.1,
            val_frac: 0.1,
            min_per_class: 5,
            base_seed: 0,
        }
    }
}

impl Protocol {
    /// Seed of run `run_index`; also seeds the model, training and neutral graph.
    pub fn run_seed(&self, run_index: usize) -> u64 {
        self.base_seed + run_index as u64
    }

    /// Seed of the stratified split for a given run and fold.
    pub fn split_seed(&self, run_index: usize, fold_id: usize) -> u64 {
        self.run_seed(run_index) + 1000 * fold_id as u64
    }
}

/// Noise levels applied to a fixed base dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSweep {
    pub kind: NoiseKind,
    pub levels: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// `input_dim` and `num_classes` may be 0 to take them from the dataset.
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub neutral: NeutralConfig,
    #[serde(default)]
    pub stats_scope: StatsScope,
    #[serde(default = "default_specs")]
    pub calibration: Vec<CalibrationSpec>,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub noise: Option<NoiseSweep>,
    #[serde(default)]
    pub rho_sweep: Option<Vec<f64>>,
    #[serde(default = "default_lambdas")]
    pub lambda_grid: Vec<f64>,
    pub output_dir: PathBuf,
    /// Worker threads for independent runs; does not affect results.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_specs() -> Vec<CalibrationSpec> {
    vec![CalibrationSpec::NONE, CalibrationSpec::SUBTRACT]
}

fn default_lambdas() -> Vec<f64> {
    vec![0.5, 0.75, 1.0, 1.25, 1.5]
}

impl ExperimentConfig {
    /// Reads a JSON config; a relative dataset path is taken relative to the
    /// config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let DatasetSource::Path(p) = &mut cfg.dataset {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.protocol;
        if p.num_seeds == 0 {
            return Err(Error::Config("num_seeds must be at least 1".into()));
        }
        if p.k_folds == 0 {
            return Err(Error::Config("k_folds must be at least 1".into()));
        }
        if !(p.train_frac >= 0.0 && p.val_frac >= 0.0 && p.train_frac + p.val_frac < 1.0) {
            return Err(Error::Config(format!(
                "split fractions {} + {} must be nonnegative and sum below 1",
                p.train_frac, p.val_frac
            )));
        }
        if self.calibration.is_empty() {
            return Err(Error::Config("at least one calibration spec is required".into()));
        }
        for spec in &self.calibration {
            spec.validate()?;
        }
        for &l in &self.lambda_grid {
            CalibrationSpec::scale(l).validate()?;
        }
        if let Some(rhos) = &self.rho_sweep {
            if rhos.iter().any(|r| !(*r >= 1.0)) {
                return Err(Error::Config("rho_sweep values must be >= 1".into()));
            }
        }
        if let Some(noise) = &self.noise {
            if noise.levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
                return Err(Error::Config("noise levels must lie in [0, 1]".into()));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.neutral.validate()?;
        self.train.validate()?;
        let mut probe = self.model.clone();
        probe.input_dim = probe.input_dim.max(1);
        probe.num_classes = probe.num_classes.max(1);
        probe.validate()
    }

    /// Short hex digest of everything that influences results.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.threads = None;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        digest(json.as_bytes())
    }

    /// Model config with dimensions filled in from `graph`.
    pub(crate) fn model_for(&self, graph: &Graph) -> Result<ModelConfig> {
        let mut mc = self.model.clone();
        let c = graph
            .num_classes()
            .ok_or_else(|| Error::Input("experiment dataset needs labels".into()))?;
        if mc.input_dim == 0 {
            mc.input_dim = graph.num_features();
        }
        if mc.num_classes == 0 {
            mc.num_classes = c;
        }
        if mc.input_dim != graph.num_features() || mc.num_classes != c {
            return Err(Error::Config(format!(
                "model expects {} features / {} classes, dataset has {} / {c}",
                mc.input_dim,
                mc.num_classes,
                graph.num_features()
            )));
        }
        mc.validate()?;
        Ok(mc)
    }
}

pub(crate) fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dataset": {"sbm": {"num_classes": 3, "total_nodes": 90, "rho": 2.0, "p_intra": 0.1,
                    "p_inter": 0.01, "feature_dim": 4, "class_mean_separation": 2.0,
                    "feature_std": 1.0, "seed": 1}},
        "model": {"architecture": "gcn", "input_dim": 0, "hidden_dim": 8, "num_classes": 0},
        "output_dir": "out"
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.protocol, Protocol::default());
        assert_eq!(cfg.calibration, default_specs());
        assert_eq!(cfg.lambda_grid.len(), 5);
    }

    #[test]
    fn hash_ignores_output_location() {
        let a: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.threads = Some(3);
        assert_eq!(a.hash(), b.hash());
        b.protocol.num_seeds = 2;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn rejects_bad_protocol() {
        let mut cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.protocol.num_seeds = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.protocol.num_seeds = 1;
        cfg.protocol.train_frac = 0.6;
        cfg.protocol.val_frac = 0.4;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn seed_derivation() {
        let p = Protocol {
            base_seed: 10,
            ..Protocol::default()
        };
        assert_eq!(p.run_seed(3), 13);
        assert_eq!(p.split_seed(3, 2), 2013);
    }
}
