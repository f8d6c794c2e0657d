use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptation::{AdaptConfig, GeneratorLoss};
use crate::datasets::ShiftSpec;
use crate::error::{Result, VdaError};
use crate::models::{NetworkSpec, PretrainConfig};
use crate::optim::SgdConfig;
use crate::virtual_domain::DistanceMetric;

/// Where the source/target pair comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(ShiftSpec),
    /// Comma-separated files with a `label` column. Target labels are used
    /// for evaluation only.
    Tabular { source: PathBuf, target: PathBuf },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(ShiftSpec::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkSpec,
    pub lambda: f64,
    pub r_percent: f64,
    pub eta0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub extractor_lr_factor: f64,
    pub pretrain_epochs: usize,
    pub adapt_epochs: usize,
    pub tc_enabled: bool,
    pub metric: DistanceMetric,
    pub normalize_target_features: bool,
    pub normalize_virtual_features: bool,
    pub renormalize_weights: bool,
    pub generator_loss: GeneratorLoss,
    pub alpha_override: Option<f64>,
    pub seed: u64,
    pub dataset: DatasetSource,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let shift = ShiftSpec::default();
        ExperimentConfig {
            network: NetworkSpec::new(shift.input_dim, 16, vec![64], shift.num_classes),
            lambda: 6.0,
            r_percent: 70.0,
            eta0: 1e-2,
            momentum: 0.9,
            weight_decay: 1e-3,
            batch_size: 32,
            extractor_lr_factor: 0.1,
            pretrain_epochs: 100,
            adapt_epochs: 15,
            tc_enabled: true,
            metric: DistanceMetric::SquaredEuclidean,
            normalize_target_features: true,
            normalize_virtual_features: false,
            renormalize_weights: false,
            generator_loss: GeneratorLoss::NonSaturating,
            alpha_override: None,
            seed: 0,
            dataset: DatasetSource::Synthetic(shift),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| VdaError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| VdaError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| VdaError::Serialization(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(VdaError::Config(msg));
        self.network.validate().map_err(|e| VdaError::Config(e.to_string()))?;
        for (name, v) in [("lambda", self.lambda), ("eta0", self.eta0), ("extractor_lr_factor", self.extractor_lr_factor)]
        {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.r_percent > 0.0 && self.r_percent <= 100.0) {
            return bad(format!("r_percent must lie in (0, 100], got {}", self.r_percent));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if let Some(a) = self.alpha_override {
            if !(0.0..=1.0).contains(&a) {
                return bad(format!("alpha_override must lie in [0, 1], got {a}"));
            }
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate().map_err(|e| VdaError::Config(e.to_string()))?;
            if spec.input_dim != self.network.input_dim || spec.num_classes != self.network.num_classes {
                return bad(format!(
                    "dataset has {} classes of width {}, network expects {} classes of width {}",
                    spec.num_classes, spec.input_dim, self.network.num_classes, self.network.input_dim
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config is always serializable");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig { momentum: self.momentum, weight_decay: self.weight_decay }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            epochs: self.pretrain_epochs,
            batch_size: self.batch_size,
            eta0: self.eta0,
            sgd: self.sgd(),
            seed: self.seed,
        }
    }

    pub fn adapt_config(&self) -> AdaptConfig {
        AdaptConfig {
            epochs: self.adapt_epochs,
            batch_size: self.batch_size,
            eta0: self.eta0,
            sgd: self.sgd(),
            extractor_lr_factor: self.extractor_lr_factor,
            r_percent: self.r_percent,
            tc_enabled: self.tc_enabled,
            alpha_override: self.alpha_override,
            normalize_target_features: self.normalize_target_features,
            normalize_virtual_features: self.normalize_virtual_features,
            renormalize_weights: self.renormalize_weights,
            generator_loss: self.generator_loss,
            seed: self.seed,
        }
    }
}
