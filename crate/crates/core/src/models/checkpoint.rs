//! JSON parameter archive.
//!
//! ```text
//! {
//!   "metadata": { "schema_version": 1, "spec": {...}, "config_hash": "...", "seed": 7 },
//!   "arrays": [ { "name": "extractor.0.weight", "shape": [64, 16], "data": [...] }, ... ]
//! }
//! ```
//!
//! Floats are written in shortest round-trip form and parsed with exact
//! rounding, so save/load is lossless.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dense, Mlp, ModelBundle, NetworkSpec};
use crate::error::{Result, VdaError};
use crate::linalg::Matrix;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub schema_version: u32,
    pub spec: NetworkSpec,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub metadata: CheckpointMeta,
    pub arrays: Vec<NamedArray>,
}

fn push_mlp(out: &mut Vec<NamedArray>, prefix: &str, mlp: &Mlp) {
    for (l, layer) in mlp.layers.iter().enumerate() {
        out.push(NamedArray {
            name: format!("{prefix}.{l}.weight"),
            shape: vec![layer.weight.rows(), layer.weight.cols()],
            data: layer.weight.as_slice().to_vec(),
        });
        out.push(NamedArray {
            name: format!("{prefix}.{l}.bias"),
            shape: vec![layer.bias.len()],
            data: layer.bias.clone(),
        });
    }
}

impl Checkpoint {
    pub fn from_bundle(bundle: &ModelBundle, config_hash: &str, seed: u64) -> Self {
        let mut arrays = Vec::new();
        push_mlp(&mut arrays, "extractor", &bundle.extractor);
        arrays.push(NamedArray {
            name: "classifier.weight".into(),
            shape: vec![bundle.classifier.rows(), bundle.classifier.cols()],
            data: bundle.classifier.as_slice().to_vec(),
        });
        push_mlp(&mut arrays, "discriminator", &bundle.discriminator);
        Checkpoint {
            metadata: CheckpointMeta {
                schema_version: CHECKPOINT_SCHEMA_VERSION,
                spec: bundle.spec.clone(),
                config_hash: config_hash.to_string(),
                seed,
            },
            arrays,
        }
    }

    fn take(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| VdaError::Schema(format!("checkpoint is missing array '{name}'")))
    }

    fn matrix(&self, name: &str) -> Result<Matrix> {
        let a = self.take(name)?;
        match a.shape[..] {
            [r, c] => Matrix::from_vec(r, c, a.data.clone()),
            _ => Err(VdaError::Schema(format!("array '{name}' is not two-dimensional"))),
        }
    }

    fn mlp(&self, prefix: &str) -> Result<Mlp> {
        let mut layers = Vec::new();
        let mut l = 0;
        while self.arrays.iter().any(|a| a.name == format!("{prefix}.{l}.weight")) {
            let weight = self.matrix(&format!("{prefix}.{l}.weight"))?;
            let bias = self.take(&format!("{prefix}.{l}.bias"))?;
            if bias.shape != [weight.rows()] || bias.data.len() != weight.rows() {
                return Err(VdaError::Schema(format!("bias of {prefix}.{l} has the wrong shape")));
            }
            layers.push(Dense { weight, bias: bias.data.clone() });
            l += 1;
        }
        Ok(Mlp { layers })
    }

    pub fn to_bundle(&self) -> Result<ModelBundle> {
        if self.metadata.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(VdaError::Schema(format!(
                "unsupported checkpoint schema version {}",
                self.metadata.schema_version
            )));
        }
        let bundle = ModelBundle {
            spec: self.metadata.spec.clone(),
            extractor: self.mlp("extractor")?,
            classifier: self.matrix("classifier.weight")?,
            discriminator: self.mlp("discriminator")?,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    bundle: &ModelBundle,
    config_hash: &str,
    seed: u64,
) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(&Checkpoint::from_bundle(bundle, config_hash, seed))
        .map_err(|e| VdaError::Serialization(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| VdaError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelBundle, CheckpointMeta)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| VdaError::io(path, e))?;
    let ckpt: Checkpoint =
        serde_json::from_str(&text).map_err(|e| VdaError::Serialization(e.to_string()))?;
    Ok((ckpt.to_bundle()?, ckpt.metadata))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_is_lossless() {
        let spec = NetworkSpec { discriminator_widths: vec![6, 5], ..NetworkSpec::new(3, 4, vec![7], 3) };
        let mut bundle = ModelBundle::init(&spec, 99).unwrap();
        // values that need all 17 digits
        bundle.classifier[(0, 0)] = 0.1 + 0.2;
        bundle.classifier[(1, 2)] = 1.0 / 3.0;
        bundle.extractor.layers[0].bias[0] = 5e-324;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_checkpoint(&p, &bundle, "abc123", 7).unwrap();
        let (back, meta) = load_checkpoint(&p).unwrap();
        assert_eq!(back, bundle);
        assert_eq!(meta.config_hash, "abc123");
        assert_eq!(meta.seed, 7);
        assert_eq!(meta.schema_version, CHECKPOINT_SCHEMA_VERSION);
    }

    #[test]
    fn identity_extractor_round_trips() {
        let spec = NetworkSpec {
            identity_extractor: true,
            discriminator_widths: vec![4, 4],
            ..NetworkSpec::new(3, 3, vec![], 2)
        };
        let bundle = ModelBundle::init(&spec, 1).unwrap();
        let ckpt = Checkpoint::from_bundle(&bundle, "", 0);
        assert_eq!(ckpt.to_bundle().unwrap(), bundle);
    }

    #[test]
    fn missing_array_is_schema_error() {
        let spec = NetworkSpec { discriminator_widths: vec![4, 4], ..NetworkSpec::new(2, 2, vec![], 2) };
        let mut ckpt = Checkpoint::from_bundle(&ModelBundle::init(&spec, 1).unwrap(), "", 0);
        ckpt.arrays.retain(|a| a.name != "classifier.weight");
        assert!(matches!(ckpt.to_bundle(), Err(VdaError::Schema(_))));
    }
}
