//! Feature extractor, prototype classifier and domain discriminator.
//!
//! A [`ModelBundle`] splits a classifier into a feature extractor (an MLP
//! ending in a linear layer), a bias-free linear classifier whose rows are
//! the class prototypes, and a two-way discriminator used only during
//! adaptation.

mod checkpoint;
mod eval;
mod loss;
pub mod mlp;
mod pretrain;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, NamedArray,
    CHECKPOINT_SCHEMA_VERSION};
pub use eval::{evaluate, evaluate_predictions, predict, Evaluation};
pub use loss::{classification_grads, cross_entropy, cross_entropy_with_grad, ClassificationGrads};
pub use mlp::{Dense, Mlp, MlpCache, MlpGrads};
pub use pretrain::{pretrain_source, PretrainConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VdaError};
use crate::linalg::Matrix;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub feature_dim: usize,
    #[serde(default)]
    pub hidden_widths: Vec<usize>,
    pub num_classes: usize,
    #[serde(default = "default_discriminator_widths")]
    pub discriminator_widths: Vec<usize>,
    /// Use no extractor layers at all; requires `input_dim == feature_dim`.
    #[serde(default)]
    pub identity_extractor: bool,
}

fn default_discriminator_widths() -> Vec<usize> {
    vec![1024, 1024]
}

/// Width of the discriminator output: virtual vs. target.
pub const DISCRIMINATOR_OUTPUTS: usize = 2;
/// Discriminator output index for the virtual domain (domain label 1).
pub const VIRTUAL_DOMAIN: usize = 1;

impl NetworkSpec {
    pub fn new(input_dim: usize, feature_dim: usize, hidden_widths: Vec<usize>, num_classes: usize) -> Self {
        NetworkSpec {
            input_dim,
            feature_dim,
            hidden_widths,
            num_classes,
            discriminator_widths: default_discriminator_widths(),
            identity_extractor: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(VdaError::Parameter(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        let widths = [self.input_dim, self.feature_dim]
            .into_iter()
            .chain(self.hidden_widths.iter().copied())
            .chain(self.discriminator_widths.iter().copied());
        if widths.into_iter().any(|w| w == 0) {
            return Err(VdaError::Parameter("all layer widths must be at least 1".into()));
        }
        if self.identity_extractor
            && (self.input_dim != self.feature_dim || !self.hidden_widths.is_empty())
        {
            return Err(VdaError::Parameter(
                "an identity extractor needs input_dim == feature_dim and no hidden layers".into(),
            ));
        }
        Ok(())
    }

    fn extractor_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_widths);
        dims.push(self.feature_dim);
        dims
    }

    fn discriminator_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.feature_dim];
        dims.extend(&self.discriminator_widths);
        dims.push(DISCRIMINATOR_OUTPUTS);
        dims
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub spec: NetworkSpec,
    pub extractor: Mlp,
    /// `K × d`, one row per class, no bias.
    pub classifier: Matrix,
    pub discriminator: Mlp,
}

impl ModelBundle {
    /// Fresh parameters drawn from independent streams of `seed`.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let extractor = if spec.identity_extractor {
            Mlp::identity()
        } else {
            Mlp::init(&spec.extractor_dims(), &mut rng::stream(seed, "init/extractor"))
        };
        let classifier = Mlp::init(
            &[spec.feature_dim, spec.num_classes],
            &mut rng::stream(seed, "init/classifier"),
        )
        .layers
        .remove(0)
        .weight;
        Ok(ModelBundle {
            spec: spec.clone(),
            extractor,
            classifier,
            discriminator: Self::fresh_discriminator(spec, seed),
        })
    }

    pub fn fresh_discriminator(spec: &NetworkSpec, seed: u64) -> Mlp {
        Mlp::init(&spec.discriminator_dims(), &mut rng::stream(seed, "init/discriminator"))
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let (k, d) = self.classifier.shape();
        if k != self.spec.num_classes || d != self.spec.feature_dim {
            return Err(VdaError::Shape(format!(
                "classifier is {k}x{d}, spec requires {}x{}",
                self.spec.num_classes, self.spec.feature_dim
            )));
        }
        if !self.classifier.is_finite() || !self.extractor.is_finite() || !self.discriminator.is_finite() {
            return Err(VdaError::InvalidValue("model parameters contain NaN or Inf".into()));
        }
        Ok(())
    }
}

/// `F(X)`: one feature row of width `d` per input row.
pub fn forward_features(bundle: &ModelBundle, inputs: &Matrix) -> Result<Matrix> {
    if inputs.rows() == 0 {
        return Err(VdaError::Shape("empty input batch".into()));
    }
    if inputs.cols() != bundle.spec.input_dim {
        return Err(VdaError::Shape(format!(
            "expected inputs of width {}, got {}",
            bundle.spec.input_dim,
            inputs.cols()
        )));
    }
    bundle.extractor.forward(inputs)
}

/// Logits `f·Wᵀ`.
pub fn classify(bundle: &ModelBundle, features: &Matrix) -> Result<Matrix> {
    if features.cols() != bundle.spec.feature_dim {
        return Err(VdaError::Shape(format!(
            "expected features of width {}, got {}",
            bundle.spec.feature_dim,
            features.cols()
        )));
    }
    features.matmul_transposed(&bundle.classifier)
}

/// Row-wise softmax with max-subtraction.
pub fn softmax_probs(logits: &Matrix) -> Result<Matrix> {
    if let Some(i) = logits.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(VdaError::InvalidValue(format!(
            "non-finite logit at row {}",
            i / logits.cols().max(1)
        )));
    }
    let mut out = logits.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    Ok(out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Class probabilities for raw inputs.
pub fn predict_probs(bundle: &ModelBundle, inputs: &Matrix) -> Result<Matrix> {
    let f = forward_features(bundle, inputs)?;
    softmax_probs(&classify(bundle, &f)?)
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
