use serde::{Deserialize, Serialize};

use super::objectives::{
    discriminator_objective_grads, generator_objective_grads, normalize_rows, normalize_rows_backward,
    uncertainty_weights, GeneratorLoss,
};
use crate::error::{Result, VdaError};
use crate::linalg::Matrix;
use crate::models::{classification_grads, classify, softmax_probs, MlpGrads, ModelBundle};
use crate::optim::{Sgd, SgdConfig};
use crate::rng::Rng;
use crate::virtual_domain::VirtualDomainGmm;

/// How target samples are weighted in the alignment objectives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleWeighting {
    /// Normalized prediction entropy of the current model, detached.
    Entropy,
    /// The same weight for every sample; `Constant(1.0)` is the unweighted objective.
    Constant(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignSettings {
    pub discriminator_lr: f64,
    pub extractor_lr: f64,
    pub weighting: SampleWeighting,
    pub normalize_target_features: bool,
    pub normalize_virtual_features: bool,
    /// Rescale the batch weights to mean 1 before they enter the objectives.
    pub renormalize_weights: bool,
    pub generator_loss: GeneratorLoss,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentStepResult {
    pub d_loss: f64,
    pub g_loss: f64,
    pub mean_alpha: f64,
    pub discriminator_batch_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct AdaptOptimizers {
    pub extractor: Sgd,
    pub discriminator: Sgd,
}

impl AdaptOptimizers {
    pub fn new(config: SgdConfig) -> Self {
        AdaptOptimizers { extractor: Sgd::new(config), discriminator: Sgd::new(config) }
    }
}

/// Per-sample weights for a target batch under the current model.
pub fn target_weights(bundle: &ModelBundle, inputs: &Matrix, weighting: SampleWeighting) -> Result<Vec<f64>> {
    match weighting {
        SampleWeighting::Constant(a) => Ok(vec![a; inputs.rows()]),
        SampleWeighting::Entropy => {
            let feats = bundle.extractor.forward(inputs)?;
            uncertainty_weights(&softmax_probs(&classify(bundle, &feats)?)?)
        }
    }
}

/// Features as the discriminator sees them.
pub fn discriminator_view(features: &Matrix, normalize: bool) -> Matrix {
    if normalize {
        normalize_rows(features).0
    } else {
        features.clone()
    }
}

/// Generator objective of raw target inputs with fixed weights `alpha`.
pub fn generator_objective_for_inputs(
    bundle: &ModelBundle,
    inputs: &Matrix,
    alpha: &[f64],
    normalize: bool,
    form: GeneratorLoss,
) -> Result<f64> {
    let feats = discriminator_view(&bundle.extractor.forward(inputs)?, normalize);
    Ok(generator_objective_grads(&feats, alpha, &bundle.discriminator, form)?.0)
}

/// Generator objective of raw target inputs and its gradient with respect to
/// the extractor parameters, with `alpha` held fixed. The gradient is `None`
/// for an extractor without parameters.
pub fn generator_extractor_grads(
    bundle: &ModelBundle,
    inputs: &Matrix,
    alpha: &[f64],
    normalize: bool,
    form: GeneratorLoss,
) -> Result<(f64, Option<MlpGrads>)> {
    let (raw, cache) = bundle.extractor.forward_cached(inputs)?;
    let (view, norms) = if normalize { normalize_rows(&raw) } else { (raw, Vec::new()) };
    let (value, dview) = generator_objective_grads(&view, alpha, &bundle.discriminator, form)?;
    let draw = if normalize { normalize_rows_backward(&view, &norms, &dview) } else { dview };
    if bundle.extractor.layers.is_empty() {
        return Ok((value, None));
    }
    let (grads, _) = bundle.extractor.backward(&cache, &draw)?;
    Ok((value, Some(grads)))
}

/// One discriminator ascent step followed by one extractor descent step.
/// The classifier is never touched.
pub fn alignment_step(
    bundle: &mut ModelBundle,
    gmm: &VirtualDomainGmm,
    target_batch: &Matrix,
    optimizers: &mut AdaptOptimizers,
    settings: &AlignSettings,
    step_index: usize,
    rng: &mut Rng,
) -> Result<AlignmentStepResult> {
    if target_batch.rows() == 0 {
        return Err(VdaError::Shape("empty target batch".into()));
    }
    let alpha = target_weights(bundle, target_batch, settings.weighting)?;
    let mean_alpha = alpha.iter().sum::<f64>() / alpha.len() as f64;
    let alpha = if settings.renormalize_weights && mean_alpha > 0.0 {
        alpha.iter().map(|a| a / mean_alpha).collect()
    } else {
        alpha
    };

    let (virtual_feats, _) = gmm.sample_batch(target_batch.rows(), rng);
    let virtual_feats = discriminator_view(&virtual_feats, settings.normalize_virtual_features);
    let view = discriminator_view(&bundle.extractor.forward(target_batch)?, settings.normalize_target_features);

    let disc = discriminator_objective_grads(&virtual_feats, &view, &alpha, &bundle.discriminator)?;
    if !disc.value.is_finite() || !disc.grads.is_finite() {
        return Err(VdaError::AdaptationDivergence { step: step_index, d_loss: disc.value, g_loss: f64::NAN });
    }
    let mut ascent = disc.grads;
    ascent.scale(-1.0);
    optimizers.discriminator.step(
        &mut bundle.discriminator.param_slices_mut(),
        &ascent.slices(),
        settings.discriminator_lr,
    );

    // the extractor plays against the discriminator it just updated
    let (g_loss, grads) = match generator_extractor_grads(
        bundle,
        target_batch,
        &alpha,
        settings.normalize_target_features,
        settings.generator_loss,
    ) {
        Ok(v) => v,
        Err(VdaError::Numerical(_)) => (f64::NAN, None),
        Err(e) => return Err(e),
    };
    let grads = match grads {
        Some(g) if g_loss.is_finite() && g.is_finite() => g,
        _ => return Err(VdaError::AdaptationDivergence { step: step_index, d_loss: disc.value, g_loss }),
    };
    optimizers.extractor.step(
        &mut bundle.extractor.param_slices_mut(),
        &grads.slices(),
        settings.extractor_lr,
    );

    Ok(AlignmentStepResult {
        d_loss: disc.value,
        g_loss,
        mean_alpha,
        discriminator_batch_accuracy: disc.batch_accuracy,
    })
}

/// One SGD step on the cross-entropy of pseudo-labeled samples, updating the
/// feature extractor only. Returns the loss before the step, or `None` for an
/// empty batch.
pub fn refinement_step(
    bundle: &mut ModelBundle,
    inputs: &Matrix,
    labels: &[usize],
    optimizer: &mut Sgd,
    lr: f64,
) -> Result<Option<f64>> {
    if inputs.rows() == 0 {
        return Ok(None);
    }
    let grads = classification_grads(bundle, inputs, labels)?;
    if !grads.loss.is_finite() {
        return Err(VdaError::Numerical(format!("refinement loss is {}", grads.loss)));
    }
    optimizer.step(&mut bundle.extractor.param_slices_mut(), &grads.extractor.slices(), lr);
    Ok(Some(grads.loss))
}
