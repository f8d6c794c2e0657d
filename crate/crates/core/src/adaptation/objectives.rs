//! Entropy weights and the weighted adversarial objectives, with gradients.
//!
//! `D(f)` is the discriminator's softmax probability of the virtual-domain
//! output. The discriminator maximizes
//! `V = mean_v log D(f_v) + mean_t α·log(1 − D(f_t))`; the extractor minimizes
//! either `−mean_t α·log D(f_t)` (non-saturating) or `mean_t α·log(1 − D(f_t))`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VdaError};
use crate::linalg::{l2_norm, log_sum_exp, Matrix};
use crate::models::{Mlp, MlpGrads, VIRTUAL_DOMAIN};

/// Floor for the arguments of every logarithm in the objectives.
pub const LOG_FLOOR: f64 = 1e-12;

const TARGET_DOMAIN: usize = 1 - VIRTUAL_DOMAIN;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    /// `−α·log D(f_t)`.
    #[default]
    NonSaturating,
    /// `α·log(1 − D(f_t))`, the literal minimax form.
    Saturating,
}

/// Shannon entropy in nats with `0·ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

pub(crate) fn check_distribution(row: &[f64], index: usize) -> Result<()> {
    if row.iter().any(|v| !v.is_finite() || *v < -1e-12) {
        return Err(VdaError::InvalidDistribution {
            row: index,
            reason: "entries must be finite and non-negative".into(),
        });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(VdaError::InvalidDistribution { row: index, reason: format!("sums to {sum}") });
    }
    Ok(())
}

/// `α = H(p) / ln K` per row, clipped into `[0, 1]` against rounding.
pub fn uncertainty_weights(probs: &Matrix) -> Result<Vec<f64>> {
    let k = probs.cols();
    if k < 2 {
        return Err(VdaError::Shape(format!("need at least 2 classes, got {k}")));
    }
    let max_entropy = (k as f64).ln();
    probs
        .iter_rows()
        .enumerate()
        .map(|(i, row)| {
            check_distribution(row, i)?;
            Ok((entropy(row) / max_entropy).clamp(0.0, 1.0))
        })
        .collect()
}

fn check_alpha(alpha: &[f64], rows: usize) -> Result<()> {
    if alpha.len() != rows {
        return Err(VdaError::Shape(format!("{} weights for {rows} target rows", alpha.len())));
    }
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(VdaError::InvalidValue("non-finite sample weight".into()));
    }
    Ok(())
}

fn clamped_ln(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(VdaError::Numerical(format!("discriminator output {p} is outside [0, 1]")));
    }
    Ok(p.max(LOG_FLOOR).ln())
}

/// Objective value from discriminator probabilities directly.
pub fn discriminator_value_from_outputs(d_virtual: &[f64], d_target: &[f64], alpha: &[f64]) -> Result<f64> {
    check_alpha(alpha, d_target.len())?;
    if d_virtual.is_empty() || d_target.is_empty() {
        return Err(VdaError::Shape("empty discriminator batch".into()));
    }
    let mut v = 0.0;
    for &d in d_virtual {
        v += clamped_ln(d)?;
    }
    let mut t = 0.0;
    for (&d, &a) in d_target.iter().zip(alpha) {
        t += a * clamped_ln(1.0 - d)?;
    }
    Ok(v / d_virtual.len() as f64 + t / d_target.len() as f64)
}

pub fn generator_value_from_outputs(d_target: &[f64], alpha: &[f64], form: GeneratorLoss) -> Result<f64> {
    check_alpha(alpha, d_target.len())?;
    if d_target.is_empty() {
        return Err(VdaError::Shape("empty discriminator batch".into()));
    }
    let mut total = 0.0;
    for (&d, &a) in d_target.iter().zip(alpha) {
        total += match form {
            GeneratorLoss::NonSaturating => -a * clamped_ln(d)?,
            GeneratorLoss::Saturating => a * clamped_ln(1.0 - d)?,
        };
    }
    Ok(total / d_target.len() as f64)
}

/// Log-probability of `class` from a row of discriminator logits, floored at
/// `ln LOG_FLOOR`, and its gradient w.r.t. the logits (zero when floored).
fn log_prob_and_grad(logits: &[f64], class: usize) -> (f64, [f64; 2]) {
    let lse = log_sum_exp(logits);
    let lp = logits[class] - lse;
    if lp < LOG_FLOOR.ln() {
        return (LOG_FLOOR.ln(), [0.0, 0.0]);
    }
    let mut g = [-(logits[0] - lse).exp(), -(logits[1] - lse).exp()];
    g[class] += 1.0;
    (lp, g)
}

/// Discriminator probability of the virtual domain for each row.
pub fn discriminator_outputs(disc: &Mlp, features: &Matrix) -> Result<Vec<f64>> {
    let logits = disc.forward(features)?;
    Ok(logits.iter_rows().map(|r| (r[VIRTUAL_DOMAIN] - log_sum_exp(r)).exp()).collect())
}

pub fn discriminator_objective(
    virtual_features: &Matrix,
    target_features: &Matrix,
    alpha: &[f64],
    disc: &Mlp,
) -> Result<f64> {
    Ok(discriminator_objective_grads(virtual_features, target_features, alpha, disc)?.value)
}

pub fn generator_objective(
    target_features: &Matrix,
    alpha: &[f64],
    disc: &Mlp,
    form: GeneratorLoss,
) -> Result<f64> {
    Ok(generator_objective_grads(target_features, alpha, disc, form)?.0)
}

pub struct DiscriminatorEval {
    pub value: f64,
    /// Gradient of `value` (the ascent direction).
    pub grads: MlpGrads,
    /// Fraction of the combined batch on the correct side of 0.5, unweighted.
    pub batch_accuracy: f64,
}

pub fn discriminator_objective_grads(
    virtual_features: &Matrix,
    target_features: &Matrix,
    alpha: &[f64],
    disc: &Mlp,
) -> Result<DiscriminatorEval> {
    check_alpha(alpha, target_features.rows())?;
    let nv = virtual_features.rows();
    let nt = target_features.rows();
    if nv == 0 || nt == 0 {
        return Err(VdaError::Shape("empty discriminator batch".into()));
    }
    let both = Matrix::vstack(virtual_features, target_features)?;
    let (logits, cache) = disc.forward_cached(&both)?;
    if !logits.is_finite() {
        return Err(VdaError::Numerical("discriminator produced non-finite logits".into()));
    }
    let mut dlogits = Matrix::zeros(nv + nt, 2);
    let (mut virt, mut targ) = (0.0, 0.0);
    let mut correct = 0usize;
    for i in 0..nv + nt {
        let row = logits.row(i);
        let says_virtual = row[VIRTUAL_DOMAIN] > row[TARGET_DOMAIN];
        if i < nv {
            let (lp, g) = log_prob_and_grad(row, VIRTUAL_DOMAIN);
            virt += lp;
            dlogits.row_mut(i).iter_mut().zip(g).for_each(|(o, v)| *o = v / nv as f64);
            correct += says_virtual as usize;
        } else {
            let a = alpha[i - nv];
            let (lp, g) = log_prob_and_grad(row, TARGET_DOMAIN);
            targ += a * lp;
            dlogits.row_mut(i).iter_mut().zip(g).for_each(|(o, v)| *o = a * v / nt as f64);
            correct += (!says_virtual) as usize;
        }
    }
    let (grads, _) = disc.backward(&cache, &dlogits)?;
    Ok(DiscriminatorEval {
        value: virt / nv as f64 + targ / nt as f64,
        grads,
        batch_accuracy: correct as f64 / (nv + nt) as f64,
    })
}

/// Generator objective and its gradient with respect to the target features.
pub fn generator_objective_grads(
    target_features: &Matrix,
    alpha: &[f64],
    disc: &Mlp,
    form: GeneratorLoss,
) -> Result<(f64, Matrix)> {
    check_alpha(alpha, target_features.rows())?;
    let n = target_features.rows();
    if n == 0 {
        return Err(VdaError::Shape("empty discriminator batch".into()));
    }
    let (logits, cache) = disc.forward_cached(target_features)?;
    if !logits.is_finite() {
        return Err(VdaError::Numerical("discriminator produced non-finite logits".into()));
    }
    let mut dlogits = Matrix::zeros(n, 2);
    let mut total = 0.0;
    for (i, &a) in alpha.iter().enumerate() {
        let (sign, class) = match form {
            GeneratorLoss::NonSaturating => (-1.0, VIRTUAL_DOMAIN),
            GeneratorLoss::Saturating => (1.0, TARGET_DOMAIN),
        };
        let (lp, g) = log_prob_and_grad(logits.row(i), class);
        total += sign * a * lp;
        dlogits.row_mut(i).iter_mut().zip(g).for_each(|(o, v)| *o = sign * a * v / n as f64);
    }
    let (_, dfeatures) = disc.backward(&cache, &dlogits)?;
    Ok((total / n as f64, dfeatures))
}

/// Scales each row to unit L2 norm; rows with zero norm are left at zero.
pub fn normalize_rows(features: &Matrix) -> (Matrix, Vec<f64>) {
    let mut out = features.clone();
    let mut norms = Vec::with_capacity(features.rows());
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let n = l2_norm(row);
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
        norms.push(n);
    }
    (out, norms)
}

/// Pulls `grad` (w.r.t. normalized rows `y`) back through `y = x/‖x‖`:
/// `(g − y·(y·g)) / ‖x‖`.
pub fn normalize_rows_backward(normalized: &Matrix, norms: &[f64], grad: &Matrix) -> Matrix {
    let mut out = grad.clone();
    for (i, &n) in norms.iter().enumerate() {
        let y = normalized.row(i);
        let row = out.row_mut(i);
        if n == 0.0 {
            row.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        let proj: f64 = y.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
        for (g, &yv) in row.iter_mut().zip(y) {
            *g = (*g - yv * proj) / n;
        }
    }
    out
}
