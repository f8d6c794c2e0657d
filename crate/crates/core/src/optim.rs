//! SGD with momentum and L2 weight decay, plus the annealed learning-rate
//! schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VdaError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { momentum: 0.9, weight_decay: 1e-3 }
    }
}

/// Momentum buffers for one group of parameter tensors.
///
/// The update is `v ← μ·v + (g + wd·θ)`, `θ ← θ − η·v`; buffers are created
/// lazily on the first step so the state always matches the parameter layout.
#[derive(Clone, Debug, Default)]
pub struct Sgd {
    pub config: SgdConfig,
    buffers: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(config: SgdConfig) -> Self {
        Sgd { config, buffers: Vec::new() }
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient group mismatch");
        if self.buffers.is_empty() {
            self.buffers = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        let SgdConfig { momentum, weight_decay } = self.config;
        for ((p, g), buf) in params.iter_mut().zip(grads).zip(self.buffers.iter_mut()) {
            debug_assert_eq!(p.len(), g.len());
            for ((theta, &grad), v) in p.iter_mut().zip(g.iter()).zip(buf.iter_mut()) {
                let d = grad + weight_decay * *theta;
                *v = momentum * *v + d;
                *theta -= lr * *v;
            }
        }
    }
}

/// `η = η₀·(1 + 10p)^(−0.75)` for training progress `p ∈ [0, 1]`.
pub fn lr_schedule(eta0: f64, progress: f64) -> Result<f64> {
    if !(eta0 > 0.0) || !eta0.is_finite() {
        return Err(VdaError::Parameter(format!("eta0 must be positive, got {eta0}")));
    }
    if !(0.0..=1.0).contains(&progress) {
        return Err(VdaError::Parameter(format!("progress must lie in [0, 1], got {progress}")));
    }
    Ok(eta0 * (1.0 + 10.0 * progress).powf(-0.75))
}

/// Progress of iteration `completed` out of `total` (0 when there is nothing to do).
pub fn progress(completed: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        (completed as f64 / total as f64).min(1.0)
    }
}
