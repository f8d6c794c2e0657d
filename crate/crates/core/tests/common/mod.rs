//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use rand::Rng as _;
use vda_core::harness::{DatasetSource, ExperimentConfig};
use vda_core::linalg::Matrix;
use vda_core::models::{ModelBundle, NetworkSpec};
use vda_core::rng::seeded_rng;

pub const H: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;

pub fn small_bundle(seed: u64) -> ModelBundle {
    let spec = NetworkSpec { discriminator_widths: vec![6], ..NetworkSpec::new(3, 4, vec![5], 3) };
    let b = ModelBundle::init(&spec, seed).unwrap();
    let params = b.extractor.num_params() + b.classifier.as_slice().len() + b.discriminator.num_params();
    assert!(params <= 500, "{params} parameters");
    b
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = seeded_rng(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

/// ‖a − n‖ / max(‖a‖, ‖n‖) over the whole gradient.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` with respect to every entry of `slices(net)`.
pub fn numeric_grad<T: Clone>(
    net: &T,
    slices: impl Fn(&mut T) -> Vec<&mut [f64]>,
    f: impl Fn(&T) -> f64,
) -> Vec<Vec<f64>> {
    let mut probe = net.clone();
    let lens: Vec<usize> = slices(&mut probe).iter().map(|s| s.len()).collect();
    let mut out = Vec::new();
    for (t, &len) in lens.iter().enumerate() {
        let mut g = vec![0.0; len];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = slices(&mut probe)[t][i];
            slices(&mut probe)[t][i] = orig + H;
            let up = f(&probe);
            slices(&mut probe)[t][i] = orig - H;
            let down = f(&probe);
            slices(&mut probe)[t][i] = orig;
            *gi = (up - down) / (2.0 * H);
        }
        out.push(g);
    }
    out
}

pub fn flat(groups: &[&[f64]]) -> Vec<f64> {
    groups.iter().flat_map(|g| g.iter().copied()).collect()
}

/// The default synthetic task with the narrow discriminator used for
/// desk-scale runs. Dataset and model share one seed.
pub fn desk_config(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig { seed, ..ExperimentConfig::default() };
    c.network.discriminator_widths = vec![64, 64];
    if let DatasetSource::Synthetic(spec) = &mut c.dataset {
        spec.seed = seed;
    }
    c
}

/// A small, fast configuration for plumbing tests.
pub fn tiny_config(seed: u64) -> ExperimentConfig {
    let mut c = desk_config(seed);
    c.pretrain_epochs = 20;
    c.adapt_epochs = 3;
    c.network.discriminator_widths = vec![16];
    c.network.hidden_widths = vec![16];
    c.network.feature_dim = 8;
    if let DatasetSource::Synthetic(spec) = &mut c.dataset {
        spec.samples_per_class = 60;
    }
    c
}
