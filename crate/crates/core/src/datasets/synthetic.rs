use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{DomainDataset, ShiftFamily, ShiftSpec};
use crate::error::{Result, VdaError};
use crate::linalg::Matrix;
use crate::rng::{self, Rng};

/// Class means for the blob family.
///
/// In the first two coordinates the means sit on a circle whose neighbouring
/// chord is `separation · noise_std`. For `input_dim > 2` class `k` also gets
/// an offset of `off_plane · noise_std` on coordinate `2 + k mod (input_dim − 2)`.
pub fn blob_means(spec: &ShiftSpec) -> Matrix {
    let k = spec.num_classes;
    let d = spec.input_dim;
    let chord = spec.separation * spec.noise_std;
    let radius = chord / (2.0 * (std::f64::consts::PI / k as f64).sin());
    let mut means = Matrix::zeros(k, d);
    for c in 0..k {
        let angle = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
        means[(c, 0)] = radius * angle.cos();
        means[(c, 1)] = radius * angle.sin();
        if d > 2 {
            means[(c, 2 + c % (d - 2))] = spec.off_plane * spec.noise_std;
        }
    }
    means
}

/// Applies the source→target transform in place: rotation of the first two
/// coordinates, uniform scaling, then translation.
pub fn transform_point(spec: &ShiftSpec, x: &mut [f64]) {
    let theta = spec.rotation_degrees.to_radians();
    let (s, c) = theta.sin_cos();
    let (x0, x1) = (x[0], x[1]);
    x[0] = c * x0 - s * x1;
    x[1] = s * x0 + c * x1;
    for v in x.iter_mut() {
        *v *= spec.scale;
    }
    for (v, t) in x.iter_mut().zip(&spec.translation) {
        *v += t;
    }
}

pub fn make_blobs_pair(spec: &ShiftSpec) -> Result<(DomainDataset, DomainDataset)> {
    spec.validate()?;
    if spec.family != ShiftFamily::Blobs {
        return Err(VdaError::UnsupportedSpec("make_blobs_pair needs the blobs family".into()));
    }
    let means = blob_means(spec);
    let mut target_means = means.clone();
    for c in 0..spec.num_classes {
        transform_point(spec, target_means.row_mut(c));
    }
    let source = sample_around(spec, &means, &mut rng::stream(spec.seed, "blobs/source"), "source")?;
    let target =
        sample_around(spec, &target_means, &mut rng::stream(spec.seed, "blobs/target"), "target")?;
    Ok((source, target))
}

fn sample_around(
    spec: &ShiftSpec,
    means: &Matrix,
    rng: &mut Rng,
    tag: &str,
) -> Result<DomainDataset> {
    let n = spec.num_classes * spec.samples_per_class;
    let d = spec.input_dim;
    let mut inputs = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.num_classes {
        for i in 0..spec.samples_per_class {
            let row = inputs.row_mut(c * spec.samples_per_class + i);
            for (v, m) in row.iter_mut().zip(means.row(c)) {
                let z: f64 = rng.sample(StandardNormal);
                *v = m + spec.noise_std * z;
            }
            labels.push(c);
        }
    }
    DomainDataset::new(inputs, Some(labels), tag, spec.seed)
}

/// Noiseless two-moons curve point `t`-th of `n` for class 0 or 1.
fn moon_point(class: usize, i: usize, n: usize) -> [f64; 2] {
    let t = if n > 1 { std::f64::consts::PI * i as f64 / (n - 1) as f64 } else { 0.0 };
    if class == 0 {
        [t.cos(), t.sin()]
    } else {
        [1.0 - t.cos(), 0.5 - t.sin()]
    }
}

/// Interleaving two moons. The target applies the shift transform to the
/// noiseless curves and draws fresh noise.
pub fn make_moons_pair(spec: &ShiftSpec) -> Result<(DomainDataset, DomainDataset)> {
    if spec.num_classes != 2 {
        return Err(VdaError::UnsupportedSpec(format!(
            "two moons needs exactly 2 classes, got {}",
            spec.num_classes
        )));
    }
    if spec.input_dim != 2 {
        return Err(VdaError::UnsupportedSpec(format!(
            "two moons needs input_dim = 2, got {}",
            spec.input_dim
        )));
    }
    spec.validate()?;
    let build = |shifted: bool, rng: &mut Rng, tag: &str| -> Result<DomainDataset> {
        let m = spec.samples_per_class;
        let mut inputs = Matrix::zeros(2 * m, 2);
        let mut labels = Vec::with_capacity(2 * m);
        for c in 0..2 {
            for i in 0..m {
                let mut p = moon_point(c, i, m);
                if shifted {
                    transform_point(spec, &mut p);
                }
                let row = inputs.row_mut(c * m + i);
                for (v, base) in row.iter_mut().zip(p) {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = base + spec.noise_std * z;
                }
                labels.push(c);
            }
        }
        DomainDataset::new(inputs, Some(labels), tag, spec.seed)
    };
    let source = build(false, &mut rng::stream(spec.seed, "moons/source"), "source")?;
    let target = build(true, &mut rng::stream(spec.seed, "moons/target"), "target")?;
    Ok((source, target))
}

pub fn make_pair(spec: &ShiftSpec) -> Result<(DomainDataset, DomainDataset)> {
    match spec.family {
        ShiftFamily::Blobs => make_blobs_pair(spec),
        ShiftFamily::Moons => make_moons_pair(spec),
    }
}
