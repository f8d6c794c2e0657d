//! Fully-connected layers with rectifier hidden activations and hand-written
//! backpropagation.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VdaError};
use crate::linalg::Matrix;
use crate::rng::Rng;

/// `y = x·Wᵀ + b` with `W` stored as `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Uniform fan-in initialization `U(−bound, bound)`, zero bias.
    pub fn init(in_dim: usize, out_dim: usize, bound: f64, rng: &mut Rng) -> Self {
        let data = (0..in_dim * out_dim).map(|_| rng.random_range(-bound..bound)).collect();
        Dense {
            weight: Matrix::from_vec(out_dim, in_dim, data).expect("sized buffer"),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.matmul_transposed(&self.weight)?;
        let out = self.out_dim();
        for i in 0..y.rows() {
            for (v, b) in y.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        debug_assert_eq!(y.cols(), out);
        Ok(y)
    }
}

/// A stack of dense layers, rectified between layers and linear at the output.
/// An empty stack is the identity map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Layer inputs recorded during a forward pass; `inputs[0]` is the network input.
#[derive(Clone, Debug)]
pub struct MlpCache {
    inputs: Vec<Matrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// Builds `dims[0] → dims[1] → … → dims[last]`. Hidden layers use the He
    /// bound `√(6/fan_in)`, the output layer `1/√fan_in`.
    pub fn init(dims: &[usize], rng: &mut Rng) -> Self {
        let n = dims.len().saturating_sub(1);
        let layers = (0..n)
            .map(|l| {
                let fan_in = dims[l] as f64;
                let bound = if l + 1 < n { (6.0 / fan_in).sqrt() } else { 1.0 / fan_in.sqrt() };
                Dense::init(dims[l], dims[l + 1], bound, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn identity() -> Self {
        Mlp { layers: Vec::new() }
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.first().map(Dense::in_dim)
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.last().map(Dense::out_dim)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.as_slice().len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut a = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            a = layer.forward(&a)?;
            if l + 1 < self.layers.len() {
                relu_in_place(&mut a);
            }
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.forward(&a)?;
            if l + 1 < self.layers.len() {
                relu_in_place(&mut z);
            }
            inputs.push(std::mem::replace(&mut a, z));
        }
        Ok((a, MlpCache { inputs }))
    }

    /// Backpropagates `grad_out` (∂L/∂output) and returns parameter gradients
    /// together with ∂L/∂input.
    pub fn backward(&self, cache: &MlpCache, grad_out: &Matrix) -> Result<(MlpGrads, Matrix)> {
        let n = self.layers.len();
        let mut weights = vec![Matrix::zeros(0, 0); n];
        let mut biases = vec![Vec::new(); n];
        let mut delta = grad_out.clone();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let input = &cache.inputs[l];
            weights[l] = delta.transpose_matmul(input)?;
            biases[l] = delta.column_sums();
            let mut prev = delta.matmul(&layer.weight)?;
            if l > 0 {
                // inputs[l] = relu(z_{l-1}), so its sign pattern is the relu mask
                for (g, &a) in prev.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok((MlpGrads { weights, biases }, delta))
    }

    /// Mutable views of every parameter tensor, in a fixed order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.weight.as_mut_slice());
            out.push(&mut layer.bias[..]);
        }
        out
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &self.layers {
            out.push(layer.weight.as_slice());
            out.push(&layer.bias[..]);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if let Some(d) = self.input_dim() {
            if x.cols() != d {
                return Err(VdaError::Shape(format!(
                    "network expects inputs of width {d}, got {}",
                    x.cols()
                )));
            }
        }
        Ok(())
    }
}

impl MlpGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice());
            out.push(&b[..]);
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&v| v == 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

fn relu_in_place(m: &mut Matrix) {
    for v in m.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    #[test]
    fn empty_stack_is_identity() {
        let x = Matrix::from_rows(&[vec![1.0, -2.0], vec![3.5, 0.0]]).unwrap();
        assert_eq!(Mlp::identity().forward(&x).unwrap(), x);
    }

    #[test]
    fn init_is_seeded() {
        let a = Mlp::init(&[3, 5, 2], &mut seeded_rng(4));
        let b = Mlp::init(&[3, 5, 2], &mut seeded_rng(4));
        let c = Mlp::init(&[3, 5, 2], &mut seeded_rng(5));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.num_params(), 3 * 5 + 5 + 5 * 2 + 2);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = seeded_rng(11);
        let net = Mlp::init(&[3, 4, 2], &mut rng);
        let x = Matrix::from_rows(&[vec![0.3, -1.2, 0.7], vec![1.1, 0.4, -0.5]]).unwrap();
        // L = Σ c ⊙ y for a fixed c, so ∂L/∂y = c
        let c = Matrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]).unwrap();
        let loss = |net: &Mlp, x: &Matrix| -> f64 {
            let y = net.forward(x).unwrap();
            y.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = net.forward_cached(&x).unwrap();
        let (grads, gx) = net.backward(&cache, &c).unwrap();
        let h = 1e-6;
        let mut probe = net.clone();
        for (t, g) in grads.slices().iter().enumerate() {
            for i in 0..g.len() {
                let orig = probe.param_slices()[t][i];
                probe.param_slices_mut()[t][i] = orig + h;
                let up = loss(&probe, &x);
                probe.param_slices_mut()[t][i] = orig - h;
                let down = loss(&probe, &x);
                probe.param_slices_mut()[t][i] = orig;
                assert!(((up - down) / (2.0 * h) - g[i]).abs() < 1e-6);
            }
        }
        for i in 0..x.as_slice().len() {
            let mut xp = x.clone();
            xp.as_mut_slice()[i] += h;
            let mut xm = x.clone();
            xm.as_mut_slice()[i] -= h;
            let fd = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * h);
            assert!((fd - gx.as_slice()[i]).abs() < 1e-6);
        }
    }
}
