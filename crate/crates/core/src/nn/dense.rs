//! Fully connected layer.

use super::init::uniform_init;
use ndarray::{Array1, Array2, Axis};
use rand_chacha::ChaCha12Rng;

#[derive(Clone, Debug)]
pub struct Dense {
    /// (out, in)
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug)]
pub struct DenseGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseGrads {
    pub fn zeros_like(layer: &Dense) -> Self {
        DenseGrads {
            weight: Array2::zeros(layer.weight.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize, rng: &mut ChaCha12Rng) -> Self {
        let limit = 1.0 / (in_features as f64).sqrt();
        Dense {
            weight: uniform_init((out_features, in_features), limit, rng),
            bias: Array1::zeros(out_features),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.dim().1
    }

    pub fn out_features(&self) -> usize {
        self.weight.dim().0
    }

    /// (N, in) -> (N, out)
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        y
    }

    pub fn backward(&self, x: &Array2<f64>, grad_out: &Array2<f64>, grads: &mut DenseGrads) -> Array2<f64> {
        grads.weight += &grad_out.t().dot(x);
        grads.bias += &grad_out.sum_axis(Axis(0));
        grad_out.dot(&self.weight)
    }
}
