//! Batch normalization over (N, H, W) per channel, plus a 1-D variant
//! for dense features.
//!
//! Forward never mutates the layer: training-mode calls return the batch
//! statistics in the cache and the caller decides when to fold them into
//! the running estimates via `commit`. That keeps repeated forward passes
//! (finite differences, validation) free of side effects.

use super::Mode;
use ndarray::{Array1, Array2, Array4, Axis};

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub struct BnGrads {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl BnGrads {
    pub fn zeros(channels: usize) -> Self {
        BnGrads { gamma: Array1::zeros(channels), beta: Array1::zeros(channels) }
    }
}

/// Training-mode cache: normalized activations and batch statistics.
#[derive(Clone, Debug)]
pub struct Bn2dCache {
    pub x_hat: Array4<f64>,
    pub inv_std: Array1<f64>,
    pub batch_mean: Array1<f64>,
    pub batch_var: Array1<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Array4<f64>, mode: Mode) -> (Array4<f64>, Option<Bn2dCache>) {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.channels());
        match mode {
            Mode::Train => {
                let count = (n * h * w) as f64;
                let mut mean = Array1::<f64>::zeros(c);
                let mut var = Array1::<f64>::zeros(c);
                for ci in 0..c {
                    let lane = x.index_axis(Axis(1), ci);
                    let m = lane.sum() / count;
                    mean[ci] = m;
                    var[ci] = lane.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / count;
                }
                let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
                let mut x_hat = x.clone();
                for ci in 0..c {
                    let m = mean[ci];
                    let s = inv_std[ci];
                    x_hat.index_axis_mut(Axis(1), ci).mapv_inplace(|v| (v - m) * s);
                }
                let mut y = x_hat.clone();
                for ci in 0..c {
                    let g = self.gamma[ci];
                    let b = self.beta[ci];
                    y.index_axis_mut(Axis(1), ci).mapv_inplace(|v| g * v + b);
                }
                (y, Some(Bn2dCache { x_hat, inv_std, batch_mean: mean, batch_var: var }))
            }
            Mode::Eval => {
                let mut y = x.clone();
                for ci in 0..c {
                    let m = self.running_mean[ci];
                    let s = 1.0 / (self.running_var[ci] + self.eps).sqrt();
                    let g = self.gamma[ci];
                    let b = self.beta[ci];
                    y.index_axis_mut(Axis(1), ci).mapv_inplace(|v| g * (v - m) * s + b);
                }
                (y, None)
            }
        }
    }

    /// Backward through a training-mode forward (batch statistics).
    pub fn backward(&self, cache: &Bn2dCache, grad_out: &Array4<f64>, grads: &mut BnGrads) -> Array4<f64> {
        let (n, c, h, w) = grad_out.dim();
        let count = (n * h * w) as f64;
        let mut dx = Array4::<f64>::zeros((n, c, h, w));
        for ci in 0..c {
            let g_lane = grad_out.index_axis(Axis(1), ci);
            let xh_lane = cache.x_hat.index_axis(Axis(1), ci);
            let sum_g: f64 = g_lane.sum();
            let sum_gx: f64 = g_lane.iter().zip(xh_lane.iter()).map(|(g, x)| g * x).sum();
            grads.beta[ci] += sum_g;
            grads.gamma[ci] += sum_gx;
            let scale = self.gamma[ci] * cache.inv_std[ci] / count;
            let mut dx_lane = dx.index_axis_mut(Axis(1), ci);
            ndarray::Zip::from(&mut dx_lane).and(&g_lane).and(&xh_lane).for_each(|d, &g, &x| {
                *d = scale * (count * g - sum_g - x * sum_gx);
            });
        }
        dx
    }

    /// Backward through an eval-mode forward: a fixed affine map.
    pub fn backward_eval(&self, grad_out: &Array4<f64>) -> Array4<f64> {
        let mut dx = grad_out.clone();
        for ci in 0..self.channels() {
            let s = self.gamma[ci] / (self.running_var[ci] + self.eps).sqrt();
            dx.index_axis_mut(Axis(1), ci).mapv_inplace(|v| v * s);
        }
        dx
    }

    /// Folds batch statistics from a training step into the running
    /// estimates. Called once per optimizer step.
    pub fn commit(&mut self, cache: &Bn2dCache) {
        let m = self.momentum;
        for ci in 0..self.channels() {
            self.running_mean[ci] = (1.0 - m) * self.running_mean[ci] + m * cache.batch_mean[ci];
            self.running_var[ci] = (1.0 - m) * self.running_var[ci] + m * cache.batch_var[ci];
        }
    }
}

/// Batch normalization over the batch axis of (N, D) features.
#[derive(Clone, Debug)]
pub struct BatchNorm1d {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub struct Bn1dCache {
    pub x_hat: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub batch_mean: Array1<f64>,
    pub batch_var: Array1<f64>,
}

impl BatchNorm1d {
    pub fn new(features: usize) -> Self {
        BatchNorm1d {
            gamma: Array1::ones(features),
            beta: Array1::zeros(features),
            running_mean: Array1::zeros(features),
            running_var: Array1::ones(features),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Array2<f64>, mode: Mode) -> (Array2<f64>, Option<Bn1dCache>) {
        let (n, d) = x.dim();
        assert_eq!(d, self.features());
        match mode {
            Mode::Train => {
                let count = n as f64;
                let mean = x.sum_axis(Axis(0)) / count;
                let mut var = Array1::<f64>::zeros(d);
                for di in 0..d {
                    var[di] = x.column(di).iter().map(|v| (v - mean[di]) * (v - mean[di])).sum::<f64>() / count;
                }
                let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
                let mut x_hat = x.clone();
                for di in 0..d {
                    let m = mean[di];
                    let s = inv_std[di];
                    x_hat.column_mut(di).mapv_inplace(|v| (v - m) * s);
                }
                let mut y = x_hat.clone();
                for di in 0..d {
                    let g = self.gamma[di];
                    let b = self.beta[di];
                    y.column_mut(di).mapv_inplace(|v| g * v + b);
                }
                (y, Some(Bn1dCache { x_hat, inv_std, batch_mean: mean, batch_var: var }))
            }
            Mode::Eval => {
                let mut y = x.clone();
                for di in 0..d {
                    let m = self.running_mean[di];
                    let s = 1.0 / (self.running_var[di] + self.eps).sqrt();
                    let g = self.gamma[di];
                    let b = self.beta[di];
                    y.column_mut(di).mapv_inplace(|v| g * (v - m) * s + b);
                }
                (y, None)
            }
        }
    }

    pub fn backward(&self, cache: &Bn1dCache, grad_out: &Array2<f64>, grads: &mut BnGrads) -> Array2<f64> {
        let (n, d) = grad_out.dim();
        let count = n as f64;
        let mut dx = Array2::<f64>::zeros((n, d));
        for di in 0..d {
            let g_col = grad_out.column(di);
            let xh_col = cache.x_hat.column(di);
            let sum_g: f64 = g_col.sum();
            let sum_gx: f64 = g_col.iter().zip(xh_col.iter()).map(|(g, x)| g * x).sum();
            grads.beta[di] += sum_g;
            grads.gamma[di] += sum_gx;
            let scale = self.gamma[di] * cache.inv_std[di] / count;
            let mut dx_col = dx.column_mut(di);
            ndarray::Zip::from(&mut dx_col).and(&g_col).and(&xh_col).for_each(|dv, &g, &x| {
                *dv = scale * (count * g - sum_g - x * sum_gx);
            });
        }
        dx
    }

    pub fn backward_eval(&self, grad_out: &Array2<f64>) -> Array2<f64> {
        let mut dx = grad_out.clone();
        for di in 0..self.features() {
            let s = self.gamma[di] / (self.running_var[di] + self.eps).sqrt();
            dx.column_mut(di).mapv_inplace(|v| v * s);
        }
        dx
    }

    pub fn commit(&mut self, cache: &Bn1dCache) {
        let m = self.momentum;
        for di in 0..self.features() {
            self.running_mean[di] = (1.0 - m) * self.running_mean[di] + m * cache.batch_mean[di];
            self.running_var[di] = (1.0 - m) * self.running_var[di] + m * cache.batch_var[di];
        }
    }
}
