//! The privacy module: a convolutional autoencoder over the six signal
//! channels that maps a raw window to a transformed window of identical
//! shape. Both Siamese branches share one parameter set, so the "two
//! autoencoders" are a single function applied twice.
//!
//! Encoder stages run conv(ReLU) + batch-norm + 1x2 max-pool; decoder
//! stages run nearest-neighbor 1x2 upsampling + conv(ReLU); a final
//! linear 1x3 convolution restores the six channels. Same padding
//! everywhere makes the shape round-trip exact.

use crate::error::{Error, Result};
use crate::nn::{
    checksum, maxpool1x2_backward, maxpool1x2_forward, relu_backward_inplace, relu_inplace,
    BatchNorm2d, Bn2dCache, BnGrads, Mode, NamedParam, NamedParamMut, Padding, ParamKind, RowConv,
    RowConvGrads,
};
use crate::seed::{self, tag};
use ndarray::{Array2, Array4};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    /// Signal channels of one window (6).
    pub input_channels: usize,
    /// Time samples of one window (100); must be divisible by 4 so the
    /// two pool/upsample rounds restore it exactly.
    pub input_width: usize,
    /// Encoder filter counts, stage 1 then stage 2 (bottleneck).
    pub encoder_filters: [usize; 2],
    pub kernel_w: usize,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            input_channels: 6,
            input_width: 100,
            encoder_filters: [32, 64],
            kernel_w: 3,
        }
    }
}

impl AutoencoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.encoder_filters.contains(&0) {
            return Err(Error::Build { layer: "config".into(), message: "zero-sized layer".into() });
        }
        if self.kernel_w.is_multiple_of(2) {
            return Err(Error::Build {
                layer: "config".into(),
                message: format!("same padding requires an odd kernel, got {}", self.kernel_w),
            });
        }
        if self.input_width < 4 || !self.input_width.is_multiple_of(4) {
            return Err(Error::Build {
                layer: "encoder_pool".into(),
                message: format!(
                    "input width {} must be a positive multiple of 4 for two 1x2 pools to round-trip",
                    self.input_width
                ),
            });
        }
        Ok(())
    }

    /// Width at the bottleneck after two 1x2 pools.
    pub fn bottleneck_width(&self) -> usize {
        self.input_width / 4
    }
}

#[derive(Clone, Debug)]
pub struct PrivatizerModel {
    pub config: AutoencoderConfig,
    pub seed: u64,
    enc1: RowConv,
    bn1: BatchNorm2d,
    enc2: RowConv,
    bn2: BatchNorm2d,
    dec1: RowConv,
    dec2: RowConv,
    out: RowConv,
}

#[derive(Clone, Debug)]
pub struct PrivatizerGrads {
    pub enc1: RowConvGrads,
    pub bn1: BnGrads,
    pub enc2: RowConvGrads,
    pub bn2: BnGrads,
    pub dec1: RowConvGrads,
    pub dec2: RowConvGrads,
    pub out: RowConvGrads,
}

impl PrivatizerGrads {
    pub fn zeros_like(model: &PrivatizerModel) -> Self {
        PrivatizerGrads {
            enc1: RowConvGrads::zeros_like(&model.enc1),
            bn1: BnGrads::zeros(model.bn1.channels()),
            enc2: RowConvGrads::zeros_like(&model.enc2),
            bn2: BnGrads::zeros(model.bn2.channels()),
            dec1: RowConvGrads::zeros_like(&model.dec1),
            dec2: RowConvGrads::zeros_like(&model.dec2),
            out: RowConvGrads::zeros_like(&model.out),
        }
    }

    /// Views aligned with `PrivatizerModel::trainable_params_mut` order.
    pub fn views(&self) -> Vec<ndarray::ArrayViewD<'_, f64>> {
        vec![
            self.enc1.weight.view().into_dyn(),
            self.enc1.bias.view().into_dyn(),
            self.bn1.gamma.view().into_dyn(),
            self.bn1.beta.view().into_dyn(),
            self.enc2.weight.view().into_dyn(),
            self.enc2.bias.view().into_dyn(),
            self.bn2.gamma.view().into_dyn(),
            self.bn2.beta.view().into_dyn(),
            self.dec1.weight.view().into_dyn(),
            self.dec1.bias.view().into_dyn(),
            self.dec2.weight.view().into_dyn(),
            self.dec2.bias.view().into_dyn(),
            self.out.weight.view().into_dyn(),
            self.out.bias.view().into_dyn(),
        ]
    }
}

pub struct PrivatizerCache {
    mode: Mode,
    x: Array4<f64>,
    r1: Array4<f64>,
    bn1_cache: Option<Bn2dCache>,
    pool1_arg: Vec<u8>,
    pool1_in_w: usize,
    p1: Array4<f64>,
    r2: Array4<f64>,
    bn2_cache: Option<Bn2dCache>,
    pool2_arg: Vec<u8>,
    pool2_in_w: usize,
    u1: Array4<f64>,
    d1: Array4<f64>,
    u2: Array4<f64>,
    d2: Array4<f64>,
    pub output: Array4<f64>,
}

impl PrivatizerModel {
    /// Deterministic build; the decoder/encoder shape round-trip is
    /// verified with a smoke pass.
    pub fn build(config: AutoencoderConfig, seed_value: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed_value, tag::PRIVATIZER_INIT, 0);
        let c = config.input_channels;
        let [f1, f2] = config.encoder_filters;
        let k = config.kernel_w;
        let model = PrivatizerModel {
            enc1: RowConv::new(c, f1, k, Padding::Same, &mut rng),
            bn1: BatchNorm2d::new(f1),
            enc2: RowConv::new(f1, f2, k, Padding::Same, &mut rng),
            bn2: BatchNorm2d::new(f2),
            dec1: RowConv::new(f2, f1, k, Padding::Same, &mut rng),
            dec2: RowConv::new(f1, f1, k, Padding::Same, &mut rng),
            out: RowConv::new(f1, c, k, Padding::Same, &mut rng),
            config,
            seed: seed_value,
        };
        let smoke = Array4::<f64>::zeros((1, model.config.input_channels, 1, model.config.input_width));
        let y = model.transform_batch(&smoke);
        if y.dim() != smoke.dim() {
            return Err(Error::Build {
                layer: "decoder".into(),
                message: format!("round-trip produced {:?}, expected {:?}", y.dim(), smoke.dim()),
            });
        }
        Ok(model)
    }

    /// (H=6, W) window -> (N, C=6, H=1, W) input tensor.
    pub fn batch_input(&self, windows: &[&Array2<f64>]) -> Result<Array4<f64>> {
        let (c, w) = (self.config.input_channels, self.config.input_width);
        let mut x = Array4::<f64>::zeros((windows.len(), c, 1, w));
        for (i, win) in windows.iter().enumerate() {
            if win.dim() != (c, w) {
                return Err(Error::Shape {
                    expected: format!("({c}, {w})"),
                    got: format!("{:?}", win.dim()),
                });
            }
            for ci in 0..c {
                for wi in 0..w {
                    x[[i, ci, 0, wi]] = win[[ci, wi]];
                }
            }
        }
        Ok(x)
    }

    pub fn forward_cached(&self, x: &Array4<f64>, mode: Mode) -> PrivatizerCache {
        let mut a1 = self.enc1.forward(x);
        relu_inplace(&mut a1);
        let r1 = a1;
        let (b1, bn1_cache) = self.bn1.forward(&r1, mode);
        let pool1_in_w = b1.dim().3;
        let (p1, pool1_arg) = maxpool1x2_forward(&b1);

        let mut a2 = self.enc2.forward(&p1);
        relu_inplace(&mut a2);
        let r2 = a2;
        let (b2, bn2_cache) = self.bn2.forward(&r2, mode);
        let pool2_in_w = b2.dim().3;
        let (p2, pool2_arg) = maxpool1x2_forward(&b2);

        let u1 = upsample1x2(&p2);
        let mut d1 = self.dec1.forward(&u1);
        relu_inplace(&mut d1);

        let u2 = upsample1x2(&d1);
        let mut d2 = self.dec2.forward(&u2);
        relu_inplace(&mut d2);

        let output = self.out.forward(&d2);

        PrivatizerCache {
            mode,
            x: x.clone(),
            r1,
            bn1_cache,
            pool1_arg,
            pool1_in_w,
            p1,
            r2,
            bn2_cache,
            pool2_arg,
            pool2_in_w,
            u1,
            d1,
            u2,
            d2,
            output,
        }
    }

    pub fn backward_cached(
        &self,
        cache: &PrivatizerCache,
        grad_out: &Array4<f64>,
        grads: &mut PrivatizerGrads,
    ) -> Array4<f64> {
        let mut d_d2 = self.out.backward(&cache.d2, grad_out, &mut grads.out);
        relu_backward_inplace(&mut d_d2, &cache.d2);
        let d_u2 = self.dec2.backward(&cache.u2, &d_d2, &mut grads.dec2);
        let mut d_d1 = upsample1x2_backward(&d_u2);
        relu_backward_inplace(&mut d_d1, &cache.d1);
        let d_u1 = self.dec1.backward(&cache.u1, &d_d1, &mut grads.dec1);
        let d_p2 = upsample1x2_backward(&d_u1);

        let d_b2 = maxpool1x2_backward(&cache.pool2_arg, &d_p2, cache.pool2_in_w);
        let mut d_r2 = match (cache.mode, &cache.bn2_cache) {
            (Mode::Train, Some(c)) => self.bn2.backward(c, &d_b2, &mut grads.bn2),
            _ => self.bn2.backward_eval(&d_b2),
        };
        relu_backward_inplace(&mut d_r2, &cache.r2);
        let d_p1 = self.enc2.backward(&cache.p1, &d_r2, &mut grads.enc2);

        let d_b1 = maxpool1x2_backward(&cache.pool1_arg, &d_p1, cache.pool1_in_w);
        let mut d_r1 = match (cache.mode, &cache.bn1_cache) {
            (Mode::Train, Some(c)) => self.bn1.backward(c, &d_b1, &mut grads.bn1),
            _ => self.bn1.backward_eval(&d_b1),
        };
        relu_backward_inplace(&mut d_r1, &cache.r1);
        self.enc1.backward(&cache.x, &d_r1, &mut grads.enc1)
    }

    pub fn commit_bn(&mut self, cache: &PrivatizerCache) {
        if let Some(c) = &cache.bn1_cache {
            self.bn1.commit(c);
        }
        if let Some(c) = &cache.bn2_cache {
            self.bn2.commit(c);
        }
    }

    /// Inference transform of a batch: (N, 6, 1, W) -> (N, 6, 1, W).
    pub fn transform_batch(&self, x: &Array4<f64>) -> Array4<f64> {
        self.forward_cached(x, Mode::Eval).output
    }

    /// Transforms one window; output shape equals input shape.
    pub fn transform(&self, window: &Array2<f64>) -> Result<Array2<f64>> {
        let x = self.batch_input(&[window])?;
        let y = self.transform_batch(&x);
        let (c, w) = (self.config.input_channels, self.config.input_width);
        let mut out = Array2::<f64>::zeros((c, w));
        for ci in 0..c {
            for wi in 0..w {
                out[[ci, wi]] = y[[0, ci, 0, wi]];
            }
        }
        Ok(out)
    }

    /// Shared weights mean this is exactly one function applied twice.
    pub fn transform_pair(&self, enrolled: &Array2<f64>, test: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        Ok((self.transform(enrolled)?, self.transform(test)?))
    }

    /// The final linear convolution, exposed for the affinity check.
    pub fn output_layer(&self) -> &RowConv {
        &self.out
    }

    pub fn named_params(&self) -> Vec<NamedParam<'_>> {
        use ParamKind::*;
        vec![
            ("enc1.weight".into(), Trainable, self.enc1.weight.view().into_dyn()),
            ("enc1.bias".into(), Trainable, self.enc1.bias.view().into_dyn()),
            ("bn1.gamma".into(), Trainable, self.bn1.gamma.view().into_dyn()),
            ("bn1.beta".into(), Trainable, self.bn1.beta.view().into_dyn()),
            ("enc2.weight".into(), Trainable, self.enc2.weight.view().into_dyn()),
            ("enc2.bias".into(), Trainable, self.enc2.bias.view().into_dyn()),
            ("bn2.gamma".into(), Trainable, self.bn2.gamma.view().into_dyn()),
            ("bn2.beta".into(), Trainable, self.bn2.beta.view().into_dyn()),
            ("dec1.weight".into(), Trainable, self.dec1.weight.view().into_dyn()),
            ("dec1.bias".into(), Trainable, self.dec1.bias.view().into_dyn()),
            ("dec2.weight".into(), Trainable, self.dec2.weight.view().into_dyn()),
            ("dec2.bias".into(), Trainable, self.dec2.bias.view().into_dyn()),
            ("out.weight".into(), Trainable, self.out.weight.view().into_dyn()),
            ("out.bias".into(), Trainable, self.out.bias.view().into_dyn()),
            ("bn1.running_mean".into(), Buffer, self.bn1.running_mean.view().into_dyn()),
            ("bn1.running_var".into(), Buffer, self.bn1.running_var.view().into_dyn()),
            ("bn2.running_mean".into(), Buffer, self.bn2.running_mean.view().into_dyn()),
            ("bn2.running_var".into(), Buffer, self.bn2.running_var.view().into_dyn()),
        ]
    }

    pub fn named_params_mut(&mut self) -> Vec<NamedParamMut<'_>> {
        use ParamKind::*;
        vec![
            ("enc1.weight".into(), Trainable, self.enc1.weight.view_mut().into_dyn()),
            ("enc1.bias".into(), Trainable, self.enc1.bias.view_mut().into_dyn()),
            ("bn1.gamma".into(), Trainable, self.bn1.gamma.view_mut().into_dyn()),
            ("bn1.beta".into(), Trainable, self.bn1.beta.view_mut().into_dyn()),
            ("enc2.weight".into(), Trainable, self.enc2.weight.view_mut().into_dyn()),
            ("enc2.bias".into(), Trainable, self.enc2.bias.view_mut().into_dyn()),
            ("bn2.gamma".into(), Trainable, self.bn2.gamma.view_mut().into_dyn()),
            ("bn2.beta".into(), Trainable, self.bn2.beta.view_mut().into_dyn()),
            ("dec1.weight".into(), Trainable, self.dec1.weight.view_mut().into_dyn()),
            ("dec1.bias".into(), Trainable, self.dec1.bias.view_mut().into_dyn()),
            ("dec2.weight".into(), Trainable, self.dec2.weight.view_mut().into_dyn()),
            ("dec2.bias".into(), Trainable, self.dec2.bias.view_mut().into_dyn()),
            ("out.weight".into(), Trainable, self.out.weight.view_mut().into_dyn()),
            ("out.bias".into(), Trainable, self.out.bias.view_mut().into_dyn()),
            ("bn1.running_mean".into(), Buffer, self.bn1.running_mean.view_mut().into_dyn()),
            ("bn1.running_var".into(), Buffer, self.bn1.running_var.view_mut().into_dyn()),
            ("bn2.running_mean".into(), Buffer, self.bn2.running_mean.view_mut().into_dyn()),
            ("bn2.running_var".into(), Buffer, self.bn2.running_var.view_mut().into_dyn()),
        ]
    }

    pub fn param_checksum(&self) -> u64 {
        checksum(&self.named_params())
    }
}

/// Nearest-neighbor 1x2 upsampling along W.
fn upsample1x2(x: &Array4<f64>) -> Array4<f64> {
    let (n, c, h, w) = x.dim();
    let mut y = Array4::<f64>::zeros((n, c, h, 2 * w));
    let xs = x.as_slice().expect("contiguous");
    let ys = y.as_slice_mut().expect("contiguous");
    for row in 0..n * c * h {
        let src = row * w;
        let dst = row * 2 * w;
        for wi in 0..w {
            let v = xs[src + wi];
            ys[dst + 2 * wi] = v;
            ys[dst + 2 * wi + 1] = v;
        }
    }
    y
}

fn upsample1x2_backward(grad_out: &Array4<f64>) -> Array4<f64> {
    let (n, c, h, w2) = grad_out.dim();
    let w = w2 / 2;
    let mut dx = Array4::<f64>::zeros((n, c, h, w));
    let gs = grad_out.as_slice().expect("contiguous");
    let ds = dx.as_slice_mut().expect("contiguous");
    for row in 0..n * c * h {
        let src = row * w2;
        let dst = row * w;
        for wi in 0..w {
            ds[dst + wi] = gs[src + 2 * wi] + gs[src + 2 * wi + 1];
        }
    }
    dx
}
