//! The Siamese gait verification network.
//!
//! Both branches are literally the same parameter set: a window batch is
//! pushed through three 1x3 convolutions (ReLU), one batch-norm + 1x2
//! max-pool + dropout block, reshaped back to a time sequence, summarized
//! by a bi-directional LSTM, and embedded by a sigmoid dense layer. A pair
//! is scored by a single sigmoid unit over the absolute difference of the
//! two embeddings.
//!
//! The two inner taps (`Conv2_1`, `Conv3_1`) expose post-ReLU feature
//! maps for the style and content losses of the privacy training stage;
//! `backward_cached` accepts extra gradients injected at those taps so
//! one pass serves all three loss paths.

use crate::error::{Error, Result};
use crate::nn::{
    checksum, dropout_backward, dropout_forward, maxpool1x2_backward, maxpool1x2_forward,
    relu_backward_inplace, relu_inplace, sample_dropout_mask, BatchNorm2d, BiLstm, BiLstmCache,
    BiLstmGrads, Bn2dCache, BnGrads, Dense, DenseGrads, Mode, NamedParam, NamedParamMut,
    Padding, ParamKind, RowConv, RowConvGrads,
};
use crate::seed::{self, tag};
use ndarray::{Array1, Array2, Array3, Array4, Axis};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Internal feature-map taps available to the losses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[allow(non_camel_case_types)]
pub enum Tap {
    Conv2_1,
    Conv3_1,
}

impl Tap {
    pub fn name(self) -> &'static str {
        match self {
            Tap::Conv2_1 => "Conv2_1",
            Tap::Conv3_1 => "Conv3_1",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "Conv2_1" => Ok(Tap::Conv2_1),
            "Conv3_1" => Ok(Tap::Conv3_1),
            other => Err(Error::Config(format!(
                "unknown tap '{other}'; valid taps: Conv2_1, Conv3_1"
            ))),
        }
    }
}

/// Post-ReLU activations at one tap for a single window: (C, H, W).
#[derive(Clone, Debug)]
pub struct FeatureMap {
    pub values: Array3<f64>,
    pub tap: Tap,
}

/// A 400-dim sigmoid embedding of one window.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub values: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifierConfig {
    /// Signal rows (6) and time samples (100) of one window.
    pub input_height: usize,
    pub input_width: usize,
    /// Filter counts of Conv1_1, Conv2_1, Conv3_1.
    pub conv_filters: [usize; 3],
    pub kernel_w: usize,
    pub dropout_prob: f64,
    pub lstm_units: usize,
    pub embedding_dim: usize,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            input_height: 6,
            input_width: 100,
            conv_filters: [16, 32, 64],
            kernel_w: 3,
            dropout_prob: 0.5,
            lstm_units: 50,
            embedding_dim: 400,
        }
    }
}

impl VerifierConfig {
    /// Width after the three valid convolutions.
    pub fn conv_out_width(&self, layer: usize) -> usize {
        self.input_width - layer * (self.kernel_w - 1)
    }

    /// LSTM sequence length: pooled conv width.
    pub fn lstm_steps(&self) -> usize {
        self.conv_out_width(3) / 2
    }

    /// Per-step LSTM input size: filters x signal rows.
    pub fn lstm_input_size(&self) -> usize {
        self.conv_filters[2] * self.input_height
    }

    /// Symbolic layer-by-layer output shapes. Errors name the first layer
    /// whose output collapses.
    pub fn shape_trace(&self) -> Result<Vec<(String, Vec<usize>)>> {
        if self.input_height == 0 || self.input_width == 0 {
            return Err(Error::Build { layer: "input".into(), message: "empty input shape".into() });
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::Build {
                layer: "dropout".into(),
                message: format!("dropout_prob must be in [0,1), got {}", self.dropout_prob),
            });
        }
        if self.kernel_w < 1 || self.conv_filters.contains(&0) || self.lstm_units == 0 || self.embedding_dim == 0 {
            return Err(Error::Build { layer: "config".into(), message: "zero-sized layer".into() });
        }
        let mut trace = Vec::new();
        let (h, mut w) = (self.input_height, self.input_width);
        trace.push(("input".to_string(), vec![1, h, w]));
        for (i, &f) in self.conv_filters.iter().enumerate() {
            let name = format!("Conv{}_1", i + 1);
            if w < self.kernel_w {
                return Err(Error::Build {
                    layer: name,
                    message: format!("width {w} smaller than kernel {}", self.kernel_w),
                });
            }
            w = w - self.kernel_w + 1;
            trace.push((name, vec![f, h, w]));
        }
        trace.push(("batch_norm".to_string(), vec![self.conv_filters[2], h, w]));
        if w < 2 {
            return Err(Error::Build { layer: "max_pool".into(), message: format!("width {w} < 2") });
        }
        w /= 2;
        trace.push(("max_pool".to_string(), vec![self.conv_filters[2], h, w]));
        trace.push(("dropout".to_string(), vec![self.conv_filters[2], h, w]));
        trace.push(("reshape".to_string(), vec![w, self.conv_filters[2] * h]));
        trace.push(("bilstm".to_string(), vec![2 * self.lstm_units]));
        trace.push(("embedding".to_string(), vec![self.embedding_dim]));
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape_trace().map(|_| ())
    }
}

#[derive(Clone, Debug)]
pub struct VerifierModel {
    pub config: VerifierConfig,
    pub seed: u64,
    conv1: RowConv,
    conv2: RowConv,
    conv3: RowConv,
    bn: BatchNorm2d,
    lstm: BiLstm,
    embed_layer: Dense,
    head: Dense,
    frozen: bool,
}

/// Gradients mirroring the trainable parameters of [`VerifierModel`].
#[derive(Clone, Debug)]
pub struct VerifierGrads {
    pub conv1: RowConvGrads,
    pub conv2: RowConvGrads,
    pub conv3: RowConvGrads,
    pub bn: BnGrads,
    pub lstm: BiLstmGrads,
    pub embed_layer: DenseGrads,
    pub head: DenseGrads,
}

impl VerifierGrads {
    pub fn zeros_like(model: &VerifierModel) -> Self {
        VerifierGrads {
            conv1: RowConvGrads::zeros_like(&model.conv1),
            conv2: RowConvGrads::zeros_like(&model.conv2),
            conv3: RowConvGrads::zeros_like(&model.conv3),
            bn: BnGrads::zeros(model.bn.channels()),
            lstm: BiLstmGrads::zeros_like(&model.lstm),
            embed_layer: DenseGrads::zeros_like(&model.embed_layer),
            head: DenseGrads::zeros_like(&model.head),
        }
    }

    /// Views aligned with `VerifierModel::trainable_params_mut` order.
    pub fn views(&self) -> Vec<ndarray::ArrayViewD<'_, f64>> {
        vec![
            self.conv1.weight.view().into_dyn(),
            self.conv1.bias.view().into_dyn(),
            self.conv2.weight.view().into_dyn(),
            self.conv2.bias.view().into_dyn(),
            self.conv3.weight.view().into_dyn(),
            self.conv3.bias.view().into_dyn(),
            self.bn.gamma.view().into_dyn(),
            self.bn.beta.view().into_dyn(),
            self.lstm.fwd.w_ih.view().into_dyn(),
            self.lstm.fwd.w_hh.view().into_dyn(),
            self.lstm.fwd.bias.view().into_dyn(),
            self.lstm.bwd.w_ih.view().into_dyn(),
            self.lstm.bwd.w_hh.view().into_dyn(),
            self.lstm.bwd.bias.view().into_dyn(),
            self.embed_layer.weight.view().into_dyn(),
            self.embed_layer.bias.view().into_dyn(),
            self.head.weight.view().into_dyn(),
            self.head.bias.view().into_dyn(),
        ]
    }
}

/// Everything a backward pass needs from one forward pass.
pub struct VerifierCache {
    mode: Mode,
    x: Array4<f64>,
    c1: Array4<f64>,
    c2: Array4<f64>,
    c3: Array4<f64>,
    bn_cache: Option<Bn2dCache>,
    pool_arg: Vec<u8>,
    pool_in_w: usize,
    drop_mask: Option<Array4<f64>>,
    seq: Array3<f64>,
    lstm_cache: BiLstmCache,
    lstm_out: Array2<f64>,
    emb: Array2<f64>,
}

impl VerifierCache {
    /// Post-ReLU activations at a tap for the whole batch.
    pub fn tap(&self, tap: Tap) -> &Array4<f64> {
        match tap {
            Tap::Conv2_1 => &self.c2,
            Tap::Conv3_1 => &self.c3,
        }
    }

    pub fn embeddings(&self) -> &Array2<f64> {
        &self.emb
    }

    pub fn bn_cache(&self) -> Option<&Bn2dCache> {
        self.bn_cache.as_ref()
    }
}

/// Cache for the pair-scoring head.
pub struct HeadCache {
    diff_sign: Array2<f64>,
    absdiff: Array2<f64>,
    pub probs: Array1<f64>,
}

impl VerifierModel {
    /// Deterministic build; the config is validated through a full shape
    /// trace and a smoke forward pass.
    pub fn build(config: VerifierConfig, seed_value: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed_value, tag::VERIFIER_INIT, 0);
        let [f1, f2, f3] = config.conv_filters;
        let k = config.kernel_w;
        let model = VerifierModel {
            conv1: RowConv::new(1, f1, k, Padding::Valid, &mut rng),
            conv2: RowConv::new(f1, f2, k, Padding::Valid, &mut rng),
            conv3: RowConv::new(f2, f3, k, Padding::Valid, &mut rng),
            bn: BatchNorm2d::new(f3),
            lstm: BiLstm::new(config.lstm_input_size(), config.lstm_units, &mut rng),
            embed_layer: Dense::new(2 * config.lstm_units, config.embedding_dim, &mut rng),
            head: Dense::new(config.embedding_dim, 1, &mut rng),
            frozen: false,
            config,
            seed: seed_value,
        };
        let smoke = Array4::<f64>::zeros((1, 1, model.config.input_height, model.config.input_width));
        let emb = model.embed_batch(&smoke);
        debug_assert_eq!(emb.dim().1, model.config.embedding_dim);
        Ok(model)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    /// Converts a batch of (H, W) windows into the (N, 1, H, W) input
    /// tensor, validating shapes.
    pub fn batch_input(&self, windows: &[&Array2<f64>]) -> Result<Array4<f64>> {
        let (h, w) = (self.config.input_height, self.config.input_width);
        let mut x = Array4::<f64>::zeros((windows.len(), 1, h, w));
        for (i, win) in windows.iter().enumerate() {
            if win.dim() != (h, w) {
                return Err(Error::Shape {
                    expected: format!("({h}, {w})"),
                    got: format!("{:?}", win.dim()),
                });
            }
            x.index_axis_mut(Axis(0), i).index_axis_mut(Axis(0), 0).assign(win);
        }
        Ok(x)
    }

    /// Full forward pass with cache. `rng` drives dropout and must be
    /// `Some` in training mode.
    pub fn forward_cached(&self, x: &Array4<f64>, mode: Mode, rng: Option<&mut ChaCha12Rng>) -> VerifierCache {
        let mut c1 = self.conv1.forward(x);
        relu_inplace(&mut c1);
        let mut c2 = self.conv2.forward(&c1);
        relu_inplace(&mut c2);
        let mut c3 = self.conv3.forward(&c2);
        relu_inplace(&mut c3);

        let (bn_out, bn_cache) = self.bn.forward(&c3, mode);
        let pool_in_w = bn_out.dim().3;
        let (pooled, pool_arg) = maxpool1x2_forward(&bn_out);

        let (dropped, drop_mask) = match mode {
            Mode::Train if self.config.dropout_prob > 0.0 => {
                let rng = rng.expect("training forward needs an RNG for dropout");
                let mask = sample_dropout_mask(pooled.raw_dim(), self.config.dropout_prob, rng);
                (dropout_forward(&pooled, &mask), Some(mask))
            }
            _ => (pooled, None),
        };

        let seq = reshape_to_sequence(&dropped);
        let (lstm_out, lstm_cache) = self.lstm.forward(&seq);
        let mut emb = self.embed_layer.forward(&lstm_out);
        emb.mapv_inplace(crate::nn::sigmoid);

        VerifierCache {
            mode,
            x: x.clone(),
            c1,
            c2,
            c3,
            bn_cache,
            pool_arg,
            pool_in_w,
            drop_mask,
            seq,
            lstm_cache,
            lstm_out,
            emb,
        }
    }

    /// Backward from embedding gradients, with optional extra gradients
    /// injected at the content (Conv3_1) and style (Conv2_1) taps.
    /// Returns the input gradient; parameter gradients accumulate into
    /// `grads`.
    pub fn backward_cached(
        &self,
        cache: &VerifierCache,
        d_emb: &Array2<f64>,
        d_tap3: Option<&Array4<f64>>,
        d_tap2: Option<&Array4<f64>>,
        grads: &mut VerifierGrads,
    ) -> Array4<f64> {
        // sigmoid embedding
        let mut d_pre = d_emb.clone();
        d_pre.zip_mut_with(&cache.emb, |g, &e| *g *= e * (1.0 - e));
        let d_lstm_out = self.embed_layer.backward(&cache.lstm_out, &d_pre, &mut grads.embed_layer);
        let d_seq = self.lstm.backward(&cache.seq, &cache.lstm_cache, &d_lstm_out, &mut grads.lstm);
        let mut d_pooled = reshape_from_sequence(&d_seq, cache.c3.dim().1, cache.c3.dim().2);

        if let Some(mask) = &cache.drop_mask {
            d_pooled = dropout_backward(&d_pooled, mask);
        }
        let d_bn_out = maxpool1x2_backward(&cache.pool_arg, &d_pooled, cache.pool_in_w);
        let mut d_c3 = match (cache.mode, &cache.bn_cache) {
            (Mode::Train, Some(bn_cache)) => self.bn.backward(bn_cache, &d_bn_out, &mut grads.bn),
            _ => self.bn.backward_eval(&d_bn_out),
        };

        if let Some(extra) = d_tap3 {
            d_c3 += extra;
        }
        relu_backward_inplace(&mut d_c3, &cache.c3);
        let mut d_c2 = self.conv3.backward(&cache.c2, &d_c3, &mut grads.conv3);

        if let Some(extra) = d_tap2 {
            d_c2 += extra;
        }
        relu_backward_inplace(&mut d_c2, &cache.c2);
        let mut d_c1 = self.conv2.backward(&cache.c1, &d_c2, &mut grads.conv2);

        relu_backward_inplace(&mut d_c1, &cache.c1);
        self.conv1.backward(&cache.x, &d_c1, &mut grads.conv1)
    }

    /// Folds the batch statistics of a training forward into the running
    /// estimates. No-op for eval caches.
    pub fn commit_bn(&mut self, cache: &VerifierCache) {
        if let Some(bn_cache) = &cache.bn_cache {
            self.bn.commit(bn_cache);
        }
    }

    /// Inference embeddings for a batch: (N, 1, H, W) -> (N, embedding_dim).
    pub fn embed_batch(&self, x: &Array4<f64>) -> Array2<f64> {
        self.forward_cached(x, Mode::Eval, None).emb
    }

    /// Embeds one window (inference mode, deterministic).
    pub fn embed(&self, window: &Array2<f64>) -> Result<Embedding> {
        let x = self.batch_input(&[window])?;
        let emb = self.embed_batch(&x);
        Ok(Embedding { values: emb.row(0).to_owned() })
    }

    /// Pair scoring head on precomputed embeddings.
    pub fn score_head(&self, emb_a: &Array2<f64>, emb_b: &Array2<f64>) -> HeadCache {
        let diff = emb_a - emb_b;
        let diff_sign = diff.mapv(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 });
        let absdiff = diff.mapv(f64::abs);
        let logits_2d = self.head.forward(&absdiff);
        let logits = logits_2d.index_axis(Axis(1), 0).to_owned();
        let probs = logits.mapv(crate::nn::sigmoid);
        HeadCache { diff_sign, absdiff, probs }
    }

    /// Backward through the scoring head from d(logit). Returns gradients
    /// for both embedding batches.
    pub fn score_head_backward(
        &self,
        cache: &HeadCache,
        d_logits: &Array1<f64>,
        grads: &mut VerifierGrads,
    ) -> (Array2<f64>, Array2<f64>) {
        let n = d_logits.len();
        let d_logits_2d = d_logits.view().into_shape_with_order((n, 1)).expect("contiguous");
        let d_absdiff = self.head.backward(&cache.absdiff, &d_logits_2d.to_owned(), &mut grads.head);
        let d_a = &d_absdiff * &cache.diff_sign;
        let d_b = -&d_a;
        (d_a, d_b)
    }

    /// Probability that two windows come from the same subject.
    /// Exactly symmetric in its arguments.
    pub fn score_pair(&self, a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
        let xa = self.batch_input(&[a])?;
        let xb = self.batch_input(&[b])?;
        let ea = self.embed_batch(&xa);
        let eb = self.embed_batch(&xb);
        Ok(self.score_head(&ea, &eb).probs[0])
    }

    /// Scores a batch of pairs in inference mode.
    pub fn score_batch(&self, a: &Array4<f64>, b: &Array4<f64>) -> Array1<f64> {
        let ea = self.embed_batch(a);
        let eb = self.embed_batch(b);
        self.score_head(&ea, &eb).probs
    }

    /// Conv-stack-only inference up to a tap (post-ReLU), batched.
    pub fn conv_features(&self, x: &Array4<f64>, tap: Tap) -> Array4<f64> {
        let mut c1 = self.conv1.forward(x);
        relu_inplace(&mut c1);
        let mut c2 = self.conv2.forward(&c1);
        relu_inplace(&mut c2);
        if tap == Tap::Conv2_1 {
            return c2;
        }
        let mut c3 = self.conv3.forward(&c2);
        relu_inplace(&mut c3);
        c3
    }

    /// Feature map of one window at a tap.
    pub fn feature_map(&self, window: &Array2<f64>, tap: Tap) -> Result<FeatureMap> {
        let x = self.batch_input(&[window])?;
        let maps = self.conv_features(&x, tap);
        Ok(FeatureMap { values: maps.index_axis(Axis(0), 0).to_owned(), tap })
    }

    pub fn named_params(&self) -> Vec<NamedParam<'_>> {
        use ParamKind::*;
        vec![
            ("conv1_1.weight".into(), Trainable, self.conv1.weight.view().into_dyn()),
            ("conv1_1.bias".into(), Trainable, self.conv1.bias.view().into_dyn()),
            ("conv2_1.weight".into(), Trainable, self.conv2.weight.view().into_dyn()),
            ("conv2_1.bias".into(), Trainable, self.conv2.bias.view().into_dyn()),
            ("conv3_1.weight".into(), Trainable, self.conv3.weight.view().into_dyn()),
            ("conv3_1.bias".into(), Trainable, self.conv3.bias.view().into_dyn()),
            ("bn.gamma".into(), Trainable, self.bn.gamma.view().into_dyn()),
            ("bn.beta".into(), Trainable, self.bn.beta.view().into_dyn()),
            ("lstm.fwd.w_ih".into(), Trainable, self.lstm.fwd.w_ih.view().into_dyn()),
            ("lstm.fwd.w_hh".into(), Trainable, self.lstm.fwd.w_hh.view().into_dyn()),
            ("lstm.fwd.bias".into(), Trainable, self.lstm.fwd.bias.view().into_dyn()),
            ("lstm.bwd.w_ih".into(), Trainable, self.lstm.bwd.w_ih.view().into_dyn()),
            ("lstm.bwd.w_hh".into(), Trainable, self.lstm.bwd.w_hh.view().into_dyn()),
            ("lstm.bwd.bias".into(), Trainable, self.lstm.bwd.bias.view().into_dyn()),
            ("embed.weight".into(), Trainable, self.embed_layer.weight.view().into_dyn()),
            ("embed.bias".into(), Trainable, self.embed_layer.bias.view().into_dyn()),
            ("head.weight".into(), Trainable, self.head.weight.view().into_dyn()),
            ("head.bias".into(), Trainable, self.head.bias.view().into_dyn()),
            ("bn.running_mean".into(), Buffer, self.bn.running_mean.view().into_dyn()),
            ("bn.running_var".into(), Buffer, self.bn.running_var.view().into_dyn()),
        ]
    }

    pub fn named_params_mut(&mut self) -> Vec<NamedParamMut<'_>> {
        use ParamKind::*;
        vec![
            ("conv1_1.weight".into(), Trainable, self.conv1.weight.view_mut().into_dyn()),
            ("conv1_1.bias".into(), Trainable, self.conv1.bias.view_mut().into_dyn()),
            ("conv2_1.weight".into(), Trainable, self.conv2.weight.view_mut().into_dyn()),
            ("conv2_1.bias".into(), Trainable, self.conv2.bias.view_mut().into_dyn()),
            ("conv3_1.weight".into(), Trainable, self.conv3.weight.view_mut().into_dyn()),
            ("conv3_1.bias".into(), Trainable, self.conv3.bias.view_mut().into_dyn()),
            ("bn.gamma".into(), Trainable, self.bn.gamma.view_mut().into_dyn()),
            ("bn.beta".into(), Trainable, self.bn.beta.view_mut().into_dyn()),
            ("lstm.fwd.w_ih".into(), Trainable, self.lstm.fwd.w_ih.view_mut().into_dyn()),
            ("lstm.fwd.w_hh".into(), Trainable, self.lstm.fwd.w_hh.view_mut().into_dyn()),
            ("lstm.fwd.bias".into(), Trainable, self.lstm.fwd.bias.view_mut().into_dyn()),
            ("lstm.bwd.w_ih".into(), Trainable, self.lstm.bwd.w_ih.view_mut().into_dyn()),
            ("lstm.bwd.w_hh".into(), Trainable, self.lstm.bwd.w_hh.view_mut().into_dyn()),
            ("lstm.bwd.bias".into(), Trainable, self.lstm.bwd.bias.view_mut().into_dyn()),
            ("embed.weight".into(), Trainable, self.embed_layer.weight.view_mut().into_dyn()),
            ("embed.bias".into(), Trainable, self.embed_layer.bias.view_mut().into_dyn()),
            ("head.weight".into(), Trainable, self.head.weight.view_mut().into_dyn()),
            ("head.bias".into(), Trainable, self.head.bias.view_mut().into_dyn()),
            ("bn.running_mean".into(), Buffer, self.bn.running_mean.view_mut().into_dyn()),
            ("bn.running_var".into(), Buffer, self.bn.running_var.view_mut().into_dyn()),
        ]
    }

    /// Bit-exact checksum over all parameters and buffers.
    pub fn param_checksum(&self) -> u64 {
        checksum(&self.named_params())
    }
}

/// (N, C, H, W) -> (N, T=W, D=C*H): one sequence step per time column.
fn reshape_to_sequence(x: &Array4<f64>) -> Array3<f64> {
    let (n, c, h, w) = x.dim();
    let mut seq = Array3::<f64>::zeros((n, w, c * h));
    for ni in 0..n {
        for ci in 0..c {
            for hi in 0..h {
                let d = ci * h + hi;
                for wi in 0..w {
                    seq[[ni, wi, d]] = x[[ni, ci, hi, wi]];
                }
            }
        }
    }
    seq
}

/// Inverse of [`reshape_to_sequence`].
fn reshape_from_sequence(seq: &Array3<f64>, c: usize, h: usize) -> Array4<f64> {
    let (n, w, d) = seq.dim();
    assert_eq!(d, c * h);
    let mut x = Array4::<f64>::zeros((n, c, h, w));
    for ni in 0..n {
        for ci in 0..c {
            for hi in 0..h {
                let dd = ci * h + hi;
                for wi in 0..w {
                    x[[ni, ci, hi, wi]] = seq[[ni, wi, dd]];
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_window(cfg: &VerifierConfig, seed_val: u64) -> Array2<f64> {
        let mut rng = seed::rng(seed_val, 0xf8, 0);
        let v: Vec<f64> = (0..cfg.input_height * cfg.input_width)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        Array2::from_shape_vec((cfg.input_height, cfg.input_width), v).unwrap()
    }

    #[test]
    fn default_shape_trace_matches_hand_trace() {
        let cfg = VerifierConfig::default();
        let trace = cfg.shape_trace().unwrap();
        let expect = |name: &str| trace.iter().find(|(n, _)| n == name).unwrap().1.clone();
        assert_eq!(expect("Conv1_1"), vec![16, 6, 98]);
        assert_eq!(expect("Conv2_1"), vec![32, 6, 96]);
        assert_eq!(expect("Conv3_1"), vec![64, 6, 94]);
        assert_eq!(expect("max_pool"), vec![64, 6, 47]);
        assert_eq!(expect("reshape"), vec![47, 384]);
        assert_eq!(expect("bilstm"), vec![100]);
        assert_eq!(expect("embedding"), vec![400]);
    }

    #[test]
    fn build_is_deterministic_and_embeds_400() {
        let cfg = VerifierConfig::default();
        let m1 = VerifierModel::build(cfg.clone(), 7).unwrap();
        let m2 = VerifierModel::build(cfg.clone(), 7).unwrap();
        assert_eq!(m1.param_checksum(), m2.param_checksum());
        let m3 = VerifierModel::build(cfg.clone(), 8).unwrap();
        assert_ne!(m1.param_checksum(), m3.param_checksum());

        let w = random_window(&cfg, 1);
        let e = m1.embed(&w).unwrap();
        assert_eq!(e.values.len(), 400);
        assert!(e.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn embed_is_deterministic_and_distinguishes_windows() {
        let cfg = VerifierConfig::default();
        let m = VerifierModel::build(cfg.clone(), 3).unwrap();
        let w1 = random_window(&cfg, 10);
        let w2 = random_window(&cfg, 11);
        let e1a = m.embed(&w1).unwrap().values;
        let e1b = m.embed(&w1).unwrap().values;
        assert_eq!(e1a, e1b);
        let e2 = m.embed(&w2).unwrap().values;
        assert!(e1a != e2, "fresh model collapsed distinct windows");
    }

    #[test]
    fn score_pair_is_exactly_symmetric() {
        let cfg = VerifierConfig::default();
        let m = VerifierModel::build(cfg.clone(), 3).unwrap();
        let a = random_window(&cfg, 20);
        let b = random_window(&cfg, 21);
        let sab = m.score_pair(&a, &b).unwrap();
        let sba = m.score_pair(&b, &a).unwrap();
        assert_eq!(sab.to_bits(), sba.to_bits());
        assert!((0.0..=1.0).contains(&sab));
    }

    #[test]
    fn identical_inputs_give_zero_difference_vector() {
        let cfg = VerifierConfig::default();
        let m = VerifierModel::build(cfg.clone(), 5).unwrap();
        let x = random_window(&cfg, 30);
        let e = m.embed(&x).unwrap().values.insert_axis(Axis(0));
        let head = m.score_head(&e, &e);
        assert!(head.absdiff.iter().all(|v| *v == 0.0));
        assert_eq!(head.probs[0], crate::nn::sigmoid(m.head.bias[0]));
    }

    #[test]
    fn feature_map_shapes_and_relu_range() {
        let cfg = VerifierConfig::default();
        let m = VerifierModel::build(cfg.clone(), 5).unwrap();
        let w = random_window(&cfg, 40);
        let f2 = m.feature_map(&w, Tap::Conv2_1).unwrap();
        assert_eq!(f2.values.dim(), (32, 6, 96));
        let f3 = m.feature_map(&w, Tap::Conv3_1).unwrap();
        assert_eq!(f3.values.dim(), (64, 6, 94));
        assert!(f2.values.iter().all(|v| *v >= 0.0));
        assert!(f3.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let cfg = VerifierConfig::default();
        let m = VerifierModel::build(cfg, 5).unwrap();
        let bad = Array2::<f64>::zeros((6, 55));
        assert!(matches!(m.embed(&bad), Err(Error::Shape { .. })));
        assert!(Tap::parse("Conv9_9").is_err());
    }

    #[test]
    fn shape_trace_matches_actual_forward_for_varied_configs() {
        for (filters, width, units) in [
            ([2usize, 3, 4], 20usize, 3usize),
            ([4, 4, 4], 33, 5),
            ([1, 2, 8], 16, 2),
        ] {
            let cfg = VerifierConfig {
                input_width: width,
                conv_filters: filters,
                lstm_units: units,
                embedding_dim: 9,
                ..VerifierConfig::default()
            };
            let trace = cfg.shape_trace().unwrap();
            let m = VerifierModel::build(cfg.clone(), 1).unwrap();
            let x = Array4::<f64>::zeros((2, 1, cfg.input_height, cfg.input_width));
            let cache = m.forward_cached(&x, Mode::Eval, None);
            let find = |name: &str| trace.iter().find(|(n, _)| n == name).unwrap().1.clone();
            let d2 = cache.c2.dim();
            assert_eq!(find("Conv2_1"), vec![d2.1, d2.2, d2.3]);
            let d3 = cache.c3.dim();
            assert_eq!(find("Conv3_1"), vec![d3.1, d3.2, d3.3]);
            assert_eq!(find("embedding"), vec![cache.emb.dim().1]);
        }
    }

    /// Tiny config used by the finite-difference suites: every parameter
    /// is checkable in well under a second.
    pub(crate) fn tiny_config() -> VerifierConfig {
        VerifierConfig {
            input_height: 6,
            input_width: 12,
            conv_filters: [2, 2, 2],
            kernel_w: 3,
            dropout_prob: 0.0, // deterministic loss for finite differences
            lstm_units: 4,
            embedding_dim: 8,
        }
    }

    fn jitter_params(model: &mut VerifierModel, seed_val: u64) {
        let mut rng = seed::rng(seed_val, 0xf8, 9);
        for (_, kind, mut view) in model.named_params_mut() {
            if kind == crate::nn::ParamKind::Trainable {
                for v in view.iter_mut() {
                    *v += rng.random_range(-0.05..0.05);
                }
            }
        }
    }

    fn pair_bce_loss(model: &VerifierModel, x: &Array4<f64>, labels: &[bool]) -> f64 {
        let cache = model.forward_cached(x, Mode::Train, None);
        let b = labels.len();
        let ea = cache.emb.slice(ndarray::s![..b, ..]).to_owned();
        let eb = cache.emb.slice(ndarray::s![b.., ..]).to_owned();
        let head = model.score_head(&ea, &eb);
        let probs: Vec<f64> = head.probs.to_vec();
        crate::losses::task_loss_batch(labels, &probs)
    }

    #[test]
    fn every_parameter_gradient_matches_finite_differences() {
        // seeds chosen so every pre-activation sits clear of ReLU and
        // pooling kinks at the finite-difference step
        let cfg = tiny_config();
        let mut model = VerifierModel::build(cfg.clone(), 1).unwrap();
        jitter_params(&mut model, 1);
        let model = model;

        let mut rng = seed::rng(77, 0xf8, 2);
        let n = 4; // 2 pairs
        let v: Vec<f64> = (0..n * 6 * 12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Array4::from_shape_vec((n, 1, 6, 12), v).unwrap();
        let labels = vec![true, false];

        // analytic gradients
        let cache = model.forward_cached(&x, Mode::Train, None);
        let b = labels.len();
        let ea = cache.emb.slice(ndarray::s![..b, ..]).to_owned();
        let eb = cache.emb.slice(ndarray::s![b.., ..]).to_owned();
        let head = model.score_head(&ea, &eb);
        let dlogits = Array1::from_iter(
            labels
                .iter()
                .zip(head.probs.iter())
                .map(|(&y, &p)| (p - if y { 1.0 } else { 0.0 }) / b as f64),
        );
        let mut grads = VerifierGrads::zeros_like(&model);
        let (d_ea, d_eb) = model.score_head_backward(&head, &dlogits, &mut grads);
        let mut d_emb = Array2::<f64>::zeros((n, cfg.embedding_dim));
        d_emb.slice_mut(ndarray::s![..b, ..]).assign(&d_ea);
        d_emb.slice_mut(ndarray::s![b.., ..]).assign(&d_eb);
        model.backward_cached(&cache, &d_emb, None, None, &mut grads);

        let eps = 1e-4;
        let rel = |a: f64, fd: f64| (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4);
        let mut probe = model.clone();
        let perturb = |m: &mut VerifierModel, tensor: usize, j: usize, delta: f64| {
            let mut views: Vec<_> = m
                .named_params_mut()
                .into_iter()
                .filter(|(_, k, _)| *k == crate::nn::ParamKind::Trainable)
                .collect();
            views[tensor].2.as_slice_mut().unwrap()[j] += delta;
        };
        for (ti, gview) in grads.views().iter().enumerate() {
            let flat = gview.as_slice().unwrap();
            for (j, &analytic) in flat.iter().enumerate() {
                perturb(&mut probe, ti, j, eps);
                let up = pair_bce_loss(&probe, &x, &labels);
                perturb(&mut probe, ti, j, -2.0 * eps);
                let down = pair_bce_loss(&probe, &x, &labels);
                perturb(&mut probe, ti, j, eps);
                let fd = (up - down) / (2.0 * eps);
                assert!(
                    rel(analytic, fd) < 1e-3,
                    "tensor {ti} coord {j}: analytic {analytic} vs fd {fd}"
                );
            }
        }
    }

    /// Stage-2 composite gradient: BCE through the head plus content and
    /// style tap injections, all flowing to the input of a frozen
    /// (eval-mode) verifier.
    #[test]
    fn composite_input_gradient_matches_finite_differences() {
        let cfg = tiny_config();
        let mut model = VerifierModel::build(cfg.clone(), 5).unwrap();
        jitter_params(&mut model, 37);
        // non-trivial BN buffers
        {
            let mut rng = seed::rng(5, 0xf8, 3);
            let v: Vec<f64> = (0..4 * 6 * 12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let warm = Array4::from_shape_vec((4, 1, 6, 12), v).unwrap();
            let cache = model.forward_cached(&warm, Mode::Train, None);
            model.commit_bn(&cache);
        }
        let model = model;

        let mut rng = seed::rng(99, 0xf8, 4);
        let n = 4;
        let mut rand4 = |shape: (usize, usize, usize, usize)| {
            let len = shape.0 * shape.1 * shape.2 * shape.3;
            let v: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            Array4::from_shape_vec(shape, v).unwrap()
        };
        let x = rand4((n, 1, 6, 12));
        let content_ref = model.conv_features(&rand4((n, 1, 6, 12)), Tap::Conv3_1);
        let style_ref = model.conv_features(&rand4((n, 1, 6, 12)), Tap::Conv2_1);
        let labels = vec![true, false];
        let (alpha, beta, gamma) = (0.4, 0.4, 0.2);

        let loss = |x: &Array4<f64>| -> f64 {
            let cache = model.forward_cached(x, Mode::Eval, None);
            let b = labels.len();
            let ea = cache.emb.slice(ndarray::s![..b, ..]).to_owned();
            let eb = cache.emb.slice(ndarray::s![b.., ..]).to_owned();
            let head = model.score_head(&ea, &eb);
            let probs: Vec<f64> = head.probs.to_vec();
            let l_task = crate::losses::task_loss_batch(&labels, &probs);
            let l_content = crate::losses::content_loss_batch(&content_ref, cache.tap(Tap::Conv3_1));
            let l_style = crate::losses::style_loss_batch(cache.tap(Tap::Conv2_1), &style_ref);
            alpha * l_task + beta * l_content + gamma * l_style
        };

        let cache = model.forward_cached(&x, Mode::Eval, None);
        let b = labels.len();
        let ea = cache.emb.slice(ndarray::s![..b, ..]).to_owned();
        let eb = cache.emb.slice(ndarray::s![b.., ..]).to_owned();
        let head = model.score_head(&ea, &eb);
        let dlogits = Array1::from_iter(
            labels
                .iter()
                .zip(head.probs.iter())
                .map(|(&y, &p)| alpha * (p - if y { 1.0 } else { 0.0 }) / b as f64),
        );
        let mut scratch = VerifierGrads::zeros_like(&model);
        let (d_ea, d_eb) = model.score_head_backward(&head, &dlogits, &mut scratch);
        let mut d_emb = Array2::<f64>::zeros((n, cfg.embedding_dim));
        d_emb.slice_mut(ndarray::s![..b, ..]).assign(&d_ea);
        d_emb.slice_mut(ndarray::s![b.., ..]).assign(&d_eb);
        let d_tap3 = crate::losses::content_loss_batch_grad(&content_ref, cache.tap(Tap::Conv3_1)) * beta;
        let d_tap2 = crate::losses::style_loss_batch_grad(cache.tap(Tap::Conv2_1), &style_ref) * gamma;
        let dx = model.backward_cached(&cache, &d_emb, Some(&d_tap3), Some(&d_tap2), &mut scratch);

        let eps = 1e-4;
        let rel = |a: f64, fd: f64| (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4);
        let mut xp = x.clone();
        let mut checked = 0;
        for idx in ndarray::indices(x.raw_dim()) {
            // sample a third of coordinates
            checked += 1;
            if checked % 3 != 0 {
                continue;
            }
            let orig = xp[idx];
            xp[idx] = orig + eps;
            let up = loss(&xp);
            xp[idx] = orig - eps;
            let down = loss(&xp);
            xp[idx] = orig;
            let fd = (up - down) / (2.0 * eps);
            assert!(rel(dx[idx], fd) < 1e-3, "dx at {idx:?}: {} vs {fd}", dx[idx]);
        }
    }

    #[test]
    fn reshape_round_trips() {
        let mut rng = seed::rng(50, 0xf8, 1);
        let v: Vec<f64> = (0..2 * 3 * 4 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Array4::from_shape_vec((2, 3, 4, 5), v).unwrap();
        let seq = reshape_to_sequence(&x);
        assert_eq!(seq.dim(), (2, 5, 12));
        let back = reshape_from_sequence(&seq, 3, 4);
        assert_eq!(x, back);
    }
}
