//! Training losses: verification task loss, feature-map content loss,
//! Gram-matrix style loss, and their weighted combination.
//!
//! Content compares feature maps of raw and transformed windows at a deep
//! tap by mean squared distance. Style compares second-order channel
//! statistics (Gram matrices) of the transformed windows against those of
//! uniform random noise at a shallower tap, which is what scrubs
//! attribute-bearing structure without ever naming an attribute.

use crate::error::{Error, Result};
use crate::verifier::FeatureMap;
use ndarray::{Array2, Array3, Array4, ArrayView3, Axis};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Probability clamp applied before logarithms.
pub const PROB_EPS: f64 = 1e-7;

/// Simplex weights (alpha, beta, gamma) for task/content/style.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl LossWeights {
    /// Requires non-negative weights summing to 1 within 1e-9.
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if alpha < 0.0 || beta < 0.0 || gamma < 0.0 {
            return Err(Error::Config(format!(
                "loss weights must be non-negative, got ({alpha}, {beta}, {gamma})"
            )));
        }
        let sum = alpha + beta + gamma;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "loss weights must satisfy alpha + beta + gamma = 1, got {sum}"
            )));
        }
        Ok(LossWeights { alpha, beta, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl std::fmt::Display for LossWeights {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({:.2}, {:.2}, {:.2})", self.alpha, self.beta, self.gamma)
    }
}

/// Uniform noise bounds for the style reference domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub lo: f64,
    pub hi: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { lo: -20.0, hi: 20.0 }
    }
}

/// A window-shaped tensor of i.i.d. uniform noise in [lo, hi].
#[derive(Clone, Debug)]
pub struct NoiseSample {
    pub values: Array2<f64>,
    pub bounds: NoiseConfig,
}

/// Draws a (rows, cols) noise sample; deterministic in the RNG state.
pub fn sample_noise(rows: usize, cols: usize, config: NoiseConfig, rng: &mut ChaCha12Rng) -> NoiseSample {
    assert!(config.lo < config.hi, "noise range must be non-empty");
    let mut values = Array2::<f64>::zeros((rows, cols));
    for v in values.as_slice_mut().expect("contiguous").iter_mut() {
        *v = rng.random_range(config.lo..config.hi);
    }
    NoiseSample { values, bounds: config }
}

/// Binary cross-entropy for one pair: -[y ln p + (1-y) ln(1-p)] with the
/// probability clamped to [PROB_EPS, 1 - PROB_EPS].
pub fn task_loss(genuine: bool, predicted_prob: f64) -> f64 {
    let p = predicted_prob.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if genuine {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// d task_loss / d p at an interior (unclamped) probability.
pub fn task_loss_grad(genuine: bool, predicted_prob: f64) -> f64 {
    let p = predicted_prob.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if genuine {
        -1.0 / p
    } else {
        1.0 / (1.0 - p)
    }
}

/// Mean binary cross-entropy over a batch.
pub fn task_loss_batch(labels: &[bool], probs: &[f64]) -> f64 {
    assert_eq!(labels.len(), probs.len());
    assert!(!labels.is_empty());
    labels.iter().zip(probs).map(|(&y, &p)| task_loss(y, p)).sum::<f64>() / labels.len() as f64
}

fn check_same_shape(a: ArrayView3<'_, f64>, b: ArrayView3<'_, f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape {
            expected: format!("{:?}", a.dim()),
            got: format!("{:?}", b.dim()),
        });
    }
    Ok(())
}

fn check_same_tap(a: &FeatureMap, b: &FeatureMap) -> Result<()> {
    if a.tap != b.tap {
        return Err(Error::Contract(format!(
            "feature maps come from different taps: {:?} vs {:?}",
            a.tap, b.tap
        )));
    }
    Ok(())
}

/// Mean squared difference over all entries of two same-shape maps.
pub fn content_loss(raw: &FeatureMap, transformed: &FeatureMap) -> Result<f64> {
    check_same_tap(raw, transformed)?;
    content_loss_raw(raw.values.view(), transformed.values.view())
}

pub fn content_loss_raw(a: ArrayView3<'_, f64>, b: ArrayView3<'_, f64>) -> Result<f64> {
    check_same_shape(a, b)?;
    let count = a.len() as f64;
    let sum: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / count)
}

/// d content_loss / d b (the transformed-side map): 2 (b - a) / (C H W).
pub fn content_loss_grad(a: ArrayView3<'_, f64>, b: ArrayView3<'_, f64>) -> Result<Array3<f64>> {
    check_same_shape(a, b)?;
    let count = a.len() as f64;
    let mut grad = b.to_owned();
    grad.zip_mut_with(&a, |g, &av| *g = 2.0 * (*g - av) / count);
    Ok(grad)
}

/// Channel co-activation statistics of a feature map, normalized by the
/// total element count. Symmetric positive semi-definite by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub values: Array2<f64>,
}

pub fn gram(fmap: &FeatureMap) -> GramMatrix {
    gram_raw(fmap.values.view())
}

pub fn gram_raw(f: ArrayView3<'_, f64>) -> GramMatrix {
    let (c, h, w) = f.dim();
    let flat = f
        .to_shape((c, h * w))
        .expect("contiguous feature map");
    let norm = 1.0 / (c * h * w) as f64;
    let values = flat.dot(&flat.t()) * norm;
    GramMatrix { values }
}

/// Squared Frobenius distance between the Gram matrices of two maps.
pub fn style_loss(transformed: &FeatureMap, noise: &FeatureMap) -> Result<f64> {
    check_same_tap(transformed, noise)?;
    style_loss_raw(transformed.values.view(), noise.values.view())
}

pub fn style_loss_raw(a: ArrayView3<'_, f64>, b: ArrayView3<'_, f64>) -> Result<f64> {
    check_same_shape(a, b)?;
    let ga = gram_raw(a);
    let gb = gram_raw(b);
    Ok((&ga.values - &gb.values).mapv(|v| v * v).sum())
}

/// d style_loss / d a where the loss is ||G(a) - G(b)||_F^2:
/// (4 / (C H W)) * (G(a) - G(b)) . a_mat, reshaped back to (C, H, W).
pub fn style_loss_grad(a: ArrayView3<'_, f64>, b: ArrayView3<'_, f64>) -> Result<Array3<f64>> {
    check_same_shape(a, b)?;
    let (c, h, w) = a.dim();
    let ga = gram_raw(a);
    let gb = gram_raw(b);
    let delta = &ga.values - &gb.values;
    let flat = a.to_shape((c, h * w)).expect("contiguous feature map");
    let scale = 4.0 / (c * h * w) as f64;
    let grad_flat = delta.dot(&flat) * scale;
    Ok(grad_flat
        .into_shape_with_order((c, h, w))
        .expect("contiguous"))
}

/// Weighted sum alpha*task + beta*content + gamma*style. Errors if any
/// component is non-finite, naming the component.
pub fn total_loss(weights: &LossWeights, l_task: f64, l_content: f64, l_style: f64) -> Result<f64> {
    for (name, v) in [("task", l_task), ("content", l_content), ("style", l_style)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} loss component")));
        }
    }
    Ok(weights.alpha * l_task + weights.beta * l_content + weights.gamma * l_style)
}

// ---- batched helpers over (N, C, H, W) feature tensors ----

/// Mean over the batch of per-window content losses.
pub fn content_loss_batch(raw: &Array4<f64>, transformed: &Array4<f64>) -> f64 {
    assert_eq!(raw.dim(), transformed.dim());
    let n = raw.dim().0;
    let mut total = 0.0;
    for i in 0..n {
        total += content_loss_raw(raw.index_axis(Axis(0), i), transformed.index_axis(Axis(0), i))
            .expect("shapes match");
    }
    total / n as f64
}

/// Batch-mean gradient w.r.t. the transformed maps.
pub fn content_loss_batch_grad(raw: &Array4<f64>, transformed: &Array4<f64>) -> Array4<f64> {
    let n = raw.dim().0;
    let mut grad = Array4::<f64>::zeros(transformed.raw_dim());
    for i in 0..n {
        let g = content_loss_grad(raw.index_axis(Axis(0), i), transformed.index_axis(Axis(0), i))
            .expect("shapes match");
        grad.index_axis_mut(Axis(0), i).assign(&(g / n as f64));
    }
    grad
}

/// Mean over the batch of per-window style losses against per-window
/// noise references.
pub fn style_loss_batch(transformed: &Array4<f64>, noise: &Array4<f64>) -> f64 {
    assert_eq!(transformed.dim(), noise.dim());
    let n = transformed.dim().0;
    let mut total = 0.0;
    for i in 0..n {
        total += style_loss_raw(transformed.index_axis(Axis(0), i), noise.index_axis(Axis(0), i))
            .expect("shapes match");
    }
    total / n as f64
}

pub fn style_loss_batch_grad(transformed: &Array4<f64>, noise: &Array4<f64>) -> Array4<f64> {
    let n = transformed.dim().0;
    let mut grad = Array4::<f64>::zeros(transformed.raw_dim());
    for i in 0..n {
        let g = style_loss_grad(transformed.index_axis(Axis(0), i), noise.index_axis(Axis(0), i))
            .expect("shapes match");
        grad.index_axis_mut(Axis(0), i).assign(&(g / n as f64));
    }
    grad
}
