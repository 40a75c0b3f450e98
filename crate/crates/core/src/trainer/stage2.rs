//! Stage 2: privatizer training against the weighted task/content/style
//! objective, with the verifier frozen.
//!
//! Per step: transform both pair branches, score the transformed pair
//! through the frozen verifier (task), compare transformed vs raw
//! feature maps at the deep tap (content), and compare transformed
//! feature statistics against fresh uniform noise at the shallow tap
//! (style). Gradients flow through the frozen verifier into the
//! privatizer only.

use super::{trainable, train_val_split, EpochRecord, Optimizer, TrainConfig, TrainHistory};
use crate::data::{sample_pairs_capped, PairBatch, WindowDataset};
use crate::error::{Error, Result};
use crate::eval::rank_auc;
use crate::losses::{
    content_loss_batch, content_loss_batch_grad, sample_noise, style_loss_batch,
    style_loss_batch_grad, task_loss_batch, total_loss, LossWeights,
};
use crate::nn::Mode;
use crate::privatizer::{PrivatizerGrads, PrivatizerModel};
use crate::seed::{self, tag};
use crate::verifier::{Tap, VerifierGrads, VerifierModel};
use ndarray::{Array1, Array2, Array4, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;
use std::time::Instant;

/// Stacked privatizer input (2B, C, 1, W) for a pair slice: branch-a
/// windows then branch-b windows.
fn stack_pairs_priv(
    data: &WindowDataset,
    pairs: &[crate::data::PairSample],
    channels: usize,
    width: usize,
) -> (Array4<f64>, Vec<bool>) {
    let b = pairs.len();
    let mut x = Array4::<f64>::zeros((2 * b, channels, 1, width));
    let mut labels = Vec::with_capacity(b);
    for (i, p) in pairs.iter().enumerate() {
        for (slot, win) in [(i, p.a), (b + i, p.b)] {
            let values = &data.windows[win].values;
            for c in 0..channels {
                for w in 0..width {
                    x[[slot, c, 0, w]] = values[[c, w]];
                }
            }
        }
        labels.push(p.genuine);
    }
    (x, labels)
}

/// Zero-copy relayout between the privatizer's (N, 6, 1, W) and the
/// verifier's (N, 1, 6, W): both have identical row-major storage.
fn priv_to_verifier_layout(x: &Array4<f64>) -> Array4<f64> {
    let (n, c, _, w) = x.dim();
    x.clone()
        .into_shape_with_order((n, 1, c, w))
        .expect("same linear layout")
}

fn verifier_to_priv_layout(x: Array4<f64>) -> Array4<f64> {
    let (n, _, h, w) = x.dim();
    x.into_shape_with_order((n, h, 1, w)).expect("same linear layout")
}

/// Per-window uniform noise batch in verifier layout (N, 1, H, W).
fn noise_batch(n: usize, h: usize, w: usize, cfg: crate::losses::NoiseConfig, rng: &mut ChaCha12Rng) -> Array4<f64> {
    let mut x = Array4::<f64>::zeros((n, 1, h, w));
    for i in 0..n {
        let sample = sample_noise(h, w, cfg, rng);
        x.index_axis_mut(Axis(0), i).index_axis_mut(Axis(0), 0).assign(&sample.values);
    }
    x
}

struct StepLosses {
    task: f64,
    content: f64,
    style: f64,
    total: f64,
}

/// One objective evaluation (and optionally a gradient computation) on a
/// pair slice. Shared between training steps and validation. Returns the
/// privatizer cache so the caller can commit batch-norm statistics.
#[allow(clippy::too_many_arguments)]
fn objective(
    privatizer: &PrivatizerModel,
    verifier: &VerifierModel,
    data: &WindowDataset,
    pairs: &[crate::data::PairSample],
    weights: &LossWeights,
    noise_cfg: crate::losses::NoiseConfig,
    noise_rng: &mut ChaCha12Rng,
    mode: Mode,
    mut train: Option<(&mut PrivatizerGrads, &mut Vec<f64>)>,
) -> Result<(StepLosses, crate::privatizer::PrivatizerCache)> {
    let channels = privatizer.config.input_channels;
    let width = privatizer.config.input_width;
    let (x_priv, labels) = stack_pairs_priv(data, pairs, channels, width);
    let n2 = x_priv.dim().0;

    let priv_cache = privatizer.forward_cached(&x_priv, mode);
    let xhat_ver = priv_to_verifier_layout(&priv_cache.output);

    // frozen verifier always runs in eval mode
    let ver_cache = verifier.forward_cached(&xhat_ver, Mode::Eval, None);

    let b = n2 / 2;
    let emb = ver_cache.embeddings();
    let ea = emb.slice(ndarray::s![..b, ..]).to_owned();
    let eb = emb.slice(ndarray::s![b.., ..]).to_owned();
    let head = verifier.score_head(&ea, &eb);
    let probs: Vec<f64> = head.probs.to_vec();
    let l_task = task_loss_batch(&labels, &probs);

    let x_raw_ver = priv_to_verifier_layout(&x_priv);
    let phi3_raw = verifier.conv_features(&x_raw_ver, Tap::Conv3_1);
    let l_content = content_loss_batch(&phi3_raw, ver_cache.tap(Tap::Conv3_1));

    let noise = noise_batch(n2, verifier.config.input_height, verifier.config.input_width, noise_cfg, noise_rng);
    let phi2_noise = verifier.conv_features(&noise, Tap::Conv2_1);
    let l_style = style_loss_batch(ver_cache.tap(Tap::Conv2_1), &phi2_noise);

    let l_total = total_loss(weights, l_task, l_content, l_style)?;

    if let Some((priv_grads, probs_out)) = train.take() {
        probs_out.extend(probs.iter().cloned());
        // task path: alpha * d(BCE)/d(logit) = alpha * (p - y) / B
        let dlogits = Array1::from_iter(
            labels
                .iter()
                .zip(&probs)
                .map(|(&y, &p)| weights.alpha() * (p - if y { 1.0 } else { 0.0 }) / b as f64),
        );
        let mut scratch = VerifierGrads::zeros_like(verifier);
        let (d_ea, d_eb) = verifier.score_head_backward(&head, &dlogits, &mut scratch);
        let mut d_emb = Array2::<f64>::zeros((n2, verifier.config.embedding_dim));
        d_emb.slice_mut(ndarray::s![..b, ..]).assign(&d_ea);
        d_emb.slice_mut(ndarray::s![b.., ..]).assign(&d_eb);

        let d_tap3 = content_loss_batch_grad(&phi3_raw, ver_cache.tap(Tap::Conv3_1)) * weights.beta();
        let d_tap2 = style_loss_batch_grad(ver_cache.tap(Tap::Conv2_1), &phi2_noise) * weights.gamma();

        let d_xhat_ver =
            verifier.backward_cached(&ver_cache, &d_emb, Some(&d_tap3), Some(&d_tap2), &mut scratch);
        let d_xhat_priv = verifier_to_priv_layout(d_xhat_ver);
        privatizer.backward_cached(&priv_cache, &d_xhat_priv, priv_grads);
    }

    Ok((
        StepLosses { task: l_task, content: l_content, style: l_style, total: l_total },
        priv_cache,
    ))
}

/// Trains the privatizer with the verifier frozen. The verifier is
/// structurally immutable here; its checksum is additionally verified
/// per epoch.
pub fn train_privatizer_stage2(
    privatizer: &mut PrivatizerModel,
    verifier: &VerifierModel,
    dev_data: &WindowDataset,
    weights: LossWeights,
    config: &TrainConfig,
) -> Result<(TrainHistory, PrivatizerModel)> {
    config.validate()?;
    if !verifier.is_frozen() {
        return Err(Error::Contract(
            "stage 2 requires a frozen verifier (call freeze() after stage 1)".into(),
        ));
    }
    let verifier_checksum = verifier.param_checksum();
    let mut history = TrainHistory::default();
    if config.epochs == 0 {
        return Ok((history, privatizer.clone()));
    }

    let (train_ds, val_ds) = train_val_split(dev_data, config.validation_fraction, config.seed, 2)?;
    #[allow(unused_variables)]
    let val_subjects: std::collections::HashSet<String> = val_ds.subject_ids().into_iter().collect();
    let val_pairs = sample_pairs_capped(
        &val_ds,
        config.validation_pairs,
        config.validation_pairs,
        seed::derive(config.seed, tag::VALIDATION, 1),
    )?;

    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate);
    let mut best: Option<(f64, PrivatizerModel, usize)> = None;
    let mut stale = 0usize;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut pairs = sample_pairs_capped(
            &train_ds,
            config.pairs_per_epoch / 2,
            config.pairs_per_epoch - config.pairs_per_epoch / 2,
            seed::derive(config.seed, tag::PAIRS, epoch as u64),
        )?;
        let mut order_rng = seed::rng(config.seed, tag::TRAIN_STEP, (epoch as u64) << 32);
        pairs.pairs.shuffle(&mut order_rng);

        let (mut sum_task, mut sum_content, mut sum_style, mut sum_total) = (0.0, 0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for (batch_idx, chunk) in pairs.pairs.chunks(config.batch_size).enumerate() {
            debug_assert!(
                chunk.iter().all(|p| {
                    !val_subjects.contains(&train_ds.windows[p.a].subject_id)
                        && !val_subjects.contains(&train_ds.windows[p.b].subject_id)
                }),
                "validation subject leaked into a training batch"
            );
            let mut noise_rng = seed::rng(
                config.seed,
                tag::NOISE,
                ((epoch as u64) << 32) | (batch_idx as u64),
            );
            let mut grads = PrivatizerGrads::zeros_like(privatizer);
            let mut probs = Vec::new();
            let (losses, priv_cache) = objective(
                privatizer,
                verifier,
                &train_ds,
                chunk,
                &weights,
                config.noise,
                &mut noise_rng,
                Mode::Train,
                Some((&mut grads, &mut probs)),
            )?;
            if !losses.total.is_finite() {
                let last_good = best.as_ref().map(|(_, _, e)| *e).unwrap_or(0);
                if let Some((_, snapshot, _)) = best {
                    *privatizer = snapshot;
                }
                return Err(Error::Diverged { epoch, last_good });
            }
            sum_task += losses.task;
            sum_content += losses.content;
            sum_style += losses.style;
            sum_total += losses.total;
            batches += 1;

            optimizer.step(trainable(privatizer.named_params_mut()), &grads.views());
            privatizer.commit_bn(&priv_cache);
        }

        // validation: fixed pairs and a fixed noise stream so epochs are
        // comparable
        let mut val_noise_rng = seed::rng(config.seed, tag::NOISE, u64::MAX);
        let (val_losses, _) = objective(
            privatizer,
            verifier,
            &val_ds,
            &val_pairs.pairs,
            &weights,
            config.noise,
            &mut val_noise_rng,
            Mode::Eval,
            None,
        )?;
        let val_auc = transformed_pair_auc(privatizer, verifier, &val_ds, &val_pairs)?;

        history.epochs.push(EpochRecord {
            epoch,
            l_total: sum_total / batches.max(1) as f64,
            l_task: sum_task / batches.max(1) as f64,
            l_content: sum_content / batches.max(1) as f64,
            l_style: sum_style / batches.max(1) as f64,
            val_loss: val_losses.total,
            val_auc,
            seconds: started.elapsed().as_secs_f64(),
        });

        if verifier.param_checksum() != verifier_checksum {
            return Err(Error::Contract(
                "verifier parameters changed during stage 2".into(),
            ));
        }

        let improved = best.as_ref().map(|(b, _, _)| val_losses.total < *b).unwrap_or(true);
        if improved {
            best = Some((val_losses.total, privatizer.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if stale > config.early_stop_patience {
                break;
            }
        }
    }

    let last = privatizer.clone();
    if let Some((_, snapshot, _)) = best {
        *privatizer = snapshot;
    }
    Ok((history, last))
}

/// Verification AUC over transformed pairs (inference mode).
pub(crate) fn transformed_pair_auc(
    privatizer: &PrivatizerModel,
    verifier: &VerifierModel,
    data: &WindowDataset,
    pairs: &PairBatch,
) -> Result<f64> {
    let mut scores = Vec::with_capacity(pairs.len());
    let mut labels = Vec::with_capacity(pairs.len());
    let channels = privatizer.config.input_channels;
    let width = privatizer.config.input_width;
    for chunk in pairs.pairs.chunks(256) {
        let (x_priv, l) = stack_pairs_priv(data, chunk, channels, width);
        let xhat = privatizer.transform_batch(&x_priv);
        let emb = verifier.embed_batch(&priv_to_verifier_layout(&xhat));
        let b = chunk.len();
        let ea = emb.slice(ndarray::s![..b, ..]).to_owned();
        let eb = emb.slice(ndarray::s![b.., ..]).to_owned();
        let head = verifier.score_head(&ea, &eb);
        scores.extend(head.probs.iter().cloned());
        labels.extend(l);
    }
    rank_auc(&scores, &labels)
}
