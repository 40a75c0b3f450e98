//! Stage 1: verifier training on raw pairs with binary cross-entropy.

use super::{trainable, train_val_split, EpochRecord, Optimizer, TrainConfig, TrainHistory};
use crate::data::{sample_pairs_capped, PairBatch, WindowDataset};
use crate::error::{Error, Result};
use crate::eval::rank_auc;
use crate::losses::task_loss_batch;
use crate::nn::Mode;
use crate::seed::{self, tag};
use crate::verifier::{VerifierGrads, VerifierModel};
use ndarray::{Array1, Array2, Array4, Axis};
use rand::seq::SliceRandom;
use std::time::Instant;

/// Builds the stacked (2B, 1, H, W) verifier input for a slice of pairs:
/// branch-a windows first, branch-b windows second.
fn stack_pairs(
    model: &VerifierModel,
    data: &WindowDataset,
    pairs: &[crate::data::PairSample],
) -> (Array4<f64>, Vec<bool>) {
    let b = pairs.len();
    let (h, w) = (model.config.input_height, model.config.input_width);
    let mut x = Array4::<f64>::zeros((2 * b, 1, h, w));
    let mut labels = Vec::with_capacity(b);
    for (i, p) in pairs.iter().enumerate() {
        x.index_axis_mut(Axis(0), i)
            .index_axis_mut(Axis(0), 0)
            .assign(&data.windows[p.a].values);
        x.index_axis_mut(Axis(0), b + i)
            .index_axis_mut(Axis(0), 0)
            .assign(&data.windows[p.b].values);
        labels.push(p.genuine);
    }
    (x, labels)
}

fn split_embeddings(emb: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let b = emb.dim().0 / 2;
    (
        emb.slice(ndarray::s![..b, ..]).to_owned(),
        emb.slice(ndarray::s![b.., ..]).to_owned(),
    )
}

/// Inference-mode pair scores on a fixed pair set.
pub(crate) fn score_pairs_eval(
    model: &VerifierModel,
    data: &WindowDataset,
    pairs: &PairBatch,
) -> (Vec<f64>, Vec<bool>) {
    let mut scores = Vec::with_capacity(pairs.len());
    let mut labels = Vec::with_capacity(pairs.len());
    for chunk in pairs.pairs.chunks(256) {
        let (x, l) = stack_pairs(model, data, chunk);
        let emb = model.embed_batch(&x);
        let (ea, eb) = split_embeddings(&emb);
        let head = model.score_head(&ea, &eb);
        scores.extend(head.probs.iter().cloned());
        labels.extend(l);
    }
    (scores, labels)
}

/// Trains the verifier on balanced genuine/impostor pairs from the
/// development subjects, with an 85/15 subject-level validation split and
/// best-validation checkpointing. The model must not be frozen. On
/// return `model` holds the best-validation state; the last-epoch state
/// comes back alongside the history.
pub fn train_verifier_stage1(
    model: &mut VerifierModel,
    dev_data: &WindowDataset,
    config: &TrainConfig,
) -> Result<(TrainHistory, VerifierModel)> {
    config.validate()?;
    if model.is_frozen() {
        return Err(Error::Contract("stage 1 requires an unfrozen verifier".into()));
    }
    if dev_data.subject_ids().len() < 2 {
        return Err(Error::Sizing("stage 1 needs at least 2 development subjects".into()));
    }
    let mut history = TrainHistory::default();
    if config.epochs == 0 {
        return Ok((history, model.clone()));
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
    let mut best: Option<(f64, VerifierModel, usize)> = None;
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

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in pairs.pairs.chunks(config.batch_size).enumerate() {
            debug_assert!(
                chunk.iter().all(|p| {
                    !val_subjects.contains(&train_ds.windows[p.a].subject_id)
                        && !val_subjects.contains(&train_ds.windows[p.b].subject_id)
                }),
                "validation subject leaked into a training batch"
            );
            let (x, labels) = stack_pairs(model, &train_ds, chunk);
            let mut step_rng = seed::rng(
                config.seed,
                tag::TRAIN_STEP,
                ((epoch as u64) << 32) | (batch_idx as u64 + 1),
            );
            let cache = model.forward_cached(&x, Mode::Train, Some(&mut step_rng));
            let (ea, eb) = split_embeddings(cache.embeddings());
            let head = model.score_head(&ea, &eb);
            let probs: Vec<f64> = head.probs.to_vec();
            let loss = task_loss_batch(&labels, &probs);
            if !loss.is_finite() {
                let last_good = best.as_ref().map(|(_, _, e)| *e).unwrap_or(0);
                if let Some((_, snapshot, _)) = best {
                    *model = snapshot;
                }
                return Err(Error::Diverged { epoch, last_good });
            }
            epoch_loss += loss;
            batches += 1;

            // d(loss)/d(logit) = (p - y) / B for sigmoid + mean BCE
            let b = labels.len() as f64;
            let dlogits = Array1::from_iter(
                labels
                    .iter()
                    .zip(&probs)
                    .map(|(&y, &p)| (p - if y { 1.0 } else { 0.0 }) / b),
            );
            let mut grads = VerifierGrads::zeros_like(model);
            let (d_ea, d_eb) = model.score_head_backward(&head, &dlogits, &mut grads);
            let n2 = x.dim().0;
            let mut d_emb = Array2::<f64>::zeros((n2, model.config.embedding_dim));
            d_emb.slice_mut(ndarray::s![..n2 / 2, ..]).assign(&d_ea);
            d_emb.slice_mut(ndarray::s![n2 / 2.., ..]).assign(&d_eb);
            model.backward_cached(&cache, &d_emb, None, None, &mut grads);

            optimizer.step(trainable(model.named_params_mut()), &grads.views());
            model.commit_bn(&cache);
        }

        let (val_scores, val_labels) = score_pairs_eval(model, &val_ds, &val_pairs);
        let val_loss = task_loss_batch(&val_labels, &val_scores);
        let val_auc = rank_auc(&val_scores, &val_labels)?;
        history.epochs.push(EpochRecord {
            epoch,
            l_total: epoch_loss / batches.max(1) as f64,
            l_task: epoch_loss / batches.max(1) as f64,
            l_content: 0.0,
            l_style: 0.0,
            val_loss,
            val_auc,
            seconds: started.elapsed().as_secs_f64(),
        });

        let improved = best.as_ref().map(|(b, _, _)| val_loss < *b).unwrap_or(true);
        if improved {
            best = Some((val_loss, model.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if stale > config.early_stop_patience {
                break;
            }
        }
    }

    let last = model.clone();
    if let Some((_, snapshot, _)) = best {
        *model = snapshot;
    }
    Ok((history, last))
}
