//! From-scratch attacker training on the raw or transformed domain.

use super::{trainable, train_val_split, EpochRecord, Optimizer, TrainConfig, TrainHistory};
use crate::attacker::{AttackerGrads, AttackerModel, SensitiveAttribute};
use crate::data::{Gender, WindowDataset};
use crate::error::{Error, Result};
use crate::eval::{macro_ovr_auc, rank_auc};
use crate::nn::Mode;
use crate::privatizer::PrivatizerModel;
use crate::seed::{self, tag};
use ndarray::{Array2, Array4, Axis};
use rand::seq::SliceRandom;

/// Which input distribution the attacker sees.
#[derive(Clone, Copy)]
pub enum TrainDomain<'a> {
    Raw,
    Transformed(&'a PrivatizerModel),
}

impl TrainDomain<'_> {
    fn name(&self) -> &'static str {
        match self {
            TrainDomain::Raw => "raw",
            TrainDomain::Transformed(_) => "transformed",
        }
    }
}

/// Applies the domain transform once up front so epochs only pay for the
/// attacker itself.
fn materialize(domain: TrainDomain<'_>, data: &WindowDataset) -> Result<WindowDataset> {
    match domain {
        TrainDomain::Raw => Ok(data.clone()),
        TrainDomain::Transformed(privatizer) => {
            let mut out = data.clone();
            for window in &mut out.windows {
                window.values = privatizer.transform(&window.values)?;
            }
            Ok(out)
        }
    }
}

fn batch_tensor(model: &AttackerModel, data: &WindowDataset, idx: &[usize]) -> (Array4<f64>, Vec<usize>) {
    let (h, w) = (model.config.input_height, model.config.input_width);
    let mut x = Array4::<f64>::zeros((idx.len(), 1, h, w));
    let mut labels = Vec::with_capacity(idx.len());
    for (row, &i) in idx.iter().enumerate() {
        x.index_axis_mut(Axis(0), row)
            .index_axis_mut(Axis(0), 0)
            .assign(&data.windows[i].values);
        labels.push(model.config.attribute.label_of(&data.windows[i]));
    }
    (x, labels)
}

/// Validation loss and AUC (binary for gender, macro OvR for activity).
fn validate(model: &AttackerModel, data: &WindowDataset) -> Result<(f64, f64)> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut all_probs = Array2::<f64>::zeros((data.len(), model.config.n_classes()));
    let mut all_logits = Vec::new();
    let mut labels = Vec::new();
    for chunk in idx.chunks(256) {
        let (x, l) = batch_tensor(model, data, chunk);
        let cache = model.forward_cached(&x, Mode::Eval, None);
        all_logits.push((cache.logits.clone(), l.clone()));
        let probs = model.activate(&cache.logits);
        for (row, &i) in chunk.iter().enumerate() {
            all_probs.row_mut(i).assign(&probs.row(row));
        }
        labels.extend(l);
    }
    let mut loss = 0.0;
    let mut n = 0usize;
    for (logits, l) in &all_logits {
        let (batch_loss, _) = model.loss_and_dlogits(logits, l);
        loss += batch_loss * l.len() as f64;
        n += l.len();
    }
    let loss = loss / n.max(1) as f64;
    let auc = match model.config.attribute {
        SensitiveAttribute::Gender => {
            let scores: Vec<f64> = all_probs.index_axis(Axis(1), 1).to_vec();
            let bin: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
            rank_auc(&scores, &bin)?
        }
        SensitiveAttribute::Activity => macro_ovr_auc(&all_probs, &labels)?,
    };
    Ok((loss, auc))
}

/// Trains an attacker from scratch on the chosen domain with an 85/15
/// subject-level validation split and best-validation checkpointing.
/// Gender attackers require a subject-balanced dataset.
pub fn train_attacker(
    model: &mut AttackerModel,
    dev_data: &WindowDataset,
    domain: TrainDomain<'_>,
    config: &TrainConfig,
) -> Result<(TrainHistory, AttackerModel)> {
    config.validate()?;
    if model.config.attribute == SensitiveAttribute::Gender {
        let genders = dev_data.gender_by_subject()?;
        let males = genders.values().filter(|g| **g == Gender::Male).count();
        let females = genders.len() - males;
        if males != females {
            return Err(Error::Contract(format!(
                "gender attacker training requires a subject-balanced dataset, got {males} male / {females} female subjects"
            )));
        }
    }
    let mut history = TrainHistory::default();
    if config.epochs == 0 {
        return Ok((history, model.clone()));
    }

    let data = materialize(domain, dev_data)?;
    let _ = domain.name();
    let (train_ds, val_ds) = train_val_split(&data, config.validation_fraction, config.seed, 1)?;

    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate);
    let mut best: Option<(f64, AttackerModel, usize)> = None;
    let mut stale = 0usize;

    for epoch in 0..config.epochs {
        let started = std::time::Instant::now();
        let mut idx: Vec<usize> = (0..train_ds.len()).collect();
        let mut order_rng = seed::rng(config.seed, tag::TRAIN_STEP, (epoch as u64) << 32);
        idx.shuffle(&mut order_rng);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in idx.chunks(config.batch_size).enumerate() {
            let (x, labels) = batch_tensor(model, &train_ds, chunk);
            let mut step_rng = seed::rng(
                config.seed,
                tag::TRAIN_STEP,
                ((epoch as u64) << 32) | (batch_idx as u64 + 1),
            );
            let cache = model.forward_cached(&x, Mode::Train, Some(&mut step_rng));
            let (loss, dlogits) = model.loss_and_dlogits(&cache.logits, &labels);
            if !loss.is_finite() {
                let last_good = best.as_ref().map(|(_, _, e)| *e).unwrap_or(0);
                if let Some((_, snapshot, _)) = best {
                    *model = snapshot;
                }
                return Err(Error::Diverged { epoch, last_good });
            }
            epoch_loss += loss;
            batches += 1;

            let mut grads = AttackerGrads::zeros_like(model);
            model.backward_cached(&cache, &dlogits, &mut grads);
            optimizer.step(trainable(model.named_params_mut()), &grads.views());
            model.commit_bn(&cache);
        }

        let (val_loss, val_auc) = validate(model, &val_ds)?;
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
