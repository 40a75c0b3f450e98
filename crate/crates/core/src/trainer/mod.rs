//! Two-stage training protocol plus attacker training and the
//! loss-weight sweep.
//!
//! Stage 1 trains the verifier alone on raw pairs with binary
//! cross-entropy. Stage 2 freezes the verifier and trains the privatizer
//! against the weighted task/content/style objective. Attackers are
//! always trained from scratch on their target domain, and the sweep
//! retrains privatizer + attackers per weight triple.

mod attacker_train;
mod optim;
mod stage1;
mod stage2;
mod sweep;

pub use attacker_train::{train_attacker, TrainDomain};
pub use optim::{Optimizer, OptimizerKind};
pub use stage1::train_verifier_stage1;
pub use stage2::train_privatizer_stage2;
pub use sweep::{run_sweep, SweepConfig, SweepGrid, SweepRow, SweepTable};

use crate::data::{DatasetRole, WindowDataset};
use crate::error::{Error, Result};
use crate::losses::NoiseConfig;
use crate::nn::{NamedParamMut, ParamKind};
use crate::seed::{self, tag};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Pairs per gradient step for Siamese stages; windows per step for
    /// attackers.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Epochs without validation-loss improvement before stopping.
    pub early_stop_patience: usize,
    /// Balanced pairs resampled each epoch for Siamese stages.
    pub pairs_per_epoch: usize,
    /// Subject fraction of the development set held out for validation.
    pub validation_fraction: f64,
    /// Validation pair budget per class.
    pub validation_pairs: usize,
    /// Uniform noise bounds for the style reference (stage 2 only).
    pub noise: NoiseConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 42,
            early_stop_patience: 10,
            pairs_per_epoch: 1024,
            validation_fraction: 0.15,
            validation_pairs: 256,
            noise: NoiseConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.pairs_per_epoch == 0 {
            return Err(Error::Config("batch_size and pairs_per_epoch must be positive".into()));
        }
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) || self.validation_fraction == 0.0 {
            return Err(Error::Config(format!(
                "validation_fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// One row per completed epoch. `seconds` is wall clock and is excluded
/// from determinism comparisons.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_total: f64,
    pub l_task: f64,
    pub l_content: f64,
    pub l_style: f64,
    pub val_loss: f64,
    pub val_auc: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,l_total,l_task,l_content,l_style,val_loss,val_auc,seconds\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{:.3}\n",
                r.epoch, r.l_total, r.l_task, r.l_content, r.l_style, r.val_loss, r.val_auc, r.seconds
            ));
        }
        out
    }

    /// Loss/metric fields only, for determinism comparisons.
    pub fn loss_fields(&self) -> Vec<(usize, f64, f64, f64, f64, f64, f64)> {
        self.epochs
            .iter()
            .map(|r| (r.epoch, r.l_total, r.l_task, r.l_content, r.l_style, r.val_loss, r.val_auc))
            .collect()
    }
}

/// Trainable views in canonical order.
pub(crate) fn trainable(params: Vec<NamedParamMut<'_>>) -> Vec<ndarray::ArrayViewMutD<'_, f64>> {
    params
        .into_iter()
        .filter(|(_, kind, _)| *kind == ParamKind::Trainable)
        .map(|(_, _, view)| view)
        .collect()
}

/// Subject-level train/validation split of a development set. Both parts
/// keep at least `min_subjects` subjects.
pub(crate) fn train_val_split(
    data: &WindowDataset,
    validation_fraction: f64,
    split_seed: u64,
    min_subjects: usize,
) -> Result<(WindowDataset, WindowDataset)> {
    let mut subjects = data.subject_ids();
    subjects.sort();
    let n = subjects.len();
    let n_val = ((n as f64) * validation_fraction).round().max(min_subjects as f64) as usize;
    let n_train = n.saturating_sub(n_val);
    if n_train < min_subjects || n_val < min_subjects {
        return Err(Error::Sizing(format!(
            "cannot hold out {validation_fraction} of {n} subjects with at least {min_subjects} per side"
        )));
    }
    let mut rng = seed::rng(split_seed, tag::VALIDATION, 0);
    subjects.shuffle(&mut rng);
    let train: std::collections::HashSet<String> = subjects[..n_train].iter().cloned().collect();
    let val: std::collections::HashSet<String> = subjects[n_train..].iter().cloned().collect();
    Ok((
        data.filter_subjects(&train, DatasetRole::Development),
        data.filter_subjects(&val, DatasetRole::Development),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Activity, Gender, ImuWindow};
    use ndarray::Array2;

    fn dataset(n_subjects: usize, windows_each: usize) -> WindowDataset {
        let mut windows = Vec::new();
        for s in 0..n_subjects {
            for w in 0..windows_each {
                windows.push(
                    ImuWindow::new(
                        Array2::from_elem((6, 8), (s * 10 + w) as f64),
                        format!("s{s:03}"),
                        if s % 2 == 0 { Gender::Male } else { Gender::Female },
                        Activity::new((w % 4) as u8).unwrap(),
                    )
                    .unwrap(),
                );
            }
        }
        WindowDataset::new(windows, DatasetRole::Development)
    }

    #[test]
    fn split_respects_fraction_and_floor() {
        let data = dataset(20, 3);
        let (train, val) = train_val_split(&data, 0.15, 7, 2).unwrap();
        assert_eq!(train.subject_ids().len(), 17);
        assert_eq!(val.subject_ids().len(), 3);
        let (_, val2) = train_val_split(&data, 0.05, 7, 2).unwrap();
        assert_eq!(val2.subject_ids().len(), 2); // floor kicks in
    }

    #[test]
    fn history_csv_has_the_documented_header() {
        let mut h = TrainHistory::default();
        h.epochs.push(EpochRecord {
            epoch: 0,
            l_total: 1.0,
            l_task: 1.0,
            l_content: 0.0,
            l_style: 0.0,
            val_loss: 0.9,
            val_auc: 0.8,
            seconds: 1.25,
        });
        let csv = h.to_csv();
        assert!(csv.starts_with("epoch,l_total,l_task,l_content,l_style,val_loss,val_auc,seconds\n"));
        assert!(csv.lines().nth(1).unwrap().starts_with("0,1,1,0,0,0.9,0.8,"));
    }
}
