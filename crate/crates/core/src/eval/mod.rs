//! ROC/AUC computation and raw-vs-transformed evaluation reports.

mod auc;
mod report;

pub use auc::{brute_force_auc, macro_ovr_auc, micro_ovr_roc, rank_auc, roc_and_auc, spearman, RocCurve};
pub use report::{build_report, ReportPaths};

use crate::attacker::AttackerModel;
use crate::data::{sample_pairs_capped, WindowDataset};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::privatizer::PrivatizerModel;
use crate::verifier::VerifierModel;
use ndarray::{Array2, Array4, Axis};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Evaluation pair budget; capped to the distinct pairs available.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PairSpec {
    pub n_genuine: usize,
    pub n_impostor: usize,
}

impl Default for PairSpec {
    fn default() -> Self {
        PairSpec { n_genuine: 10_000, n_impostor: 10_000 }
    }
}

/// Per-domain evaluation results for all three tasks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    /// "raw" or "transformed".
    pub domain: String,
    /// Loss weights used to train the transform (transformed domain only).
    pub weights: Option<LossWeights>,
    pub verification_auc: f64,
    pub gender_auc: f64,
    pub activity_macro_auc: f64,
    pub n_genuine: usize,
    pub n_impostor: usize,
    pub n_windows: usize,
    pub roc_verification: RocCurve,
    pub roc_gender: RocCurve,
    /// Micro-averaged one-vs-rest curve (figure only; the reported AUC
    /// is the macro reduction).
    pub roc_activity: RocCurve,
}

/// Embeds every window once (optionally transformed first) so pair
/// scoring is a cheap head evaluation.
fn embed_all(
    verifier: &VerifierModel,
    privatizer: Option<&PrivatizerModel>,
    data: &WindowDataset,
) -> Result<Array2<f64>> {
    let n = data.len();
    let (h, w) = (verifier.config.input_height, verifier.config.input_width);
    let mut emb = Array2::<f64>::zeros((n, verifier.config.embedding_dim));
    let chunk = 256;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let mut x = Array4::<f64>::zeros((end - start, 1, h, w));
        for i in start..end {
            let win = &data.windows[i];
            let values = match privatizer {
                Some(p) => p.transform(&win.values)?,
                None => win.values.clone(),
            };
            if values.dim() != (h, w) {
                return Err(Error::Shape {
                    expected: format!("({h}, {w})"),
                    got: format!("{:?}", values.dim()),
                });
            }
            x.index_axis_mut(Axis(0), i - start).index_axis_mut(Axis(0), 0).assign(&values);
        }
        let e = verifier.embed_batch(&x);
        emb.slice_mut(ndarray::s![start..end, ..]).assign(&e);
        start = end;
    }
    Ok(emb)
}

/// Batched attribute probabilities over a dataset, optionally through a
/// transform.
pub fn attacker_probs(
    attacker: &AttackerModel,
    privatizer: Option<&PrivatizerModel>,
    data: &WindowDataset,
) -> Result<Array2<f64>> {
    let n = data.len();
    let (h, w) = (attacker.config.input_height, attacker.config.input_width);
    let k = attacker.config.n_classes();
    let mut probs = Array2::<f64>::zeros((n, k));
    let chunk = 256;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let mut x = Array4::<f64>::zeros((end - start, 1, h, w));
        for i in start..end {
            let win = &data.windows[i];
            let values = match privatizer {
                Some(p) => p.transform(&win.values)?,
                None => win.values.clone(),
            };
            x.index_axis_mut(Axis(0), i - start).index_axis_mut(Axis(0), 0).assign(&values);
        }
        let p = attacker.predict_proba_batch(&x);
        probs.slice_mut(ndarray::s![start..end, ..]).assign(&p);
        start = end;
    }
    Ok(probs)
}

/// Verification ROC/AUC on an evaluation set, optionally through a
/// privatizer (None = identity = raw domain). `train_subjects` guards
/// against subject leakage.
pub fn evaluate_verification(
    verifier: &VerifierModel,
    privatizer: Option<&PrivatizerModel>,
    eval_data: &WindowDataset,
    pair_spec: PairSpec,
    seed: u64,
    train_subjects: &HashSet<String>,
) -> Result<(RocCurve, f64)> {
    let eval_subjects: HashSet<String> = eval_data.subject_ids().into_iter().collect();
    let leaked: Vec<_> = eval_subjects.intersection(train_subjects).cloned().collect();
    if !leaked.is_empty() {
        return Err(Error::Contract(format!(
            "evaluation subjects overlap training subjects: {leaked:?}"
        )));
    }
    let pairs = sample_pairs_capped(eval_data, pair_spec.n_genuine, pair_spec.n_impostor, seed)?;
    let emb = embed_all(verifier, privatizer, eval_data)?;
    let mut scores = Vec::with_capacity(pairs.len());
    let mut labels = Vec::with_capacity(pairs.len());
    // score in deterministic pair order via the shared head
    let chunk = 1024;
    let mut start = 0;
    while start < pairs.len() {
        let end = (start + chunk).min(pairs.len());
        let mut ea = Array2::<f64>::zeros((end - start, emb.dim().1));
        let mut eb = Array2::<f64>::zeros((end - start, emb.dim().1));
        for (row, p) in pairs.pairs[start..end].iter().enumerate() {
            ea.row_mut(row).assign(&emb.row(p.a));
            eb.row_mut(row).assign(&emb.row(p.b));
        }
        let head = verifier.score_head(&ea, &eb);
        scores.extend(head.probs.iter().cloned());
        labels.extend(pairs.pairs[start..end].iter().map(|p| p.genuine));
        start = end;
    }
    roc_and_auc(&scores, &labels)
}

/// Gender AUC (binary) or activity macro-OvR AUC on an evaluation set.
/// Returns the curve drawn in the report figure plus the scalar AUC.
pub fn evaluate_attribute(
    attacker: &AttackerModel,
    privatizer: Option<&PrivatizerModel>,
    eval_data: &WindowDataset,
) -> Result<(RocCurve, f64)> {
    let probs = attacker_probs(attacker, privatizer, eval_data)?;
    let labels: Vec<usize> = eval_data
        .windows
        .iter()
        .map(|w| attacker.config.attribute.label_of(w))
        .collect();
    match attacker.config.attribute {
        crate::attacker::SensitiveAttribute::Gender => {
            let scores: Vec<f64> = probs.index_axis(Axis(1), 1).to_vec();
            let bin: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
            roc_and_auc(&scores, &bin)
        }
        crate::attacker::SensitiveAttribute::Activity => {
            let auc = macro_ovr_auc(&probs, &labels)?;
            let curve = micro_ovr_roc(&probs, &labels)?;
            Ok((curve, auc))
        }
    }
}

/// Full three-task evaluation of one domain.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_domain(
    verifier: &VerifierModel,
    gender_attacker: &AttackerModel,
    activity_attacker: &AttackerModel,
    privatizer: Option<&PrivatizerModel>,
    weights: Option<LossWeights>,
    eval_data: &WindowDataset,
    pair_spec: PairSpec,
    seed: u64,
    train_subjects: &HashSet<String>,
) -> Result<EvalReport> {
    let (roc_v, auc_v) =
        evaluate_verification(verifier, privatizer, eval_data, pair_spec, seed, train_subjects)?;
    let (roc_g, auc_g) = evaluate_attribute(gender_attacker, privatizer, eval_data)?;
    let (roc_a, auc_a) = evaluate_attribute(activity_attacker, privatizer, eval_data)?;
    let pairs = sample_pairs_capped(eval_data, pair_spec.n_genuine, pair_spec.n_impostor, seed)?;
    let n_genuine = pairs.pairs.iter().filter(|p| p.genuine).count();
    Ok(EvalReport {
        domain: if privatizer.is_some() { "transformed".into() } else { "raw".into() },
        weights,
        verification_auc: auc_v,
        gender_auc: auc_g,
        activity_macro_auc: auc_a,
        n_genuine,
        n_impostor: pairs.len() - n_genuine,
        n_windows: eval_data.len(),
        roc_verification: roc_v,
        roc_gender: roc_g,
        roc_activity: roc_a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{
        generate_synthetic, normalize_stream, segment_windows, split_by_subject_balanced,
        DatasetRole, SyntheticConfig, WindowDataset,
    };
    use crate::verifier::VerifierConfig;

    fn small_split() -> (WindowDataset, WindowDataset) {
        let config = SyntheticConfig {
            n_subjects: 20,
            samples_per_subject_per_activity: 300,
            ..Default::default()
        };
        let mut windows = Vec::new();
        for stream in generate_synthetic(&config).unwrap() {
            let normalized = normalize_stream(&stream).unwrap().stream;
            windows.extend(segment_windows(&normalized, 100, 0.75).unwrap());
        }
        let all = WindowDataset::new(windows, DatasetRole::Development);
        split_by_subject_balanced(&all, 0.5, 3).unwrap()
    }

    #[test]
    fn untrained_verifier_scores_near_chance() {
        let (dev, eval) = small_split();
        let dev_subjects: HashSet<String> = dev.subject_ids().into_iter().collect();
        let verifier = VerifierModel::build(VerifierConfig::default(), 5).unwrap();
        let (_, auc) = evaluate_verification(
            &verifier,
            None,
            &eval,
            PairSpec { n_genuine: 300, n_impostor: 300 },
            7,
            &dev_subjects,
        )
        .unwrap();
        assert!((0.4..=0.6).contains(&auc), "untrained verifier AUC {auc}");
    }

    #[test]
    fn subject_leakage_is_a_contract_error() {
        let (dev, _) = small_split();
        let verifier = VerifierModel::build(VerifierConfig::default(), 5).unwrap();
        let dev_subjects: HashSet<String> = dev.subject_ids().into_iter().collect();
        // evaluating on the development set itself must be rejected
        let err = evaluate_verification(
            &verifier,
            None,
            &dev,
            PairSpec { n_genuine: 10, n_impostor: 10 },
            7,
            &dev_subjects,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Contract(_)), "{err}");
    }
}
