//! Rank-statistic AUC and ROC staircases.

use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Threshold-sweep ROC curve: (false positive rate, true positive rate)
/// points, non-decreasing from (0,0) to (1,1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

impl RocCurve {
    /// Trapezoid area under the curve. Equals the rank-statistic AUC.
    pub fn trapezoid_auc(&self) -> f64 {
        let mut area = 0.0;
        for w in self.points.windows(2) {
            let (x1, y1) = w[0];
            let (x2, y2) = w[1];
            area += (x2 - x1) * (y1 + y2) / 2.0;
        }
        area
    }
}

fn validate_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "scores ({}) and labels ({}) differ in length",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes; got {n_pos} positives and {n_neg} negatives"
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    Ok((n_pos, n_neg))
}

/// Rank-statistic AUC: probability a random positive outscores a random
/// negative, ties counted half.
pub fn rank_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (n_pos, n_neg) = validate_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // average ranks over tie groups (ranks are 1-based)
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = ((i + 1 + j + 1) as f64) / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// ROC staircase from a descending threshold sweep, plus the
/// rank-statistic AUC.
pub fn roc_and_auc(scores: &[f64], labels: &[bool]) -> Result<(RocCurve, f64)> {
    let (n_pos, n_neg) = validate_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        i = j + 1;
    }
    let auc = rank_auc(scores, labels)?;
    Ok((RocCurve { points }, auc))
}

/// Unweighted mean of one-vs-rest AUCs over the classes present.
pub fn macro_ovr_auc(probs: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    let (n, k) = probs.dim();
    if n != labels.len() {
        return Err(Error::Contract(format!(
            "probs rows ({n}) and labels ({}) differ",
            labels.len()
        )));
    }
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "macro OvR AUC needs at least 2 classes present, got {}",
            present.len()
        )));
    }
    let mut total = 0.0;
    for &class in &present {
        if class >= k {
            return Err(Error::Contract(format!(
                "label {class} outside the {k} probability columns"
            )));
        }
        let scores: Vec<f64> = (0..n).map(|i| probs[[i, class]]).collect();
        let bin: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        total += rank_auc(&scores, &bin)?;
    }
    Ok(total / present.len() as f64)
}

/// Micro-averaged one-vs-rest ROC: all (example, class) scores pooled
/// into one binary problem. Used for the activity figure.
pub fn micro_ovr_roc(probs: &Array2<f64>, labels: &[usize]) -> Result<RocCurve> {
    let (n, k) = probs.dim();
    let mut scores = Vec::with_capacity(n * k);
    let mut bin = Vec::with_capacity(n * k);
    for i in 0..n {
        for j in 0..k {
            scores.push(probs[[i, j]]);
            bin.push(labels[i] == j);
        }
    }
    Ok(roc_and_auc(&scores, &bin)?.0)
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either input has zero rank variance (no monotone trend either way).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Contract(format!(
            "spearman needs two equal-length series of >= 2 points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..xs.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = ((i + 1 + j + 1) as f64) / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Brute-force pairwise AUC oracle: mean over all (positive, negative)
/// pairs of [s+ > s-] + 0.5 [s+ = s-].
pub fn brute_force_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    validate_inputs(scores, labels)?;
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(s, _)| *s).collect();
    let mut total = 0.0;
    for &p in &pos {
        for &q in &neg {
            if p > q {
                total += 1.0;
            } else if p == q {
                total += 0.5;
            }
        }
    }
    Ok(total / (pos.len() * neg.len()) as f64)
}
