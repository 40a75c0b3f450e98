//! Subject-disjoint splits and genuine/impostor pair sampling.

use super::{DatasetRole, Gender, PairBatch, PairSample, WindowDataset};
use crate::error::{Error, Result};
use crate::seed::{self, tag};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::HashSet;

/// Splits a dataset into development/evaluation with disjoint subject
/// sets. `dev_fraction` of the subjects (rounded) go to development.
pub fn split_by_subject(
    dataset: &WindowDataset,
    dev_fraction: f64,
    seed: u64,
) -> Result<(WindowDataset, WindowDataset)> {
    let mut subjects = sorted_subjects(dataset)?;
    let n = subjects.len();
    let n_dev = ((n as f64) * dev_fraction).round() as usize;
    if n_dev == 0 || n_dev >= n {
        return Err(Error::Sizing(format!(
            "cannot split {n} subjects with dev_fraction {dev_fraction}: {n_dev} dev / {} eval",
            n - n_dev.min(n)
        )));
    }
    let mut rng = seed::rng(seed, tag::SPLIT, 0);
    subjects.shuffle(&mut rng);
    let dev: HashSet<String> = subjects[..n_dev].iter().cloned().collect();
    let eval: HashSet<String> = subjects[n_dev..].iter().cloned().collect();
    Ok((
        dataset.filter_subjects(&dev, DatasetRole::Development),
        dataset.filter_subjects(&eval, DatasetRole::Evaluation),
    ))
}

/// Like [`split_by_subject`] but the evaluation set is gender-balanced:
/// half its subjects male, half female.
pub fn split_by_subject_balanced(
    dataset: &WindowDataset,
    dev_fraction: f64,
    seed: u64,
) -> Result<(WindowDataset, WindowDataset)> {
    let subjects = sorted_subjects(dataset)?;
    let genders = dataset.gender_by_subject()?;
    let n = subjects.len();
    let n_eval = n - ((n as f64) * dev_fraction).round() as usize;
    if n_eval == 0 || n_eval >= n {
        return Err(Error::Sizing(format!(
            "cannot split {n} subjects with dev_fraction {dev_fraction}"
        )));
    }
    if !n_eval.is_multiple_of(2) {
        return Err(Error::Sizing(format!(
            "balanced evaluation set needs an even subject count, got {n_eval}"
        )));
    }
    let per_gender = n_eval / 2;
    let mut males: Vec<String> = subjects.iter().filter(|s| genders[*s] == Gender::Male).cloned().collect();
    let mut females: Vec<String> = subjects.iter().filter(|s| genders[*s] == Gender::Female).cloned().collect();
    if males.len() < per_gender || females.len() < per_gender {
        return Err(Error::Sizing(format!(
            "balanced evaluation needs {per_gender} subjects per gender, have {} male / {} female",
            males.len(),
            females.len()
        )));
    }
    let mut rng = seed::rng(seed, tag::SPLIT, 1);
    males.shuffle(&mut rng);
    females.shuffle(&mut rng);
    let eval: HashSet<String> = males[..per_gender].iter().chain(females[..per_gender].iter()).cloned().collect();
    let dev: HashSet<String> = subjects.iter().filter(|s| !eval.contains(*s)).cloned().collect();
    Ok((
        dataset.filter_subjects(&dev, DatasetRole::Development),
        dataset.filter_subjects(&eval, DatasetRole::Evaluation),
    ))
}

fn sorted_subjects(dataset: &WindowDataset) -> Result<Vec<String>> {
    let mut subjects = dataset.subject_ids();
    subjects.sort();
    if subjects.len() < 2 {
        return Err(Error::Sizing(format!(
            "need at least 2 subjects to split, got {}",
            subjects.len()
        )));
    }
    Ok(subjects)
}

/// Draws exactly `n_genuine` same-subject and `n_impostor` cross-subject
/// window pairs, without replacement over distinct unordered pairs.
/// A genuine pair never pairs a window with itself.
pub fn sample_pairs(
    dataset: &WindowDataset,
    n_genuine: usize,
    n_impostor: usize,
    seed: u64,
) -> Result<PairBatch> {
    let plan = PairPlan::new(dataset)?;
    if n_genuine > plan.total_genuine {
        return Err(Error::Sampling(format!(
            "requested {n_genuine} genuine pairs but only {} distinct genuine pairs exist",
            plan.total_genuine
        )));
    }
    if n_impostor > plan.total_impostor {
        return Err(Error::Sampling(format!(
            "requested {n_impostor} impostor pairs but only {} distinct impostor pairs exist",
            plan.total_impostor
        )));
    }
    Ok(plan.draw(n_genuine, n_impostor, seed))
}

/// Like [`sample_pairs`] but caps each class at the number of distinct
/// pairs available (exhaustive when fewer exist than requested).
pub fn sample_pairs_capped(
    dataset: &WindowDataset,
    n_genuine: usize,
    n_impostor: usize,
    seed: u64,
) -> Result<PairBatch> {
    let plan = PairPlan::new(dataset)?;
    Ok(plan.draw(
        n_genuine.min(plan.total_genuine),
        n_impostor.min(plan.total_impostor),
        seed,
    ))
}

struct PairPlan {
    /// (first window index, window count) per subject, in dataset order.
    subject_windows: Vec<Vec<usize>>,
    /// subject index of every window
    subject_of: Vec<usize>,
    /// cumulative genuine pair counts per subject
    genuine_cum: Vec<u64>,
    total_genuine: usize,
    total_impostor: usize,
    n_windows: usize,
}

impl PairPlan {
    fn new(dataset: &WindowDataset) -> Result<Self> {
        let by_subject = dataset.windows_by_subject();
        if by_subject.len() < 2 {
            return Err(Error::Sampling(format!(
                "pair sampling needs at least 2 subjects, got {}",
                by_subject.len()
            )));
        }
        let subject_windows: Vec<Vec<usize>> = by_subject.into_values().collect();
        let mut subject_of = vec![0usize; dataset.len()];
        for (s, ws) in subject_windows.iter().enumerate() {
            for &w in ws {
                subject_of[w] = s;
            }
        }
        let mut genuine_cum = Vec::with_capacity(subject_windows.len());
        let mut total: u64 = 0;
        for ws in &subject_windows {
            let m = ws.len() as u64;
            total += m * (m - 1) / 2;
            genuine_cum.push(total);
        }
        let n = dataset.len() as u64;
        let all_pairs = n * (n - 1) / 2;
        Ok(PairPlan {
            subject_windows,
            subject_of,
            genuine_cum,
            total_genuine: total as usize,
            total_impostor: (all_pairs - total) as usize,
            n_windows: dataset.len(),
        })
    }

    fn draw(&self, n_genuine: usize, n_impostor: usize, seed: u64) -> PairBatch {
        let mut rng = seed::rng(seed, tag::PAIRS, 0);
        let mut pairs = Vec::with_capacity(n_genuine + n_impostor);

        // Genuine: sample distinct ranks over the same-subject pair space
        // and unrank each into (subject, i < j).
        let mut taken: HashSet<u64> = HashSet::with_capacity(n_genuine);
        while taken.len() < n_genuine {
            let rank = rng.random_range(0..self.total_genuine as u64);
            if taken.insert(rank) {
                pairs.push(self.unrank_genuine(rank));
            }
        }

        // Impostor: rejection-sample distinct unordered window pairs,
        // keeping only cross-subject ones. Falls back to exhaustive
        // enumeration when the request covers the whole space.
        if n_impostor == self.total_impostor {
            for i in 0..self.n_windows {
                for j in i + 1..self.n_windows {
                    if self.subject_of[i] != self.subject_of[j] {
                        pairs.push(PairSample { a: i, b: j, genuine: false });
                    }
                }
            }
        } else {
            let mut taken: HashSet<(usize, usize)> = HashSet::with_capacity(n_impostor);
            while taken.len() < n_impostor {
                let i = rng.random_range(0..self.n_windows);
                let j = rng.random_range(0..self.n_windows);
                if i == j || self.subject_of[i] == self.subject_of[j] {
                    continue;
                }
                let key = (i.min(j), i.max(j));
                if taken.insert(key) {
                    pairs.push(PairSample { a: key.0, b: key.1, genuine: false });
                }
            }
        }
        PairBatch { pairs }
    }

    fn unrank_genuine(&self, rank: u64) -> PairSample {
        let s = self.genuine_cum.partition_point(|&c| c <= rank);
        let before = if s == 0 { 0 } else { self.genuine_cum[s - 1] };
        let local = rank - before;
        // Unrank `local` into i < j over the subject's windows: row i
        // contributes (m - 1 - i) pairs.
        let ws = &self.subject_windows[s];
        let m = ws.len() as u64;
        let mut i = 0u64;
        let mut remaining = local;
        loop {
            let row = m - 1 - i;
            if remaining < row {
                break;
            }
            remaining -= row;
            i += 1;
        }
        let j = i + 1 + remaining;
        PairSample { a: ws[i as usize], b: ws[j as usize], genuine: true }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Activity, ImuWindow, N_CHANNELS};
    use ndarray::Array2;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn tiny_dataset(windows_per_subject: &[usize]) -> WindowDataset {
        let mut windows = Vec::new();
        for (s, &count) in windows_per_subject.iter().enumerate() {
            for w in 0..count {
                let values = Array2::from_elem((N_CHANNELS, 8), (s * 100 + w) as f64);
                windows.push(
                    ImuWindow::new(
                        values,
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
    fn split_80_subjects_at_0875_gives_70_10() {
        let data = tiny_dataset(&vec![2; 80]);
        let (dev, eval) = split_by_subject(&data, 0.875, 7).unwrap();
        assert_eq!(dev.subject_ids().len(), 70);
        assert_eq!(eval.subject_ids().len(), 10);
    }

    #[test]
    fn split_subject_sets_are_disjoint_and_cover_all() {
        let data = tiny_dataset(&[3; 17]);
        let (dev, eval) = split_by_subject(&data, 0.6, 3).unwrap();
        let dev_s: BTreeSet<_> = dev.subject_ids().into_iter().collect();
        let eval_s: BTreeSet<_> = eval.subject_ids().into_iter().collect();
        assert!(dev_s.is_disjoint(&eval_s));
        assert_eq!(dev_s.len() + eval_s.len(), 17);
        assert_eq!(dev.len() + eval.len(), data.len());
    }

    #[test]
    fn balanced_split_gives_equal_gender_counts() {
        // 500 subjects, 100 eval requested -> 50 male / 50 female.
        let data = tiny_dataset(&vec![1; 500]);
        let (_, eval) = split_by_subject_balanced(&data, 0.8, 11).unwrap();
        let genders = eval.gender_by_subject().unwrap();
        let males = genders.values().filter(|g| **g == Gender::Male).count();
        let females = genders.values().filter(|g| **g == Gender::Female).count();
        assert_eq!((males, females), (50, 50));
    }

    #[test]
    fn split_is_deterministic() {
        let data = tiny_dataset(&[2; 20]);
        let (d1, e1) = split_by_subject(&data, 0.5, 9).unwrap();
        let (d2, e2) = split_by_subject(&data, 0.5, 9).unwrap();
        assert_eq!(d1.subject_ids(), d2.subject_ids());
        assert_eq!(e1.subject_ids(), e2.subject_ids());
    }

    #[test]
    fn exhaustive_request_enumerates_all_pairs() {
        // 2 subjects x 2 windows: 2 genuine + 4 impostor distinct pairs.
        let data = tiny_dataset(&[2, 2]);
        let batch = sample_pairs(&data, 2, 4, 5).unwrap();
        let genuine: BTreeSet<_> = batch.pairs.iter().filter(|p| p.genuine).map(|p| (p.a, p.b)).collect();
        let impostor: BTreeSet<_> = batch.pairs.iter().filter(|p| !p.genuine).map(|p| (p.a, p.b)).collect();
        assert_eq!(genuine, BTreeSet::from([(0, 1), (2, 3)]));
        assert_eq!(impostor, BTreeSet::from([(0, 2), (0, 3), (1, 2), (1, 3)]));
    }

    #[test]
    fn zero_genuine_request_yields_only_impostors() {
        let data = tiny_dataset(&[3, 4]);
        let batch = sample_pairs(&data, 0, 10, 5).unwrap();
        assert_eq!(batch.len(), 10);
        assert!(batch.pairs.iter().all(|p| !p.genuine));
    }

    #[test]
    fn oversized_request_is_a_sampling_error() {
        let data = tiny_dataset(&[2, 2]);
        let err = sample_pairs(&data, 3, 0, 5).unwrap_err();
        assert!(matches!(err, Error::Sampling(_)), "{err}");
        // capped variant saturates instead
        let batch = sample_pairs_capped(&data, 3, 100, 5).unwrap();
        assert_eq!(batch.pairs.iter().filter(|p| p.genuine).count(), 2);
        assert_eq!(batch.pairs.iter().filter(|p| !p.genuine).count(), 4);
    }

    #[test]
    fn single_subject_dataset_cannot_be_paired() {
        let data = tiny_dataset(&[4]);
        assert!(sample_pairs(&data, 1, 0, 5).is_err());
    }

    proptest! {
        #[test]
        fn labels_match_subject_equality(
            sizes in proptest::collection::vec(1usize..5, 2..6),
            n_genuine in 0usize..8,
            n_impostor in 0usize..8,
            seed in 0u64..1000,
        ) {
            let data = tiny_dataset(&sizes);
            if let Ok(batch) = sample_pairs(&data, n_genuine, n_impostor, seed) {
                prop_assert_eq!(batch.pairs.iter().filter(|p| p.genuine).count(), n_genuine);
                prop_assert_eq!(batch.pairs.iter().filter(|p| !p.genuine).count(), n_impostor);
                for p in &batch.pairs {
                    prop_assert_ne!((p.a, p.b), (p.b, p.a), "self pair");
                    let same = data.windows[p.a].subject_id == data.windows[p.b].subject_id;
                    prop_assert_eq!(same, p.genuine);
                }
            }
        }
    }
}
