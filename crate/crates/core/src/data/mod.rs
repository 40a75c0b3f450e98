//! Inertial signal ingestion, normalization, segmentation, synthesis and
//! pair sampling.
//!
//! The unit of model input everywhere else in the crate is the
//! [`ImuWindow`]: 6 channels (accelerometer x,y,z then gyroscope x,y,z)
//! by `window_len` time samples, cut from a z-scored [`SignalStream`].

mod csv_io;
mod pairs;
mod synth;
mod window;

pub use csv_io::{load_csv, write_corpus_csv, CsvSchema};
pub use pairs::{sample_pairs, sample_pairs_capped, split_by_subject, split_by_subject_balanced};
pub use synth::{generate_synthetic, harmonic_signature, HarmonicSignature, SyntheticConfig};
pub use window::{normalize_stream, segment_windows, window_stride, NormalizeOutcome};

use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Number of signal channels in every stream and window.
pub const N_CHANNELS: usize = 6;

/// Canonical window length in samples.
pub const WINDOW_LEN: usize = 100;

/// Canonical overlap ratio between consecutive windows.
pub const WINDOW_OVERLAP: f64 = 0.75;

/// Binary gender label carried by streams and windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn label(self) -> u8 {
        match self {
            Gender::Male => 0,
            Gender::Female => 1,
        }
    }

    pub fn from_label(label: u8) -> Result<Self> {
        match label {
            0 => Ok(Gender::Male),
            1 => Ok(Gender::Female),
            other => Err(Error::Config(format!("gender label must be 0 or 1, got {other}"))),
        }
    }
}

/// Activity class in `0..4`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Activity(u8);

/// Number of activity classes.
pub const N_ACTIVITIES: usize = 4;

impl Activity {
    pub fn new(label: u8) -> Result<Self> {
        if (label as usize) < N_ACTIVITIES {
            Ok(Activity(label))
        } else {
            Err(Error::Config(format!("activity label must be in 0..4, got {label}")))
        }
    }

    pub fn label(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One continuous recording of all six channels for one subject/activity.
#[derive(Clone, Debug)]
pub struct SignalStream {
    pub subject_id: String,
    pub gender: Gender,
    pub activity: Activity,
    pub sample_rate_hz: f64,
    /// acc x,y,z then gyr x,y,z; equal lengths.
    pub channels: [Vec<f64>; 6],
}

impl SignalStream {
    /// Length shared by all channels.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Validates equal channel lengths and a positive sample rate.
    pub fn validate(&self) -> Result<()> {
        let len = self.channels[0].len();
        for (i, ch) in self.channels.iter().enumerate() {
            if ch.len() != len {
                return Err(Error::Integrity(format!(
                    "subject {} channel {} has length {} but channel 0 has {}",
                    self.subject_id,
                    i,
                    ch.len(),
                    len
                )));
            }
        }
        if self.sample_rate_hz <= 0.0 || self.sample_rate_hz.is_nan() {
            return Err(Error::Config(format!(
                "sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        Ok(())
    }
}

/// A fixed-shape 6 x W slice of a stream together with its labels.
#[derive(Clone, Debug)]
pub struct ImuWindow {
    /// Shape (6, window_len), all values finite.
    pub values: Array2<f64>,
    pub subject_id: String,
    pub gender: Gender,
    pub activity: Activity,
}

impl ImuWindow {
    pub fn new(values: Array2<f64>, subject_id: String, gender: Gender, activity: Activity) -> Result<Self> {
        if values.nrows() != N_CHANNELS {
            return Err(Error::Shape {
                expected: format!("{N_CHANNELS} rows"),
                got: format!("{} rows", values.nrows()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integrity(format!(
                "window for subject {subject_id} contains non-finite values"
            )));
        }
        Ok(ImuWindow { values, subject_id, gender, activity })
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

/// Role of a dataset in the experimental protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetRole {
    Development,
    Evaluation,
}

/// An immutable collection of windows.
#[derive(Clone, Debug)]
pub struct WindowDataset {
    pub windows: Vec<ImuWindow>,
    pub role: DatasetRole,
}

impl WindowDataset {
    pub fn new(windows: Vec<ImuWindow>, role: DatasetRole) -> Self {
        WindowDataset { windows, role }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Distinct subject ids in first-appearance order.
    pub fn subject_ids(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for w in &self.windows {
            if seen.insert(w.subject_id.as_str()) {
                out.push(w.subject_id.clone());
            }
        }
        out
    }

    /// Window indices grouped by subject, subjects sorted by id.
    pub fn windows_by_subject(&self) -> BTreeMap<String, Vec<usize>> {
        let mut map: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, w) in self.windows.iter().enumerate() {
            map.entry(w.subject_id.clone()).or_default().push(i);
        }
        map
    }

    /// Gender of each subject. Errors if a subject appears with both labels.
    pub fn gender_by_subject(&self) -> Result<BTreeMap<String, Gender>> {
        let mut map: BTreeMap<String, Gender> = BTreeMap::new();
        for w in &self.windows {
            match map.entry(w.subject_id.clone()) {
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(w.gender);
                }
                std::collections::btree_map::Entry::Occupied(e) => {
                    if *e.get() != w.gender {
                        return Err(Error::Integrity(format!(
                            "subject {} appears with both gender labels",
                            w.subject_id
                        )));
                    }
                }
            }
        }
        Ok(map)
    }

    /// Keep only windows whose subject is in `subjects`.
    pub fn filter_subjects(&self, subjects: &std::collections::HashSet<String>, role: DatasetRole) -> WindowDataset {
        WindowDataset {
            windows: self
                .windows
                .iter()
                .filter(|w| subjects.contains(&w.subject_id))
                .cloned()
                .collect(),
            role,
        }
    }
}

/// A sampled batch of window pairs for Siamese training or evaluation.
///
/// Pairs hold indices into the dataset they were sampled from; `genuine`
/// is true iff both windows come from the same subject.
#[derive(Clone, Debug)]
pub struct PairBatch {
    pub pairs: Vec<PairSample>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairSample {
    pub a: usize,
    pub b: usize,
    pub genuine: bool,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}
