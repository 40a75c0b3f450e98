//! Privacy-preserving gait verification for inertial sensor windows.
//!
//! The pipeline transforms raw accelerometer/gyroscope windows through a
//! pair of shared-weight convolutional autoencoders so that verification
//! accuracy survives while gender/activity inference collapses toward
//! chance. Training happens in two stages: a Siamese CNN-BiLSTM verifier
//! is trained on raw windows first, then frozen while the autoencoder is
//! trained against a weighted task/content/style objective.

pub mod attacker;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod nn;
pub mod privatizer;
pub mod seed;
pub mod trainer;
pub mod verifier;

pub use attacker::{AttackerConfig, AttackerModel, SensitiveAttribute};
pub use data::{
    DatasetRole, Gender, ImuWindow, PairBatch, SignalStream, SyntheticConfig, WindowDataset,
};
pub use error::{Error, Result};
pub use eval::{EvalReport, RocCurve};
pub use losses::{LossWeights, NoiseConfig, NoiseSample};
pub use privatizer::{AutoencoderConfig, PrivatizerModel};
pub use trainer::{SweepGrid, TrainConfig, TrainHistory};
pub use verifier::{Embedding, FeatureMap, Tap, VerifierConfig, VerifierModel};
