//! Flat key/value run configuration: TOML file merged with CLI flag
//! overrides. Every key is optional and falls back to the documented
//! default.

use anyhow::{bail, Context, Result};
use gaitpriv_core::data::SyntheticConfig;
use gaitpriv_core::losses::NoiseConfig;
use gaitpriv_core::trainer::{OptimizerKind, TrainConfig};
use std::path::Path;

/// Resolved settings for one run.
#[derive(Clone, Debug)]
pub struct Settings {
    pub seed: u64,
    // dataset preparation
    pub window_len: usize,
    pub overlap: f64,
    pub dev_fraction: f64,
    pub balanced_split: bool,
    pub sample_rate_hz: f64,
    pub normalize: bool,
    // training
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub early_stop_patience: usize,
    pub pairs_per_epoch: usize,
    pub validation_fraction: f64,
    pub validation_pairs: usize,
    pub noise_lo: f64,
    pub noise_hi: f64,
    // evaluation
    pub eval_genuine_pairs: usize,
    pub eval_impostor_pairs: usize,
    // sweep grid: gamma values with alpha = beta = (1 - gamma) / 2,
    // or explicit triples
    pub sweep_gammas: Vec<f64>,
    pub sweep_triples: Vec<[f64; 3]>,
    // synthesis
    pub synth: SyntheticConfig,
    /// raw TOML echo for the manifest
    pub echo: toml::Table,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            seed: 42,
            window_len: 100,
            overlap: 0.75,
            dev_fraction: 0.8,
            balanced_split: true,
            sample_rate_hz: 50.0,
            normalize: true,
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            early_stop_patience: 10,
            pairs_per_epoch: 1024,
            validation_fraction: 0.15,
            validation_pairs: 256,
            noise_lo: -20.0,
            noise_hi: 20.0,
            eval_genuine_pairs: 10_000,
            eval_impostor_pairs: 10_000,
            sweep_gammas: vec![0.0, 0.1, 0.2, 0.3],
            sweep_triples: Vec::new(),
            synth: SyntheticConfig::default(),
            echo: toml::Table::new(),
        }
    }
}

impl Settings {
    /// Loads a TOML file if given; unknown keys are rejected so typos
    /// fail loudly.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut settings = Settings::default();
        let Some(path) = path else { return Ok(settings) };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let table: toml::Table = text
            .parse()
            .with_context(|| format!("parsing config {}", path.display()))?;
        settings.echo = table.clone();

        for (key, value) in &table {
            settings.apply(key, value)?;
        }
        Ok(settings)
    }

    fn apply(&mut self, key: &str, value: &toml::Value) -> Result<()> {
        let as_f64 = || -> Result<f64> {
            value
                .as_float()
                .or_else(|| value.as_integer().map(|v| v as f64))
                .with_context(|| format!("key '{key}' must be a number"))
        };
        let as_usize = || -> Result<usize> {
            let v = value
                .as_integer()
                .with_context(|| format!("key '{key}' must be an integer"))?;
            if v < 0 {
                bail!("key '{key}' must be non-negative");
            }
            Ok(v as usize)
        };
        let as_bool = || -> Result<bool> {
            value
                .as_bool()
                .with_context(|| format!("key '{key}' must be a boolean"))
        };
        match key {
            "seed" => self.seed = as_usize()? as u64,
            "window_len" => self.window_len = as_usize()?,
            "overlap" => self.overlap = as_f64()?,
            "dev_fraction" => self.dev_fraction = as_f64()?,
            "balanced_split" => self.balanced_split = as_bool()?,
            "sample_rate_hz" => {
                self.sample_rate_hz = as_f64()?;
                self.synth.sample_rate_hz = self.sample_rate_hz;
            }
            "normalize" => self.normalize = as_bool()?,
            "epochs" => self.epochs = as_usize()?,
            "batch_size" => self.batch_size = as_usize()?,
            "learning_rate" => self.learning_rate = as_f64()?,
            "optimizer" => {
                self.optimizer = match value.as_str() {
                    Some("adam") => OptimizerKind::Adam,
                    Some("sgd") => OptimizerKind::Sgd,
                    other => bail!("key 'optimizer' must be \"adam\" or \"sgd\", got {other:?}"),
                }
            }
            "early_stop_patience" => self.early_stop_patience = as_usize()?,
            "pairs_per_epoch" => self.pairs_per_epoch = as_usize()?,
            "validation_fraction" => self.validation_fraction = as_f64()?,
            "validation_pairs" => self.validation_pairs = as_usize()?,
            "noise_lo" => self.noise_lo = as_f64()?,
            "noise_hi" => self.noise_hi = as_f64()?,
            "eval_genuine_pairs" => self.eval_genuine_pairs = as_usize()?,
            "eval_impostor_pairs" => self.eval_impostor_pairs = as_usize()?,
            "sweep_gammas" => {
                let arr = value
                    .as_array()
                    .context("key 'sweep_gammas' must be an array of numbers")?;
                self.sweep_gammas = arr
                    .iter()
                    .map(|v| {
                        v.as_float()
                            .or_else(|| v.as_integer().map(|x| x as f64))
                            .context("sweep_gammas entries must be numbers")
                    })
                    .collect::<Result<Vec<f64>>>()?;
            }
            "sweep_triples" => {
                let arr = value
                    .as_array()
                    .context("key 'sweep_triples' must be an array of [alpha, beta, gamma] arrays")?;
                self.sweep_triples = arr
                    .iter()
                    .map(|row| -> Result<[f64; 3]> {
                        let row = row.as_array().context("each sweep triple must be an array")?;
                        if row.len() != 3 {
                            bail!("each sweep triple needs exactly 3 entries");
                        }
                        let mut out = [0.0; 3];
                        for (i, v) in row.iter().enumerate() {
                            out[i] = v
                                .as_float()
                                .or_else(|| v.as_integer().map(|x| x as f64))
                                .context("triple entries must be numbers")?;
                        }
                        Ok(out)
                    })
                    .collect::<Result<Vec<_>>>()?;
            }
            "n_subjects" => self.synth.n_subjects = as_usize()?,
            "samples_per_subject_per_activity" => {
                self.synth.samples_per_subject_per_activity = as_usize()?
            }
            "base_frequency_by_activity" => {
                let arr = value
                    .as_array()
                    .context("key 'base_frequency_by_activity' must be an array of 4 numbers")?;
                if arr.len() != 4 {
                    bail!("base_frequency_by_activity needs exactly 4 entries");
                }
                for (i, v) in arr.iter().enumerate() {
                    self.synth.base_frequency_by_activity[i] = v
                        .as_float()
                        .or_else(|| v.as_integer().map(|x| x as f64))
                        .context("frequency entries must be numbers")?;
                }
            }
            "gender_frequency_shift" => self.synth.gender_frequency_shift = as_f64()?,
            "amplitude_spread" => self.synth.amplitude_spread = as_f64()?,
            "phase_spread" => self.synth.phase_spread = as_f64()?,
            "noise_std" => self.synth.noise_std = as_f64()?,
            other => bail!("unknown config key '{other}'"),
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            seed: self.seed,
            early_stop_patience: self.early_stop_patience,
            pairs_per_epoch: self.pairs_per_epoch,
            validation_fraction: self.validation_fraction,
            validation_pairs: self.validation_pairs,
            noise: NoiseConfig { lo: self.noise_lo, hi: self.noise_hi },
        }
    }

    /// Synthetic config with the run seed folded in.
    pub fn synth_config(&self) -> SyntheticConfig {
        SyntheticConfig { seed: self.seed, ..self.synth.clone() }
    }
}
