//! `gaitpriv`: command-line driver for the gait privacy pipeline.
//!
//! Exit codes: 0 success, 1 domain error (bad data, failed contract),
//! 2 usage error (unknown flags or subcommands).

mod config;
mod manifest;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gaitpriv_core::attacker::{AttackerConfig, AttackerModel, SensitiveAttribute};
use gaitpriv_core::checkpoint::Checkpoint;
use gaitpriv_core::data::{
    load_csv, normalize_stream, segment_windows, split_by_subject, split_by_subject_balanced,
    write_corpus_csv, CsvSchema, DatasetRole, SignalStream, WindowDataset,
};
use gaitpriv_core::eval::{build_report, evaluate_domain, EvalReport, PairSpec};
use gaitpriv_core::losses::LossWeights;
use gaitpriv_core::privatizer::{AutoencoderConfig, PrivatizerModel};
use gaitpriv_core::trainer::{
    run_sweep, train_attacker, train_privatizer_stage2, train_verifier_stage1, SweepConfig,
    SweepGrid, TrainDomain, TrainHistory,
};
use gaitpriv_core::verifier::{VerifierConfig, VerifierModel};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use config::Settings;
use manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "gaitpriv",
    about = "Privacy-preserving gait verification: synthesize corpora, train the two-stage pipeline, attack it, and report the privacy/utility trade-off",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Flat key/value TOML config; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; every random choice in the run derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Force single-worker execution (execution is sequential and
    /// bit-reproducible either way; accepted for interface stability).
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory (defaults to a run directory under the runs root;
    /// override the root with GAITPRIVACY_RUNS_DIR).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long = "lr", global = true)]
    learning_rate: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus CSV.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Stage 1: train the verifier on raw development windows.
    TrainVerifier {
        #[command(flatten)]
        common: CommonArgs,
        /// Corpus CSV.
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Stage 2: train the privatizer against a frozen verifier.
    TrainPrivatizer {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Stage-1 verifier checkpoint.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.4)]
        alpha: f64,
        #[arg(long, default_value_t = 0.4)]
        beta: f64,
        #[arg(long, default_value_t = 0.2)]
        gamma: f64,
    },
    /// Train a gender or activity inference attacker from scratch.
    TrainAttacker {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// "gender" or "activity".
        #[arg(long)]
        attribute: String,
        /// Privatizer checkpoint; when given the attacker trains on
        /// transformed windows.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Evaluate verification + attribute inference on the held-out
    /// subjects, raw or through a privatizer.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Verifier checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Privatizer checkpoint (omit for the raw domain).
        #[arg(long)]
        privatizer: Option<PathBuf>,
        #[arg(long)]
        gender_attacker: PathBuf,
        #[arg(long)]
        activity_attacker: PathBuf,
    },
    /// Sweep loss-weight triples: fresh privatizer + fresh attackers per
    /// point, one table row per triple.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Stage-1 verifier checkpoint.
        #[arg(long)]
        model: PathBuf,
    },
    /// Transform a corpus CSV through a trained privatizer
    /// (window-aligned, shape-preserving).
    Transform {
        #[command(flatten)]
        common: CommonArgs,
        /// Privatizer checkpoint.
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Skip per-recording z-scoring before windowing.
        #[arg(long)]
        no_normalize: bool,
    },
    /// Merge evaluation JSONs into summary CSV, JSON, and ROC figures.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        /// Raw-domain evaluation JSON.
        #[arg(long)]
        raw: PathBuf,
        /// Transformed-domain evaluation JSONs.
        #[arg(long, num_args = 0..)]
        transformed: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common } => cmd_synth(common),
        Command::TrainVerifier { common, dataset } => cmd_train_verifier(common, dataset),
        Command::TrainPrivatizer { common, dataset, model, alpha, beta, gamma } => {
            cmd_train_privatizer(common, dataset, model, alpha, beta, gamma)
        }
        Command::TrainAttacker { common, dataset, attribute, model } => {
            cmd_train_attacker(common, dataset, attribute, model)
        }
        Command::Evaluate { common, dataset, model, privatizer, gender_attacker, activity_attacker } => {
            cmd_evaluate(common, dataset, model, privatizer, gender_attacker, activity_attacker)
        }
        Command::Sweep { common, dataset, model } => cmd_sweep(common, dataset, model),
        Command::Transform { common, model, input, no_normalize } => {
            cmd_transform(common, model, input, no_normalize)
        }
        Command::Report { common, raw, transformed } => cmd_report(common, raw, transformed),
    }
}

/// Defaults -> config file -> flags.
fn resolve_settings(common: &CommonArgs) -> Result<Settings> {
    let mut settings = Settings::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        settings.seed = seed;
    }
    if let Some(epochs) = common.epochs {
        settings.epochs = epochs;
    }
    if let Some(batch) = common.batch_size {
        settings.batch_size = batch;
    }
    if let Some(lr) = common.learning_rate {
        settings.learning_rate = lr;
    }
    Ok(settings)
}

fn runs_root() -> PathBuf {
    std::env::var_os("GAITPRIVACY_RUNS_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Deterministic run directory: `<root>/<command>-s<seed>-<confighash>`
/// unless --out pins it.
fn run_dir(common: &CommonArgs, command: &str, settings: &Settings) -> PathBuf {
    if let Some(out) = &common.out {
        return out.clone();
    }
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let echo = toml::to_string(&settings.echo).unwrap_or_default();
    for b in echo.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    runs_root().join(format!("{command}-s{}-{:08x}", settings.seed, hash as u32))
}

/// Load, z-score per recording, and cut into windows.
fn load_windows(dataset: &Path, settings: &Settings) -> Result<WindowDataset> {
    let streams = load_csv(dataset, &CsvSchema::default(), settings.sample_rate_hz)?;
    let mut windows = Vec::new();
    for stream in &streams {
        let prepared = prepare_stream(stream, settings)?;
        windows.extend(segment_windows(&prepared, settings.window_len, settings.overlap)?);
    }
    if windows.is_empty() {
        bail!("dataset {} produced no windows", dataset.display());
    }
    Ok(WindowDataset::new(windows, DatasetRole::Development))
}

fn prepare_stream(stream: &SignalStream, settings: &Settings) -> Result<SignalStream> {
    if !settings.normalize {
        return Ok(stream.clone());
    }
    let outcome = normalize_stream(stream)?;
    for channel in &outcome.constant_channels {
        eprintln!(
            "warning: subject {} activity {} channel {channel} is constant; normalized to zeros",
            stream.subject_id,
            stream.activity.label()
        );
    }
    Ok(outcome.stream)
}

fn split_dataset(all: &WindowDataset, settings: &Settings) -> Result<(WindowDataset, WindowDataset)> {
    let split = if settings.balanced_split {
        split_by_subject_balanced(all, settings.dev_fraction, settings.seed)
    } else {
        split_by_subject(all, settings.dev_fraction, settings.seed)
    }?;
    Ok(split)
}

fn write_history(dir: &Path, history: &TrainHistory) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("history.csv"), history.to_csv())
        .with_context(|| format!("writing {}/history.csv", dir.display()))
}

fn cmd_synth(common: CommonArgs) -> Result<()> {
    let settings = resolve_settings(&common)?;
    let dir = run_dir(&common, "synth", &settings);
    std::fs::create_dir_all(&dir)?;
    RunManifest::new(
        dir.file_name().and_then(|s| s.to_str()).unwrap_or("synth"),
        "synth",
        settings.seed,
        &settings.echo,
        &[],
    )
    .write_atomic(&dir)?;
    let streams = gaitpriv_core::data::generate_synthetic(&settings.synth_config())?;
    let path = dir.join("corpus.csv");
    write_corpus_csv(&streams, &path)?;
    println!(
        "wrote {} streams ({} subjects x 4 activities) to {}",
        streams.len(),
        settings.synth.n_subjects,
        path.display()
    );
    Ok(())
}

fn cmd_train_verifier(common: CommonArgs, dataset: PathBuf) -> Result<()> {
    let settings = resolve_settings(&common)?;
    let dir = run_dir(&common, "train-verifier", &settings);
    let ckpt_dir = dir.join("verifier");
    RunManifest::new(
        dir.file_name().and_then(|s| s.to_str()).unwrap_or("train-verifier"),
        "train-verifier",
        settings.seed,
        &settings.echo,
        &[ckpt_dir.join("best.ckpt"), ckpt_dir.join("last.ckpt")],
    )
    .write_atomic(&dir)?;

    let all = load_windows(&dataset, &settings)?;
    let (dev, _eval) = split_dataset(&all, &settings)?;
    let verifier_config = VerifierConfig {
        input_width: settings.window_len,
        ..VerifierConfig::default()
    };
    let mut model = VerifierModel::build(verifier_config, settings.seed)?;
    let (history, last) = train_verifier_stage1(&mut model, &dev, &settings.train_config())?;
    write_history(&ckpt_dir, &history)?;
    Checkpoint::from_verifier(&model, "verifier").save(&ckpt_dir.join("best.ckpt"))?;
    Checkpoint::from_verifier(&last, "verifier").save(&ckpt_dir.join("last.ckpt"))?;
    let final_auc = history.epochs.last().map(|r| r.val_auc).unwrap_or(f64::NAN);
    println!(
        "trained verifier for {} epochs (final val AUC {:.4}); checkpoints in {}",
        history.epochs.len(),
        final_auc,
        ckpt_dir.display()
    );
    Ok(())
}

fn cmd_train_privatizer(
    common: CommonArgs,
    dataset: PathBuf,
    model: PathBuf,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> Result<()> {
    let settings = resolve_settings(&common)?;
    let weights = LossWeights::new(alpha, beta, gamma)?;
    let dir = run_dir(&common, "train-privatizer", &settings);
    let ckpt_dir = dir.join("privatizer");
    RunManifest::new(
        dir.file_name().and_then(|s| s.to_str()).unwrap_or("train-privatizer"),
        "train-privatizer",
        settings.seed,
        &settings.echo,
        &[ckpt_dir.join("best.ckpt"), ckpt_dir.join("last.ckpt")],
    )
    .write_atomic(&dir)?;

    let mut verifier = Checkpoint::load(&model)?.to_verifier()?;
    verifier.freeze();
    let all = load_windows(&dataset, &settings)?;
    let (dev, _eval) = split_dataset(&all, &settings)?;
    let autoencoder_config = AutoencoderConfig {
        input_width: settings.window_len,
        ..AutoencoderConfig::default()
    };
    let mut privatizer = PrivatizerModel::build(autoencoder_config, settings.seed)?;
    let (history, last) =
        train_privatizer_stage2(&mut privatizer, &verifier, &dev, weights, &settings.train_config())?;
    write_history(&ckpt_dir, &history)?;
    Checkpoint::from_privatizer(&privatizer, Some(weights)).save(&ckpt_dir.join("best.ckpt"))?;
    Checkpoint::from_privatizer(&last, Some(weights)).save(&ckpt_dir.join("last.ckpt"))?;
    println!(
        "trained privatizer with weights {weights} for {} epochs; checkpoints in {}",
        history.epochs.len(),
        ckpt_dir.display()
    );
    Ok(())
}

fn cmd_train_attacker(
    common: CommonArgs,
    dataset: PathBuf,
    attribute: String,
    model: Option<PathBuf>,
) -> Result<()> {
    let settings = resolve_settings(&common)?;
    let attribute = SensitiveAttribute::parse(&attribute)?;
    let privatizer = match &model {
        Some(path) => Some(Checkpoint::load(path)?.to_privatizer()?),
        None => None,
    };
    let domain_name = if privatizer.is_some() { "transformed" } else { "raw" };
    let dir = run_dir(&common, "train-attacker", &settings);
    let ckpt_dir = dir.join(format!("attacker-{}-{domain_name}", attribute.name()));
    RunManifest::new(
        dir.file_name().and_then(|s| s.to_str()).unwrap_or("train-attacker"),
        "train-attacker",
        settings.seed,
        &settings.echo,
        &[ckpt_dir.join("best.ckpt"), ckpt_dir.join("last.ckpt")],
    )
    .write_atomic(&dir)?;

    let all = load_windows(&dataset, &settings)?;
    let (dev, _eval) = split_dataset(&all, &settings)?;
    let mut attacker = AttackerModel::build(
        AttackerConfig {
            input_width: settings.window_len,
            ..AttackerConfig::new(attribute)
        },
        settings.seed,
    )?;
    let domain = match &privatizer {
        Some(p) => TrainDomain::Transformed(p),
        None => TrainDomain::Raw,
    };
    let (history, last) = train_attacker(&mut attacker, &dev, domain, &settings.train_config())?;
    write_history(&ckpt_dir, &history)?;
    Checkpoint::from_attacker(&attacker, domain_name).save(&ckpt_dir.join("best.ckpt"))?;
    Checkpoint::from_attacker(&last, domain_name).save(&ckpt_dir.join("last.ckpt"))?;
    let final_auc = history.epochs.last().map(|r| r.val_auc).unwrap_or(f64::NAN);
    println!(
        "trained {} attacker on {domain_name} windows for {} epochs (final val AUC {:.4}); checkpoints in {}",
        attribute.name(),
        history.epochs.len(),
        final_auc,
        ckpt_dir.display()
    );
    Ok(())
}

fn cmd_evaluate(
    common: CommonArgs,
    dataset: PathBuf,
    model: PathBuf,
    privatizer: Option<PathBuf>,
    gender_attacker: PathBuf,
    activity_attacker: PathBuf,
) -> Result<()> {
    let settings = resolve_settings(&common)?;
    let dir = run_dir(&common, "evaluate", &settings);
    std::fs::create_dir_all(&dir)?;
    RunManifest::new(
        dir.file_name().and_then(|s| s.to_str()).unwrap_or("evaluate"),
        "evaluate",
        settings.seed,
        &settings.echo,
        &[],
    )
    .write_atomic(&dir)?;

    let verifier = Checkpoint::load(&model)?.to_verifier()?;
    let privatizer_ckpt = match &privatizer {
        Some(p) => Some(Checkpoint::load(p)?),
        None => None,
    };
    let privatizer_model = match &privatizer_ckpt {
        Some(c) => Some(c.to_privatizer()?),
        None => None,
    };
    let weights = privatizer_ckpt.as_ref().and_then(|c| c.loss_weights());
    let gender = Checkpoint::load(&gender_attacker)?.to_attacker()?;
    let activity = Checkpoint::load(&activity_attacker)?.to_attacker()?;
    if gender.config.attribute != SensitiveAttribute::Gender {
        bail!("--gender-attacker checkpoint is a {} attacker", gender.config.attribute.name());
    }
    if activity.config.attribute != SensitiveAttribute::Activity {
        bail!("--activity-attacker checkpoint is a {} attacker", activity.config.attribute.name());
    }

    let all = load_windows(&dataset, &settings)?;
    let (dev, eval) = split_dataset(&all, &settings)?;
    let dev_subjects: HashSet<String> = dev.subject_ids().into_iter().collect();
    let report = evaluate_domain(
        &verifier,
        &gender,
        &activity,
        privatizer_model.as_ref(),
        weights,
        &eval,
        PairSpec {
            n_genuine: settings.eval_genuine_pairs,
            n_impostor: settings.eval_impostor_pairs,
        },
        settings.seed,
        &dev_subjects,
    )?;

    let json_path = dir.join("eval.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;
    let csv_path = dir.join("eval.csv");
    let (a, b, g) = match &report.weights {
        Some(w) => (w.alpha().to_string(), w.beta().to_string(), w.gamma().to_string()),
        None => (String::new(), String::new(), String::new()),
    };
    std::fs::write(
        &csv_path,
        format!(
            "domain,alpha,beta,gamma,verification_auc,gender_auc,activity_auc,n_pairs,n_windows\n{},{a},{b},{g},{},{},{},{},{}\n",
            report.domain,
            report.verification_auc,
            report.gender_auc,
            report.activity_macro_auc,
            report.n_genuine + report.n_impostor,
            report.n_windows
        ),
    )?;
    println!(
        "{} domain: verification {:.4}, gender {:.4}, activity {:.4} -> {}",
        report.domain,
        report.verification_auc,
        report.gender_auc,
        report.activity_macro_auc,
        json_path.display()
    );
    Ok(())
}

fn cmd_sweep(common: CommonArgs, dataset: PathBuf, model: PathBuf) -> Result<()> {
    let settings = resolve_settings(&common)?;
    let dir = run_dir(&common, "sweep", &settings);
    std::fs::create_dir_all(&dir)?;
    RunManifest::new(
        dir.file_name().and_then(|s| s.to_str()).unwrap_or("sweep"),
        "sweep",
        settings.seed,
        &settings.echo,
        &[],
    )
    .write_atomic(&dir)?;

    let mut verifier = Checkpoint::load(&model)?.to_verifier()?;
    verifier.freeze();
    let all = load_windows(&dataset, &settings)?;
    let (dev, eval) = split_dataset(&all, &settings)?;

    let mut points = Vec::new();
    if settings.sweep_triples.is_empty() {
        for &g in &settings.sweep_gammas {
            let ab = (1.0 - g) / 2.0;
            points.push(LossWeights::new(ab, ab, g)?);
        }
    } else {
        for [a, b, g] in &settings.sweep_triples {
            points.push(LossWeights::new(*a, *b, *g)?);
        }
    }
    let grid = SweepGrid { points };
    let sweep_config = SweepConfig {
        autoencoder: AutoencoderConfig {
            input_width: settings.window_len,
            ..AutoencoderConfig::default()
        },
        stage2: settings.train_config(),
        attacker: settings.train_config(),
        pair_spec: PairSpec {
            n_genuine: settings.eval_genuine_pairs,
            n_impostor: settings.eval_impostor_pairs,
        },
        seed: settings.seed,
    };
    let table = run_sweep(&grid, &verifier, &dev, &eval, &sweep_config)?;
    let csv_path = dir.join("sweep.csv");
    std::fs::write(&csv_path, table.to_csv())?;
    println!("alpha,beta,gamma,verification_auc,gender_auc,activity_auc,tag");
    for row in &table.rows {
        println!(
            "{},{},{},{:.4},{:.4},{:.4},{}",
            row.weights.alpha(),
            row.weights.beta(),
            row.weights.gamma(),
            row.verification_auc,
            row.gender_auc,
            row.activity_auc,
            row.tag.as_deref().unwrap_or("")
        );
    }
    println!("sweep table written to {}", csv_path.display());
    Ok(())
}

fn cmd_transform(
    common: CommonArgs,
    model: PathBuf,
    input: PathBuf,
    no_normalize: bool,
) -> Result<()> {
    let mut settings = resolve_settings(&common)?;
    if no_normalize {
        settings.normalize = false;
    }
    // for transform, --out names the output CSV itself
    let output = common
        .out
        .clone()
        .context("transform requires --out <output.csv>")?;
    let privatizer = Checkpoint::load(&model)?.to_privatizer()?;
    let streams = load_csv(&input, &CsvSchema::default(), settings.sample_rate_hz)?;
    let window_len = privatizer.config.input_width;

    let mut transformed_streams = Vec::with_capacity(streams.len());
    for stream in &streams {
        let prepared = prepare_stream(stream, &settings)?;
        // window-aligned transform: consecutive non-overlapping windows,
        // untransformed tail copied through so the shape is preserved
        let mut out_stream = prepared.clone();
        let len = prepared.len();
        let mut start = 0;
        while start + window_len <= len {
            let mut window = ndarray::Array2::<f64>::zeros((6, window_len));
            for c in 0..6 {
                for t in 0..window_len {
                    window[[c, t]] = prepared.channels[c][start + t];
                }
            }
            let transformed = privatizer.transform(&window)?;
            for c in 0..6 {
                for t in 0..window_len {
                    out_stream.channels[c][start + t] = transformed[[c, t]];
                }
            }
            start += window_len;
        }
        transformed_streams.push(out_stream);
    }
    write_corpus_csv(&transformed_streams, &output)?;
    let rows: usize = transformed_streams.iter().map(|s| s.len()).sum();
    println!(
        "transformed {} streams ({rows} rows) -> {}",
        transformed_streams.len(),
        output.display()
    );
    Ok(())
}

fn cmd_report(common: CommonArgs, raw: PathBuf, transformed: Vec<PathBuf>) -> Result<()> {
    let settings = resolve_settings(&common)?;
    let dir = run_dir(&common, "report", &settings);

    let parse = |path: &Path| -> Result<EvalReport> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    };
    let raw_report = parse(&raw)?;
    if raw_report.domain != "raw" {
        bail!("--raw report has domain '{}'", raw_report.domain);
    }
    let transformed_reports = transformed
        .iter()
        .map(|p| parse(p))
        .collect::<Result<Vec<_>>>()?;
    let paths = build_report(&raw_report, &transformed_reports, &dir)?;
    println!(
        "report written: {} / {} / {} figures",
        paths.csv.display(),
        paths.json.display(),
        paths.figures.len()
    );
    Ok(())
}
