//! End-to-end probe of the full pipeline at desk scale. Useful for
//! eyeballing convergence and runtimes before committing to a
//! configuration; prints one line per stage.

use gaitpriv_core::attacker::{AttackerConfig, AttackerModel, SensitiveAttribute};
use gaitpriv_core::data::{
    generate_synthetic, normalize_stream, segment_windows, split_by_subject_balanced, DatasetRole,
    SyntheticConfig, WindowDataset,
};
use gaitpriv_core::eval::{evaluate_attribute, evaluate_verification, PairSpec};
use gaitpriv_core::losses::{LossWeights, NoiseConfig};
use gaitpriv_core::privatizer::{AutoencoderConfig, PrivatizerModel};
use gaitpriv_core::trainer::{
    train_attacker, train_privatizer_stage2, train_verifier_stage1, TrainConfig, TrainDomain,
};
use gaitpriv_core::checkpoint::Checkpoint;
use gaitpriv_core::verifier::{VerifierConfig, VerifierModel};
use std::collections::HashSet;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let args: Vec<String> = std::env::args().collect();
    let arg = |name: &str, default: f64| -> f64 {
        args.iter()
            .position(|a| a == name)
            .and_then(|i| args.get(i + 1))
            .and_then(|v| v.parse().ok())
            .unwrap_or(default)
    };
    let stage1_epochs = arg("--stage1-epochs", 6.0) as usize;
    let stage2_epochs = arg("--stage2-epochs", 6.0) as usize;
    let attacker_epochs = arg("--attacker-epochs", 5.0) as usize;
    let gamma = arg("--gamma", 0.2);
    let noise_hi = arg("--noise-hi", 20.0);
    let pairs = arg("--pairs", 512.0) as usize;

    let synth = SyntheticConfig {
        n_subjects: 50,
        samples_per_subject_per_activity: arg("--samples", 800.0) as usize,
        base_frequency_by_activity: [1.25, 1.95, 2.65, 3.35],
        gender_frequency_shift: arg("--shift", 0.5),
        amplitude_spread: arg("--amp-spread", 0.7),
        phase_spread: arg("--phase-spread", std::f64::consts::PI),
        noise_std: arg("--noise-std", 0.05),
        ..Default::default()
    };
    let mut windows = Vec::new();
    for stream in generate_synthetic(&synth).unwrap() {
        let normalized = normalize_stream(&stream).unwrap().stream;
        windows.extend(segment_windows(&normalized, 100, 0.75).unwrap());
    }
    let all = WindowDataset::new(windows, DatasetRole::Development);
    let (dev, eval) = split_by_subject_balanced(&all, 0.8, 7).unwrap();
    println!(
        "[{:6.1}s] corpus: {} dev windows / {} subjects, {} eval windows / {} subjects",
        t0.elapsed().as_secs_f64(),
        dev.len(),
        dev.subject_ids().len(),
        eval.len(),
        eval.subject_ids().len()
    );

    let train_cfg = TrainConfig {
        epochs: stage1_epochs,
        batch_size: arg("--batch", 64.0) as usize,
        pairs_per_epoch: pairs,
        validation_pairs: 256,
        early_stop_patience: arg("--patience", 10.0) as usize,
        seed: 11,
        ..Default::default()
    };
    let ckpt_path = args
        .iter()
        .position(|a| a == "--verifier-ckpt")
        .and_then(|i| args.get(i + 1))
        .cloned();
    let mut verifier = match &ckpt_path {
        Some(path) if std::path::Path::new(path).exists() => {
            println!("[{:6.1}s] loading verifier from {path}", t0.elapsed().as_secs_f64());
            Checkpoint::load(std::path::Path::new(path)).unwrap().to_verifier().unwrap()
        }
        _ => {
            let mut verifier = VerifierModel::build(VerifierConfig::default(), 11).unwrap();
            let (history, _) = train_verifier_stage1(&mut verifier, &dev, &train_cfg).unwrap();
            for r in &history.epochs {
                println!(
                    "[{:6.1}s] stage1 epoch {}: loss {:.4} val_loss {:.4} val_auc {:.4} ({:.1}s)",
                    t0.elapsed().as_secs_f64(),
                    r.epoch,
                    r.l_task,
                    r.val_loss,
                    r.val_auc,
                    r.seconds
                );
            }
            if let Some(path) = &ckpt_path {
                Checkpoint::from_verifier(&verifier, "verifier").save(std::path::Path::new(path)).unwrap();
                println!("[{:6.1}s] saved verifier to {path}", t0.elapsed().as_secs_f64());
            }
            verifier
        }
    };
    verifier.freeze();

    let dev_subjects: HashSet<String> = dev.subject_ids().into_iter().collect();
    let pair_spec = PairSpec { n_genuine: 1000, n_impostor: 1000 };
    let (_, raw_auc) = evaluate_verification(&verifier, None, &eval, pair_spec, 3, &dev_subjects).unwrap();
    println!("[{:6.1}s] raw verification AUC {:.4}", t0.elapsed().as_secs_f64(), raw_auc);

    let att_cfg = TrainConfig {
        epochs: attacker_epochs,
        batch_size: 64,
        early_stop_patience: 8,
        seed: 13,
        ..Default::default()
    };
    let mut gender = AttackerModel::build(AttackerConfig::new(SensitiveAttribute::Gender), 13).unwrap();
    let _ = train_attacker(&mut gender, &dev, TrainDomain::Raw, &att_cfg).unwrap();
    let (_, gender_raw) = evaluate_attribute(&gender, None, &eval).unwrap();
    let mut activity = AttackerModel::build(AttackerConfig::new(SensitiveAttribute::Activity), 14).unwrap();
    let _ = train_attacker(&mut activity, &dev, TrainDomain::Raw, &att_cfg).unwrap();
    let (_, activity_raw) = evaluate_attribute(&activity, None, &eval).unwrap();
    println!(
        "[{:6.1}s] raw attackers: gender AUC {:.4}, activity macro AUC {:.4}",
        t0.elapsed().as_secs_f64(),
        gender_raw,
        activity_raw
    );

    // stage 2 at one grid point
    let ab = (1.0 - gamma) / 2.0;
    let weights = LossWeights::new(ab, ab, gamma).unwrap();
    let stage2_cfg = TrainConfig {
        epochs: stage2_epochs,
        batch_size: 32,
        pairs_per_epoch: pairs,
        validation_pairs: 128,
        early_stop_patience: 3,
        seed: 17,
        noise: NoiseConfig { lo: -noise_hi, hi: noise_hi },
        ..Default::default()
    };
    let mut privatizer = PrivatizerModel::build(AutoencoderConfig::default(), 17).unwrap();
    let (h2, _) = train_privatizer_stage2(&mut privatizer, &verifier, &dev, weights, &stage2_cfg).unwrap();
    for r in &h2.epochs {
        println!(
            "[{:6.1}s] stage2 epoch {}: total {:.4} task {:.4} content {:.4} style {:.4} val_auc {:.4} ({:.1}s)",
            t0.elapsed().as_secs_f64(),
            r.epoch,
            r.l_total,
            r.l_task,
            r.l_content,
            r.l_style,
            r.val_auc,
            r.seconds
        );
    }

    let (_, t_auc) = evaluate_verification(&verifier, Some(&privatizer), &eval, pair_spec, 3, &dev_subjects).unwrap();
    let mut gender_t = AttackerModel::build(AttackerConfig::new(SensitiveAttribute::Gender), 23).unwrap();
    let _ = train_attacker(&mut gender_t, &dev, TrainDomain::Transformed(&privatizer), &att_cfg).unwrap();
    let (_, gender_auc_t) = evaluate_attribute(&gender_t, Some(&privatizer), &eval).unwrap();
    let mut activity_t = AttackerModel::build(AttackerConfig::new(SensitiveAttribute::Activity), 24).unwrap();
    let _ = train_attacker(&mut activity_t, &dev, TrainDomain::Transformed(&privatizer), &att_cfg).unwrap();
    let (_, activity_auc_t) = evaluate_attribute(&activity_t, Some(&privatizer), &eval).unwrap();
    println!(
        "[{:6.1}s] gamma={gamma}: transformed verification {:.4} (raw {:.4}), gender {:.4} (raw {:.4}), activity {:.4} (raw {:.4})",
        t0.elapsed().as_secs_f64(),
        t_auc,
        raw_auc,
        gender_auc_t,
        gender_raw,
        activity_auc_t,
        activity_raw
    );
}
