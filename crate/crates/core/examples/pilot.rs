//! Reduced-scale pilot of the architecture-ordering experiment: generates a
//! synthetic population, featurizes it, and cross-validates every
//! architecture, printing mean AUCs. Used to tune training knobs offline.

use std::time::Instant;

use churnkit::architectures::{ArchitectureId, Dims};
use churnkit::config::ExperimentConfig;
use churnkit::dataset::assemble_samples;
use churnkit::eval::{run_cv, Cohort, SigmaMode};
use churnkit::labeling::{build_samples, sampling_dates};
use churnkit::synth::{generate, SynthConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let players: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let folds: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);

    let exp = ExperimentConfig::default().with_master_seed(seed);
    let synth_cfg = SynthConfig {
        player_count: players,
        ..exp.synth.clone()
    };
    let t0 = Instant::now();
    let (log, profiles) = generate(&synth_cfg).unwrap();
    let churn_cfg = exp.churn.clone();
    let last = churn_cfg.sampling_spacing_days * (churn_cfg.sampling_count as i64 - 1);
    let first_date = synth_cfg.day_span - churn_cfg.label_horizon_days() - last;
    let dates = sampling_dates(first_date, &churn_cfg);
    let records = build_samples(&log, &dates, &churn_cfg, synth_cfg.day_span).unwrap();
    let samples =
        assemble_samples(&log, &profiles, &records, &churn_cfg, exp.lookback_days).unwrap();
    let churn = samples.iter().filter(|s| s.label == 1).count();
    println!(
        "data: {} samples, {:.1}% churn, {:.1}s",
        samples.len(),
        100.0 * churn as f64 / samples.len() as f64,
        t0.elapsed().as_secs_f64()
    );

    let mut train_cfg = exp.train.clone();
    train_cfg.max_epochs = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(30);
    train_cfg.patience = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(5);
    train_cfg.learning_rate = args
        .get(5)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3e-3);
    println!(
        "train: lr={} epochs<={} patience={}",
        train_cfg.learning_rate, train_cfg.max_epochs, train_cfg.patience
    );

    for id in ArchitectureId::ALL {
        let t = Instant::now();
        let result = run_cv(
            id,
            &samples,
            folds,
            &train_cfg,
            &exp.forest,
            &Dims::default(),
            Cohort::All,
            SigmaMode::StandardError,
        )
        .unwrap();
        println!(
            "{:22} auc={:.4} (±{:.4})  acc={:.4}  f1={:.4}  [{:.0}s]",
            id.display_name(),
            result.auc.mean,
            result.auc.two_sigma,
            result.accuracy.mean,
            result.f1.mean,
            t.elapsed().as_secs_f64()
        );
    }
}
