//! Acceptance suite: one test per acceptance criterion, each printing a
//! `criterion N (...): PASS`/`FAIL` line (visible with `--nocapture`, or on
//! failure). Criterion 4 is the full-scale ordering experiment and dominates
//! the runtime; everything else completes in a few minutes.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use churnkit::architectures::{ArchitectureId, Dims, NeuralNet};
use churnkit::config::ExperimentConfig;
use churnkit::dataset::assemble_samples;
use churnkit::eval::{confusion, roc_auc, roc_curve, run_cv, Cohort, SigmaMode};
use churnkit::features::{
    flatten, flattened_feature_names, AggregateVector, LabeledSample, TemporalMatrix,
};
use churnkit::forest::{fit_forest, ForestConfig};
use churnkit::labeling::{
    build_samples, label_player, sampling_dates, ChurnConfig, ChurnLabel,
};
use churnkit::nn::{bce_single, train, GradientModel, TrainConfig};
use churnkit::synth::{generate, SynthConfig};

fn report(n: usize, name: &str, ok: bool, detail: &str) {
    println!(
        "criterion {n} ({name}): {}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

// ---------------------------------------------------------------------------
// shared helpers
// ---------------------------------------------------------------------------

fn random_sample(rng: &mut ChaCha8Rng, dims: &Dims) -> LabeledSample {
    LabeledSample {
        player_id: "t".into(),
        prediction_date: 0,
        temporal: TemporalMatrix {
            n_t: dims.n_t,
            values: (0..dims.n_t * dims.n_f).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        },
        aggregate: AggregateVector {
            values: (0..dims.n_agg).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        },
        label: u8::from(rng.gen_bool(0.5)),
    }
}

/// Generates, labels, and featurizes a population with `players` players
/// under otherwise-default config for the given master seed.
fn default_dataset(players: usize, master_seed: u64) -> Vec<LabeledSample> {
    let exp = ExperimentConfig::default().with_master_seed(master_seed);
    let synth_cfg = SynthConfig {
        player_count: players,
        ..exp.synth
    };
    let (log, profiles) = generate(&synth_cfg).unwrap();
    let last = exp.churn.sampling_spacing_days * (exp.churn.sampling_count as i64 - 1);
    let first_date = synth_cfg.day_span - exp.churn.label_horizon_days() - last;
    let dates = sampling_dates(first_date, &exp.churn);
    let records = build_samples(&log, &dates, &exp.churn, synth_cfg.day_span).unwrap();
    assemble_samples(&log, &profiles, &records, &exp.churn, exp.lookback_days).unwrap()
}

// ---------------------------------------------------------------------------
// 1. gradient fidelity
// ---------------------------------------------------------------------------

#[test]
fn a1_gradient_fidelity() {
    let start = Instant::now();
    let neural: Vec<ArchitectureId> = ArchitectureId::ALL
        .into_iter()
        .filter(|a| a.is_neural())
        .collect();
    let mut worst = 0.0f64;
    for (ai, &arch) in neural.iter().enumerate() {
        for case in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * ai as u64 + case);
            let dims = Dims {
                n_t: rng.gen_range(2..=4),
                n_f: rng.gen_range(1..=3),
                n_agg: rng.gen_range(2..=5),
                units: rng.gen_range(2..=4),
                ann_hidden: rng.gen_range(2..=4),
            };
            let net = NeuralNet::build(arch, &dims, case);
            let samples: Vec<LabeledSample> =
                (0..3).map(|_| random_sample(&mut rng, &dims)).collect();
            let batch: Vec<&LabeledSample> = samples.iter().collect();

            let (_, analytic) = net.batch_loss_grad(&batch);
            let params = net.trainable_params();
            assert_eq!(analytic.len(), params.len());
            let h = 1e-5;
            for i in 0..params.len() {
                let mut probe = net.clone();
                let mut p = params.clone();
                p[i] = params[i] + h;
                probe.set_trainable_params(&p);
                let up = probe.batch_loss(&batch);
                p[i] = params[i] - h;
                probe.set_trainable_params(&p);
                let down = probe.batch_loss(&batch);
                let fd = (up - down) / (2.0 * h);
                let err = (analytic[i] - fd).abs();
                let tol = 1e-6 + 1e-4 * analytic[i].abs().max(fd.abs());
                assert!(
                    err <= tol,
                    "{:?} case {case} param {i}: analytic {} vs fd {}",
                    arch,
                    analytic[i],
                    fd
                );
                worst = worst.max(err / tol.max(1e-300));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        1,
        "gradient fidelity",
        elapsed < 60.0,
        &format!("took {elapsed:.1}s (budget 60s); worst err/tol {worst:.3}"),
    );
}

// ---------------------------------------------------------------------------
// 2. AUC oracle equivalence
// ---------------------------------------------------------------------------

fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

#[test]
fn a2_auc_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(2..=300);
        // draw from a coarse grid so ties are common
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=20) as f64 / 20.0).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.4))).collect();
        labels[0] = 1;
        if n > 1 {
            labels[1] = 0;
        }
        let fast = roc_auc(&scores, &labels).unwrap();
        let oracle = pairwise_auc(&scores, &labels);
        worst = worst.max((fast - oracle).abs());

        // trapezoidal area under the ROC points must agree too
        let points = roc_curve(&scores, &labels);
        let mut area = 0.0;
        for w in points.windows(2) {
            area += (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0;
        }
        worst = worst.max((fast - area).abs());
    }
    report(
        2,
        "AUC oracle equivalence",
        worst <= 1e-12,
        &format!("worst deviation {worst:e}"),
    );
}

// ---------------------------------------------------------------------------
// 3. labeling oracle equivalence
// ---------------------------------------------------------------------------

fn oracle_label(
    activity: &[i64],
    pred: i64,
    cfg: &ChurnConfig,
    horizon: i64,
) -> ChurnLabel {
    let obs_start = pred - cfg.observation_days;
    if !activity.iter().any(|&d| d >= obs_start && d < pred) {
        return ChurnLabel::NotEligible;
    }
    let known: Vec<i64> = activity.iter().copied().filter(|&d| d < horizon).collect();
    for &d in known.iter().filter(|&&d| d >= obs_start) {
        let gap_observed = d + cfg.churn_span_days < horizon;
        let gap_clear = !known
            .iter()
            .any(|&a| a > d && a <= d + cfg.churn_span_days);
        if gap_observed && gap_clear {
            return if d < pred + cfg.prediction_offset_days {
                ChurnLabel::Churner
            } else {
                ChurnLabel::NonChurner
            };
        }
    }
    ChurnLabel::NonChurner
}

#[test]
fn a3_labeling_oracle_equivalence() {
    let cfg = ChurnConfig::default();
    let horizon = 200i64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let density = rng.gen_range(0.02..0.6);
        let activity: Vec<i64> = (0..horizon).filter(|_| rng.gen_bool(density)).collect();
        let pred = rng.gen_range(15..=horizon - cfg.label_horizon_days());
        let got = label_player(&activity, pred, &cfg, horizon).unwrap();
        let want = oracle_label(&activity, pred, &cfg, horizon);
        assert_eq!(got, want, "pred {pred} activity {activity:?}");
    }

    // Fig.-1 user-B shape: last activity just past the 7-day prediction
    // window, so the churn date (day 57 > 50 + 7 - 1) yields NonChurner.
    let user_b = label_player(&[45, 57], 50, &cfg, 120).unwrap();
    report(
        3,
        "labeling oracle equivalence",
        user_b == ChurnLabel::NonChurner,
        &format!("user-B case labeled {user_b:?}"),
    );
}

// ---------------------------------------------------------------------------
// 4. architecture-ordering reproduction (heavy)
// ---------------------------------------------------------------------------

#[test]
fn a4_architecture_ordering() {
    let exp = ExperimentConfig::default();
    let train_cfg = TrainConfig {
        learning_rate: 3e-3,
        max_epochs: 15,
        patience: 3,
        ..exp.train
    };
    let mut passes = 0usize;
    let mut detail = String::new();
    for master_seed in [0u64, 1, 2] {
        let samples = default_dataset(exp.synth.player_count, master_seed);
        let mut auc = std::collections::HashMap::new();
        for id in ArchitectureId::ALL {
            let result = run_cv(
                id,
                &samples,
                exp.folds,
                &TrainConfig {
                    seed: train_cfg.seed.wrapping_add(master_seed),
                    ..train_cfg.clone()
                },
                &ForestConfig {
                    seed: exp.forest.seed.wrapping_add(master_seed),
                    ..exp.forest
                },
                &exp.dims,
                Cohort::All,
                SigmaMode::StandardError,
            )
            .unwrap();
            assert!(result.is_complete(), "{id:?} had failed folds");
            println!(
                "  seed {master_seed} {:22} auc {:.4} (±{:.4})",
                id.display_name(),
                result.auc.mean,
                result.auc.two_sigma
            );
            auc.insert(id, result.auc.mean);
        }
        let lstm = auc[&ArchitectureId::BaselineLSTM];
        let hybrids_ok = [
            ArchitectureId::LstmPlusAggregated,
            ArchitectureId::LstmPredictPlusAggregated,
            ArchitectureId::LstmHiddenState,
            ArchitectureId::StaticInLstm,
        ]
        .iter()
        .all(|id| auc[id] >= lstm + 0.01);
        let baselines_ok = lstm > auc[&ArchitectureId::BaselineANN]
            && lstm > auc[&ArchitectureId::BaselineRF];
        let ok = hybrids_ok && baselines_ok;
        passes += usize::from(ok);
        detail.push_str(&format!(
            "seed {master_seed}: hybrids_ok={hybrids_ok} baselines_ok={baselines_ok}; "
        ));
        println!("  seed {master_seed}: ordering {}", if ok { "holds" } else { "VIOLATED" });
    }
    report(
        4,
        "architecture ordering",
        passes >= 2,
        &format!("held on {passes}/3 seeds ({detail})"),
    );
}

// ---------------------------------------------------------------------------
// 5. class-balance calibration
// ---------------------------------------------------------------------------

#[test]
fn a5_class_balance_calibration() {
    let exp = ExperimentConfig::default();
    let samples = default_dataset(exp.synth.player_count, exp.seed);
    let churners = samples.iter().filter(|s| s.label == 1).count();
    let rate = churners as f64 / samples.len() as f64;
    report(
        5,
        "class-balance calibration",
        (0.30..=0.40).contains(&rate),
        &format!("churn rate {rate:.3} over {} samples (target 0.35 ± 0.05)", samples.len()),
    );
}

// ---------------------------------------------------------------------------
// 6. feature-importance shape
// ---------------------------------------------------------------------------

#[test]
fn a6_feature_importance_shape() {
    let samples = default_dataset(10_000, 0);
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| flatten(s, false)).collect();
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let forest = fit_forest(&rows, &labels, &ForestConfig::default()).unwrap();
    let importance = forest.feature_importance();
    let names = flattened_feature_names(samples[0].temporal.n_t);

    let sum: f64 = importance.iter().sum();
    let sum_ok = (sum - 1.0).abs() <= 1e-9;

    // every constant column in the design matrix must score exactly zero
    let constants_ok = (0..names.len()).all(|j| {
        let constant = rows.iter().all(|r| r[j] == rows[0][j]);
        !constant || importance[j] == 0.0
    });
    // ...including a synthetic constant column appended explicitly
    let mut rows_c = rows.clone();
    for r in rows_c.iter_mut() {
        r.push(7.5);
    }
    let forest_c = fit_forest(&rows_c, &labels, &ForestConfig::default()).unwrap();
    let appended_ok = *forest_c.feature_importance().last().unwrap() == 0.0;

    let mut ranked: Vec<(usize, f64)> = importance.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let activity_family = [
        "activity",
        "gameStarted",
        "missionStarted",
        "missionMovesUsed",
        "pointsPerMission",
        "movesPerMission",
        "missionCompleted",
        "missionCompletedFraction",
        "missionFailed",
    ];
    let top3: Vec<&str> = ranked[..3].iter().map(|&(i, _)| names[i].as_str()).collect();
    let top3_ok = top3.iter().all(|name| {
        name.ends_with("_1")
            && activity_family
                .iter()
                .any(|fam| name.trim_end_matches("_1") == *fam)
    });
    report(
        6,
        "feature-importance shape",
        sum_ok && constants_ok && appended_ok && top3_ok,
        &format!(
            "sum {sum}, constants_ok {constants_ok}, appended_ok {appended_ok}, top3 {top3:?}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. early-stopping contract
// ---------------------------------------------------------------------------

#[test]
fn a7_early_stopping_contract() {
    // Unlearnable labels plus a large step size make the validation loss
    // noisy, forcing the run past its best epoch.
    let dims = Dims {
        n_t: 4,
        n_f: 3,
        n_agg: 4,
        units: 3,
        ann_hidden: 4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples: Vec<LabeledSample> = (0..64).map(|_| random_sample(&mut rng, &dims)).collect();
    let cfg = TrainConfig {
        learning_rate: 0.08,
        max_epochs: 60,
        patience: 3,
        batch_size: 16,
        validation_fraction: 0.25,
        seed: 7,
        ..TrainConfig::default()
    };
    let mut model = NeuralNet::build(ArchitectureId::BaselineLSTM, &dims, 7);
    let history = train(&mut model, &samples, &cfg).unwrap();
    let n = history.epochs.len();
    let min_val = history
        .epochs
        .iter()
        .map(|e| e.val_loss)
        .fold(f64::INFINITY, f64::min);
    let forced_past_best = n > history.best_epoch + 1;
    let best_is_min = history.best_val_loss == min_val;
    let halts_in_time = n <= history.best_epoch + cfg.patience + 1;

    // the returned parameters are those of the best epoch: a rerun truncated
    // at that epoch must yield bitwise-identical weights
    let mut truncated = NeuralNet::build(ArchitectureId::BaselineLSTM, &dims, 7);
    train(
        &mut truncated,
        &samples,
        &TrainConfig {
            max_epochs: history.best_epoch + 1,
            ..cfg.clone()
        },
    )
    .unwrap();
    let restored = model.trainable_params() == truncated.trainable_params();
    report(
        7,
        "early-stopping contract",
        forced_past_best && best_is_min && halts_in_time && restored,
        &format!(
            "epochs {n}, best {} (forced_past_best {forced_past_best}), best_is_min {best_is_min}, halts {halts_in_time}, restored {restored}",
            history.best_epoch
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. pipeline determinism
// ---------------------------------------------------------------------------

fn pipeline_metrics_json(master_seed: u64) -> Vec<u8> {
    let samples = default_dataset(300, master_seed);
    let exp = ExperimentConfig::default().with_master_seed(master_seed);
    let cfg = TrainConfig {
        max_epochs: 4,
        patience: 2,
        ..exp.train
    };
    let results: Vec<_> = [ArchitectureId::BaselineRF, ArchitectureId::BaselineLSTM]
        .into_iter()
        .map(|id| {
            run_cv(
                id,
                &samples,
                3,
                &cfg,
                &exp.forest,
                &exp.dims,
                Cohort::All,
                SigmaMode::StandardError,
            )
            .unwrap()
        })
        .collect();
    serde_json::to_vec(&results).unwrap()
}

#[test]
fn a8_pipeline_determinism() {
    let a = pipeline_metrics_json(42);
    let b = pipeline_metrics_json(42);
    report(
        8,
        "pipeline determinism",
        a == b,
        "reruns with the same master seed produced different metrics JSON",
    );
}

// ---------------------------------------------------------------------------
// 9. metric formulas
// ---------------------------------------------------------------------------

#[test]
fn a9_metric_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ok = true;
    for _ in 0..100 {
        let n = rng.gen_range(1..=200);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.35))).collect();
        let c = confusion(&scores, &labels, 0.5);

        // per-sample recomputation
        let preds: Vec<u8> = scores.iter().map(|&s| u8::from(s > 0.5)).collect();
        let correct = preds.iter().zip(&labels).filter(|(p, y)| p == y).count();
        let tp = preds.iter().zip(&labels).filter(|(p, y)| **p == 1 && **y == 1).count();
        let pred_pos = preds.iter().filter(|&&p| p == 1).count();
        let actual_pos = labels.iter().filter(|&&y| y == 1).count();

        ok &= c.accuracy() == correct as f64 / n as f64;
        let f1_direct = if 2 * tp + (pred_pos - tp) + (actual_pos - tp) == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + (pred_pos - tp) + (actual_pos - tp)) as f64
        };
        ok &= c.f1() == f1_direct;
    }
    let (bce0, _) = bce_single(0.5, 0.0);
    let (bce1, _) = bce_single(0.5, 1.0);
    let ln2 = std::f64::consts::LN_2;
    ok &= (bce0 - ln2).abs() <= 1e-12 && (bce1 - ln2).abs() <= 1e-12;
    report(9, "metric formulas", ok, "see assertions above");
}
