//! Prints the top-ranked RF feature importances for the synthetic dataset,
//! used to tune the generator's recency signal offline.

use churnkit::config::ExperimentConfig;
use churnkit::dataset::assemble_samples;
use churnkit::features::{flatten, flattened_feature_names};
use churnkit::forest::{fit_forest, ForestConfig};
use churnkit::labeling::{build_samples, sampling_dates};
use churnkit::synth::{generate, SynthConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let players: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);

    let exp = ExperimentConfig::default();
    let synth_cfg = SynthConfig {
        player_count: players,
        seed,
        ..exp.synth
    };
    let (log, profiles) = generate(&synth_cfg).unwrap();
    let last = exp.churn.sampling_spacing_days * (exp.churn.sampling_count as i64 - 1);
    let first_date = synth_cfg.day_span - exp.churn.label_horizon_days() - last;
    let dates = sampling_dates(first_date, &exp.churn);
    let records = build_samples(&log, &dates, &exp.churn, synth_cfg.day_span).unwrap();
    let samples =
        assemble_samples(&log, &profiles, &records, &exp.churn, exp.lookback_days).unwrap();
    let churn = samples.iter().filter(|s| s.label == 1).count();
    println!(
        "{} samples, churn rate {:.3}",
        samples.len(),
        churn as f64 / samples.len() as f64
    );

    let rows: Vec<Vec<f64>> = samples.iter().map(|s| flatten(s, false)).collect();
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let forest = fit_forest(&rows, &labels, &ForestConfig::default()).unwrap();
    let importance = forest.feature_importance();
    let names = flattened_feature_names(samples[0].temporal.n_t);
    let mut ranked: Vec<(usize, f64)> = importance.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (rank, (idx, value)) in ranked.iter().take(10).enumerate() {
        println!("{:2}. {:28} {:.4}", rank + 1, names[*idx], value);
    }
}
