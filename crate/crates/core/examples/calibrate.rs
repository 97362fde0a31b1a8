//! Offline calibration helper: reports the eligible-sample churn rate and
//! sample count of the default generator config under the default labeling
//! config, for several seeds and population sizes.

use churnkit::labeling::{build_samples, sampling_dates, ChurnConfig, ChurnLabel};
use churnkit::synth::{generate, SynthConfig};

fn rate(cfg: &SynthConfig) -> (f64, usize) {
    let (log, _) = generate(cfg).unwrap();
    let churn_cfg = ChurnConfig::default();
    let last = churn_cfg.sampling_spacing_days * (churn_cfg.sampling_count as i64 - 1);
    let first_date = cfg.day_span - churn_cfg.label_horizon_days() - last;
    let dates = sampling_dates(first_date, &churn_cfg);
    let samples = build_samples(&log, &dates, &churn_cfg, cfg.day_span).unwrap();
    let churners = samples.iter().filter(|s| s.label == ChurnLabel::Churner).count();
    (churners as f64 / samples.len() as f64, samples.len())
}

fn main() {
    for players in [2000usize, 10_000] {
        for seed in [0u64, 1, 2] {
            let cfg = SynthConfig {
                player_count: players,
                seed,
                ..Default::default()
            };
            let (r, n) = rate(&cfg);
            println!("players={players} seed={seed} -> churn_rate={r:.3} samples={n}");
        }
    }
}
