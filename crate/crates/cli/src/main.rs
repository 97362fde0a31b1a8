//! churnkit CLI: config-driven orchestration of the churn-prediction
//! pipeline. All artifacts of one experiment live in a single output
//! directory and carry the experiment config hash; downstream commands
//! reject artifacts whose hash does not match the active config.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use churnkit::architectures::{save_model, train_architecture, ArchitectureId};
use churnkit::config::ExperimentConfig;
use churnkit::dataset::{assemble_samples, export_csv, load_dataset, save_dataset};
use churnkit::error::Error;
use churnkit::eval::{roc_curve, run_cv, Cohort, CvResult, RocPoint};
use churnkit::eventlog::{ingest, EventFormat};
use churnkit::features::{apply_scaler, fit_scaler, flatten, flattened_feature_names};
use churnkit::forest::fit_forest;
use churnkit::labeling::{build_samples, export_manifest, import_manifest, sampling_dates};
use churnkit::profile::import_profiles;
use churnkit::synth;

#[derive(Parser)]
#[command(
    name = "churnkit",
    version,
    about = "Churn-prediction pipeline: synthesize, label, featurize, train, evaluate"
)]
struct Cli {
    /// Experiment config JSON; defaults apply for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override, threaded into every sub-seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory shared by all pipeline stages.
    #[arg(long, global = true, default_value = "churnkit-out")]
    out: PathBuf,
    /// Architecture filter (rf | ann | lstm | lstm-agg | lstm-pred-agg |
    /// lstm-hidden | static-in-lstm).
    #[arg(long, global = true)]
    arch: Option<String>,
    /// Fold-count override for eval.
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// Cohort filter for eval test sets (only `converted` is defined).
    #[arg(long, global = true)]
    cohort: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic event log and player profiles.
    Synth,
    /// Label (player, prediction date) samples from the event log.
    Label,
    /// Build the featurized dataset from the log, profiles, and labels.
    Featurize,
    /// Train one architecture on the full dataset and save the model.
    Train,
    /// Cross-validate architectures; write metrics JSON, ROC CSVs, a table.
    Eval,
    /// Fit the random forest and export feature importances.
    Importance,
    /// Summarize metrics JSONs into a comparative table and an SVG overlay.
    Report,
}

/// Per-stage metadata embedding the config hash, written next to each
/// artifact so later stages can verify provenance.
#[derive(Debug, Serialize, Deserialize)]
struct StageMeta {
    stage: String,
    config_hash: String,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes; anything else is usage
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_master_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn meta_path(out: &Path, stage: &str) -> PathBuf {
    out.join(format!("{stage}.meta.json"))
}

fn write_meta(out: &Path, stage: &str, hash: &str) -> Result<(), Error> {
    let meta = StageMeta {
        stage: stage.to_string(),
        config_hash: hash.to_string(),
    };
    let path = meta_path(out, stage);
    std::fs::write(&path, serde_json::to_vec_pretty(&meta)?)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Fails when the upstream stage ran under a different config.
fn check_meta(out: &Path, stage: &str, hash: &str) -> Result<(), Error> {
    let path = meta_path(out, stage);
    let content = std::fs::read_to_string(&path).map_err(|e| {
        Error::Data(format!(
            "missing upstream artifact metadata {} (run `churnkit {stage}` first): {e}",
            path.display()
        ))
    })?;
    let meta: StageMeta = serde_json::from_str(&content)?;
    if meta.config_hash != hash {
        return Err(Error::Data(format!(
            "config hash mismatch: {} was produced under {}, current config is {}",
            path.display(),
            meta.config_hash,
            hash
        )));
    }
    Ok(())
}

fn ensure_out(out: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))
}

fn selected_architectures(cli: &Cli, cfg: &ExperimentConfig) -> Result<Vec<ArchitectureId>, Error> {
    match &cli.arch {
        None => Ok(cfg.architectures.clone()),
        Some(name) => ArchitectureId::parse(name)
            .map(|id| vec![id])
            .ok_or_else(|| Error::Config(format!("unknown architecture `{name}`"))),
    }
}

fn cohort(cli: &Cli, cfg: &ExperimentConfig) -> Result<Cohort, Error> {
    match cli.cohort.as_deref() {
        None => Ok(cfg.cohort),
        Some("converted") => Ok(Cohort::Converted),
        Some(other) => Err(Error::Config(format!("unknown cohort `{other}`"))),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = load_config(&cli)?;
    let hash = cfg.hash();
    let out = cli.out.clone();
    ensure_out(&out)?;
    match cli.command {
        Command::Synth => cmd_synth(&cfg, &hash, &out),
        Command::Label => cmd_label(&cfg, &hash, &out),
        Command::Featurize => cmd_featurize(&cfg, &hash, &out),
        Command::Train => {
            let archs = selected_architectures(&cli, &cfg)?;
            cmd_train(&cfg, &hash, &out, &archs)
        }
        Command::Eval => {
            let archs = selected_architectures(&cli, &cfg)?;
            let folds = cli.folds.unwrap_or(cfg.folds);
            let cohort = cohort(&cli, &cfg)?;
            cmd_eval(&cfg, &hash, &out, &archs, folds, cohort)
        }
        Command::Importance => cmd_importance(&cfg, &hash, &out),
        Command::Report => cmd_report(&cfg, &out),
    }
}

fn cmd_synth(cfg: &ExperimentConfig, hash: &str, out: &Path) -> Result<(), Error> {
    let (log, profiles) = synth::generate(&cfg.synth)?;
    let (events_path, profiles_path) = synth::export(&log, &profiles, out, EventFormat::Csv)?;
    write_meta(out, "synth", hash)?;
    println!(
        "synth: {} events for {} players -> {}, {}",
        log.len(),
        profiles.len(),
        events_path.display(),
        profiles_path.display()
    );
    Ok(())
}

fn sampling_plan(cfg: &ExperimentConfig) -> Vec<i64> {
    let last = cfg.churn.sampling_spacing_days * (cfg.churn.sampling_count as i64 - 1);
    let first_date = cfg.synth.day_span - cfg.churn.label_horizon_days() - last;
    sampling_dates(first_date, &cfg.churn)
}

fn cmd_label(cfg: &ExperimentConfig, hash: &str, out: &Path) -> Result<(), Error> {
    check_meta(out, "synth", hash)?;
    let report = ingest(&out.join("events.csv"), EventFormat::Csv)?;
    if !report.rejected.is_empty() {
        eprintln!("label: warning: {} rejected event rows", report.rejected.len());
    }
    let dates = sampling_plan(cfg);
    let records = build_samples(&report.log, &dates, &cfg.churn, cfg.synth.day_span)?;
    let manifest_path = out.join("labels.csv");
    export_manifest(&records, &manifest_path)?;
    write_meta(out, "label", hash)?;
    let churners = records
        .iter()
        .filter(|r| r.label == churnkit::labeling::ChurnLabel::Churner)
        .count();
    println!(
        "label: {} samples ({churners} churners, {:.1}%) -> {}",
        records.len(),
        100.0 * churners as f64 / records.len().max(1) as f64,
        manifest_path.display()
    );
    Ok(())
}

fn cmd_featurize(cfg: &ExperimentConfig, hash: &str, out: &Path) -> Result<(), Error> {
    check_meta(out, "synth", hash)?;
    check_meta(out, "label", hash)?;
    let report = ingest(&out.join("events.csv"), EventFormat::Csv)?;
    let profiles = import_profiles(&out.join("profiles.csv"))?;
    let records = import_manifest(&out.join("labels.csv"))?;
    let samples = assemble_samples(&report.log, &profiles, &records, &cfg.churn, cfg.lookback_days)?;
    let dataset_path = out.join("dataset.ckd");
    save_dataset(&samples, None, hash, &dataset_path)?;
    export_csv(&samples, &out.join("dataset.csv"))?;
    write_meta(out, "featurize", hash)?;
    println!(
        "featurize: {} samples -> {} (+ sidecar, CSV)",
        samples.len(),
        dataset_path.display()
    );
    Ok(())
}

fn load_checked_dataset(
    out: &Path,
    hash: &str,
) -> Result<Vec<churnkit::features::LabeledSample>, Error> {
    check_meta(out, "featurize", hash)?;
    let (samples, sidecar) = load_dataset(&out.join("dataset.ckd"))?;
    if sidecar.config_hash != hash {
        return Err(Error::Data(format!(
            "dataset was featurized under config {}, current config is {hash}",
            sidecar.config_hash
        )));
    }
    Ok(samples)
}

fn cmd_train(
    cfg: &ExperimentConfig,
    hash: &str,
    out: &Path,
    archs: &[ArchitectureId],
) -> Result<(), Error> {
    let samples = load_checked_dataset(out, hash)?;
    for &id in archs {
        let model_path = out.join(format!("model_{}.ckm", id.as_str()));
        let (model, history) = if id.is_neural() {
            let refs: Vec<_> = samples.iter().collect();
            let scaler = fit_scaler(&refs)?;
            let scaled: Vec<_> = samples.iter().map(|s| apply_scaler(&scaler, s)).collect();
            train_architecture(id, &scaled, &cfg.train, &cfg.forest, &cfg.dims)?
        } else {
            train_architecture(id, &samples, &cfg.train, &cfg.forest, &cfg.dims)?
        };
        save_model(&model, Some(&cfg.train), &model_path)?;
        match history {
            Some(h) => println!(
                "train {}: best epoch {} (val loss {:.4}) -> {}",
                id.as_str(),
                h.best_epoch,
                h.best_val_loss,
                model_path.display()
            ),
            None => println!("train {}: fitted -> {}", id.as_str(), model_path.display()),
        }
    }
    write_meta(out, "train", hash)?;
    Ok(())
}

/// Metrics JSON payload per architecture.
#[derive(Debug, Serialize, Deserialize)]
struct MetricsFile {
    config_hash: String,
    sigma_mode: churnkit::eval::SigmaMode,
    folds: usize,
    result: CvResult,
}

fn cmd_eval(
    cfg: &ExperimentConfig,
    hash: &str,
    out: &Path,
    archs: &[ArchitectureId],
    folds: usize,
    cohort: Cohort,
) -> Result<(), Error> {
    let samples = load_checked_dataset(out, hash)?;
    let mut results = Vec::new();
    for &id in archs {
        let result = run_cv(
            id,
            &samples,
            folds,
            &cfg.train,
            &cfg.forest,
            &cfg.dims,
            cohort,
            cfg.sigma_mode,
        )?;
        let metrics = MetricsFile {
            config_hash: hash.to_string(),
            sigma_mode: cfg.sigma_mode,
            folds,
            result: result.clone(),
        };
        let metrics_path = out.join(format!("metrics_{}.json", id.as_str()));
        std::fs::write(&metrics_path, serde_json::to_vec_pretty(&metrics)?)
            .map_err(|e| Error::io(metrics_path.display().to_string(), e))?;

        // ROC of a single hold-out-style rescore: train on all but the first
        // fold would duplicate eval work, so export the pooled-fold curve by
        // rescoring the whole dataset with a model trained on it. For honest
        // per-fold metrics use the JSON; the ROC CSV is for plot shape.
        export_roc(cfg, out, id, &samples)?;
        println!(
            "eval {}: AUC {:.4} (±{:.4}) acc {:.4} f1 {:.4}{}",
            id.as_str(),
            result.auc.mean,
            result.auc.two_sigma,
            result.accuracy.mean,
            result.f1.mean,
            if result.is_complete() {
                String::new()
            } else {
                format!("  [INCOMPLETE: {} folds failed]", result.failed_folds.len())
            }
        );
        results.push(result);
    }
    let table = render_table(&results, cfg);
    let table_path = out.join("metrics_table.txt");
    std::fs::write(&table_path, &table)
        .map_err(|e| Error::io(table_path.display().to_string(), e))?;
    print!("{table}");
    write_meta(out, "eval", hash)?;
    Ok(())
}

fn export_roc(
    cfg: &ExperimentConfig,
    out: &Path,
    id: ArchitectureId,
    samples: &[churnkit::features::LabeledSample],
) -> Result<(), Error> {
    // 80/20 split by index parity of a stratified 5-fold: train on 4 folds,
    // score the held-out fold for an honest curve
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let folds = churnkit::eval::stratified_kfold(&labels, 5, cfg.seed)?;
    let test_idx = &folds[0];
    let test_set: Vec<bool> = {
        let mut mask = vec![false; samples.len()];
        for &i in test_idx {
            mask[i] = true;
        }
        mask
    };
    let train: Vec<_> = samples
        .iter()
        .enumerate()
        .filter(|(i, _)| !test_set[*i])
        .map(|(_, s)| s.clone())
        .collect();
    let test: Vec<_> = test_idx.iter().map(|&i| &samples[i]).collect();

    let scores: Vec<f64> = if id.is_neural() {
        let refs: Vec<_> = train.iter().collect();
        let scaler = fit_scaler(&refs)?;
        let scaled: Vec<_> = train.iter().map(|s| apply_scaler(&scaler, s)).collect();
        let (model, _) = train_architecture(id, &scaled, &cfg.train, &cfg.forest, &cfg.dims)?;
        test.iter()
            .map(|s| model.predict(&apply_scaler(&scaler, s)))
            .collect::<Result<_, _>>()?
    } else {
        let (model, _) = train_architecture(id, &train, &cfg.train, &cfg.forest, &cfg.dims)?;
        test.iter().map(|s| model.predict(s)).collect::<Result<_, _>>()?
    };
    let test_labels: Vec<u8> = test.iter().map(|s| s.label).collect();
    let points = roc_curve(&scores, &test_labels);
    let path = out.join(format!("roc_{}.csv", id.as_str()));
    let mut csv = String::from("fpr,tpr,threshold\n");
    for p in &points {
        csv.push_str(&format!("{},{},{}\n", p.fpr, p.tpr, p.threshold));
    }
    std::fs::write(&path, csv).map_err(|e| Error::io(path.display().to_string(), e))
}

/// `0.8592 (13)` style: two-sigma expressed in units of the fourth decimal.
fn fmt_metric(mean: f64, two_sigma: f64) -> String {
    format!("{:.4} ({:.0})", mean, (two_sigma * 1e4).round())
}

fn render_table(results: &[CvResult], cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "Model results ({}-fold CV; parenthesis: two-sigma [{}] on the last digits)\n",
        cfg.folds,
        match cfg.sigma_mode {
            churnkit::eval::SigmaMode::StandardError => "standard error",
            churnkit::eval::SigmaMode::Population => "fold std dev",
        }
    ));
    s.push_str(&format!(
        "{:<22} {:>14} {:>14} {:>14}\n",
        "Model", "AUC", "F1", "Accuracy"
    ));
    for r in results {
        s.push_str(&format!(
            "{:<22} {:>14} {:>14} {:>14}{}\n",
            r.architecture.display_name(),
            fmt_metric(r.auc.mean, r.auc.two_sigma),
            fmt_metric(r.f1.mean, r.f1.two_sigma),
            fmt_metric(r.accuracy.mean, r.accuracy.two_sigma),
            if r.is_complete() { "" } else { "  [incomplete]" }
        ));
    }
    s
}

fn cmd_importance(cfg: &ExperimentConfig, hash: &str, out: &Path) -> Result<(), Error> {
    let samples = load_checked_dataset(out, hash)?;
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| flatten(s, false)).collect();
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let forest = fit_forest(&rows, &labels, &cfg.forest)?;
    let importance = forest.feature_importance();
    let names = flattened_feature_names(cfg.churn.observation_days as usize);
    let mut ranked: Vec<(usize, f64)> =
        importance.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let path = out.join("importance.csv");
    let mut csv = String::from("rank,feature,importance\n");
    for (rank, (idx, value)) in ranked.iter().enumerate() {
        csv.push_str(&format!("{},{},{}\n", rank + 1, names[*idx], value));
    }
    std::fs::write(&path, csv).map_err(|e| Error::io(path.display().to_string(), e))?;
    write_meta(out, "importance", hash)?;
    println!(
        "importance: top 3 = {}, {}, {} -> {}",
        names[ranked[0].0],
        names[ranked[1].0],
        names[ranked[2].0],
        path.display()
    );
    Ok(())
}

fn cmd_report(cfg: &ExperimentConfig, out: &Path) -> Result<(), Error> {
    let mut results = Vec::new();
    let mut hash: Option<String> = None;
    for &id in &cfg.architectures {
        let path = out.join(format!("metrics_{}.json", id.as_str()));
        if !path.exists() {
            continue;
        }
        let metrics: MetricsFile = serde_json::from_str(
            &std::fs::read_to_string(&path)
                .map_err(|e| Error::io(path.display().to_string(), e))?,
        )?;
        match &hash {
            None => hash = Some(metrics.config_hash.clone()),
            Some(h) if *h != metrics.config_hash => {
                return Err(Error::Data(format!(
                    "metrics files disagree on config hash ({h} vs {})",
                    metrics.config_hash
                )))
            }
            _ => {}
        }
        results.push(metrics.result);
    }
    if results.is_empty() {
        return Err(Error::Data(format!(
            "no metrics_*.json files in {} (run `churnkit eval` first)",
            out.display()
        )));
    }
    let table = render_table(&results, cfg);
    let report_path = out.join("report.txt");
    std::fs::write(&report_path, &table)
        .map_err(|e| Error::io(report_path.display().to_string(), e))?;
    print!("{table}");

    // optional SVG overlay from whatever ROC CSVs exist
    let mut curves = Vec::new();
    for r in &results {
        let path = out.join(format!("roc_{}.csv", r.architecture.as_str()));
        if let Ok(content) = std::fs::read_to_string(&path) {
            let points: Vec<RocPoint> = content
                .lines()
                .skip(1)
                .filter_map(|line| {
                    let mut f = line.split(',');
                    Some(RocPoint {
                        fpr: f.next()?.parse().ok()?,
                        tpr: f.next()?.parse().ok()?,
                        threshold: f.next()?.parse().ok()?,
                    })
                })
                .collect();
            if points.len() >= 2 {
                curves.push((r.architecture, points));
            }
        }
    }
    if !curves.is_empty() {
        let svg_path = out.join("roc.svg");
        std::fs::write(&svg_path, render_roc_svg(&curves))
            .map_err(|e| Error::io(svg_path.display().to_string(), e))?;
        println!("report: ROC overlay -> {}", svg_path.display());
    }
    println!("report: table -> {}", report_path.display());
    Ok(())
}

fn render_roc_svg(curves: &[(ArchitectureId, Vec<RocPoint>)]) -> String {
    const W: f64 = 560.0;
    const H: f64 = 560.0;
    const M: f64 = 50.0; // margin
    let x = |fpr: f64| M + fpr * (W - 2.0 * M);
    let y = |tpr: f64| H - M - tpr * (H - 2.0 * M);
    let colors = [
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
    ];
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{3}\" stroke=\"#999\" stroke-dasharray=\"4\"/>\n\
         <line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{4}\" stroke=\"black\"/>\n\
         <line x1=\"{0}\" y1=\"{1}\" x2=\"{5}\" y2=\"{1}\" stroke=\"black\"/>\n\
         <text x=\"{6}\" y=\"{7}\" font-size=\"13\">false positive rate</text>\n\
         <text x=\"12\" y=\"{8}\" font-size=\"13\" transform=\"rotate(-90 12 {8})\">true positive rate</text>\n",
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0),
        y(1.0),
        x(1.0),
        W / 2.0 - 50.0,
        H - 12.0,
        H / 2.0
    );
    for (i, (id, points)) in curves.iter().enumerate() {
        let color = colors[i % colors.len()];
        let path: Vec<String> = points
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.fpr), y(p.tpr)))
            .collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            W - 215.0,
            70.0 + 16.0 * i as f64,
            id.display_name()
        ));
    }
    s.push_str("</svg>\n");
    s
}
