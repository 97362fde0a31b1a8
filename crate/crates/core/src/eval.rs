//! Evaluation harness: rank-based AUC, threshold metrics, stratified k-fold
//! cross-validation, and the mean ± two-sigma summaries used in reports.

use serde::{Deserialize, Serialize};

use crate::architectures::{train_architecture, ArchitectureId, Dims};
use crate::error::{Error, Result};
use crate::features::{apply_scaler, fit_scaler, LabeledSample};
use crate::forest::ForestConfig;
use crate::nn::TrainConfig;

/// Decision threshold for accuracy/F1: predicted churner iff p > 0.5.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// AUC via the rank-sum (Mann-Whitney) formulation with midranks for ties:
/// AUC = (R_pos - n_pos(n_pos+1)/2) / (n_pos · n_neg).
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape("scores/labels length mismatch".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data(
            "AUC requires at least one positive and one negative".into(),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score in AUC input".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; tied group shares the midrank
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let auc = (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64;
    Ok(auc)
}

/// One point of the ROC sweep: the rates achieved by predicting positive for
/// every score >= `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// Points sweeping the threshold across distinct scores, from (0,0)
/// (threshold +inf) to (1,1), for ROC plotting.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Vec<RocPoint> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_neg.max(1) as f64,
            tpr: tp as f64 / n_pos.max(1) as f64,
            threshold: s,
        });
    }
    points
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> Confusion {
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&s, &y) in scores.iter().zip(labels) {
        match (s > threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

impl Confusion {
    pub fn accuracy(&self) -> f64 {
        let total = self.tp + self.fp + self.tn + self.fn_;
        (self.tp + self.tn) as f64 / total.max(1) as f64
    }

    /// F1 of the churner class; 0 when precision + recall is 0.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

/// Deterministic stratified k-fold: shuffles each class with the seed and
/// deals members round-robin so fold class ratios match the population.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    if k < 2 {
        return Err(Error::Config("k-fold requires k >= 2".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos < k || n_neg < k {
        return Err(Error::Data(format!(
            "stratified {k}-fold needs >= {k} samples per class, got {n_pos} positive / {n_neg} negative"
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xf01d);
    let mut folds = vec![Vec::new(); k];
    for class in [1u8, 0] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            folds[j % k].push(i);
        }
    }
    for fold in folds.iter_mut() {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Mean and the reported uncertainty band. The default band is two standard
/// errors (2·sd/√k over fold means); `population` switches to 2·sd.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub two_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// 2 · stddev / sqrt(k): uncertainty of the mean across folds.
    #[default]
    StandardError,
    /// 2 · stddev: spread of individual fold scores.
    Population,
}

pub fn summarize(values: &[f64], mode: SigmaMode) -> MetricSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let two_sigma = match mode {
        SigmaMode::StandardError => 2.0 * sd / n.sqrt(),
        SigmaMode::Population => 2.0 * sd,
    };
    MetricSummary { mean, two_sigma }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub auc: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub architecture: ArchitectureId,
    pub folds: Vec<FoldResult>,
    /// (fold index, error message) for folds whose training failed; the
    /// summaries then cover completed folds only.
    pub failed_folds: Vec<(usize, String)>,
    pub auc: MetricSummary,
    pub accuracy: MetricSummary,
    pub f1: MetricSummary,
}

impl CvResult {
    pub fn is_complete(&self) -> bool {
        self.failed_folds.is_empty()
    }
}

/// Optional restriction of the *test* sets to a cohort; training always uses
/// every sample so models see the full population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    #[default]
    All,
    /// Only samples from players with at least one purchase event
    /// (the `converted` temporal feature is 1 somewhere).
    Converted,
}

impl Cohort {
    pub fn contains(&self, sample: &LabeledSample) -> bool {
        match self {
            Cohort::All => true,
            Cohort::Converted => {
                let conv_col = crate::features::TEMPORAL_FEATURES - 1;
                (0..sample.temporal.n_t).any(|t| sample.temporal.get(t, conv_col) > 0.0)
            }
        }
    }
}

/// Runs stratified k-fold cross-validation for one architecture.
///
/// Per fold, a scaler is fit on the training split only and applied to both
/// splits for neural models; the forest consumes unscaled features. Fold
/// seeds derive from `cfg.seed` plus the fold index so folds are independent
/// but reproducible.
#[allow(clippy::too_many_arguments)]
pub fn run_cv(
    id: ArchitectureId,
    samples: &[LabeledSample],
    k: usize,
    cfg: &TrainConfig,
    forest_cfg: &ForestConfig,
    dims: &Dims,
    cohort: Cohort,
    sigma_mode: SigmaMode,
) -> Result<CvResult> {
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let folds = stratified_kfold(&labels, k, cfg.seed)?;

    let mut fold_results = Vec::with_capacity(k);
    let mut failed_folds = Vec::new();
    for (fold_i, test_idx) in folds.iter().enumerate() {
        match run_fold(id, samples, test_idx, fold_i, cfg, forest_cfg, dims, cohort) {
            Ok(result) => fold_results.push(result),
            Err(e) => failed_folds.push((fold_i, e.to_string())),
        }
    }
    if fold_results.is_empty() {
        return Err(Error::Data(format!(
            "all {k} folds failed; first error: {}",
            failed_folds[0].1
        )));
    }

    let collect = |f: fn(&FoldResult) -> f64| -> Vec<f64> { fold_results.iter().map(f).collect() };
    Ok(CvResult {
        architecture: id,
        auc: summarize(&collect(|r| r.auc), sigma_mode),
        accuracy: summarize(&collect(|r| r.accuracy), sigma_mode),
        f1: summarize(&collect(|r| r.f1), sigma_mode),
        folds: fold_results,
        failed_folds,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    id: ArchitectureId,
    samples: &[LabeledSample],
    test_idx: &[usize],
    fold_i: usize,
    cfg: &TrainConfig,
    forest_cfg: &ForestConfig,
    dims: &Dims,
    cohort: Cohort,
) -> Result<FoldResult> {
    {
        let in_test: Vec<bool> = {
            let mut mask = vec![false; samples.len()];
            for &i in test_idx {
                mask[i] = true;
            }
            mask
        };
        let train_samples: Vec<LabeledSample> = samples
            .iter()
            .enumerate()
            .filter(|(i, _)| !in_test[*i])
            .map(|(_, s)| s.clone())
            .collect();
        let test_samples: Vec<&LabeledSample> = test_idx
            .iter()
            .map(|&i| &samples[i])
            .filter(|s| cohort.contains(s))
            .collect();
        if test_samples.is_empty() {
            return Err(Error::Data(format!(
                "cohort filter left fold {fold_i} with no test samples"
            )));
        }

        let mut fold_cfg = cfg.clone();
        fold_cfg.seed = cfg.seed.wrapping_add(fold_i as u64).wrapping_mul(0x100_0193);
        let mut fold_forest_cfg = forest_cfg.clone();
        fold_forest_cfg.seed = fold_cfg.seed;

        let (model, scores) = if id.is_neural() {
            let train_refs: Vec<&LabeledSample> = train_samples.iter().collect();
            let scaler = fit_scaler(&train_refs)?;
            let scaled_train: Vec<LabeledSample> =
                train_samples.iter().map(|s| apply_scaler(&scaler, s)).collect();
            let (model, _) =
                train_architecture(id, &scaled_train, &fold_cfg, &fold_forest_cfg, dims)?;
            let scores: Vec<f64> = test_samples
                .iter()
                .map(|s| model.predict(&apply_scaler(&scaler, s)))
                .collect::<Result<_>>()?;
            (model, scores)
        } else {
            let (model, _) =
                train_architecture(id, &train_samples, &fold_cfg, &fold_forest_cfg, dims)?;
            let scores: Vec<f64> = test_samples
                .iter()
                .map(|s| model.predict(s))
                .collect::<Result<_>>()?;
            (model, scores)
        };
        drop(model);

        let test_labels: Vec<u8> = test_samples.iter().map(|s| s.label).collect();
        let auc = roc_auc(&scores, &test_labels)?;
        let c = confusion(&scores, &test_labels, DECISION_THRESHOLD);
        Ok(FoldResult {
            fold: fold_i,
            auc,
            accuracy: c.accuracy(),
            f1: c.f1(),
            test_size: test_samples.len(),
        })
    }
}
