//! Model inputs: the per-day temporal matrix, the 36-entry aggregate vector,
//! flattening, and train-fold normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{DailyRecord, EventKind, EventLog};
use crate::profile::{Acquisition, Platform, PlayerProfile};

/// Number of per-day temporal features.
pub const TEMPORAL_FEATURES: usize = 10;
/// Length of the aggregate vector.
pub const AGGREGATE_FEATURES: usize = 36;
/// Default aggregate lookback (roughly six months).
pub const DEFAULT_LOOKBACK_DAYS: i64 = 183;
/// Days per month used for `monthssinceinstall`.
pub const DAYS_PER_MONTH: f64 = 30.44;
/// Unit price applied to every purchase event.
pub const PURCHASE_PRICE: f64 = 4.99;

/// Frozen temporal column ordering. Reports and flattened feature names key
/// off these positions.
pub const TEMPORAL_COLUMNS: [&str; TEMPORAL_FEATURES] = [
    "activity",
    "gameStarted",
    "missionStarted",
    "missionMovesUsed",
    "pointsPerMission",
    "movesPerMission",
    "missionCompleted",
    "missionCompletedFraction",
    "missionFailed",
    "converted",
];

/// Frozen aggregate ordering: player description (4), player behaviour (15),
/// progression (10), platform one-hot (4), acquisition one-hot (3).
pub const AGGREGATE_COLUMNS: [&str; AGGREGATE_FEATURES] = [
    "fb-connected",
    "monthssinceinstall",
    "num-activedays",
    "maxlvl",
    "minutesplayed-sum",
    "minutes-perday-avg",
    "gamestarted-sum",
    "levelstarted-sum",
    "completionrate",
    "abandonedrate",
    "coinsused",
    "coinused-perlevel",
    "coinsreceived",
    "continuesused-perlevel",
    "boostersused-perlevel",
    "transaction-sum",
    "sum-spend",
    "total-spend",
    "progressionrate",
    "daily",
    "main",
    "onelife-challenge",
    "social-challenge",
    "tournament",
    "treasurehunt",
    "hot-streak",
    "level-dash",
    "levelrush",
    "startournament",
    "android",
    "fireos",
    "ios",
    "kindle",
    "acquired",
    "crosspromoted",
    "organic",
];

const PLATFORM_OFFSET: usize = 29;
const ACQUISITION_OFFSET: usize = 33;

/// Row-major matrix of `n_t` days by [`TEMPORAL_FEATURES`] columns.
/// Row `n_t - 1` is the most recent day before the prediction date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalMatrix {
    pub n_t: usize,
    pub values: Vec<f64>,
}

impl TemporalMatrix {
    pub fn zeros(n_t: usize) -> Self {
        TemporalMatrix {
            n_t,
            values: vec![0.0; n_t * TEMPORAL_FEATURES],
        }
    }

    /// Number of feature columns; [`TEMPORAL_FEATURES`] for pipeline data,
    /// but derived from the stored shape so reduced test fixtures work too.
    pub fn n_features(&self) -> usize {
        self.values.len() / self.n_t
    }

    pub fn get(&self, day_row: usize, feature: usize) -> f64 {
        self.values[day_row * self.n_features() + feature]
    }

    pub fn set(&mut self, day_row: usize, feature: usize, v: f64) {
        let w = self.n_features();
        self.values[day_row * w + feature] = v;
    }

    pub fn row(&self, day_row: usize) -> &[f64] {
        let w = self.n_features();
        &self.values[day_row * w..(day_row + 1) * w]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateVector {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub player_id: String,
    pub prediction_date: i64,
    pub temporal: TemporalMatrix,
    pub aggregate: AggregateVector,
    /// 1 for churner, 0 for non-churner.
    pub label: u8,
}

/// Builds the temporal matrix from exactly `n_t` consecutive daily records
/// (oldest first).
pub fn temporal_features(bins: &[DailyRecord]) -> TemporalMatrix {
    for pair in bins.windows(2) {
        assert_eq!(pair[1].day, pair[0].day + 1, "daily records must be consecutive");
    }
    let n_t = bins.len();
    let mut m = TemporalMatrix::zeros(n_t);
    for (t, rec) in bins.iter().enumerate() {
        let started = rec.missions_started as f64;
        let ratio = |num: f64| if rec.missions_started > 0 { num / started } else { 0.0 };
        m.set(t, 0, if rec.is_empty() { 0.0 } else { 1.0 });
        m.set(t, 1, rec.sessions as f64);
        m.set(t, 2, started);
        m.set(t, 3, rec.total_moves as f64);
        m.set(t, 4, ratio(rec.total_points as f64));
        m.set(t, 5, ratio(rec.total_moves as f64));
        m.set(t, 6, rec.missions_completed as f64);
        m.set(t, 7, ratio(rec.missions_completed as f64).min(1.0));
        m.set(t, 8, rec.missions_failed as f64);
        m.set(t, 9, if rec.purchased { 1.0 } else { 0.0 });
    }
    m
}

/// Builds the 36-entry aggregate vector. Behaviour entries aggregate the
/// window `[prediction_date - lookback_days, prediction_date)`; lifetime
/// entries (`maxlvl`, `total-spend`) scan every day before the prediction
/// date; the progression, platform, and acquisition blocks come from the
/// profile.
pub fn aggregate_features(
    log: &EventLog,
    profile: &PlayerProfile,
    prediction_date: i64,
    lookback_days: i64,
) -> AggregateVector {
    let window_start = prediction_date - lookback_days;
    let events = log.events_for(&profile.player_id);

    let mut sessions = 0u64;
    let mut started = 0u64;
    let mut completed = 0u64;
    let mut failed = 0u64;
    let mut moves = 0u64;
    let mut points = 0u64;
    let mut transactions = 0u64;
    let mut lifetime_completed = 0u64;
    let mut lifetime_transactions = 0u64;
    let mut active_days = 0u64;
    let mut last_active_day = i64::MIN;

    for ev in events {
        if ev.day >= prediction_date {
            break;
        }
        match ev.kind {
            EventKind::MissionComplete => lifetime_completed += 1,
            EventKind::Purchase => lifetime_transactions += 1,
            _ => {}
        }
        if ev.day < window_start {
            continue;
        }
        if ev.day != last_active_day {
            active_days += 1;
            last_active_day = ev.day;
        }
        match ev.kind {
            EventKind::SessionStart => sessions += 1,
            EventKind::MissionStart => started += 1,
            EventKind::MissionComplete => completed += 1,
            EventKind::MissionFail => failed += 1,
            EventKind::Purchase => transactions += 1,
        }
        moves += ev.moves_used as u64;
        points += ev.points as u64;
    }

    let per_level = |num: f64| if started > 0 { num / started as f64 } else { 0.0 };
    let per_active_day = |num: f64| if active_days > 0 { num / active_days as f64 } else { 0.0 };
    // Minutes are not logged directly; a fixed per-session / per-move cost
    // stands in for them.
    let minutes_sum = 3.0 * sessions as f64 + 0.2 * moves as f64;
    let coins_used = 5.0 * failed as f64 + 120.0 * transactions as f64;

    let mut v = vec![0.0; AGGREGATE_FEATURES];
    v[0] = profile.fb_connected as u8 as f64;
    v[1] = ((prediction_date - profile.install_day).max(0)) as f64 / DAYS_PER_MONTH;
    v[2] = active_days as f64;
    v[3] = lifetime_completed as f64;
    v[4] = minutes_sum;
    v[5] = per_active_day(minutes_sum);
    v[6] = sessions as f64;
    v[7] = started as f64;
    v[8] = per_level(completed as f64).min(1.0);
    v[9] = per_level(failed as f64).min(1.0);
    v[10] = coins_used;
    v[11] = per_level(coins_used);
    v[12] = points as f64 / 50.0;
    v[13] = per_level(0.5 * failed as f64);
    v[14] = per_level(0.02 * moves as f64);
    v[15] = transactions as f64;
    v[16] = PURCHASE_PRICE * transactions as f64;
    v[17] = PURCHASE_PRICE * lifetime_transactions as f64;
    v[18] = per_active_day(completed as f64);
    for (i, &p) in profile.progression.iter().enumerate() {
        v[19 + i] = p as f64;
    }
    v[PLATFORM_OFFSET
        + Platform::ALL.iter().position(|&p| p == profile.platform).unwrap()] = 1.0;
    v[ACQUISITION_OFFSET
        + Acquisition::ALL.iter().position(|&a| a == profile.acquisition).unwrap()] = 1.0;
    AggregateVector { values: v }
}

/// Row-major (day-major, feature-minor) flattening; optionally appends the
/// aggregate block.
pub fn flatten(sample: &LabeledSample, include_aggregate: bool) -> Vec<f64> {
    let mut out = sample.temporal.values.clone();
    if include_aggregate {
        out.extend_from_slice(&sample.aggregate.values);
    }
    out
}

/// Names for the flattened temporal vector: column name suffixed with
/// days-ago, where `_1` is the most recent day.
pub fn flattened_feature_names(n_t: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(n_t * TEMPORAL_FEATURES);
    for t in 0..n_t {
        let days_ago = n_t - t;
        for col in TEMPORAL_COLUMNS {
            names.push(format!("{col}_{days_ago}"));
        }
    }
    names
}

/// Per-column z-score statistics, fitted on training data only. Temporal
/// statistics pool every day row of every training sample, so a feature is
/// scaled identically at every timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub temporal: Vec<ColumnStats>,
    pub aggregate: Vec<ColumnStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
    /// Constant columns are passed through unscaled.
    pub constant: bool,
}

impl ColumnStats {
    fn fit(values: impl Iterator<Item = f64> + Clone, n: usize) -> ColumnStats {
        let mean = values.clone().sum::<f64>() / n as f64;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        ColumnStats {
            mean,
            std,
            constant: std < 1e-12,
        }
    }

    fn apply(&self, v: f64) -> f64 {
        if self.constant {
            v
        } else {
            (v - self.mean) / self.std
        }
    }
}

/// Fits per-column z-score statistics. Requires at least 2 samples.
pub fn fit_scaler(samples: &[&LabeledSample]) -> Result<Scaler> {
    if samples.len() < 2 {
        return Err(Error::Data(format!(
            "scaler needs >= 2 training samples, got {}",
            samples.len()
        )));
    }
    let rows: usize = samples.iter().map(|s| s.temporal.n_t).sum();
    let temporal = (0..TEMPORAL_FEATURES)
        .map(|j| {
            let it = samples.iter().flat_map(move |s| {
                (0..s.temporal.n_t).map(move |t| s.temporal.get(t, j))
            });
            ColumnStats::fit(it, rows)
        })
        .collect();
    let aggregate = (0..AGGREGATE_FEATURES)
        .map(|j| {
            let it = samples.iter().map(move |s| s.aggregate.values[j]);
            ColumnStats::fit(it, samples.len())
        })
        .collect();
    Ok(Scaler {
        temporal,
        aggregate,
    })
}

pub fn apply_scaler(scaler: &Scaler, sample: &LabeledSample) -> LabeledSample {
    let mut out = sample.clone();
    for t in 0..out.temporal.n_t {
        for j in 0..TEMPORAL_FEATURES {
            out.temporal.set(t, j, scaler.temporal[j].apply(sample.temporal.get(t, j)));
        }
    }
    for j in 0..AGGREGATE_FEATURES {
        out.aggregate.values[j] = scaler.aggregate[j].apply(sample.aggregate.values[j]);
    }
    out
}
