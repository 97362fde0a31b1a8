//! Churn definition: eligibility, churn-date detection under right-censoring,
//! prediction-offset labeling, and sampling-date enumeration.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::EventLog;

/// Window lengths and sampling parameters for the labeling scheme.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChurnConfig {
    /// Length of the observation window feeding the temporal features.
    pub observation_days: i64,
    /// Inactivity duration that qualifies a gap as churn.
    pub churn_span_days: i64,
    /// Days from the prediction date within which a churn date yields a
    /// positive label.
    pub prediction_offset_days: i64,
    /// Spacing between consecutive sampling dates.
    pub sampling_spacing_days: i64,
    /// Number of sampling dates.
    pub sampling_count: usize,
}

impl Default for ChurnConfig {
    fn default() -> Self {
        ChurnConfig {
            observation_days: 14,
            churn_span_days: 30,
            prediction_offset_days: 7,
            sampling_spacing_days: 18,
            sampling_count: 8,
        }
    }
}

impl ChurnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.observation_days < 1
            || self.churn_span_days < 1
            || self.prediction_offset_days < 1
            || self.sampling_spacing_days < 1
            || self.sampling_count < 1
        {
            return Err(Error::Config("all churn config fields must be >= 1".into()));
        }
        if self.observation_days % 7 != 0 {
            return Err(Error::Config(format!(
                "observation_days must be a multiple of 7, got {}",
                self.observation_days
            )));
        }
        if self.sampling_spacing_days <= self.observation_days {
            return Err(Error::Config(format!(
                "sampling_spacing_days ({}) must exceed observation_days ({}) so observation windows do not overlap",
                self.sampling_spacing_days, self.observation_days
            )));
        }
        Ok(())
    }

    /// Days of future data a prediction date needs before labels are fully
    /// observed (prediction offset plus churn span).
    pub fn label_horizon_days(&self) -> i64 {
        self.prediction_offset_days + self.churn_span_days
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChurnLabel {
    Churner,
    NonChurner,
    NotEligible,
}

/// Smallest active day `d` followed by a fully observed inactivity gap:
/// no activity in `(d, d + span]` and `d + span < horizon`. Activity days at
/// or past `horizon` are treated as unknown. `None` when no such gap exists.
///
/// `activity` must be sorted ascending.
pub fn churn_date(activity: &[i64], horizon: i64, span: i64) -> Option<i64> {
    let known = &activity[..activity.partition_point(|&d| d < horizon)];
    for (i, &d) in known.iter().enumerate() {
        if d + span >= horizon {
            // the gap can no longer be fully observed for this or any later day
            break;
        }
        let next = known.get(i + 1).copied();
        let gap_clear = match next {
            Some(n) => n > d + span,
            None => true,
        };
        if gap_clear {
            return Some(d);
        }
    }
    None
}

/// Labels one (player, prediction date) pair.
///
/// Eligibility requires at least one active day in
/// `[prediction_date - observation_days, prediction_date)`. An eligible player
/// is a churner iff an active day `d` in
/// `[prediction_date - observation_days, prediction_date + prediction_offset_days - 1]`
/// is followed by a fully observed gap of at least `churn_span_days`.
pub fn label_player(
    activity: &[i64],
    prediction_date: i64,
    cfg: &ChurnConfig,
    horizon: i64,
) -> Result<ChurnLabel> {
    if horizon < prediction_date + cfg.label_horizon_days() {
        return Err(Error::Config(format!(
            "horizon {horizon} too close to prediction date {prediction_date}: labels would be censored (need >= {})",
            prediction_date + cfg.label_horizon_days()
        )));
    }
    let obs_start = prediction_date - cfg.observation_days;
    let lo = activity.partition_point(|&d| d < obs_start);
    let hi = activity.partition_point(|&d| d < prediction_date);
    if lo == hi {
        return Ok(ChurnLabel::NotEligible);
    }
    if cfg.prediction_offset_days == 0 {
        // empty prediction window [d, d-1]
        return Ok(ChurnLabel::NonChurner);
    }
    let window_end = prediction_date + cfg.prediction_offset_days - 1;
    // Restricting to days >= obs_start removes no later activity, so every gap
    // found is genuine; it also scopes the search to the churn date relevant
    // to this prediction (a fully observed gap earlier in the player's history
    // means they already churned and returned).
    let scoped = &activity[lo..];
    match churn_date(scoped, horizon, cfg.churn_span_days) {
        Some(d) if d <= window_end => Ok(ChurnLabel::Churner),
        _ => Ok(ChurnLabel::NonChurner),
    }
}

/// `[first_date + i * spacing]` for `i in 0..sampling_count`.
pub fn sampling_dates(first_date: i64, cfg: &ChurnConfig) -> Vec<i64> {
    (0..cfg.sampling_count as i64)
        .map(|i| first_date + i * cfg.sampling_spacing_days)
        .collect()
}

/// One labeled record per (player, prediction date).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub player_id: String,
    pub prediction_date: i64,
    pub label: ChurnLabel,
}

/// Enumerates eligible (player, date) samples over the whole log.
/// `NotEligible` pairs are excluded; a player may appear under several dates.
pub fn build_samples(
    log: &EventLog,
    dates: &[i64],
    cfg: &ChurnConfig,
    horizon: i64,
) -> Result<Vec<SampleRecord>> {
    let mut samples = Vec::new();
    for player_id in log.player_ids() {
        let activity = log.activity_days(player_id);
        for &date in dates {
            match label_player(&activity, date, cfg, horizon)? {
                ChurnLabel::NotEligible => {}
                label => samples.push(SampleRecord {
                    player_id: player_id.to_string(),
                    prediction_date: date,
                    label,
                }),
            }
        }
    }
    Ok(samples)
}

/// Writes a sample manifest: `player_id,prediction_date,label`.
pub fn export_manifest(samples: &[SampleRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    writeln!(w, "player_id,prediction_date,label").map_err(io_err)?;
    for s in samples {
        let label = match s.label {
            ChurnLabel::Churner => "churner",
            ChurnLabel::NonChurner => "nonchurner",
            ChurnLabel::NotEligible => continue,
        };
        writeln!(w, "{},{},{}", s.player_id, s.prediction_date, label).map_err(io_err)?;
    }
    Ok(())
}

/// Reads a sample manifest written by [`export_manifest`].
pub fn import_manifest(path: &Path) -> Result<Vec<SampleRecord>> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = content.lines();
    match lines.next() {
        Some("player_id,prediction_date,label") => {}
        other => {
            return Err(Error::Data(format!(
                "bad manifest header in {}: {:?}",
                path.display(),
                other
            )))
        }
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Data(format!("manifest line {}: bad field count", i + 2)));
        }
        let label = match parts[2] {
            "churner" => ChurnLabel::Churner,
            "nonchurner" => ChurnLabel::NonChurner,
            other => {
                return Err(Error::Data(format!("manifest line {}: unknown label `{other}`", i + 2)))
            }
        };
        samples.push(SampleRecord {
            player_id: parts[0].to_string(),
            prediction_date: parts[1]
                .parse()
                .map_err(|e| Error::Data(format!("manifest line {}: bad date: {e}", i + 2)))?,
            label,
        });
    }
    Ok(samples)
}
