//! Featurized dataset assembly and persistence: a binary columnar file with
//! a JSON sidecar (column names, ordering, scaler, config hash), plus a CSV
//! export for inspection.

use std::io::{Read as IoRead, Write as IoWrite};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::EventLog;
use crate::features::{
    aggregate_features, temporal_features, AggregateVector, LabeledSample, Scaler,
    AGGREGATE_COLUMNS, AGGREGATE_FEATURES, TEMPORAL_COLUMNS, TEMPORAL_FEATURES,
};
use crate::labeling::{ChurnConfig, ChurnLabel, SampleRecord};
use crate::profile::PlayerProfile;

/// Builds one `LabeledSample` per eligible manifest record: the temporal
/// matrix over the observation window plus the aggregate vector at the
/// prediction date.
pub fn assemble_samples(
    log: &EventLog,
    profiles: &[PlayerProfile],
    records: &[SampleRecord],
    churn_cfg: &ChurnConfig,
    lookback_days: i64,
) -> Result<Vec<LabeledSample>> {
    let by_id: std::collections::HashMap<&str, &PlayerProfile> =
        profiles.iter().map(|p| (p.player_id.as_str(), p)).collect();
    let mut samples = Vec::with_capacity(records.len());
    for rec in records {
        let label = match rec.label {
            ChurnLabel::Churner => 1u8,
            ChurnLabel::NonChurner => 0u8,
            ChurnLabel::NotEligible => continue,
        };
        let profile = by_id.get(rec.player_id.as_str()).ok_or_else(|| {
            Error::Data(format!("no profile for player {}", rec.player_id))
        })?;
        let bins = log.daily_bins(
            &rec.player_id,
            rec.prediction_date - churn_cfg.observation_days,
            rec.prediction_date,
        );
        samples.push(LabeledSample {
            player_id: rec.player_id.clone(),
            prediction_date: rec.prediction_date,
            temporal: temporal_features(&bins),
            aggregate: aggregate_features(log, profile, rec.prediction_date, lookback_days),
            label,
        });
    }
    Ok(samples)
}

const DATASET_MAGIC: &[u8; 8] = b"CHURNKD1";

/// JSON sidecar describing the binary file. Row `i` of every column belongs
/// to `rows[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub format_version: u32,
    pub n_rows: usize,
    pub n_t: usize,
    /// Column order in the binary file: all temporal columns
    /// (day-major: `<name>@t0` oldest first), then the aggregate columns.
    pub columns: Vec<String>,
    pub rows: Vec<RowKey>,
    /// Scaler that produced the stored values, if any; None means raw.
    pub scaler: Option<Scaler>,
    /// Hash of the experiment config that produced this dataset.
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowKey {
    pub player_id: String,
    pub prediction_date: i64,
    pub label: u8,
}

pub fn sidecar_path(bin_path: &Path) -> PathBuf {
    bin_path.with_extension("json")
}

fn column_names(n_t: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(n_t * TEMPORAL_FEATURES + AGGREGATE_FEATURES);
    for t in 0..n_t {
        for col in TEMPORAL_COLUMNS {
            names.push(format!("{col}@t{t}"));
        }
    }
    names.extend(AGGREGATE_COLUMNS.iter().map(|s| s.to_string()));
    names
}

/// Writes `<path>` (binary columnar f64, little-endian, one column after
/// another) and `<path with .json>` (sidecar).
pub fn save_dataset(
    samples: &[LabeledSample],
    scaler: Option<&Scaler>,
    config_hash: &str,
    bin_path: &Path,
) -> Result<()> {
    let n_t = samples.first().map_or(14, |s| s.temporal.n_t);
    if samples.iter().any(|s| s.temporal.n_t != n_t) {
        return Err(Error::Shape("samples disagree on temporal length".into()));
    }
    let n = samples.len();
    let columns = column_names(n_t);
    let mut body = Vec::with_capacity(columns.len() * n * 8);
    for t in 0..n_t {
        for j in 0..TEMPORAL_FEATURES {
            for s in samples {
                body.extend_from_slice(&s.temporal.get(t, j).to_le_bytes());
            }
        }
    }
    for j in 0..AGGREGATE_FEATURES {
        for s in samples {
            body.extend_from_slice(&s.aggregate.values[j].to_le_bytes());
        }
    }

    let sidecar = DatasetSidecar {
        format_version: 1,
        n_rows: n,
        n_t,
        columns,
        rows: samples
            .iter()
            .map(|s| RowKey {
                player_id: s.player_id.clone(),
                prediction_date: s.prediction_date,
                label: s.label,
            })
            .collect(),
        scaler: scaler.cloned(),
        config_hash: config_hash.to_string(),
    };

    let file = std::fs::File::create(bin_path)
        .map_err(|e| Error::io(bin_path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e| Error::io(bin_path.display().to_string(), e);
    w.write_all(DATASET_MAGIC).map_err(io_err)?;
    w.write_all(&(n as u64).to_le_bytes()).map_err(io_err)?;
    w.write_all(&body).map_err(io_err)?;

    let sc_path = sidecar_path(bin_path);
    let json = serde_json::to_vec_pretty(&sidecar)?;
    std::fs::write(&sc_path, json).map_err(|e| Error::io(sc_path.display().to_string(), e))?;
    Ok(())
}

pub fn load_dataset(bin_path: &Path) -> Result<(Vec<LabeledSample>, DatasetSidecar)> {
    let sc_path = sidecar_path(bin_path);
    let sidecar: DatasetSidecar = serde_json::from_str(
        &std::fs::read_to_string(&sc_path)
            .map_err(|e| Error::io(sc_path.display().to_string(), e))?,
    )?;
    let fail = |msg: &str| Error::Data(format!("{}: {msg}", bin_path.display()));
    if sidecar.format_version != 1 {
        return Err(fail("unsupported dataset format version"));
    }
    let mut bytes = Vec::new();
    std::fs::File::open(bin_path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(bin_path.display().to_string(), e))?;
    if bytes.len() < 16 || &bytes[..8] != DATASET_MAGIC {
        return Err(fail("not a churnkit dataset file"));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if n != sidecar.n_rows || sidecar.rows.len() != n {
        return Err(fail("row count mismatch between binary file and sidecar"));
    }
    let n_cols = sidecar.n_t * TEMPORAL_FEATURES + AGGREGATE_FEATURES;
    if sidecar.columns.len() != n_cols {
        return Err(fail("column list length mismatch"));
    }
    let expected = 16 + n_cols * n * 8;
    if bytes.len() != expected {
        return Err(fail("binary payload length mismatch"));
    }

    let col = |c: usize, r: usize| -> f64 {
        let off = 16 + (c * n + r) * 8;
        f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap())
    };
    let n_t = sidecar.n_t;
    let samples = sidecar
        .rows
        .iter()
        .enumerate()
        .map(|(r, key)| {
            let mut temporal = crate::features::TemporalMatrix::zeros(n_t);
            for t in 0..n_t {
                for j in 0..TEMPORAL_FEATURES {
                    temporal.set(t, j, col(t * TEMPORAL_FEATURES + j, r));
                }
            }
            let aggregate = AggregateVector {
                values: (0..AGGREGATE_FEATURES)
                    .map(|j| col(n_t * TEMPORAL_FEATURES + j, r))
                    .collect(),
            };
            LabeledSample {
                player_id: key.player_id.clone(),
                prediction_date: key.prediction_date,
                temporal,
                aggregate,
                label: key.label,
            }
        })
        .collect();
    Ok((samples, sidecar))
}

/// Row-per-sample CSV export for inspection:
/// `player_id,prediction_date,label,<columns...>`.
pub fn export_csv(samples: &[LabeledSample], path: &Path) -> Result<()> {
    let n_t = samples.first().map_or(14, |s| s.temporal.n_t);
    let file = std::fs::File::create(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    write!(w, "player_id,prediction_date,label").map_err(io_err)?;
    for name in column_names(n_t) {
        write!(w, ",{name}").map_err(io_err)?;
    }
    writeln!(w).map_err(io_err)?;
    for s in samples {
        write!(w, "{},{},{}", s.player_id, s.prediction_date, s.label).map_err(io_err)?;
        for t in 0..n_t {
            for j in 0..TEMPORAL_FEATURES {
                write!(w, ",{}", s.temporal.get(t, j)).map_err(io_err)?;
            }
        }
        for v in &s.aggregate.values {
            write!(w, ",{v}").map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::TemporalMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_samples(n: usize, seed: u64) -> Vec<LabeledSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| LabeledSample {
                player_id: format!("p{i:03}"),
                prediction_date: 77 + (i as i64 % 8) * 18,
                temporal: TemporalMatrix {
                    n_t: 14,
                    values: (0..14 * TEMPORAL_FEATURES)
                        .map(|_| rng.gen_range(0.0..50.0))
                        .collect(),
                },
                aggregate: AggregateVector {
                    values: (0..AGGREGATE_FEATURES).map(|_| rng.gen_range(0.0..10.0)).collect(),
                },
                label: rng.gen_bool(0.35) as u8,
            })
            .collect()
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let samples = random_samples(37, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.ckd");
        save_dataset(&samples, None, "deadbeef", &path).unwrap();
        let (back, sidecar) = load_dataset(&path).unwrap();
        assert_eq!(back, samples);
        assert_eq!(sidecar.config_hash, "deadbeef");
        assert_eq!(sidecar.columns.len(), 14 * TEMPORAL_FEATURES + AGGREGATE_FEATURES);
        assert!(sidecar.scaler.is_none());
    }

    #[test]
    fn empty_dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.ckd");
        save_dataset(&[], None, "h", &path).unwrap();
        let (back, sidecar) = load_dataset(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!(sidecar.n_rows, 0);
    }

    #[test]
    fn corrupted_payload_is_rejected() {
        let samples = random_samples(5, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.ckd");
        save_dataset(&samples, None, "h", &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&path, bytes).unwrap();
        assert!(load_dataset(&path).is_err());
    }

    #[test]
    fn csv_export_shape() {
        let samples = random_samples(4, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        export_csv(&samples, &path).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = content.lines().collect();
        assert_eq!(lines.len(), 5);
        let width = 3 + 14 * TEMPORAL_FEATURES + AGGREGATE_FEATURES;
        for line in &lines {
            assert_eq!(line.split(',').count(), width);
        }
        assert!(lines[0].starts_with("player_id,prediction_date,label,activity@t0,"));
    }

    #[test]
    fn assemble_skips_not_eligible_and_requires_profiles() {
        use crate::eventlog::{EventKind, PlayerEvent};
        use crate::profile::{Acquisition, Archetype, Platform, PROGRESSION_MODES};
        let log = EventLog::from_events(vec![PlayerEvent {
            player_id: "p1".into(),
            day: 70,
            kind: EventKind::SessionStart,
            moves_used: 0,
            points: 0,
        }]);
        let profile = PlayerProfile {
            player_id: "p1".into(),
            archetype: Archetype::Casual,
            install_day: 0,
            platform: Platform::Ios,
            acquisition: Acquisition::Organic,
            fb_connected: false,
            skill: 0.5,
            progression: [0; PROGRESSION_MODES],
        };
        let records = vec![
            SampleRecord {
                player_id: "p1".into(),
                prediction_date: 77,
                label: ChurnLabel::Churner,
            },
            SampleRecord {
                player_id: "p1".into(),
                prediction_date: 95,
                label: ChurnLabel::NotEligible,
            },
        ];
        let cfg = ChurnConfig::default();
        let samples =
            assemble_samples(&log, std::slice::from_ref(&profile), &records, &cfg, 183).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].label, 1);
        assert_eq!(samples[0].temporal.n_t, 14);
        // activity on day 70 appears in row 70 - (77 - 14) = 7
        assert_eq!(samples[0].temporal.get(7, 0), 1.0);

        let missing = vec![SampleRecord {
            player_id: "ghost".into(),
            prediction_date: 77,
            label: ChurnLabel::Churner,
        }];
        assert!(assemble_samples(&log, &[profile], &missing, &cfg, 183).is_err());
    }
}
