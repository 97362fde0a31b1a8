//! Raw telemetry event model: parsing, per-player indexing, and daily binning.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five telemetry event kinds emitted by the game client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SessionStart,
    MissionStart,
    MissionComplete,
    MissionFail,
    Purchase,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::SessionStart => "session_start",
            EventKind::MissionStart => "mission_start",
            EventKind::MissionComplete => "mission_complete",
            EventKind::MissionFail => "mission_fail",
            EventKind::Purchase => "purchase",
        }
    }

    pub fn parse(s: &str) -> Option<EventKind> {
        match s {
            "session_start" => Some(EventKind::SessionStart),
            "mission_start" => Some(EventKind::MissionStart),
            "mission_complete" => Some(EventKind::MissionComplete),
            "mission_fail" => Some(EventKind::MissionFail),
            "purchase" => Some(EventKind::Purchase),
            _ => None,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One raw telemetry row. `day` is an integer day index (UTC-truncated days
/// since a fixed epoch). `moves_used` and `points` are only meaningful for
/// mission events and must be 0 otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerEvent {
    pub player_id: String,
    pub day: i64,
    pub kind: EventKind,
    pub moves_used: u32,
    pub points: u32,
}

impl PlayerEvent {
    /// Row-level validation applied during ingestion.
    fn validate(&self) -> std::result::Result<(), String> {
        if self.day < 0 {
            return Err(format!("negative day {}", self.day));
        }
        match self.kind {
            EventKind::SessionStart | EventKind::Purchase
                if self.moves_used != 0 || self.points != 0 =>
            {
                return Err(format!(
                    "{} events must carry moves_used=0 and points=0",
                    self.kind
                ));
            }
            _ => {}
        }
        if self.player_id.is_empty() {
            return Err("empty player_id".into());
        }
        Ok(())
    }
}

/// Per-(player, day) summary of activity.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DailyRecord {
    pub player_id: String,
    pub day: i64,
    pub sessions: u32,
    pub missions_started: u32,
    pub missions_completed: u32,
    pub missions_failed: u32,
    pub total_moves: u64,
    pub total_points: u64,
    pub purchased: bool,
}

impl DailyRecord {
    pub fn is_empty(&self) -> bool {
        self.sessions == 0
            && self.missions_started == 0
            && self.missions_completed == 0
            && self.missions_failed == 0
            && self.total_moves == 0
            && self.total_points == 0
            && !self.purchased
    }
}

/// Immutable event store. Events are grouped per player and sorted by day;
/// iteration over a player's events is non-decreasing in day.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventLog {
    // BTreeMap keeps player iteration order stable, which keeps exports
    // byte-deterministic.
    players: BTreeMap<String, Vec<PlayerEvent>>,
    event_count: usize,
}

/// Ingestion outcome: the log plus accepted/rejected row counts.
#[derive(Debug)]
pub struct IngestReport {
    pub log: EventLog,
    pub accepted: usize,
    pub rejected: Vec<(usize, String)>,
}

/// Supported on-disk event formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Jsonl,
}

impl EventFormat {
    pub fn parse(s: &str) -> Option<EventFormat> {
        match s {
            "csv" => Some(EventFormat::Csv),
            "jsonl" => Some(EventFormat::Jsonl),
            _ => None,
        }
    }
}

pub const CSV_HEADER: &str = "player_id,day,kind,moves_used,points";

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a log from arbitrary-order events, sorting per player by day.
    pub fn from_events(events: impl IntoIterator<Item = PlayerEvent>) -> Self {
        let mut log = EventLog::new();
        for ev in events {
            log.push(ev);
        }
        log.finalize();
        log
    }

    fn push(&mut self, ev: PlayerEvent) {
        self.event_count += 1;
        self.players.entry(ev.player_id.clone()).or_default().push(ev);
    }

    fn finalize(&mut self) {
        for events in self.players.values_mut() {
            events.sort_by_key(|e| e.day);
        }
    }

    pub fn len(&self) -> usize {
        self.event_count
    }

    pub fn is_empty(&self) -> bool {
        self.event_count == 0
    }

    pub fn player_count(&self) -> usize {
        self.players.len()
    }

    pub fn player_ids(&self) -> impl Iterator<Item = &str> {
        self.players.keys().map(|s| s.as_str())
    }

    /// Events for one player, sorted by day. Empty slice for unknown players.
    pub fn events_for(&self, player_id: &str) -> &[PlayerEvent] {
        self.players.get(player_id).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// All events in (player_id, day) order.
    pub fn iter(&self) -> impl Iterator<Item = &PlayerEvent> {
        self.players.values().flat_map(|v| v.iter())
    }

    /// Ordered set of days on which the player produced at least one event.
    pub fn activity_days(&self, player_id: &str) -> Vec<i64> {
        let mut days: Vec<i64> = self.events_for(player_id).iter().map(|e| e.day).collect();
        days.dedup();
        days
    }

    /// One `DailyRecord` per day in `[start, end)`, zero-filled for inactive
    /// days. Unknown players yield all-zero records.
    pub fn daily_bins(&self, player_id: &str, start: i64, end: i64) -> Vec<DailyRecord> {
        assert!(start < end, "daily_bins requires start < end");
        let n = (end - start) as usize;
        let mut bins: Vec<DailyRecord> = (0..n)
            .map(|i| DailyRecord {
                player_id: player_id.to_string(),
                day: start + i as i64,
                ..Default::default()
            })
            .collect();
        let events = self.events_for(player_id);
        let lo = events.partition_point(|e| e.day < start);
        for ev in &events[lo..] {
            if ev.day >= end {
                break;
            }
            let rec = &mut bins[(ev.day - start) as usize];
            match ev.kind {
                EventKind::SessionStart => rec.sessions += 1,
                EventKind::MissionStart => rec.missions_started += 1,
                EventKind::MissionComplete => rec.missions_completed += 1,
                EventKind::MissionFail => rec.missions_failed += 1,
                EventKind::Purchase => rec.purchased = true,
            }
            rec.total_moves += ev.moves_used as u64;
            rec.total_points += ev.points as u64;
        }
        bins
    }

    /// Writes the log in the given format. Field order and LF line endings are
    /// stable so that export/ingest round-trips are byte-deterministic.
    pub fn export(&self, path: &Path, format: EventFormat) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = std::io::BufWriter::new(file);
        let io_err = |e| Error::io(path.display().to_string(), e);
        match format {
            EventFormat::Csv => {
                writeln!(w, "{CSV_HEADER}").map_err(io_err)?;
                for ev in self.iter() {
                    writeln!(
                        w,
                        "{},{},{},{},{}",
                        ev.player_id, ev.day, ev.kind, ev.moves_used, ev.points
                    )
                    .map_err(io_err)?;
                }
            }
            EventFormat::Jsonl => {
                for ev in self.iter() {
                    // serde preserves struct field order
                    let line = serde_json::to_string(ev)?;
                    writeln!(w, "{line}").map_err(io_err)?;
                }
            }
        }
        Ok(())
    }
}

/// Parses an event file. Malformed rows are rejected with their line number;
/// only an unreadable file is fatal.
pub fn ingest(path: &Path, format: EventFormat) -> Result<IngestReport> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut log = EventLog::new();
    let mut accepted = 0usize;
    let mut rejected = Vec::new();

    match format {
        EventFormat::Csv => {
            let mut lines = reader.lines().enumerate();
            match lines.next() {
                None => {} // empty file: 0 events, 0 rejected
                Some((_, header)) => {
                    let header = header.map_err(|e| Error::io(path.display().to_string(), e))?;
                    if header.trim_end() != CSV_HEADER {
                        return Err(Error::Data(format!(
                            "bad CSV header in {}: expected `{CSV_HEADER}`, got `{header}`",
                            path.display()
                        )));
                    }
                    for (idx, line) in lines {
                        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
                        if line.is_empty() {
                            continue;
                        }
                        match parse_csv_row(&line) {
                            Ok(ev) => {
                                accepted += 1;
                                log.push(ev);
                            }
                            Err(msg) => rejected.push((idx + 1, msg)),
                        }
                    }
                }
            }
        }
        EventFormat::Jsonl => {
            for (idx, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
                if line.is_empty() {
                    continue;
                }
                match serde_json::from_str::<PlayerEvent>(&line)
                    .map_err(|e| e.to_string())
                    .and_then(|ev| ev.validate().map(|_| ev))
                {
                    Ok(ev) => {
                        accepted += 1;
                        log.push(ev);
                    }
                    Err(msg) => rejected.push((idx + 1, msg)),
                }
            }
        }
    }
    log.finalize();
    Ok(IngestReport {
        log,
        accepted,
        rejected,
    })
}

fn parse_csv_row(line: &str) -> std::result::Result<PlayerEvent, String> {
    let mut fields = line.split(',');
    let player_id = fields.next().ok_or("missing player_id")?.to_string();
    let day: i64 = fields
        .next()
        .ok_or("missing day")?
        .parse()
        .map_err(|e| format!("bad day: {e}"))?;
    let kind_s = fields.next().ok_or("missing kind")?;
    let kind = EventKind::parse(kind_s).ok_or_else(|| format!("unknown kind `{kind_s}`"))?;
    let moves_used: u32 = fields
        .next()
        .ok_or("missing moves_used")?
        .parse()
        .map_err(|e| format!("bad moves_used: {e}"))?;
    let points: u32 = fields
        .next()
        .ok_or("missing points")?
        .parse()
        .map_err(|e| format!("bad points: {e}"))?;
    if fields.next().is_some() {
        return Err("too many fields".into());
    }
    let ev = PlayerEvent {
        player_id,
        day,
        kind,
        moves_used,
        points,
    };
    ev.validate()?;
    Ok(ev)
}
