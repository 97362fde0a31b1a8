//! Static player attributes: platform, acquisition channel, archetype, and
//! per-mode progression counters. Profiles are produced by the generator and
//! consumed by the aggregate feature builder.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Android,
    Fireos,
    Ios,
    Kindle,
}

impl Platform {
    pub const ALL: [Platform; 4] = [
        Platform::Android,
        Platform::Fireos,
        Platform::Ios,
        Platform::Kindle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Platform::Android => "android",
            Platform::Fireos => "fireos",
            Platform::Ios => "ios",
            Platform::Kindle => "kindle",
        }
    }

    pub fn parse(s: &str) -> Option<Platform> {
        Platform::ALL.iter().copied().find(|p| p.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Acquisition {
    Acquired,
    Crosspromoted,
    Organic,
}

impl Acquisition {
    pub const ALL: [Acquisition; 3] = [
        Acquisition::Acquired,
        Acquisition::Crosspromoted,
        Acquisition::Organic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Acquisition::Acquired => "acquired",
            Acquisition::Crosspromoted => "crosspromoted",
            Acquisition::Organic => "organic",
        }
    }

    pub fn parse(s: &str) -> Option<Acquisition> {
        Acquisition::ALL.iter().copied().find(|a| a.as_str() == s)
    }
}

/// Synthetic player category controlling activity intensity and churn hazard.
/// Observable only through aggregate features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Archetype {
    Newbie,
    Casual,
    Veteran,
    Spender,
}

impl Archetype {
    pub const ALL: [Archetype; 4] = [
        Archetype::Newbie,
        Archetype::Casual,
        Archetype::Veteran,
        Archetype::Spender,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Archetype::Newbie => "newbie",
            Archetype::Casual => "casual",
            Archetype::Veteran => "veteran",
            Archetype::Spender => "spender",
        }
    }

    pub fn parse(s: &str) -> Option<Archetype> {
        Archetype::ALL.iter().copied().find(|a| a.as_str() == s)
    }
}

/// Number of synthetic game modes backing the progression feature block.
pub const PROGRESSION_MODES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerProfile {
    pub player_id: String,
    pub archetype: Archetype,
    pub install_day: i64,
    pub platform: Platform,
    pub acquisition: Acquisition,
    pub fb_connected: bool,
    /// Latent skill in (0, 1).
    pub skill: f64,
    /// Per-mode level counters, one per synthetic game mode.
    pub progression: [u32; PROGRESSION_MODES],
}

pub const PROFILE_CSV_HEADER: &str =
    "player_id,archetype,install_day,platform,acquisition,fb_connected,skill,progression";

/// Writes profiles as CSV. The progression block is serialized as a
/// `;`-separated list inside one column.
pub fn export_profiles(profiles: &[PlayerProfile], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    writeln!(w, "{PROFILE_CSV_HEADER}").map_err(io_err)?;
    for p in profiles {
        let prog = p
            .progression
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            p.player_id,
            p.archetype.as_str(),
            p.install_day,
            p.platform.as_str(),
            p.acquisition.as_str(),
            p.fb_connected as u8,
            p.skill,
            prog
        )
        .map_err(io_err)?;
    }
    Ok(())
}

pub fn import_profiles(path: &Path) -> Result<Vec<PlayerProfile>> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = content.lines();
    match lines.next() {
        Some(h) if h == PROFILE_CSV_HEADER => {}
        other => {
            return Err(Error::Data(format!(
                "bad profile header in {}: {:?}",
                path.display(),
                other
            )))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Data(format!("profile line {}: {msg}", i + 2));
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(err("bad field count".into()));
        }
        let archetype =
            Archetype::parse(parts[1]).ok_or_else(|| err(format!("unknown archetype `{}`", parts[1])))?;
        let platform =
            Platform::parse(parts[3]).ok_or_else(|| err(format!("unknown platform `{}`", parts[3])))?;
        let acquisition = Acquisition::parse(parts[4])
            .ok_or_else(|| err(format!("unknown acquisition `{}`", parts[4])))?;
        let prog_vals: Vec<u32> = parts[7]
            .split(';')
            .map(|v| v.parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(format!("bad progression: {e}")))?;
        if prog_vals.len() != PROGRESSION_MODES {
            return Err(err(format!(
                "expected {PROGRESSION_MODES} progression counters, got {}",
                prog_vals.len()
            )));
        }
        let mut progression = [0u32; PROGRESSION_MODES];
        progression.copy_from_slice(&prog_vals);
        out.push(PlayerProfile {
            player_id: parts[0].to_string(),
            archetype,
            install_day: parts[2].parse().map_err(|e| err(format!("bad install_day: {e}")))?,
            platform,
            acquisition,
            fb_connected: match parts[5] {
                "0" => false,
                "1" => true,
                other => return Err(err(format!("bad fb_connected `{other}`"))),
            },
            skill: parts[6].parse().map_err(|e| err(format!("bad skill: {e}")))?,
            progression,
        })
    }
    Ok(out)
}
