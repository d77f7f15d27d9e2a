//! Collision replay: turning trajectories into time-to-collision labels.
//!
//! Once a bump is observed at step `c`, every earlier step `j` with no
//! collision in between is `c - j` steps from a collision. Egocentric labels
//! stay at the agent's own pose; remote labels are re-keyed from an earlier
//! pose `i` by composing the intended actions `i..j`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::agent::{Action, Displacement, Pose};
use crate::error::ConfigError;
use crate::gridmap::GridMap;
use crate::rollout::Trajectory;

pub const DEFAULT_K: u16 = 10;
pub const DEFAULT_WINDOW: u32 = 20;

/// How remote samples are keyed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// True pose at the labeled step.
    Oracle,
    /// Earlier true pose plus intended egomotion; inherits actuation drift.
    DeadReckoned,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Oracle => "oracle",
            Regime::DeadReckoned => "dead-reckoned",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(Regime::Oracle),
            "dead-reckoned" => Ok(Regime::DeadReckoned),
            other => Err(format!("unknown regime {other:?}")),
        }
    }
}

/// What a label counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Clock {
    /// Every action is one tick, turns included.
    #[default]
    TimeSteps,
    /// Only forward attempts are counted; rotation is free.
    ForwardSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub k: u16,
    pub window: u32,
    pub regime: Regime,
    #[serde(default)]
    pub clock: Clock,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig { k: DEFAULT_K, window: DEFAULT_WINDOW, regime: Regime::DeadReckoned, clock: Clock::TimeSteps }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k < 1 {
            return Err(ConfigError::Invalid("k must be >= 1".into()));
        }
        if self.window < 1 {
            return Err(ConfigError::Invalid("window must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_regime(self, regime: Regime) -> Self {
        ReplayConfig { regime, ..self }
    }
}

/// One supervised (cell, heading, steps-to-collision) example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplaySample {
    pub x: i32,
    pub y: i32,
    pub heading: u8,
    /// In `[0, k]`; `k` means "k or more".
    pub label: u16,
    pub k: u16,
    /// Intended action at the labeled step.
    pub action: Action,
    pub regime: Regime,
    pub off_map: bool,
    pub occupied: bool,
}

impl ReplaySample {
    pub fn key(&self) -> (i32, i32, u8) {
        (self.x, self.y, self.heading)
    }

    pub fn flags(&self) -> &'static str {
        match (self.off_map, self.occupied) {
            (true, _) => "off_map",
            (false, true) => "occupied",
            (false, false) => "",
        }
    }
}

/// Per-step labels, `None` where the label would be right-censored.
///
/// A step whose next collision lies `d` ticks ahead gets `min(d, k)`. A step
/// with no later collision gets `k` when at least `k` ticks remain, since the
/// collision (if any) is then at least `k` ticks away.
pub fn step_labels(traj: &Trajectory, cfg: &ReplayConfig) -> Vec<Option<u16>> {
    let n = traj.steps.len();
    let k = cfg.k as u32;
    let mut labels = vec![None; n];
    // ticks from step j up to (not including) the next collision, counted backwards
    let mut next_collision: Option<u32> = None;
    let mut ticks_to_end: u32 = 0;
    for j in (0..n).rev() {
        let s = &traj.steps[j];
        let tick = match cfg.clock {
            Clock::TimeSteps => 1,
            Clock::ForwardSteps => u32::from(s.action == Action::Forward),
        };
        if s.collided {
            next_collision = Some(0);
        } else if let Some(d) = next_collision.as_mut() {
            *d += tick;
        }
        ticks_to_end += tick;
        labels[j] = match next_collision {
            Some(d) => Some(d.min(k) as u16),
            None if ticks_to_end >= k => Some(k as u16),
            None => None,
        };
    }
    labels
}

fn sample_at(map: Option<&GridMap>, pose: Pose, label: u16, action: Action, cfg: &ReplayConfig, regime: Regime) -> ReplaySample {
    let (off_map, occupied) = match map {
        Some(m) => (!m.in_bounds(pose.x, pose.y), m.is_occupied(pose.x, pose.y)),
        None => (false, false),
    };
    ReplaySample {
        x: pose.x,
        y: pose.y,
        heading: pose.heading,
        label,
        k: cfg.k,
        action,
        regime,
        off_map,
        occupied,
    }
}

/// Labels every step at the agent's own (true) pose.
pub fn label_egocentric(traj: &Trajectory, cfg: &ReplayConfig) -> Vec<ReplaySample> {
    step_labels(traj, cfg)
        .into_iter()
        .zip(&traj.steps)
        .filter_map(|(l, s)| l.map(|l| sample_at(None, s.pose, l, s.action, cfg, Regime::Oracle)))
        .collect()
}

/// Remote labels: for each labeled step `j` and each earlier step `i` with
/// `j - i <= window` (including `i = j`), emits the label of `j` keyed at
/// the pose reached from the true pose at `i` by the intended actions
/// `i..j` (dead-reckoned), or at the true pose at `j` (oracle).
///
/// `map` is only used to flag samples that land off-map or on occupied cells.
pub fn label_remote(traj: &Trajectory, cfg: &ReplayConfig, map: Option<&GridMap>) -> Vec<ReplaySample> {
    let labels = step_labels(traj, cfg);
    let n = traj.steps.len();
    let window = cfg.window as usize;
    let mut out = Vec::new();
    for i in 0..n {
        let origin = traj.steps[i].pose;
        let mut disp = Displacement::identity(traj.compass);
        for j in i..n.min(i + window + 1) {
            // a bumped forward is known not to have moved the agent
            if j > i && !traj.steps[j - 1].collided {
                disp.push(traj.steps[j - 1].action);
            }
            let Some(label) = labels[j] else { continue };
            let pose = match cfg.regime {
                Regime::Oracle => traj.steps[j].pose,
                Regime::DeadReckoned => disp.apply(origin),
            };
            out.push(sample_at(map, pose, label, traj.steps[j].action, cfg, cfg.regime));
        }
    }
    out
}

/// CSV dump with columns `x,y,heading,label,regime,flags`.
pub fn write_samples_csv<W: Write>(samples: &[ReplaySample], mut out: W) -> io::Result<()> {
    writeln!(out, "x,y,heading,label,regime,flags")?;
    for s in samples {
        writeln!(out, "{},{},{},{},{},{}", s.x, s.y, s.heading, s.label, s.regime.name(), s.flags())?;
    }
    Ok(())
}
