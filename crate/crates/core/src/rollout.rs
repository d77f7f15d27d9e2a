//! Random-walk execution and trajectory logs.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{step, Action, NoiseModel, Pose};
use crate::error::ConfigError;
use crate::gridmap::{Compass, GridMap};

/// Random-walk policy over forward/left/right, with the unstick rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub p_forward: f64,
    pub p_left: f64,
    pub p_right: f64,
    pub turn_around_on_collision: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { p_forward: 0.6, p_left: 0.2, p_right: 0.2, turn_around_on_collision: true }
    }
}

impl PolicyConfig {
    pub fn new(p_forward: f64, p_left: f64, p_right: f64, turn_around_on_collision: bool) -> Result<Self, ConfigError> {
        let p = PolicyConfig { p_forward, p_left, p_right, turn_around_on_collision };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ps = [self.p_forward, self.p_left, self.p_right];
        if ps.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(ConfigError::Invalid(format!("policy probabilities must be >= 0: {ps:?}")));
        }
        let sum: f64 = ps.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!("policy probabilities sum to {sum}, not 1")));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        let u: f64 = rng.gen();
        if u < self.p_forward {
            Action::Forward
        } else if u < self.p_forward + self.p_left {
            Action::TurnLeft
        } else if self.p_right > 0.0 {
            Action::TurnRight
        } else if self.p_left > 0.0 {
            Action::TurnLeft
        } else {
            Action::Forward
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u32,
    pub pose: Pose,
    pub action: Action,
    pub collided: bool,
}

/// A recorded walk. Record `t` holds the true pose before action `t` and
/// whether that action bumped into an obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub map_id: String,
    pub seed: u64,
    pub compass: Compass,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.steps.iter().map(|s| s.action)
    }
}

/// Full parameterization of a walk, as logged in trajectory headers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub compass: Compass,
    pub policy: PolicyConfig,
    pub noise: NoiseModel,
    pub n_steps: u32,
}

/// Runs one seeded random walk from a uniformly drawn free cell and heading.
pub fn run_walk(map: &GridMap, cfg: &WalkConfig, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free = map.free_cells();
    let (x, y) = free[rng.gen_range(0..free.len())];
    let mut pose = Pose::new(x, y, rng.gen_range(0..cfg.compass.count()));
    let mut forced = false;
    let mut steps = Vec::with_capacity(cfg.n_steps as usize);
    for t in 0..cfg.n_steps {
        let action = if forced { Action::TurnAround } else { cfg.policy.sample(&mut rng) };
        let out = step(map, cfg.compass, pose, action, &cfg.noise, &mut rng);
        steps.push(StepRecord { t, pose, action, collided: out.collided });
        forced = out.collided && cfg.policy.turn_around_on_collision;
        pose = out.new_pose;
    }
    Trajectory { map_id: map.id(), seed, compass: cfg.compass, steps }
}

/// Walk `i` uses seed `base_seed + i`; output order is walk order regardless
/// of how many threads ran it.
pub fn run_batch(map: &GridMap, cfg: &WalkConfig, n_walks: usize, base_seed: u64) -> Vec<Trajectory> {
    (0..n_walks as u64)
        .into_par_iter()
        .map(|i| run_walk(map, cfg, base_seed.wrapping_add(i)))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    map_id: String,
    seed: u64,
    #[serde(flatten)]
    config: WalkConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Line {
    t: u32,
    x: i32,
    y: i32,
    heading: u8,
    action: Action,
    collided: bool,
}

/// JSON-lines log: one header object followed by one object per step.
pub fn write_jsonl<W: Write>(
    traj: &Trajectory,
    cfg: &WalkConfig,
    config_hash: Option<&str>,
    mut out: W,
) -> io::Result<()> {
    let header = Header {
        map_id: traj.map_id.clone(),
        seed: traj.seed,
        config: *cfg,
        config_hash: config_hash.map(str::to_owned),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for s in &traj.steps {
        let line = Line {
            t: s.t,
            x: s.pose.x,
            y: s.pose.y,
            heading: s.pose.heading,
            action: s.action,
            collided: s.collided,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads any number of concatenated trajectory logs.
pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<Vec<(Trajectory, WalkConfig)>> {
    let bad = |n: usize, e: serde_json::Error| {
        io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1))
    };
    let mut out: Vec<(Trajectory, WalkConfig)> = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if line.contains("\"map_id\"") {
            let h: Header = serde_json::from_str(&line).map_err(|e| bad(n, e))?;
            out.push((
                Trajectory { map_id: h.map_id, seed: h.seed, compass: h.config.compass, steps: Vec::new() },
                h.config,
            ));
        } else {
            let l: Line = serde_json::from_str(&line).map_err(|e| bad(n, e))?;
            let (traj, _) = out.last_mut().ok_or_else(|| {
                io::Error::new(io::ErrorKind::InvalidData, "step record before header")
            })?;
            traj.steps.push(StepRecord {
                t: l.t,
                pose: Pose::new(l.x, l.y, l.heading),
                action: l.action,
                collided: l.collided,
            });
        }
    }
    Ok(out)
}
