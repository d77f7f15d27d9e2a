//! Agent state, the discrete action set, and actuation noise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::gridmap::{Compass, GridMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pose {
    pub x: i32,
    pub y: i32,
    pub heading: u8,
}

impl Pose {
    pub fn new(x: i32, y: i32, heading: u8) -> Self {
        Pose { x, y, heading }
    }

    pub fn cell(&self) -> (i32, i32) {
        (self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
    TurnAround,
}

impl Action {
    pub const ALL: [Action; 4] =
        [Action::Forward, Action::TurnLeft, Action::TurnRight, Action::TurnAround];

    pub fn name(self) -> &'static str {
        match self {
            Action::Forward => "forward",
            Action::TurnLeft => "turn_left",
            Action::TurnRight => "turn_right",
            Action::TurnAround => "turn_around",
        }
    }

    /// Nominal heading change for turns; zero for `Forward`.
    pub fn rotation(self, compass: Compass) -> i32 {
        match self {
            Action::Forward => 0,
            Action::TurnLeft => -1,
            Action::TurnRight => 1,
            Action::TurnAround => -(compass.count() as i32 / 2),
        }
    }
}

impl std::str::FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown action {s:?}"))
    }
}

/// Independent slip probabilities standing in for continuous actuation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Probability an unobstructed forward move silently leaves the agent in place.
    pub p_forward_slip: f64,
    /// Probability a turn lands one heading short or long (half each).
    pub p_turn_slip: f64,
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel { p_forward_slip: 0.0, p_turn_slip: 0.0 };

    pub fn new(p_forward_slip: f64, p_turn_slip: f64) -> Result<Self, ConfigError> {
        let n = NoiseModel { p_forward_slip, p_turn_slip };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, p) in [("p_forward_slip", self.p_forward_slip), ("p_turn_slip", self.p_turn_slip)]
        {
            if !(0.0..=0.5).contains(&p) {
                return Err(ConfigError::Invalid(format!("{name} must be in [0, 0.5], got {p}")));
            }
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.p_forward_slip == 0.0 && self.p_turn_slip == 0.0
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { p_forward_slip: 0.1, p_turn_slip: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Motion {
    AsIntended,
    SlippedStay,
    SlippedOverTurn,
    SlippedUnderTurn,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub new_pose: Pose,
    pub collided: bool,
    pub intended_action: Action,
    pub actual_motion: Motion,
}

/// Executes one action. Only a `Forward` into an occupied cell collides;
/// the agent then stays where it is.
pub fn step<R: Rng + ?Sized>(
    map: &GridMap,
    compass: Compass,
    pose: Pose,
    action: Action,
    noise: &NoiseModel,
    rng: &mut R,
) -> StepOutcome {
    let (new_pose, collided, motion) = match action {
        Action::Forward => {
            let (dx, dy) = compass.dir(pose.heading);
            let (tx, ty) = (pose.x + dx, pose.y + dy);
            if map.is_occupied(tx, ty) {
                (pose, true, Motion::Blocked)
            } else if noise.p_forward_slip > 0.0 && rng.gen_bool(noise.p_forward_slip) {
                (pose, false, Motion::SlippedStay)
            } else {
                (Pose { x: tx, y: ty, ..pose }, false, Motion::AsIntended)
            }
        }
        turn => {
            let nominal = turn.rotation(compass);
            let sense = nominal.signum();
            let (delta, motion) = if noise.p_turn_slip > 0.0 && rng.gen_bool(noise.p_turn_slip) {
                if rng.gen_bool(0.5) {
                    (nominal + sense, Motion::SlippedOverTurn)
                } else {
                    (nominal - sense, Motion::SlippedUnderTurn)
                }
            } else {
                (nominal, Motion::AsIntended)
            };
            let heading = compass.rotate(pose.heading, delta);
            (Pose { heading, ..pose }, false, motion)
        }
    };
    StepOutcome { new_pose, collided, intended_action: action, actual_motion: motion }
}

/// Motion composed from intended actions, expressed relative to the start pose.
///
/// Forward moves are tallied per heading relative to the start heading, so
/// the same displacement can be re-applied at any absolute heading exactly,
/// including diagonal headings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Displacement {
    compass: Compass,
    moves: Vec<u32>,
    /// Net heading change, in `[0, H)`.
    pub dheading: u8,
}

impl Displacement {
    pub fn identity(compass: Compass) -> Self {
        Displacement { compass, moves: vec![0; compass.count() as usize], dheading: 0 }
    }

    /// Appends one intended action, assuming it executes without slip or collision.
    pub fn push(&mut self, action: Action) {
        match action {
            Action::Forward => self.moves[self.dheading as usize] += 1,
            turn => self.dheading = self.compass.rotate(self.dheading, turn.rotation(self.compass)),
        }
    }

    /// Cell offset in the egocentric frame (start heading taken as heading 0).
    pub fn offset(&self) -> (i32, i32) {
        self.offset_at(0)
    }

    fn offset_at(&self, heading: u8) -> (i32, i32) {
        self.moves.iter().enumerate().fold((0, 0), |(x, y), (r, &n)| {
            let (dx, dy) = self.compass.dir(heading.wrapping_add(r as u8) % self.compass.count());
            (x + dx * n as i32, y + dy * n as i32)
        })
    }

    /// Cells ahead of and to the left of the start pose.
    pub fn forward_left(&self) -> (i32, i32) {
        let (dx, dy) = self.offset();
        (dx, -dy)
    }

    pub fn apply(&self, pose: Pose) -> Pose {
        let (dx, dy) = self.offset_at(pose.heading);
        Pose {
            x: pose.x + dx,
            y: pose.y + dy,
            heading: self.compass.rotate(pose.heading, self.dheading as i32),
        }
    }
}

/// Composes intended actions with zero noise and no collisions.
pub fn dead_reckon(actions: &[Action], compass: Compass) -> Displacement {
    let mut d = Displacement::identity(compass);
    for &a in actions {
        d.push(a);
    }
    d
}
