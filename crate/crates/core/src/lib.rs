//! Grid-world collision replay.
//!
//! Random walks with a bump sensor produce time-to-collision labels; this
//! crate fits angle-conditioned hitting-time distributions from them,
//! decodes those into distance functions and floorplans, evaluates the
//! results, and checks the whole pipeline against closed-form 1-D
//! random-walk analytics.

pub mod agent;
pub mod analysis;
pub mod decode;
pub mod error;
pub mod estimator;
pub mod gridmap;
pub mod replay;
pub mod rollout;
pub mod ruin;

pub use agent::{dead_reckon, step, Action, NoiseModel, Pose};
pub use decode::{distance_field, eps_decode, DecodeConfig};
pub use estimator::{fit_table, HittingTable};
pub use gridmap::{ground_truth_df, Compass, DistField, GridMap};
pub use replay::{label_egocentric, label_remote, Regime, ReplayConfig, ReplaySample};
pub use rollout::{run_batch, run_walk, PolicyConfig, Trajectory, WalkConfig};
