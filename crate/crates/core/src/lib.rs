//! Sampling-based model-predictive control in joint space.
//!
//! A controller keeps a time-indexed Gaussian over joint accelerations,
//! samples smooth perturbations of it (Halton points fitted with B-splines by
//! default), integrates them through a kinematic model, scores the rollouts
//! with task and constraint costs, and re-weights the distribution with an
//! exponentiated utility. Rollouts run on a rayon pool when the `parallel`
//! feature is on (the default) and on the calling thread otherwise.

pub mod controller;
pub mod costs;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod kinematics;
pub mod par;
pub mod policy;
pub mod rollout;
pub mod sampling;
pub mod simworld;

pub use controller::{run_episode, Controller, ControllerConfig, Episode, EpisodeLog};
pub use costs::{CostConfig, CostStack, GoalMode, GoalSpec};
pub use error::{Error, Result};
pub use geometry::Pose;
pub use kinematics::KinematicChain;
pub use par::Workers;
pub use policy::{PolicyConfig, PolicyParams};
pub use rollout::{DtSchedule, JointState, RolloutBundle};
pub use sampling::{ControlBatch, SamplingConfig};
pub use simworld::{Plant, TargetScript, Targets, WorldModel};
