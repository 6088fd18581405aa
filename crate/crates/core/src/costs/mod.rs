//! Cost terms evaluated at every `(particle, step)` of a rollout.
//!
//! Each term returns an unweighted, non-negative value; the [`CostStack`]
//! carries the weights. Terms with zero weight are left out of the stack.

mod surrogate;

use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::kinematics::{ChainPoses, KinematicChain};
use crate::rollout::DtSchedule;
use crate::simworld::WorldModel;

pub use surrogate::{
    compare_to_oracle, oracle_samples, positional_encoding, train_collision_surrogate, CollisionSurrogate,
    SurrogateReport, TrainingConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GoalMode {
    #[default]
    FullPose,
    PositionOnly,
    /// Position plus alignment of the end-effector z axis with the goal's.
    OrientationConstrained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalSpec {
    pub target: Pose,
    pub mode: GoalMode,
}

impl GoalSpec {
    pub fn position(p: Vector3<f64>) -> Self {
        GoalSpec {
            target: Pose::from_translation(p),
            mode: GoalMode::PositionOnly,
        }
    }

    /// Rotation-row weights after applying the goal mode.
    pub fn rotation_mask(&self) -> Vector3<f64> {
        match self.mode {
            GoalMode::FullPose => Vector3::repeat(1.0),
            GoalMode::PositionOnly => Vector3::zeros(),
            GoalMode::OrientationConstrained => Vector3::new(0.0, 0.0, 1.0),
        }
    }
}

/// Read-only inputs shared by every term during one rollout batch.
#[derive(Clone, Copy)]
pub struct CostContext<'a> {
    pub chain: &'a KinematicChain,
    pub goal: &'a GoalSpec,
    pub world: &'a WorldModel,
    pub sched: &'a DtSchedule,
}

/// State of one particle at one horizon step.
pub struct StepState<'a> {
    pub h: usize,
    pub position: &'a [f64],
    pub velocity: &'a [f64],
    pub acceleration: &'a [f64],
    pub poses: &'a ChainPoses,
}

pub trait CostTerm: Send + Sync {
    /// Column name suffix in logs and key in the rollout breakdown.
    fn name(&self) -> &'static str;
    fn weight(&self) -> f64;
    fn evaluate(&self, ctx: &CostContext<'_>, step: &StepState<'_>) -> f64;
}

/// `‖α₁ ⊙ (I − R_gᵀR)‖_F + ‖α₂ ⊙ R_gᵀ(d − d_g)‖`, with `α₁` weighting rows.
pub fn pose_cost(current: &Pose, goal: &Pose, alpha_rot: &Vector3<f64>, alpha_pos: &Vector3<f64>) -> f64 {
    let rel: Matrix3<f64> = goal.rotation.transpose() * current.rotation;
    let mut residual = Matrix3::identity() - rel;
    for r in 0..3 {
        residual.row_mut(r).scale_mut(alpha_rot[r]);
    }
    let offset = goal.rotation.transpose() * (current.translation - goal.translation);
    residual.norm() + offset.component_mul(alpha_pos).norm()
}

/// Speed limit at step `h` that still allows braking to rest by the end of
/// the horizon: `a_max · Σ_{k≥h} dt_k`.
pub fn stop_envelope(accel_max: f64, sched: &DtSchedule, h: usize) -> f64 {
    accel_max * sched.time_to_go(h)
}

/// `‖(|θ̇| − envelope)₊‖` over joints.
pub fn stop_cost(velocity: &[f64], envelope: &[f64]) -> f64 {
    velocity
        .iter()
        .zip(envelope)
        .map(|(v, e)| (v.abs() - e).max(0.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Joint bounds pulled in by `k_jl` of the range on each side.
pub fn shrunk_limits(lower: f64, upper: f64, k_jl: f64) -> (f64, f64) {
    let range = upper - lower;
    (lower + k_jl * range, upper - k_jl * range)
}

/// L2 norm of how far each joint lies outside its shrunk bounds.
pub fn joint_limit_cost(position: &[f64], chain: &KinematicChain, k_jl: f64) -> f64 {
    let l = &chain.limits;
    position
        .iter()
        .enumerate()
        .map(|(j, &q)| {
            let (lo, hi) = shrunk_limits(l.lower[j], l.upper[j], k_jl);
            let v = if q < lo {
                lo - q
            } else if q > hi {
                q - hi
            } else {
                0.0
            };
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// `1 − m` when manipulability `m` falls below `k_m`, else zero.
pub fn manipulability_cost(m: f64, k_m: f64) -> f64 {
    if m < k_m {
        1.0 - m
    } else {
        0.0
    }
}

/// `max(0, penetration)`.
pub fn self_collision_cost(penetration: f64) -> f64 {
    penetration.max(0.0)
}

/// 1 if any link capsule penetrates an obstacle, else 0.
pub fn env_collision_cost(chain: &KinematicChain, poses: &ChainPoses, world: &WorldModel) -> f64 {
    if world.collision_query(chain, poses).is_some() {
        1.0
    } else {
        0.0
    }
}

/// Weighted elementwise sum of term matrices.
pub fn total_cost(terms: &[(f64, &nalgebra::DMatrix<f64>)]) -> Result<nalgebra::DMatrix<f64>> {
    let Some((_, first)) = terms.first() else {
        return Err(Error::Contract("no cost terms to sum".into()));
    };
    let shape = first.shape();
    let mut out = nalgebra::DMatrix::zeros(shape.0, shape.1);
    for (w, m) in terms {
        if m.shape() != shape {
            return Err(Error::Contract(format!(
                "cost term shape {:?} differs from {:?}",
                m.shape(),
                shape
            )));
        }
        out += *m * *w;
    }
    Ok(out)
}

struct PoseTerm {
    alpha_rot: Vector3<f64>,
    alpha_pos: Vector3<f64>,
    squared: bool,
}

impl CostTerm for PoseTerm {
    fn name(&self) -> &'static str {
        "pose"
    }
    fn weight(&self) -> f64 {
        1.0
    }
    fn evaluate(&self, ctx: &CostContext<'_>, step: &StepState<'_>) -> f64 {
        let rot = self.alpha_rot.component_mul(&ctx.goal.rotation_mask());
        let c = pose_cost(&step.poses.ee, &ctx.goal.target, &rot, &self.alpha_pos);
        if self.squared {
            c * c
        } else {
            c
        }
    }
}

struct StopTerm {
    weight: f64,
}

impl CostTerm for StopTerm {
    fn name(&self) -> &'static str {
        "stop"
    }
    fn weight(&self) -> f64 {
        self.weight
    }
    fn evaluate(&self, ctx: &CostContext<'_>, step: &StepState<'_>) -> f64 {
        let ttg = ctx.sched.time_to_go(step.h);
        step.velocity
            .iter()
            .zip(&ctx.chain.limits.acceleration)
            .map(|(v, a)| (v.abs() - a * ttg).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

struct JointLimitTerm {
    weight: f64,
    k_jl: f64,
}

impl CostTerm for JointLimitTerm {
    fn name(&self) -> &'static str {
        "joint"
    }
    fn weight(&self) -> f64 {
        self.weight
    }
    fn evaluate(&self, ctx: &CostContext<'_>, step: &StepState<'_>) -> f64 {
        joint_limit_cost(step.position, ctx.chain, self.k_jl)
    }
}

struct ManipulabilityTerm {
    weight: f64,
    k_m: f64,
}

impl CostTerm for ManipulabilityTerm {
    fn name(&self) -> &'static str {
        "manip"
    }
    fn weight(&self) -> f64 {
        self.weight
    }
    fn evaluate(&self, ctx: &CostContext<'_>, step: &StepState<'_>) -> f64 {
        let jac = ctx.chain.jacobian_from_poses(step.poses);
        manipulability_cost(ctx.chain.manipulability_from_jacobian(&jac), self.k_m)
    }
}

/// Source of self-collision penetration estimates.
#[derive(Clone)]
pub enum CollisionProvider {
    Oracle,
    Learned(Arc<CollisionSurrogate>),
}

impl std::fmt::Debug for CollisionProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CollisionProvider::Oracle => f.write_str("Oracle"),
            CollisionProvider::Learned(_) => f.write_str("Learned"),
        }
    }
}

impl CollisionProvider {
    pub fn penetration(&self, chain: &KinematicChain, q: &[f64], poses: &ChainPoses) -> f64 {
        match self {
            CollisionProvider::Oracle => chain.self_collision_from_poses(poses),
            CollisionProvider::Learned(net) => net.predict(q),
        }
    }
}

struct SelfCollisionTerm {
    weight: f64,
    provider: CollisionProvider,
}

impl CostTerm for SelfCollisionTerm {
    fn name(&self) -> &'static str {
        "selfcoll"
    }
    fn weight(&self) -> f64 {
        self.weight
    }
    fn evaluate(&self, ctx: &CostContext<'_>, step: &StepState<'_>) -> f64 {
        self_collision_cost(self.provider.penetration(ctx.chain, step.position, step.poses))
    }
}

struct EnvCollisionTerm {
    weight: f64,
}

impl CostTerm for EnvCollisionTerm {
    fn name(&self) -> &'static str {
        "envcoll"
    }
    fn weight(&self) -> f64 {
        self.weight
    }
    fn evaluate(&self, ctx: &CostContext<'_>, step: &StepState<'_>) -> f64 {
        env_collision_cost(ctx.chain, step.poses, ctx.world)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Oracle,
    Learned,
}

/// `costs` section of an experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// `[position, orientation]` pose weights.
    pub alpha_p: [f64; 2],
    /// Per-axis translation weights, multiplied by `alpha_p[0]`.
    pub pose_pos_axes: [f64; 3],
    /// Per-row rotation weights, multiplied by `alpha_p[1]`.
    pub pose_rot_axes: [f64; 3],
    /// Square the pose term.
    pub pose_squared: bool,
    pub alpha_s: f64,
    pub alpha_j: f64,
    pub alpha_m: f64,
    pub alpha_c: f64,
    pub k_jl: f64,
    pub k_m: f64,
    pub collision_provider: ProviderKind,
    /// Trained surrogate for `collision_provider = "learned"`.
    pub surrogate_path: Option<String>,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            alpha_p: [150.0, 20.0],
            pose_pos_axes: [1.0; 3],
            pose_rot_axes: [1.0; 3],
            pose_squared: false,
            alpha_s: 50.0,
            alpha_j: 100.0,
            alpha_m: 30.0,
            alpha_c: 1000.0,
            k_jl: 0.1,
            k_m: 0.05,
            collision_provider: ProviderKind::Oracle,
            surrogate_path: None,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = self
            .alpha_p
            .iter()
            .chain(&self.pose_pos_axes)
            .chain(&self.pose_rot_axes)
            .chain([&self.alpha_s, &self.alpha_j, &self.alpha_m, &self.alpha_c]);
        for w in weights {
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(Error::Config(format!("cost weights must be finite and non-negative, got {w}")));
            }
        }
        if !(0.0..0.5).contains(&self.k_jl) {
            return Err(Error::Config(format!("k_jl must lie in [0, 0.5), got {}", self.k_jl)));
        }
        if !(self.k_m > 0.0 && self.k_m < 1.0) {
            return Err(Error::Config(format!("k_m must lie in (0, 1), got {}", self.k_m)));
        }
        Ok(())
    }

    /// Resolves the self-collision provider, falling back to the oracle when
    /// no usable surrogate is available.
    pub fn provider(&self, chain: &KinematicChain) -> CollisionProvider {
        if self.collision_provider == ProviderKind::Oracle {
            return CollisionProvider::Oracle;
        }
        let Some(path) = &self.surrogate_path else {
            log::warn!("learned collision provider requested without surrogate_path; using the oracle");
            return CollisionProvider::Oracle;
        };
        match CollisionSurrogate::load(path) {
            Ok(net) if net.dof() == chain.dof() => CollisionProvider::Learned(Arc::new(net)),
            Ok(net) => {
                log::warn!(
                    "surrogate {path} expects {} joints but chain has {}; using the oracle",
                    net.dof(),
                    chain.dof()
                );
                CollisionProvider::Oracle
            }
            Err(e) => {
                log::warn!("could not load surrogate {path}: {e}; using the oracle");
                CollisionProvider::Oracle
            }
        }
    }
}

/// The active, weighted cost terms.
#[derive(Default)]
pub struct CostStack {
    terms: Vec<Box<dyn CostTerm>>,
}

impl CostStack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_config(config: &CostConfig, chain: &KinematicChain) -> Result<Self> {
        config.validate()?;
        Self::with_provider(config, config.provider(chain))
    }

    pub fn with_provider(config: &CostConfig, provider: CollisionProvider) -> Result<Self> {
        config.validate()?;
        let mut stack = CostStack::new();
        let alpha_pos = Vector3::from(config.pose_pos_axes) * config.alpha_p[0];
        let alpha_rot = Vector3::from(config.pose_rot_axes) * config.alpha_p[1];
        if alpha_pos.amax() > 0.0 || alpha_rot.amax() > 0.0 {
            stack.push(PoseTerm {
                alpha_rot,
                alpha_pos,
                squared: config.pose_squared,
            });
        }
        if config.alpha_s > 0.0 {
            stack.push(StopTerm { weight: config.alpha_s });
        }
        if config.alpha_j > 0.0 {
            stack.push(JointLimitTerm {
                weight: config.alpha_j,
                k_jl: config.k_jl,
            });
        }
        if config.alpha_m > 0.0 {
            stack.push(ManipulabilityTerm {
                weight: config.alpha_m,
                k_m: config.k_m,
            });
        }
        if config.alpha_c > 0.0 {
            stack.push(SelfCollisionTerm {
                weight: config.alpha_c,
                provider,
            });
            stack.push(EnvCollisionTerm { weight: config.alpha_c });
        }
        Ok(stack)
    }

    pub fn push(&mut self, term: impl CostTerm + 'static) {
        self.terms.push(Box::new(term));
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn CostTerm> {
        self.terms.iter().map(|t| t.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.iter().map(|t| t.name()).collect()
    }
}

/// Every term name a stack can contain, in log-column order.
pub const TERM_NAMES: [&str; 6] = ["pose", "stop", "joint", "manip", "selfcoll", "envcoll"];
