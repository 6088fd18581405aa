//! Obstacle worlds, moving-target scripts and the double-integrator plant.

use std::path::Path;
use std::sync::{Arc, Mutex};

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::costs::{GoalMode, GoalSpec};
use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, segment_box_distance, Pose, WorldCapsule};
use crate::kinematics::{ChainPoses, KinematicChain};
use crate::rollout::JointState;

/// Half-height given to 2-D boxes when they are lifted into 3-D. Planar chains
/// live in the `z = 0` plane, so any value larger than a link radius works.
const PLANAR_SLAB: f64 = 1.0e3;

#[derive(Debug, Clone, PartialEq)]
pub enum Obstacle {
    /// Disc in the plane or sphere in space.
    Ball { center: Vector3<f64>, radius: f64 },
    Box { min: Vector3<f64>, max: Vector3<f64> },
}

impl Obstacle {
    /// Signed overlap with a capsule; positive means penetration.
    fn penetration(&self, c: &WorldCapsule) -> f64 {
        match self {
            Obstacle::Ball { center, radius } => radius + c.radius - point_segment_distance(center, &c.a, &c.b),
            Obstacle::Box { min, max } => c.radius - segment_box_distance(&c.a, &c.b, min, max),
        }
    }
}

/// Which link and obstacle produced a contact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub link: usize,
    pub obstacle: usize,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    /// 2 for planar worlds, 3 otherwise.
    pub dimension: usize,
    pub bounds_min: Vector3<f64>,
    pub bounds_max: Vector3<f64>,
    pub obstacles: Vec<Obstacle>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    bounds: BoundsFile,
    #[serde(default)]
    obstacles: Vec<serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsFile {
    min: Vec<f64>,
    max: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum ObstacleFile {
    Disc { center: Vec<f64>, radius: f64 },
    Sphere { center: Vec<f64>, radius: f64 },
    Box { min: Vec<f64>, max: Vec<f64> },
}

fn parse_err(message: String) -> Error {
    Error::Parse { kind: "world", message }
}

impl WorldModel {
    pub fn empty(dimension: usize) -> Self {
        WorldModel {
            dimension,
            bounds_min: Vector3::repeat(-1.0),
            bounds_max: Vector3::repeat(1.0),
            obstacles: Vec::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<WorldModel> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        WorldModel::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<WorldModel> {
        let file: WorldFile = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        let dimension = file.bounds.min.len();
        if !(dimension == 2 || dimension == 3) || file.bounds.max.len() != dimension {
            return Err(parse_err("bounds must be 2-D or 3-D with matching min/max".into()));
        }
        let lift = |v: &[f64], what: &str, i: usize| -> Result<Vector3<f64>> {
            if v.len() != dimension {
                return Err(parse_err(format!(
                    "obstacle {i}: {what} has {} components, world is {dimension}-D",
                    v.len()
                )));
            }
            Ok(Vector3::new(v[0], v[1], if dimension == 3 { v[2] } else { 0.0 }))
        };
        let bounds_min = lift(&file.bounds.min, "bounds", 0)?;
        let bounds_max = lift(&file.bounds.max, "bounds", 0)?;
        let mut obstacles = Vec::with_capacity(file.obstacles.len());
        for (i, raw) in file.obstacles.into_iter().enumerate() {
            let ob: ObstacleFile =
                serde_json::from_value(raw).map_err(|e| parse_err(format!("obstacle {i}: {e}")))?;
            let ob = match ob {
                ObstacleFile::Disc { center, radius } | ObstacleFile::Sphere { center, radius } => {
                    if !(radius > 0.0) {
                        return Err(parse_err(format!("obstacle {i}: radius must be positive")));
                    }
                    Obstacle::Ball {
                        center: lift(&center, "center", i)?,
                        radius,
                    }
                }
                ObstacleFile::Box { min, max } => {
                    let mut lo = lift(&min, "min", i)?;
                    let mut hi = lift(&max, "max", i)?;
                    if (0..dimension).any(|k| lo[k] >= hi[k]) {
                        return Err(parse_err(format!("obstacle {i}: box min must be below max")));
                    }
                    if dimension == 2 {
                        lo.z = -PLANAR_SLAB;
                        hi.z = PLANAR_SLAB;
                    }
                    Obstacle::Box { min: lo, max: hi }
                }
            };
            obstacles.push(ob);
        }
        Ok(WorldModel {
            dimension,
            bounds_min,
            bounds_max,
            obstacles,
        })
    }

    fn planarize(&self, c: WorldCapsule) -> WorldCapsule {
        if self.dimension == 2 {
            WorldCapsule {
                a: Vector3::new(c.a.x, c.a.y, 0.0),
                b: Vector3::new(c.b.x, c.b.y, 0.0),
                radius: c.radius,
            }
        } else {
            c
        }
    }

    /// First contact between a world-frame capsule and any obstacle.
    /// Touching surfaces (zero depth) do not count.
    pub fn capsule_contact(&self, capsule: &WorldCapsule) -> Option<(usize, f64)> {
        let c = self.planarize(*capsule);
        self.obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| (i, o.penetration(&c)))
            .find(|&(_, depth)| depth > 0.0)
    }

    /// Collision predicate shared by the simulator and the environment cost.
    pub fn collision_query(&self, chain: &KinematicChain, poses: &ChainPoses) -> Option<Contact> {
        if self.obstacles.is_empty() {
            return None;
        }
        for link in 0..chain.link_count() {
            for c in poses.world_capsules(chain, link) {
                if let Some((obstacle, depth)) = self.capsule_contact(&c) {
                    return Some(Contact { link, obstacle, depth });
                }
            }
        }
        None
    }

    /// The world moved by a rigid transform. Rotations must map the
    /// coordinate axes onto themselves when boxes are present, since boxes
    /// stay axis-aligned.
    pub fn transformed(&self, pose: &Pose) -> Result<WorldModel> {
        let r = &pose.rotation;
        let axis_aligned = r.iter().all(|v| v.abs() < 1e-12 || (v.abs() - 1.0).abs() < 1e-12);
        let has_box = self.obstacles.iter().any(|o| matches!(o, Obstacle::Box { .. }));
        if has_box && !axis_aligned {
            return Err(Error::Contract(
                "boxes can only be moved by axis-permuting rotations".into(),
            ));
        }
        let move_box = |lo: &Vector3<f64>, hi: &Vector3<f64>| {
            let a = pose.transform_point(lo);
            let b = pose.transform_point(hi);
            (a.inf(&b), a.sup(&b))
        };
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| match o {
                Obstacle::Ball { center, radius } => Obstacle::Ball {
                    center: pose.transform_point(center),
                    radius: *radius,
                },
                Obstacle::Box { min, max } => {
                    let (min, max) = move_box(min, max);
                    Obstacle::Box { min, max }
                }
            })
            .collect();
        let (bounds_min, bounds_max) = move_box(&self.bounds_min, &self.bounds_max);
        Ok(WorldModel {
            dimension: 3,
            bounds_min,
            bounds_max,
            obstacles,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Hold,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetSource {
    #[default]
    Scripted,
    Interactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    /// Seconds.
    pub time: f64,
    /// 2 or 3 components; planar goals get `z = 0`.
    pub position: Vec<f64>,
    /// `[w, x, y, z]`; identity when absent.
    #[serde(default)]
    pub orientation: Option<[f64; 4]>,
}

impl Waypoint {
    fn pose(&self) -> Pose {
        let p = &self.position;
        let t = Vector3::new(p[0], p.get(1).copied().unwrap_or(0.0), p.get(2).copied().unwrap_or(0.0));
        match self.orientation {
            Some([w, x, y, z]) => {
                Pose::from_quaternion(t, &UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z)))
            }
            None => Pose::from_translation(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetScript {
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub interpolation: Interpolation,
    #[serde(default)]
    pub source: TargetSource,
    #[serde(default)]
    pub mode: GoalMode,
}

impl TargetScript {
    pub fn constant(position: Vec<f64>, mode: GoalMode) -> Self {
        TargetScript {
            waypoints: vec![Waypoint {
                time: 0.0,
                position,
                orientation: None,
            }],
            interpolation: Interpolation::Hold,
            source: TargetSource::Scripted,
            mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::EmptyScript);
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if !(2..=3).contains(&w.position.len()) {
                return Err(Error::Config(format!("waypoint {i} needs 2 or 3 position components")));
            }
            if i > 0 && w.time <= self.waypoints[i - 1].time {
                return Err(Error::Config(format!("waypoint {i}: times must be strictly increasing")));
            }
        }
        Ok(())
    }

    /// Goal at time `t`: the last waypoint at or before `t` (hold) or the
    /// interpolation between the bracketing waypoints (linear). Times before
    /// the first waypoint use the first.
    pub fn target_at(&self, t: f64) -> Result<GoalSpec> {
        let w = &self.waypoints;
        if w.is_empty() {
            return Err(Error::EmptyScript);
        }
        let after = w.partition_point(|p| p.time <= t);
        let pose = if after == 0 {
            w[0].pose()
        } else if after == w.len() || self.interpolation == Interpolation::Hold {
            w[after - 1].pose()
        } else {
            let (a, b) = (&w[after - 1], &w[after]);
            let s = (t - a.time) / (b.time - a.time);
            let (pa, pb) = (a.pose(), b.pose());
            let translation = pa.translation.lerp(&pb.translation, s);
            let q = pa.quaternion().slerp(&pb.quaternion(), s);
            Pose::from_quaternion(translation, &q)
        };
        Ok(GoalSpec {
            target: pose,
            mode: self.mode,
        })
    }
}

/// Latest goal position posted from outside the control loop.
///
/// Any number of clones may post; the controller takes the newest value once
/// per cycle.
#[derive(Debug, Clone, Default)]
pub struct GoalInbox {
    slot: Arc<Mutex<Option<Vec<f64>>>>,
}

impl GoalInbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn post(&self, position: Vec<f64>) {
        *self.slot.lock().unwrap_or_else(|e| e.into_inner()) = Some(position);
    }

    pub fn take(&self) -> Option<Vec<f64>> {
        self.slot.lock().unwrap_or_else(|e| e.into_inner()).take()
    }
}

/// Goal provider for an episode: a script, or a script whose output is
/// replaced by interactive updates once any arrive.
#[derive(Debug, Clone)]
pub struct Targets {
    script: TargetScript,
    inbox: Option<GoalInbox>,
    latest: Option<Vec<f64>>,
}

impl Targets {
    pub fn scripted(script: TargetScript) -> Result<Self> {
        script.validate()?;
        Ok(Targets {
            script,
            inbox: None,
            latest: None,
        })
    }

    pub fn interactive(script: TargetScript, inbox: GoalInbox) -> Result<Self> {
        script.validate()?;
        Ok(Targets {
            script,
            inbox: Some(inbox),
            latest: None,
        })
    }

    pub fn script(&self) -> &TargetScript {
        &self.script
    }

    pub fn goal_at(&mut self, t: f64) -> Result<GoalSpec> {
        if let Some(inbox) = &self.inbox {
            if let Some(p) = inbox.take() {
                self.latest = Some(p);
            }
        }
        let mut goal = self.script.target_at(t)?;
        if let Some(p) = &self.latest {
            goal.target.translation = Vector3::new(
                p.first().copied().unwrap_or(0.0),
                p.get(1).copied().unwrap_or(0.0),
                p.get(2).copied().unwrap_or(0.0),
            );
        }
        Ok(goal)
    }

    /// Drops interactive overrides and returns to the script.
    pub fn reset(&mut self) {
        self.latest = None;
    }
}

/// One plant step: exactly the single-step form of rollout integration.
pub fn sim_step(state: &JointState, command: &[f64], dt: f64) -> JointState {
    state.advanced(command, dt)
}

/// Double-integrator plant with optional Gaussian measurement noise.
#[derive(Debug, Clone)]
pub struct Plant {
    state: JointState,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl Plant {
    /// `noise_sigma = 0` disables noise and makes measurements exact.
    pub fn new(initial: JointState, noise_sigma: f64, seed: u64) -> Result<Self> {
        let noise = if noise_sigma > 0.0 {
            Some(Normal::new(0.0, noise_sigma).map_err(|e| Error::Config(format!("noise sigma: {e}")))?)
        } else {
            None
        };
        Ok(Plant {
            state: initial,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_5e45),
        })
    }

    pub fn state(&self) -> &JointState {
        &self.state
    }

    pub fn step(&mut self, command: &[f64], dt: f64) -> &JointState {
        self.state = sim_step(&self.state, command, dt);
        &self.state
    }

    /// Position and velocity as a sensor would report them.
    pub fn measure(&mut self) -> JointState {
        let mut m = self.state.clone();
        if let Some(n) = &self.noise {
            for v in m.position.iter_mut().chain(m.velocity.iter_mut()) {
                *v += n.sample(&mut self.rng);
            }
        }
        m
    }
}

/// Rotation that maps the coordinate axes onto themselves, used to move
/// box worlds rigidly in tests and tools.
pub fn axis_permutation(order: [usize; 3], signs: [f64; 3]) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for (row, (&col, &s)) in order.iter().zip(&signs).enumerate() {
        m[(row, col)] = s;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    #[test]
    fn point_robot_queries() {
        let chain = fixtures::planar_holonomic();
        let world = WorldModel::from_json(
            r#"{"bounds":{"min":[-2,-2],"max":[2,2]},"obstacles":[{"type":"disc","center":[0.5,0.5],"radius":0.2}]}"#,
        )
        .unwrap();
        let at = |x: f64, y: f64| world.collision_query(&chain, &chain.forward_kinematics(&[x, y]).unwrap());
        assert!(at(0.5, 0.5).is_some());
        let r = 0.2 + chain.capsules.iter().flatten().map(|c| c.radius).fold(0.0, f64::max);
        assert!(at(0.5 + r + 1e-9, 0.5).is_none());
        assert!(at(0.5 + r, 0.5).is_none());
        assert!(at(0.5 + r - 1e-6, 0.5).is_some());
        let empty = fixtures::empty_world();
        assert!(empty.collision_query(&chain, &chain.forward_kinematics(&[0.0, 0.0]).unwrap()).is_none());
    }

    #[test]
    fn box_contact() {
        let world = WorldModel::from_json(
            r#"{"bounds":{"min":[-2,-2],"max":[2,2]},"obstacles":[{"type":"box","min":[0,0],"max":[1,1]}]}"#,
        )
        .unwrap();
        let cap = |x: f64| WorldCapsule {
            a: Vector3::new(x, 0.5, 0.0),
            b: Vector3::new(x, 0.5, 0.0),
            radius: 0.1,
        };
        assert_eq!(world.capsule_contact(&cap(0.5)).map(|c| c.0), Some(0));
        assert!(world.capsule_contact(&cap(-0.1)).is_none());
        assert!(world.capsule_contact(&cap(-0.05)).is_some());
    }

    #[test]
    fn world_parse_errors() {
        for bad in [
            r#"{"bounds":{"min":[0],"max":[1]}}"#,
            r#"{"bounds":{"min":[0,0],"max":[1,1]},"obstacles":[{"type":"disc","center":[0,0],"radius":-1}]}"#,
            r#"{"bounds":{"min":[0,0],"max":[1,1]},"obstacles":[{"type":"box","min":[1,0],"max":[0,1]}]}"#,
            r#"{"bounds":{"min":[0,0],"max":[1,1]},"obstacles":[{"type":"disc","center":[0,0,0],"radius":1}]}"#,
            r#"{"bounds":{"min":[0,0],"max":[1,1]},"obstacles":[{"type":"cone"}]}"#,
        ] {
            assert!(matches!(WorldModel::from_json(bad), Err(Error::Parse { .. })), "{bad}");
        }
        let err = WorldModel::from_json(
            r#"{"bounds":{"min":[0,0],"max":[1,1]},"obstacles":[{"type":"disc","center":[0,0],"radius":1},{"type":"box","min":[1,0],"max":[0,1]}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("obstacle 1"));
    }

    #[test]
    fn bundled_worlds_load() {
        assert_eq!(fixtures::fig3_world().obstacles.len(), 2);
        assert_eq!(fixtures::fig3_world().dimension, 2);
        assert!(fixtures::empty_world().obstacles.is_empty());
        assert_eq!(fixtures::table_world().dimension, 3);
    }

    fn script(interp: Interpolation) -> TargetScript {
        TargetScript {
            waypoints: vec![
                Waypoint {
                    time: 0.0,
                    position: vec![0.0, 0.0],
                    orientation: None,
                },
                Waypoint {
                    time: 1.0,
                    position: vec![1.0, 0.0],
                    orientation: None,
                },
            ],
            interpolation: interp,
            source: TargetSource::Scripted,
            mode: GoalMode::PositionOnly,
        }
    }

    #[test]
    fn target_examples() {
        let single = TargetScript::constant(vec![0.3, 0.4], GoalMode::PositionOnly);
        for t in [0.0, 1.0, 100.0] {
            assert_eq!(single.target_at(t).unwrap().target.translation, Vector3::new(0.3, 0.4, 0.0));
        }
        let lin = script(Interpolation::Linear);
        assert_abs_diff_eq!(lin.target_at(0.5).unwrap().target.translation.x, 0.5, epsilon = 1e-15);
        assert_eq!(lin.target_at(7.0).unwrap().target.translation.x, 1.0);
        let hold = script(Interpolation::Hold);
        assert_eq!(hold.target_at(0.99).unwrap().target.translation.x, 0.0);
        assert_eq!(hold.target_at(1.0).unwrap().target.translation.x, 1.0);
        let mut empty = single.clone();
        empty.waypoints.clear();
        assert!(matches!(empty.target_at(0.0), Err(Error::EmptyScript)));
        assert!(matches!(Targets::scripted(empty), Err(Error::EmptyScript)));
    }

    #[test]
    fn script_times_must_increase() {
        let mut s = script(Interpolation::Linear);
        s.waypoints[1].time = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn interactive_goal_overrides_script() {
        let inbox = GoalInbox::new();
        let mut targets = Targets::interactive(script(Interpolation::Hold), inbox.clone()).unwrap();
        assert_eq!(targets.goal_at(0.0).unwrap().target.translation.x, 0.0);
        inbox.post(vec![0.5, 0.5]);
        let g = targets.goal_at(0.1).unwrap();
        assert_eq!(g.target.translation, Vector3::new(0.5, 0.5, 0.0));
        // sticky until reset
        assert_eq!(targets.goal_at(0.2).unwrap().target.translation.y, 0.5);
        targets.reset();
        assert_eq!(targets.goal_at(0.2).unwrap().target.translation.y, 0.0);
    }

    #[test]
    fn plant_matches_single_step_and_is_deterministic() {
        let s = JointState {
            position: vec![0.1, -0.2],
            velocity: vec![0.3, 0.0],
            acceleration: vec![0.0, 0.0],
            stamp: 0.0,
        };
        let mut plant = Plant::new(s.clone(), 0.0, 3).unwrap();
        plant.step(&[1.0, -1.0], 0.05);
        assert_eq!(plant.state(), &s.advanced(&[1.0, -1.0], 0.05));
        assert_eq!(plant.measure(), *plant.state());

        let mut still = Plant::new(JointState::at_rest(vec![0.4]), 0.0, 0).unwrap();
        still.step(&[0.0], 0.1);
        assert_eq!(still.state().position, vec![0.4]);

        let mut a = Plant::new(s.clone(), 0.01, 9).unwrap();
        let mut b = Plant::new(s, 0.01, 9).unwrap();
        assert_eq!(a.measure(), b.measure());
        assert_ne!(a.measure().position, a.state().position);
    }

    #[test]
    fn rigid_transform_of_world() {
        let world = fixtures::table_world();
        let pose = Pose {
            rotation: axis_permutation([1, 0, 2], [-1.0, 1.0, 1.0]),
            translation: Vector3::new(0.3, -0.2, 0.1),
        };
        let moved = world.transformed(&pose).unwrap();
        assert_eq!(moved.obstacles.len(), world.obstacles.len());
        let tilted = Pose::from_xyz_rpy([0.0; 3], [0.3, 0.0, 0.0]);
        assert!(world.transformed(&tilted).is_err());
    }
}
