//! Serial-chain robot model.
//!
//! Frames are numbered by link: link 0 is the fixed base and link `j + 1` is the
//! frame carried by joint `j`. Capsules and self-collision pairs refer to these
//! link indices, so a chain with `d` joints has `d + 1` links.

use std::path::Path;

use nalgebra::{DMatrix, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{orthonormalize, Capsule, Pose, WorldCapsule};
use crate::par::Workers;

/// Value returned by [`KinematicChain::self_collision_distance`] when the chain
/// declares no pairs to check.
pub const CLEAR_DISTANCE: f64 = -1.0e6;

/// Composed rotations are projected back onto SO(3) after this many products.
const REORTHONORMALIZE_EVERY: usize = 8;

const AXIS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    /// Unit axis in the joint frame.
    pub axis: Vector3<f64>,
    /// Transform from the parent link frame to the joint frame.
    pub origin: Pose,
}

impl Joint {
    fn motion(&self, q: f64) -> Pose {
        match self.kind {
            JointKind::Revolute => Pose {
                rotation: *Rotation3::from_axis_angle(&Unit::new_unchecked(self.axis), q).matrix(),
                translation: Vector3::zeros(),
            },
            JointKind::Prismatic => Pose::from_translation(self.axis * q),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointLimits {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
}

impl JointLimits {
    pub fn range(&self, joint: usize) -> f64 {
        self.upper[joint] - self.lower[joint]
    }
}

/// Which Jacobian rows enter the manipulability measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ManipulabilityRows {
    /// Planar position rows (x, y).
    Xy,
    /// Spatial position rows (x, y, z).
    #[default]
    Xyz,
    /// All six rows; only meaningful for chains with at least six joints.
    Full,
}

impl ManipulabilityRows {
    pub fn rows(self) -> &'static [usize] {
        match self {
            ManipulabilityRows::Xy => &[0, 1],
            ManipulabilityRows::Xyz => &[0, 1, 2],
            ManipulabilityRows::Full => &[0, 1, 2, 3, 4, 5],
        }
    }
}

/// An immutable, validated serial chain.
#[derive(Debug, Clone)]
pub struct KinematicChain {
    pub name: String,
    pub joints: Vec<Joint>,
    /// Tool transform applied after the last link.
    pub ee_offset: Pose,
    pub limits: JointLimits,
    /// Capsules per link, indexed `0..=dof`.
    pub capsules: Vec<Vec<Capsule>>,
    pub self_collision_pairs: Vec<(usize, usize)>,
    pub manipulability_rows: ManipulabilityRows,
}

/// Poses produced by one forward-kinematics evaluation.
#[derive(Debug, Clone)]
pub struct ChainPoses {
    /// World pose of every link, base first.
    pub links: Vec<Pose>,
    /// World pose of each joint frame before its own motion is applied.
    pub joint_frames: Vec<Pose>,
    pub ee: Pose,
}

impl ChainPoses {
    /// All capsules of link `link`, moved into the world frame.
    pub fn world_capsules<'a>(
        &'a self,
        chain: &'a KinematicChain,
        link: usize,
    ) -> impl Iterator<Item = WorldCapsule> + 'a {
        chain.capsules[link].iter().map(move |c| c.transformed(&self.links[link]))
    }
}

impl KinematicChain {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn link_count(&self) -> usize {
        self.joints.len() + 1
    }

    fn check_len(&self, q: &[f64], what: &str) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::Contract(format!(
                "{what} has length {} but chain `{}` has {} joints",
                q.len(),
                self.name,
                self.dof()
            )));
        }
        Ok(())
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Result<ChainPoses> {
        self.check_len(q, "configuration")?;
        Ok(self.fk_unchecked(q))
    }

    pub(crate) fn fk_unchecked(&self, q: &[f64]) -> ChainPoses {
        let mut links = Vec::with_capacity(self.link_count());
        let mut joint_frames = Vec::with_capacity(self.dof());
        let mut current = Pose::identity();
        let mut compositions = 0usize;
        let mut compose = |a: &Pose, b: &Pose| {
            let mut p = a.compose(b);
            compositions += 1;
            if compositions % REORTHONORMALIZE_EVERY == 0 {
                p.rotation = orthonormalize(&p.rotation);
            }
            p
        };
        links.push(current);
        for (joint, &qi) in self.joints.iter().zip(q) {
            let frame = compose(&current, &joint.origin);
            joint_frames.push(frame);
            current = compose(&frame, &joint.motion(qi));
            links.push(current);
        }
        let ee = compose(&current, &self.ee_offset);
        ChainPoses {
            links,
            joint_frames,
            ee,
        }
    }

    /// Forward kinematics for every row of every `H×d` configuration matrix.
    pub fn forward_kinematics_batch(
        &self,
        configurations: &[DMatrix<f64>],
        workers: &Workers,
    ) -> Result<Vec<Vec<ChainPoses>>> {
        for m in configurations {
            if m.ncols() != self.dof() {
                return Err(Error::Contract(format!(
                    "batch has {} columns, chain has {} joints",
                    m.ncols(),
                    self.dof()
                )));
            }
        }
        Ok(workers.map_indexed(configurations.len(), |n| {
            let m = &configurations[n];
            (0..m.nrows())
                .map(|h| {
                    let q: Vec<f64> = m.row(h).iter().copied().collect();
                    self.fk_unchecked(&q)
                })
                .collect()
        }))
    }

    /// Geometric Jacobian at the end effector: linear rows 0..3, angular rows 3..6.
    pub fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(q, "configuration")?;
        Ok(self.jacobian_from_poses(&self.fk_unchecked(q)))
    }

    pub fn jacobian_from_poses(&self, poses: &ChainPoses) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(6, self.dof());
        let p_ee = poses.ee.translation;
        for (i, (joint, frame)) in self.joints.iter().zip(&poses.joint_frames).enumerate() {
            let z = frame.rotation * joint.axis;
            match joint.kind {
                JointKind::Revolute => {
                    let lin = z.cross(&(p_ee - frame.translation));
                    jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
                    jac.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
                }
                JointKind::Prismatic => {
                    jac.fixed_view_mut::<3, 1>(0, i).copy_from(&z);
                }
            }
        }
        jac
    }

    /// `J̇(q)·q̇` by a central difference of the Jacobian along `q̇`.
    pub fn jacobian_dot_times_qdot(&self, q: &[f64], qd: &[f64]) -> Result<nalgebra::Vector6<f64>> {
        self.check_len(q, "configuration")?;
        self.check_len(qd, "velocity")?;
        const STEP: f64 = 1e-6;
        let shifted = |sign: f64| -> Vec<f64> {
            q.iter().zip(qd).map(|(a, b)| a + sign * STEP * b).collect()
        };
        let jp = self.jacobian(&shifted(1.0))?;
        let jm = self.jacobian(&shifted(-1.0))?;
        let jdot = (jp - jm) / (2.0 * STEP);
        let out = jdot * nalgebra::DVector::from_column_slice(qd);
        Ok(nalgebra::Vector6::from_iterator(out.iter().copied()))
    }

    /// Yoshikawa manipulability `√det(J Jᵀ)` over the configured rows.
    pub fn manipulability(&self, q: &[f64]) -> Result<f64> {
        self.check_len(q, "configuration")?;
        Ok(self.manipulability_from_jacobian(&self.jacobian(q)?))
    }

    pub fn manipulability_from_jacobian(&self, jac: &DMatrix<f64>) -> f64 {
        let sub = jac.select_rows(self.manipulability_rows.rows());
        gram_root_determinant(&sub)
    }

    /// Largest pairwise capsule penetration (positive means overlap).
    pub fn self_collision_distance(&self, q: &[f64]) -> Result<f64> {
        self.check_len(q, "configuration")?;
        Ok(self.self_collision_from_poses(&self.fk_unchecked(q)))
    }

    pub fn self_collision_from_poses(&self, poses: &ChainPoses) -> f64 {
        let mut worst = CLEAR_DISTANCE;
        for &(i, j) in &self.self_collision_pairs {
            for a in poses.world_capsules(self, i) {
                for b in poses.world_capsules(self, j) {
                    worst = worst.max(a.penetration(&b));
                }
            }
        }
        worst
    }

    /// Uniform random configuration within the position limits.
    pub fn sample_configuration<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dof())
            .map(|j| rng.random_range(self.limits.lower[j]..self.limits.upper[j]))
            .collect()
    }

    /// Middle of every joint range.
    pub fn mid_configuration(&self) -> Vec<f64> {
        (0..self.dof())
            .map(|j| 0.5 * (self.limits.lower[j] + self.limits.upper[j]))
            .collect()
    }

    /// Returns a copy whose first joint origin is pre-multiplied by `base`.
    pub fn with_base_transform(&self, base: &Pose) -> KinematicChain {
        let mut out = self.clone();
        if let Some(first) = out.joints.first_mut() {
            first.origin = base.compose(&first.origin);
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<KinematicChain> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<KinematicChain> {
        let file: ChainFile = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        file.validate()
    }
}

fn parse_err(message: String) -> Error {
    Error::Parse {
        kind: "chain",
        message,
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainFile {
    #[serde(default)]
    name: Option<String>,
    joints: Vec<serde_json::Value>,
    limits: LimitsFile,
    #[serde(default)]
    capsules: Vec<CapsuleFile>,
    #[serde(default)]
    self_collision_pairs: Vec<[usize; 2]>,
    #[serde(default)]
    ee_offset: Option<OriginFile>,
    #[serde(default)]
    manipulability_rows: ManipulabilityRows,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(rename = "type")]
    kind: JointKind,
    axis: [f64; 3],
    #[serde(default)]
    origin: OriginFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OriginFile {
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitsFile {
    position: Vec<[f64; 2]>,
    velocity: Vec<f64>,
    acceleration: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapsuleFile {
    link: usize,
    p0: [f64; 3],
    p1: [f64; 3],
    radius: f64,
}

impl ChainFile {
    fn validate(self) -> Result<KinematicChain> {
        let mut joints = Vec::with_capacity(self.joints.len());
        for (i, raw) in self.joints.into_iter().enumerate() {
            let jf: JointFile =
                serde_json::from_value(raw).map_err(|e| parse_err(format!("joint {i}: {e}")))?;
            let name = jf.name.unwrap_or_else(|| format!("joint{i}"));
            let axis = Vector3::from(jf.axis);
            if !axis.iter().all(|v| v.is_finite()) || (axis.norm() - 1.0).abs() > AXIS_TOLERANCE {
                return Err(parse_err(format!(
                    "joint {i} ({name}): axis {:?} is not unit length",
                    jf.axis
                )));
            }
            joints.push(Joint {
                name,
                kind: jf.kind,
                axis,
                origin: Pose::from_xyz_rpy(jf.origin.xyz, jf.origin.rpy),
            });
        }
        let d = joints.len();
        if d == 0 {
            return Err(parse_err("chain has no joints".into()));
        }
        let lim = self.limits;
        for (what, len) in [
            ("limits.position", lim.position.len()),
            ("limits.velocity", lim.velocity.len()),
            ("limits.acceleration", lim.acceleration.len()),
        ] {
            if len != d {
                return Err(parse_err(format!("{what} has {len} entries for {d} joints")));
            }
        }
        for (i, [lo, hi]) in lim.position.iter().copied().enumerate() {
            if !(lo < hi) {
                return Err(parse_err(format!(
                    "joint {i} ({}): lower limit {lo} is not below upper limit {hi}",
                    joints[i].name
                )));
            }
        }
        for (i, (&v, &a)) in lim.velocity.iter().zip(&lim.acceleration).enumerate() {
            if !(v > 0.0) || !(a > 0.0) {
                return Err(parse_err(format!(
                    "joint {i} ({}): velocity and acceleration limits must be positive",
                    joints[i].name
                )));
            }
        }
        let mut capsules = vec![Vec::new(); d + 1];
        for (k, c) in self.capsules.into_iter().enumerate() {
            if c.link > d {
                return Err(parse_err(format!("capsule {k}: link {} out of range 0..={d}", c.link)));
            }
            if !(c.radius > 0.0) {
                return Err(parse_err(format!("capsule {k}: radius must be positive")));
            }
            capsules[c.link].push(Capsule {
                p0: c.p0,
                p1: c.p1,
                radius: c.radius,
            });
        }
        let mut pairs = Vec::with_capacity(self.self_collision_pairs.len());
        for [a, b] in self.self_collision_pairs {
            if a > d || b > d || a == b {
                return Err(parse_err(format!("self-collision pair ({a}, {b}) is invalid")));
            }
            pairs.push((a, b));
        }
        let ee_offset = self
            .ee_offset
            .map_or_else(Pose::identity, |o| Pose::from_xyz_rpy(o.xyz, o.rpy));
        Ok(KinematicChain {
            name: self.name.unwrap_or_else(|| "chain".into()),
            joints,
            ee_offset,
            limits: JointLimits {
                lower: lim.position.iter().map(|p| p[0]).collect(),
                upper: lim.position.iter().map(|p| p[1]).collect(),
                velocity: lim.velocity,
                acceleration: lim.acceleration,
            },
            capsules,
            self_collision_pairs: pairs,
            manipulability_rows: self.manipulability_rows,
        })
    }
}

/// `√det(A Aᵀ)` for a wide matrix `A`, as the root of the sum of squared
/// maximal minors (Cauchy–Binet). Unlike forming `A Aᵀ` this keeps full
/// relative precision near singular configurations.
fn gram_root_determinant(a: &DMatrix<f64>) -> f64 {
    let (k, n) = a.shape();
    if k > n {
        return 0.0;
    }
    let mut cols: Vec<usize> = (0..k).collect();
    let mut sum = 0.0;
    loop {
        let minor = a.select_columns(&cols).determinant();
        sum += minor * minor;
        // next k-combination of 0..n in lexicographic order
        let Some(i) = (0..k).rev().find(|&i| cols[i] < n - k + i) else {
            break;
        };
        cols[i] += 1;
        for j in i + 1..k {
            cols[j] = cols[j - 1] + 1;
        }
    }
    sum.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};

    fn planar2() -> KinematicChain {
        fixtures::planar2()
    }

    #[test]
    fn planar_fk_examples() {
        let c = planar2();
        let t = |q: [f64; 2]| c.forward_kinematics(&q).unwrap().ee.translation;
        assert_abs_diff_eq!(t([0.0, 0.0]), Vector3::new(2.0, 0.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(t([FRAC_PI_2, 0.0]), Vector3::new(0.0, 2.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(t([FRAC_PI_2, -FRAC_PI_2]), Vector3::new(1.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let c = planar2();
        assert!(matches!(c.forward_kinematics(&[0.0]), Err(Error::Contract(_))));
        assert!(matches!(c.jacobian(&[0.0, 0.0, 0.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn planar_jacobian_at_zero() {
        let j = planar2().jacobian(&[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(j[(0, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(j[(0, 1)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(j[(1, 0)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(j[(1, 1)], 1.0, epsilon = 1e-12);
        // angular z rows
        assert_abs_diff_eq!(j[(5, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn analytic_planar_jacobian() {
        let c = planar2();
        for &(q1, q2) in &[(0.3, -1.2), (2.0, 0.7), (-1.0, 2.5)] {
            let j = c.jacobian(&[q1, q2]).unwrap();
            let (s1, c1, s12, c12) = (f64::sin(q1), f64::cos(q1), f64::sin(q1 + q2), f64::cos(q1 + q2));
            assert_abs_diff_eq!(j[(0, 0)], -s1 - s12, epsilon = 1e-12);
            assert_abs_diff_eq!(j[(0, 1)], -s12, epsilon = 1e-12);
            assert_abs_diff_eq!(j[(1, 0)], c1 + c12, epsilon = 1e-12);
            assert_abs_diff_eq!(j[(1, 1)], c12, epsilon = 1e-12);
        }
    }

    #[test]
    fn prismatic_column() {
        let c = KinematicChain::from_json(
            r#"{"joints":[{"type":"prismatic","axis":[0,0,1]}],
                "limits":{"position":[[-1,1]],"velocity":[1],"acceleration":[1]}}"#,
        )
        .unwrap();
        let j = c.jacobian(&[0.4]).unwrap();
        assert_eq!(j.column(0).as_slice(), &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn jdot_qdot_single_link() {
        let c = KinematicChain::from_json(
            r#"{"joints":[{"type":"revolute","axis":[0,0,1]}], "ee_offset":{"xyz":[1,0,0]},
                "limits":{"position":[[-3,3]],"velocity":[1],"acceleration":[1]}}"#,
        )
        .unwrap();
        for &(q, qd) in &[(0.0, 1.0), (0.7, -2.0), (2.1, 0.5)] {
            let out = c.jacobian_dot_times_qdot(&[q], &[qd]).unwrap();
            let expected = [-qd * qd * f64::cos(q), -qd * qd * f64::sin(q)];
            for k in 0..2 {
                let rel = (out[k] - expected[k]).abs() / expected[k].abs().max(1e-3);
                assert!(rel < 1e-4, "component {k}: {} vs {}", out[k], expected[k]);
            }
            assert!(out.fixed_rows::<3>(3).norm() < 1e-6);
        }
        assert_eq!(c.jacobian_dot_times_qdot(&[0.4], &[0.0]).unwrap().norm(), 0.0);
    }

    #[test]
    fn jdot_qdot_is_quadratic_in_qdot() {
        let c = fixtures::arm7();
        let q = c.mid_configuration();
        let qd = [0.3, -0.2, 0.1, 0.4, -0.5, 0.2, 0.1];
        let qd2: Vec<f64> = qd.iter().map(|v| 2.0 * v).collect();
        let a = c.jacobian_dot_times_qdot(&q, &qd).unwrap();
        let b = c.jacobian_dot_times_qdot(&q, &qd2).unwrap();
        assert!((b - 4.0 * a).norm() < 1e-5 * a.norm().max(1.0));
    }

    #[test]
    fn planar_manipulability() {
        let c = planar2();
        let m = |q2: f64| c.manipulability(&[0.4, q2]).unwrap();
        assert_abs_diff_eq!(m(FRAC_PI_2), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m(0.0), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m(FRAC_PI_6), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn manipulability_ignores_base_rotation() {
        let c = fixtures::arm7();
        let rotated = c.with_base_transform(&Pose::from_xyz_rpy([0.2, -0.1, 0.3], [0.4, -0.7, 1.3]));
        let q = [0.1, -0.5, 0.3, -2.0, 0.2, 1.8, 0.5];
        assert_abs_diff_eq!(
            c.manipulability(&q).unwrap(),
            rotated.manipulability(&q).unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn rotations_stay_orthonormal_on_long_chains() {
        let joint = r#"{"type":"revolute","axis":[0.6,0,0.8],"origin":{"xyz":[0.1,0,0],"rpy":[0.3,0.2,0.1]}}"#;
        let n = 40;
        let text = format!(
            r#"{{"joints":[{}],"limits":{{"position":[{}],"velocity":[{}],"acceleration":[{}]}}}}"#,
            vec![joint; n].join(","),
            vec!["[-3,3]"; n].join(","),
            vec!["1"; n].join(","),
            vec!["1"; n].join(","),
        );
        let c = KinematicChain::from_json(&text).unwrap();
        let q: Vec<f64> = (0..n).map(|i| 0.37 * i as f64).collect();
        let poses = c.forward_kinematics(&q).unwrap();
        for p in poses.links.iter().chain(std::iter::once(&poses.ee)) {
            assert!(p.orthonormality_error() < 1e-9);
            assert!((p.rotation.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn self_collision_pair_order_is_irrelevant() {
        let c = fixtures::arm7();
        let mut swapped = c.clone();
        swapped.self_collision_pairs = c.self_collision_pairs.iter().map(|&(a, b)| (b, a)).collect();
        swapped.self_collision_pairs.reverse();
        let q = [0.0, 0.3, 0.0, -2.5, 0.0, 3.0, 0.7];
        assert_eq!(c.self_collision_distance(&q).unwrap(), swapped.self_collision_distance(&q).unwrap());
    }

    #[test]
    fn empty_pair_list_gives_sentinel() {
        let mut c = planar2();
        c.self_collision_pairs.clear();
        assert_eq!(c.self_collision_distance(&[0.0, 0.0]).unwrap(), CLEAR_DISTANCE);
    }

    #[test]
    fn folded_planar_arm_collides() {
        let c = planar2();
        assert!(c.self_collision_distance(&[0.0, 0.0]).unwrap() < 0.0);
        assert!(c.self_collision_distance(&[0.0, PI - 0.05]).unwrap() > 0.0);
    }

    #[test]
    fn load_errors_name_the_joint() {
        let bad = r#"{"joints":[{"type":"revolute","axis":[0,0,1]},{"type":"revolute","axis":[0,0,1]}],
            "limits":{"position":[[-1,1],[1,0.5]],"velocity":[1,1],"acceleration":[1,1]}}"#;
        let err = KinematicChain::from_json(bad).unwrap_err().to_string();
        assert!(err.contains("joint 1"), "{err}");

        let bad_axis = r#"{"joints":[{"type":"revolute","axis":[0,0.5,1]}],
            "limits":{"position":[[-1,1]],"velocity":[1],"acceleration":[1]}}"#;
        let err = KinematicChain::from_json(bad_axis).unwrap_err().to_string();
        assert!(err.contains("joint 0") && err.contains("unit"), "{err}");

        let missing = r#"{"joints":[{"type":"revolute"}],
            "limits":{"position":[[-1,1]],"velocity":[1],"acceleration":[1]}}"#;
        let err = KinematicChain::from_json(missing).unwrap_err().to_string();
        assert!(err.contains("joint 0") && err.contains("axis"), "{err}");

        let bad_radius = r#"{"joints":[{"type":"revolute","axis":[0,0,1]}],
            "limits":{"position":[[-1,1]],"velocity":[1],"acceleration":[1]},
            "capsules":[{"link":1,"p0":[0,0,0],"p1":[1,0,0],"radius":0}]}"#;
        assert!(KinematicChain::from_json(bad_radius).is_err());
    }

    #[test]
    fn bundled_fixtures_load() {
        assert_eq!(fixtures::planar2().dof(), 2);
        assert_eq!(fixtures::planar_holonomic().dof(), 2);
        assert_eq!(fixtures::arm7().dof(), 7);
    }
}
