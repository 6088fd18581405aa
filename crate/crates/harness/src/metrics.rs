//! Summary statistics over an episode log.

use jointmpc::controller::EpisodeLog;
use jointmpc::geometry::orientation_error_percent;
use jointmpc::KinematicChain;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub steps: usize,
    pub median_position_error: f64,
    pub max_position_error: f64,
    pub final_position_error: f64,
    pub median_orientation_error_pct: f64,
    pub final_orientation_error_pct: f64,
    /// First time after which the position error stays below the tolerance.
    pub settle_time: Option<f64>,
    /// Logged joint speeds above the chain's velocity limits.
    pub velocity_violations: usize,
    /// Logged joint speeds above the h = 0 braking envelope (+1e-6).
    pub envelope_violations: usize,
    pub max_envelope_excess: f64,
    pub collisions: usize,
    pub median_latency_ms: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn quat(c: &[f64]) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(c[0], c[1], c[2], c[3]))
}

/// `horizon_time` is `Σ dt` over the planning horizon; with the chain's
/// acceleration limits it gives the braking envelope at the first step.
pub fn metrics_report(
    log: &EpisodeLog,
    chain: &KinematicChain,
    horizon_time: f64,
    settle_tolerance: f64,
) -> Result<MetricsReport, HarnessError> {
    if log.rows.is_empty() {
        return Err(HarnessError::Config("episode log is empty".into()));
    }
    let mut pos_err = Vec::with_capacity(log.rows.len());
    let mut ori_err = Vec::with_capacity(log.rows.len());
    let mut velocity_violations = 0;
    let mut envelope_violations = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for r in &log.rows {
        let goal = Vector3::new(r.goal[0], r.goal[1], r.goal[2]);
        pos_err.push((Vector3::from(r.ee) - goal).norm());
        ori_err.push(orientation_error_percent(&quat(&r.goal[3..]), &quat(&r.ee_quat)));
        for (j, v) in r.velocity.iter().enumerate() {
            if v.abs() > chain.limits.velocity[j] {
                velocity_violations += 1;
            }
            let excess = v.abs() - chain.limits.acceleration[j] * horizon_time;
            max_excess = max_excess.max(excess);
            if excess > 1e-6 {
                envelope_violations += 1;
            }
        }
    }
    let mut settle_time = None;
    for (i, r) in log.rows.iter().enumerate().rev() {
        if pos_err[i] >= settle_tolerance {
            break;
        }
        settle_time = Some(r.t);
    }
    Ok(MetricsReport {
        steps: log.rows.len(),
        median_position_error: median(pos_err.clone()),
        max_position_error: pos_err.iter().copied().fold(0.0, f64::max),
        final_position_error: *pos_err.last().expect("non-empty"),
        median_orientation_error_pct: median(ori_err.clone()),
        final_orientation_error_pct: *ori_err.last().expect("non-empty"),
        settle_time,
        velocity_violations,
        envelope_violations,
        max_envelope_excess: max_excess,
        collisions: log.collisions(),
        median_latency_ms: median(log.rows.iter().map(|r| r.latency_ms).collect()),
    })
}
