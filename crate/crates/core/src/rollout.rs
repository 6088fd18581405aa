//! Batched rollouts of sampled acceleration sequences.
//!
//! Each particle's `H×d` control matrix is integrated with a lower-triangular
//! time-step matrix rather than a per-step loop: velocities are
//! `θ̇₀ + S·diag(dt)·U` and positions `θ₀ + S·diag(dt)·Θ̇`, with `S` including
//! the diagonal (semi-implicit Euler). Costs are then evaluated per step,
//! discounted, and the last step is replaced by the terminal cost.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::costs::{CostContext, CostStack, StepState};
use crate::error::{Error, Result};
use crate::par::Workers;
use crate::sampling::ControlBatch;

/// Robot joint state at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
    /// Seconds.
    pub stamp: f64,
}

impl JointState {
    pub fn at_rest(position: Vec<f64>) -> Self {
        let d = position.len();
        JointState {
            position,
            velocity: vec![0.0; d],
            acceleration: vec![0.0; d],
            stamp: 0.0,
        }
    }

    pub fn dof(&self) -> usize {
        self.position.len()
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(&self.velocity)
            .chain(&self.acceleration)
            .all(|v| v.is_finite())
    }

    /// One semi-implicit Euler step: velocity first, then position with the new velocity.
    pub fn advanced(&self, accel: &[f64], dt: f64) -> JointState {
        let velocity: Vec<f64> = self.velocity.iter().zip(accel).map(|(v, a)| v + a * dt).collect();
        let position = self.position.iter().zip(&velocity).map(|(p, v)| p + v * dt).collect();
        JointState {
            position,
            velocity,
            acceleration: accel.to_vec(),
            stamp: self.stamp + dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DtRamp {
    #[default]
    Uniform,
    /// First half of the horizon at `dt_base`, the rest at twice that.
    TwoPhase,
    /// Linear from `dt_base` to `2·dt_base`.
    Linear,
}

/// Per-step time increments along the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct DtSchedule {
    dts: Vec<f64>,
    /// `time_to_go[h] = Σ_{k≥h} dt_k`
    time_to_go: Vec<f64>,
}

impl DtSchedule {
    pub fn new(horizon: usize, dt_base: f64, ramp: DtRamp) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::Config(format!("horizon must be at least 2, got {horizon}")));
        }
        if !(dt_base > 0.0) || !dt_base.is_finite() {
            return Err(Error::Config(format!("dt_base must be positive, got {dt_base}")));
        }
        let dts = match ramp {
            DtRamp::Uniform => vec![dt_base; horizon],
            DtRamp::TwoPhase => {
                let first = horizon.div_ceil(2);
                (0..horizon)
                    .map(|h| if h < first { dt_base } else { 2.0 * dt_base })
                    .collect()
            }
            DtRamp::Linear => (0..horizon)
                .map(|h| dt_base * (1.0 + h as f64 / (horizon - 1) as f64))
                .collect(),
        };
        Self::from_dts(dts)
    }

    pub fn from_dts(dts: Vec<f64>) -> Result<Self> {
        if dts.is_empty() || dts.iter().any(|&dt| !(dt > 0.0)) {
            return Err(Error::Config("time steps must be positive".into()));
        }
        if dts.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("time steps must be non-decreasing".into()));
        }
        let mut time_to_go = vec![0.0; dts.len()];
        let mut acc = 0.0;
        for h in (0..dts.len()).rev() {
            acc += dts[h];
            time_to_go[h] = acc;
        }
        Ok(DtSchedule { dts, time_to_go })
    }

    pub fn horizon(&self) -> usize {
        self.dts.len()
    }

    pub fn dts(&self) -> &[f64] {
        &self.dts
    }

    pub fn time_to_go(&self, h: usize) -> f64 {
        self.time_to_go[h]
    }

    /// `S·diag(dt)`: lower triangular, row `h` holds `dt_0..=dt_h`.
    pub fn integration_matrix(&self) -> DMatrix<f64> {
        let n = self.dts.len();
        DMatrix::from_fn(n, n, |i, j| if j <= i { self.dts[j] } else { 0.0 })
    }
}

/// Integrated trajectories for a batch, one `H×d` matrix per particle.
#[derive(Debug, Clone)]
pub struct Trajectories {
    pub positions: Vec<DMatrix<f64>>,
    pub velocities: Vec<DMatrix<f64>>,
    pub accelerations: Vec<DMatrix<f64>>,
}

fn broadcast_rows(row: &[f64], rows: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, row.len(), |_, j| row[j])
}

fn integrate_one(
    x_init: &JointState,
    controls: &DMatrix<f64>,
    integrator: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let h = controls.nrows();
    let vel = broadcast_rows(&x_init.velocity, h) + integrator * controls;
    let pos = broadcast_rows(&x_init.position, h) + integrator * &vel;
    (pos, vel)
}

fn check_batch(x_init: &JointState, controls: &ControlBatch, sched: &DtSchedule) -> Result<()> {
    let d = x_init.dof();
    if x_init.velocity.len() != d {
        return Err(Error::Contract("initial state position/velocity lengths differ".into()));
    }
    for (n, u) in controls.controls.iter().enumerate() {
        if u.nrows() != sched.horizon() || u.ncols() != d {
            return Err(Error::Contract(format!(
                "particle {n} has shape {}x{}, expected {}x{d}",
                u.nrows(),
                u.ncols(),
                sched.horizon()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteControl { particle: n });
        }
    }
    Ok(())
}

/// Integrates every control sequence of the batch from `x_init`.
pub fn integrate(
    x_init: &JointState,
    controls: &ControlBatch,
    sched: &DtSchedule,
    workers: &Workers,
) -> Result<Trajectories> {
    check_batch(x_init, controls, sched)?;
    let integrator = sched.integration_matrix();
    let out = workers.map_indexed(controls.len(), |n| {
        integrate_one(x_init, &controls.controls[n], &integrator)
    });
    let (positions, velocities) = out.into_iter().unzip();
    Ok(Trajectories {
        positions,
        velocities,
        accelerations: controls.controls.clone(),
    })
}

/// Discounting of per-step costs into one total per particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discount {
    pub gamma: f64,
    /// Terminal cost is this multiple of the running cost at the last step.
    pub terminal_weight: f64,
}

impl Default for Discount {
    fn default() -> Self {
        Discount {
            gamma: 0.99,
            terminal_weight: 1.0,
        }
    }
}

impl Discount {
    /// `Σ_{h<H-1} γ^h c_h + γ^{H-1} q̂(c_{H-1})`; `+∞` if any step is non-finite.
    pub fn total(&self, step_costs: &[f64]) -> f64 {
        let last = step_costs.len() - 1;
        let mut total = 0.0;
        let mut g = 1.0;
        for (h, &c) in step_costs.iter().enumerate() {
            if !c.is_finite() {
                return f64::INFINITY;
            }
            let c = if h == last { self.terminal_weight * c } else { c };
            total += g * c;
            g *= self.gamma;
        }
        total
    }
}

/// Everything one optimization iteration produces.
#[derive(Debug, Clone)]
pub struct RolloutBundle {
    pub trajectories: Trajectories,
    /// `N×H` weighted running cost.
    pub step_costs: DMatrix<f64>,
    /// Weighted `N×H` contribution of each cost term, by term name.
    pub term_breakdown: Vec<(String, DMatrix<f64>)>,
    /// Discounted total per particle; `+∞` marks a quarantined particle.
    pub total_per_particle: DVector<f64>,
    /// End-effector position along the horizon for every particle.
    pub ee_paths: Vec<Vec<Vector3<f64>>>,
}

impl RolloutBundle {
    pub fn particles(&self) -> usize {
        self.total_per_particle.len()
    }

    /// Indices of the `k` cheapest finite particles, cheapest first.
    pub fn best_indices(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.particles())
            .filter(|&n| self.total_per_particle[n].is_finite())
            .collect();
        idx.sort_by(|&a, &b| self.total_per_particle[a].total_cmp(&self.total_per_particle[b]));
        idx.truncate(k);
        idx
    }

    pub fn term(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.term_breakdown.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}

struct ParticleResult {
    positions: DMatrix<f64>,
    velocities: DMatrix<f64>,
    step_costs: Vec<f64>,
    /// terms × H
    terms: Vec<Vec<f64>>,
    total: f64,
    ee_path: Vec<Vector3<f64>>,
}

/// Integrates the batch, runs forward kinematics and evaluates the cost stack
/// at every `(particle, step)`.
pub fn evaluate_rollouts(
    x_init: &JointState,
    controls: &ControlBatch,
    ctx: &CostContext<'_>,
    stack: &CostStack,
    discount: &Discount,
    workers: &Workers,
) -> Result<RolloutBundle> {
    if !(0.0..=1.0).contains(&discount.gamma) {
        return Err(Error::Config(format!("discount {} outside [0, 1]", discount.gamma)));
    }
    if x_init.dof() != ctx.chain.dof() {
        return Err(Error::Contract(format!(
            "state has {} joints, chain has {}",
            x_init.dof(),
            ctx.chain.dof()
        )));
    }
    check_batch(x_init, controls, ctx.sched)?;
    let horizon = ctx.sched.horizon();
    let integrator = ctx.sched.integration_matrix();
    let n_terms = stack.len();

    let results = workers.map_indexed(controls.len(), |n| {
        let u = &controls.controls[n];
        let (positions, velocities) = integrate_one(x_init, u, &integrator);
        let mut step_costs = vec![0.0; horizon];
        let mut terms = vec![vec![0.0; horizon]; n_terms];
        let mut ee_path = Vec::with_capacity(horizon);
        let mut q = vec![0.0; positions.ncols()];
        let mut qd = vec![0.0; positions.ncols()];
        let mut qdd = vec![0.0; positions.ncols()];
        for h in 0..horizon {
            for j in 0..q.len() {
                q[j] = positions[(h, j)];
                qd[j] = velocities[(h, j)];
                qdd[j] = u[(h, j)];
            }
            let poses = ctx.chain.fk_unchecked(&q);
            ee_path.push(poses.ee.translation);
            let step = StepState {
                h,
                position: &q,
                velocity: &qd,
                acceleration: &qdd,
                poses: &poses,
            };
            let mut sum = 0.0;
            for (k, term) in stack.iter().enumerate() {
                let c = term.weight() * term.evaluate(ctx, &step);
                terms[k][h] = c;
                sum += c;
            }
            step_costs[h] = sum;
        }
        let total = discount.total(&step_costs);
        ParticleResult {
            positions,
            velocities,
            step_costs,
            terms,
            total,
            ee_path,
        }
    });

    let n = results.len();
    let mut step_costs = DMatrix::zeros(n, horizon);
    let mut breakdown: Vec<(String, DMatrix<f64>)> = stack
        .iter()
        .map(|t| (t.name().to_string(), DMatrix::zeros(n, horizon)))
        .collect();
    let mut totals = DVector::zeros(n);
    let mut positions = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    let mut ee_paths = Vec::with_capacity(n);
    for (i, r) in results.into_iter().enumerate() {
        for h in 0..horizon {
            step_costs[(i, h)] = r.step_costs[h];
            for (k, (_, m)) in breakdown.iter_mut().enumerate() {
                m[(i, h)] = r.terms[k][h];
            }
        }
        if !r.total.is_finite() {
            log::warn!("particle {i} produced a non-finite cost and is excluded from the update");
        }
        totals[i] = r.total;
        positions.push(r.positions);
        velocities.push(r.velocities);
        ee_paths.push(r.ee_path);
    }
    Ok(RolloutBundle {
        trajectories: Trajectories {
            positions,
            velocities,
            accelerations: controls.controls.clone(),
        },
        step_costs,
        term_breakdown: breakdown,
        total_per_particle: totals,
        ee_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn batch(controls: Vec<DMatrix<f64>>) -> ControlBatch {
        ControlBatch {
            controls,
            null_count: 0,
        }
    }

    #[test]
    fn schedules() {
        let u = DtSchedule::new(4, 0.1, DtRamp::Uniform).unwrap();
        assert_eq!(u.dts(), &[0.1, 0.1, 0.1, 0.1]);
        let t = DtSchedule::new(4, 0.1, DtRamp::TwoPhase).unwrap();
        assert_eq!(t.dts(), &[0.1, 0.1, 0.2, 0.2]);
        let l = DtSchedule::new(3, 0.1, DtRamp::Linear).unwrap();
        assert_abs_diff_eq!(l.dts()[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(l.dts()[1], 0.15, epsilon = 1e-15);
        assert_abs_diff_eq!(l.dts()[2], 0.2, epsilon = 1e-15);
        // odd horizon: first ceil(H/2) steps stay at the base
        let t5 = DtSchedule::new(5, 0.1, DtRamp::TwoPhase).unwrap();
        assert_eq!(t5.dts(), &[0.1, 0.1, 0.1, 0.2, 0.2]);
        assert!(DtSchedule::new(1, 0.1, DtRamp::Uniform).is_err());
        assert!(DtSchedule::new(3, 0.0, DtRamp::Uniform).is_err());
        assert!(DtSchedule::from_dts(vec![0.2, 0.1]).is_err());
    }

    #[test]
    fn unit_acceleration_example() {
        let sched = DtSchedule::new(3, 0.1, DtRamp::Uniform).unwrap();
        let x = JointState::at_rest(vec![0.0]);
        let out = integrate(&x, &batch(vec![DMatrix::from_element(3, 1, 1.0)]), &sched, &Workers::sequential())
            .unwrap();
        let v: Vec<f64> = out.velocities[0].iter().copied().collect();
        let p: Vec<f64> = out.positions[0].iter().copied().collect();
        for (a, b) in v.iter().zip([0.1, 0.2, 0.3]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        for (a, b) in p.iter().zip([0.01, 0.03, 0.06]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_acceleration_keeps_velocity() {
        let sched = DtSchedule::new(4, 0.1, DtRamp::TwoPhase).unwrap();
        let mut x = JointState::at_rest(vec![1.0, -1.0]);
        x.velocity = vec![0.5, 2.0];
        let out = integrate(&x, &batch(vec![DMatrix::zeros(4, 2)]), &sched, &Workers::sequential()).unwrap();
        let mut t = 0.0;
        for h in 0..4 {
            t += sched.dts()[h];
            assert_abs_diff_eq!(out.velocities[0][(h, 0)], 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(out.positions[0][(h, 1)], -1.0 + 2.0 * t, epsilon = 1e-12);
        }
    }

    #[test]
    fn non_finite_control_names_particle() {
        let sched = DtSchedule::new(2, 0.1, DtRamp::Uniform).unwrap();
        let x = JointState::at_rest(vec![0.0]);
        let mut bad = DMatrix::zeros(2, 1);
        bad[(1, 0)] = f64::NAN;
        let err = integrate(&x, &batch(vec![DMatrix::zeros(2, 1), bad]), &sched, &Workers::sequential())
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteControl { particle: 1 }));
    }

    #[test]
    fn discounting() {
        let d = Discount { gamma: 1.0, terminal_weight: 1.0 };
        assert_eq!(d.total(&[2.0; 5]), 10.0);
        let d = Discount { gamma: 1.0, terminal_weight: 3.0 };
        assert_eq!(d.total(&[2.0; 5]), 4.0 * 2.0 + 6.0);
        let d = Discount { gamma: 0.0, terminal_weight: 1.0 };
        assert_eq!(d.total(&[2.0, 5.0, 7.0]), 2.0);
        let d = Discount { gamma: 0.5, terminal_weight: 1.0 };
        assert_eq!(d.total(&[1.0, 1.0, 1.0]), 1.75);
        assert_eq!(d.total(&[1.0, f64::NAN, 1.0]), f64::INFINITY);
    }
}
