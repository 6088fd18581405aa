//! The receding-horizon loop: shift the plan, sample around it, roll out,
//! update the distribution, and execute the first command.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::{CollisionProvider, CostConfig, CostContext, CostStack, GoalSpec, StepState, TERM_NAMES};
use crate::error::{Error, Result};
use crate::kinematics::KinematicChain;
use crate::par::Workers;
use crate::policy::{next_command, shift, update_distribution, PolicyConfig, PolicyParams, UpdateConfig};
use crate::rollout::{evaluate_rollouts, Discount, DtRamp, DtSchedule, JointState, RolloutBundle};
use crate::sampling::{ControlSampler, SamplingConfig};
use crate::simworld::{Plant, Targets, WorldModel};

/// `rollout` section of an experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub particles: usize,
    /// Seconds.
    pub dt_base: f64,
    pub dt_ramp: DtRamp,
    pub gamma: f64,
    pub terminal_weight: f64,
    /// Rollout threads; 0 uses every core, 1 runs on the control thread.
    pub workers: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            horizon: 30,
            particles: 200,
            dt_base: 0.05,
            dt_ramp: DtRamp::Uniform,
            gamma: 0.99,
            terminal_weight: 1.0,
            workers: 0,
        }
    }
}

impl RolloutConfig {
    pub fn schedule(&self) -> Result<DtSchedule> {
        DtSchedule::new(self.horizon, self.dt_base, self.dt_ramp)
    }

    pub fn discount(&self) -> Discount {
        Discount {
            gamma: self.gamma,
            terminal_weight: self.terminal_weight,
        }
    }
}

/// `controller` section of an experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// Seconds between commands.
    pub control_period: f64,
    /// Seconds; iterations that take longer are logged as overruns.
    pub latency_budget: f64,
    /// Weight of the raw measurement in the state filter.
    pub filter_lambda: f64,
    /// Rollouts kept for visualization.
    pub top_k: usize,
    /// Write measured latency to the episode log; when off the column is 0
    /// so that logs of identical runs compare equal byte for byte.
    pub record_latency: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            control_period: 0.05,
            latency_budget: 0.05,
            filter_lambda: 0.3,
            top_k: 5,
            record_latency: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub sampling: SamplingConfig,
    pub rollout: RolloutConfig,
    pub costs: CostConfig,
    pub policy: PolicyConfig,
    pub controller: LoopConfig,
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.controller.control_period > 0.0) {
            return Err(Error::Config("control_period must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.controller.filter_lambda) {
            return Err(Error::Config("filter_lambda must lie in [0, 1]".into()));
        }
        if self.rollout.horizon < 2 {
            return Err(Error::Config("horizon must be at least 2".into()));
        }
        if self.policy.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.rollout.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.rollout.gamma)));
        }
        if !(self.policy.sigma0 > 0.0 && self.policy.sigma_min > 0.0) {
            return Err(Error::Config("sigma0 and sigma_min must be positive".into()));
        }
        self.costs.validate()
    }
}

/// Exponential-moving-average state estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub lambda: f64,
    pub last_command: Vec<f64>,
    pub last_estimate: Option<JointState>,
}

impl FilterState {
    pub fn new(lambda: f64, dof: usize) -> Self {
        FilterState {
            lambda,
            last_command: vec![0.0; dof],
            last_estimate: None,
        }
    }
}

/// Blends the model prediction (previous estimate driven by the previous
/// command for `dt`) with the raw measurement.
pub fn filter_state(raw: &JointState, filt: &FilterState, dt: f64) -> JointState {
    let Some(prev) = &filt.last_estimate else {
        return JointState {
            acceleration: filt.last_command.clone(),
            ..raw.clone()
        };
    };
    let pred = prev.advanced(&filt.last_command, dt);
    let l = filt.lambda;
    let blend = |p: &[f64], r: &[f64]| -> Vec<f64> { p.iter().zip(r).map(|(p, r)| (1.0 - l) * p + l * r).collect() };
    JointState {
        position: blend(&pred.position, &raw.position),
        velocity: blend(&pred.velocity, &raw.velocity),
        acceleration: filt.last_command.clone(),
        stamp: raw.stamp,
    }
}

/// Per-step record of what the optimizer did.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub iterations: usize,
    pub best_cost: f64,
    pub mean_cost: f64,
    pub sample_ms: f64,
    pub rollout_ms: f64,
    pub update_ms: f64,
    pub latency_ms: f64,
    pub overrun: bool,
    /// Iterations whose batch carried no cost signal (all totals equal).
    pub skipped_updates: usize,
    /// Set when the optimizer failed and a fallback command was issued.
    pub fallback: Option<String>,
    /// End-effector paths of the cheapest particles, cheapest first.
    pub top_rollouts: Vec<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub command: Vec<f64>,
    /// The filtered state the plan was computed from.
    pub estimate: JointState,
    pub diagnostics: Diagnostics,
}

pub struct Controller {
    chain: KinematicChain,
    world: WorldModel,
    config: ControllerConfig,
    stack: CostStack,
    sched: DtSchedule,
    discount: Discount,
    sampler: ControlSampler,
    update: UpdateConfig,
    policy: PolicyParams,
    workers: Workers,
    rng: ChaCha8Rng,
    filter: FilterState,
    failures: usize,
    seed: u64,
}

impl Controller {
    /// Builds a controller, resolving the self-collision provider from the
    /// cost configuration.
    pub fn new(chain: KinematicChain, world: WorldModel, config: ControllerConfig, seed: u64) -> Result<Self> {
        let provider = config.costs.provider(&chain);
        Self::with_provider(chain, world, config, provider, seed)
    }

    pub fn with_provider(
        chain: KinematicChain,
        world: WorldModel,
        config: ControllerConfig,
        provider: CollisionProvider,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let stack = CostStack::with_provider(&config.costs, provider)?;
        Self::with_stack(chain, world, config, stack, seed)
    }

    /// Uses a caller-assembled cost stack instead of the configured terms.
    pub fn with_stack(
        chain: KinematicChain,
        world: WorldModel,
        config: ControllerConfig,
        stack: CostStack,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let dof = chain.dof();
        let r = &config.rollout;
        let sched = r.schedule()?;
        let sampler = ControlSampler::new(config.sampling.clone(), r.particles, r.horizon, dof, seed)?;
        let update = config.policy.update_config(dof);
        update.validate()?;
        let policy = PolicyParams::new(r.horizon, dof, update.initial_variance, config.policy.mode);
        Ok(Controller {
            workers: Workers::new(r.workers)?,
            discount: r.discount(),
            filter: FilterState::new(config.controller.filter_lambda, dof),
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9)),
            chain,
            world,
            stack,
            sched,
            sampler,
            update,
            policy,
            failures: 0,
            seed,
            config,
        })
    }

    pub fn chain(&self) -> &KinematicChain {
        &self.chain
    }

    pub fn world(&self) -> &WorldModel {
        &self.world
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn policy(&self) -> &PolicyParams {
        &self.policy
    }

    pub fn schedule(&self) -> &DtSchedule {
        &self.sched
    }

    pub fn stack(&self) -> &CostStack {
        &self.stack
    }

    /// Forgets the plan, the filter and any failure streak.
    pub fn reset(&mut self) -> Result<()> {
        let r = &self.config.rollout;
        let dof = self.chain.dof();
        self.sampler = ControlSampler::new(self.config.sampling.clone(), r.particles, r.horizon, dof, self.seed)?;
        self.policy = PolicyParams::new(r.horizon, dof, self.update.initial_variance, self.config.policy.mode);
        self.filter = FilterState::new(self.config.controller.filter_lambda, dof);
        self.rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(0x9e37_79b9));
        self.failures = 0;
        Ok(())
    }

    /// Weighted running cost of a single state, total and per term in
    /// [`TERM_NAMES`] order (absent terms are 0).
    pub fn instant_costs(&self, state: &JointState, goal: &GoalSpec) -> Result<(f64, [f64; 6])> {
        let poses = self.chain.forward_kinematics(&state.position)?;
        let ctx = CostContext {
            chain: &self.chain,
            goal,
            world: &self.world,
            sched: &self.sched,
        };
        let step = StepState {
            h: 0,
            position: &state.position,
            velocity: &state.velocity,
            acceleration: &state.acceleration,
            poses: &poses,
        };
        let mut terms = [0.0; 6];
        let mut total = 0.0;
        for term in self.stack.iter() {
            let c = term.weight() * term.evaluate(&ctx, &step);
            if let Some(k) = TERM_NAMES.iter().position(|n| *n == term.name()) {
                terms[k] += c;
            }
            total += c;
        }
        Ok((total, terms))
    }

    fn optimize(&mut self, state: &JointState, goal: &GoalSpec, diag: &mut Diagnostics) -> Result<RolloutBundle> {
        let ctx = CostContext {
            chain: &self.chain,
            goal,
            world: &self.world,
            sched: &self.sched,
        };
        let mut last = None;
        for _ in 0..self.config.policy.iterations {
            let t0 = Instant::now();
            let batch = self.sampler.sample(&self.policy)?;
            let t1 = Instant::now();
            let bundle = evaluate_rollouts(state, &batch, &ctx, &self.stack, &self.discount, &self.workers)?;
            let t2 = Instant::now();
            let totals = &bundle.total_per_particle;
            let finite = totals.iter().filter(|c| c.is_finite());
            let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
            if lo == hi {
                diag.skipped_updates += 1;
            } else {
                self.policy = update_distribution(&self.policy, &batch, totals, &self.update)?;
            }
            let t3 = Instant::now();
            diag.sample_ms += ms(t1 - t0);
            diag.rollout_ms += ms(t2 - t1);
            diag.update_ms += ms(t3 - t2);
            diag.iterations += 1;
            last = Some(bundle);
        }
        Ok(last.expect("at least one iteration"))
    }

    /// One control cycle on a measured state.
    pub fn control_step(&mut self, measured: &JointState, goal: &GoalSpec) -> Result<StepOutput> {
        if measured.dof() != self.chain.dof() {
            return Err(Error::Contract(format!(
                "state has {} joints, chain has {}",
                measured.dof(),
                self.chain.dof()
            )));
        }
        let start = Instant::now();
        let estimate = filter_state(measured, &self.filter, self.config.controller.control_period);
        self.policy = shift(&self.policy, &self.update.default_tail, self.update.initial_variance);
        let mut diag = Diagnostics::default();
        let command = match self.optimize(&estimate, goal, &mut diag) {
            Ok(bundle) => {
                self.failures = 0;
                let finite: Vec<f64> = bundle.total_per_particle.iter().copied().filter(|c| c.is_finite()).collect();
                diag.best_cost = finite.iter().copied().fold(f64::INFINITY, f64::min);
                diag.mean_cost = DVector::from_vec(finite).mean();
                diag.top_rollouts = bundle
                    .best_indices(self.config.controller.top_k)
                    .into_iter()
                    .map(|n| bundle.ee_paths[n].iter().map(|p| [p.x, p.y, p.z]).collect())
                    .collect();
                next_command(&self.policy, self.config.policy.command_mode, &mut self.rng)
            }
            Err(e) => {
                self.failures += 1;
                let (command, what) = if self.failures == 1 {
                    (self.filter.last_command.clone(), "reissued previous command")
                } else {
                    (vec![0.0; self.chain.dof()], "zero-acceleration command")
                };
                log::warn!("optimization failed ({e}); {what}");
                diag.fallback = Some(format!("{e}; {what}"));
                command
            }
        };
        diag.latency_ms = ms(start.elapsed());
        diag.overrun = diag.latency_ms > self.config.controller.latency_budget * 1e3;
        if diag.overrun {
            log::debug!("control step overran its budget: {:.2} ms", diag.latency_ms);
        }
        self.filter.last_command = command.clone();
        self.filter.last_estimate = Some(estimate.clone());
        Ok(StepOutput {
            command,
            estimate,
            diagnostics: diag,
        })
    }
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// One logged control cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub t: f64,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub command: Vec<f64>,
    /// `x, y, z, qw, qx, qy, qz`.
    pub goal: [f64; 7],
    pub cost_total: f64,
    /// Per term in [`TERM_NAMES`] order.
    pub costs: [f64; 6],
    pub collision: bool,
    pub latency_ms: f64,
    pub ee: [f64; 3],
    /// End-effector orientation `qw, qx, qy, qz`.
    pub ee_quat: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub dof: usize,
    pub rows: Vec<EpisodeRow>,
    /// State after the last executed command.
    pub final_state: Option<JointState>,
    pub final_collision: bool,
    /// Reason the episode stopped early.
    pub aborted: Option<String>,
}

impl EpisodeLog {
    pub fn new(dof: usize) -> Self {
        EpisodeLog {
            dof,
            rows: Vec::new(),
            final_state: None,
            final_collision: false,
            aborted: None,
        }
    }

    pub fn header(dof: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for prefix in ["theta", "theta_dot", "u"] {
            h.extend((0..dof).map(|j| format!("{prefix}_{j}")));
        }
        h.extend(["x", "y", "z", "qw", "qx", "qy", "qz"].map(|s| format!("goal_{s}")));
        h.push("cost_total".into());
        h.extend(TERM_NAMES.map(|s| format!("cost_{s}")));
        h.push("collision".into());
        h.push("latency_ms".into());
        h.extend(["x", "y", "z", "qw", "qx", "qy", "qz"].map(|s| format!("ee_{s}")));
        h
    }

    pub fn collisions(&self) -> usize {
        self.rows.iter().filter(|r| r.collision).count() + usize::from(self.final_collision)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(self.dof)).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec: Vec<String> = vec![r.t.to_string()];
            for v in r.position.iter().chain(&r.velocity).chain(&r.command).chain(&r.goal) {
                rec.push(v.to_string());
            }
            rec.push(r.cost_total.to_string());
            rec.extend(r.costs.iter().map(|c| c.to_string()));
            rec.push(u8::from(r.collision).to_string());
            rec.push(r.latency_ms.to_string());
            rec.extend(r.ee.iter().chain(&r.ee_quat).map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Config(format!("csv: {e}")))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// What one [`Episode::step`] produced.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub row: EpisodeRow,
    pub diagnostics: Diagnostics,
}

/// Controller, plant and goal source stepped together.
pub struct Episode {
    controller: Controller,
    plant: Plant,
    targets: Targets,
    log: EpisodeLog,
    step: usize,
}

impl Episode {
    pub fn new(controller: Controller, plant: Plant, targets: Targets) -> Self {
        let dof = controller.chain().dof();
        Episode {
            controller,
            plant,
            targets,
            log: EpisodeLog::new(dof),
            step: 0,
        }
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    pub fn targets_mut(&mut self) -> &mut Targets {
        &mut self.targets
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn into_log(self) -> EpisodeLog {
        self.log
    }

    /// Restarts from `initial` with a fresh plan and an empty log.
    pub fn reset(&mut self, initial: JointState, noise_sigma: f64, seed: u64) -> Result<()> {
        self.controller.reset()?;
        self.plant = Plant::new(initial, noise_sigma, seed)?;
        self.targets.reset();
        self.log = EpisodeLog::new(self.controller.chain().dof());
        self.step = 0;
        Ok(())
    }

    /// Runs one control cycle and advances the plant by one period.
    pub fn step(&mut self) -> Result<StepReport> {
        if let Some(reason) = &self.log.aborted {
            return Err(Error::Contract(format!("episode already aborted: {reason}")));
        }
        let dt = self.controller.config().controller.control_period;
        let t = self.step as f64 * dt;
        let goal = self.targets.goal_at(t)?;
        let truth = self.plant.state().clone();
        let measured = self.plant.measure();
        let out = self.controller.control_step(&measured, &goal)?;
        let chain = self.controller.chain();
        let poses = chain.forward_kinematics(&truth.position)?;
        let collision = self.controller.world().collision_query(chain, &poses).is_some();
        let (cost_total, costs) = self.controller.instant_costs(&truth, &goal)?;
        let gq = goal.target.quaternion();
        let eq = poses.ee.quaternion();
        let gt = goal.target.translation;
        let ee = poses.ee.translation;
        let record_latency = self.controller.config().controller.record_latency;
        let row = EpisodeRow {
            t,
            position: truth.position.clone(),
            velocity: truth.velocity.clone(),
            command: out.command.clone(),
            goal: [gt.x, gt.y, gt.z, gq.w, gq.i, gq.j, gq.k],
            cost_total,
            costs,
            collision,
            latency_ms: if record_latency { out.diagnostics.latency_ms } else { 0.0 },
            ee: [ee.x, ee.y, ee.z],
            ee_quat: [eq.w, eq.i, eq.j, eq.k],
        };
        self.log.rows.push(row.clone());
        self.step += 1;
        let next = self.plant.step(&out.command, dt).clone();
        if !next.is_finite() {
            let err = Error::Diverged { step: self.step };
            log::warn!("{err}");
            self.log.aborted = Some(err.to_string());
            return Err(err);
        }
        let chain = self.controller.chain();
        let final_poses = chain.forward_kinematics(&next.position)?;
        self.log.final_collision = self.controller.world().collision_query(chain, &final_poses).is_some();
        self.log.final_state = Some(next);
        Ok(StepReport {
            row,
            diagnostics: out.diagnostics,
        })
    }
}

/// Alternates control and simulation for `steps` cycles. A diverging plant
/// ends the episode early; the returned log then carries the reason.
pub fn run_episode(controller: Controller, plant: Plant, targets: Targets, steps: usize) -> Result<EpisodeLog> {
    let mut episode = Episode::new(controller, plant, targets);
    for _ in 0..steps {
        match episode.step() {
            Ok(_) => {}
            Err(Error::Diverged { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(episode.into_log())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::GoalMode;
    use crate::fixtures;
    use crate::simworld::TargetScript;
    use nalgebra::Vector3;

    fn small_config() -> ControllerConfig {
        ControllerConfig {
            rollout: RolloutConfig {
                horizon: 10,
                particles: 32,
                workers: 1,
                ..RolloutConfig::default()
            },
            ..ControllerConfig::default()
        }
    }

    #[test]
    fn filter_examples() {
        let raw = JointState {
            position: vec![0.0],
            velocity: vec![0.0],
            acceleration: vec![0.0],
            stamp: 0.1,
        };
        let prev = JointState {
            position: vec![0.0],
            velocity: vec![1.0],
            acceleration: vec![0.0],
            stamp: 0.0,
        };
        let mut f = FilterState {
            lambda: 1.0,
            last_command: vec![0.0],
            last_estimate: Some(prev.clone()),
        };
        assert_eq!(filter_state(&raw, &f, 0.1).position, raw.position);
        f.lambda = 0.0;
        let pred = prev.advanced(&[0.0], 0.1);
        assert_eq!(filter_state(&raw, &f, 0.1).velocity, pred.velocity);
        assert_eq!(filter_state(&raw, &f, 0.1).position, pred.position);
        f.lambda = 0.5;
        assert_eq!(filter_state(&raw, &f, 0.1).velocity, vec![0.5]);
    }

    #[test]
    fn disabled_costs_give_zero_command() {
        let mut cfg = small_config();
        cfg.costs.alpha_p = [0.0, 0.0];
        cfg.costs.alpha_s = 0.0;
        cfg.costs.alpha_j = 0.0;
        cfg.costs.alpha_m = 0.0;
        cfg.costs.alpha_c = 0.0;
        let mut c = Controller::new(fixtures::planar2(), WorldModel::empty(2), cfg, 1).unwrap();
        let goal = GoalSpec::position(Vector3::new(1.0, 1.0, 0.0));
        for _ in 0..3 {
            let out = c.control_step(&JointState::at_rest(vec![0.2, 0.4]), &goal).unwrap();
            assert_eq!(out.command, vec![0.0, 0.0]);
        }
        assert!(c.policy().means.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn same_seed_same_commands() {
        let goal = GoalSpec::position(Vector3::new(0.5, 1.2, 0.0));
        let run = || {
            let mut c = Controller::new(fixtures::planar2(), WorldModel::empty(2), small_config(), 7).unwrap();
            let mut s = JointState::at_rest(vec![0.3, 0.5]);
            let mut cmds = Vec::new();
            for _ in 0..5 {
                let u = c.control_step(&s, &goal).unwrap().command;
                s = s.advanced(&u, 0.05);
                cmds.push(u);
            }
            cmds
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn failed_optimization_reissues_then_brakes() {
        let mut cfg = small_config();
        cfg.controller.filter_lambda = 1.0;
        let mut stack = CostStack::new();
        struct Poison;
        impl crate::costs::CostTerm for Poison {
            fn name(&self) -> &'static str {
                "pose"
            }
            fn weight(&self) -> f64 {
                1.0
            }
            fn evaluate(&self, _: &CostContext<'_>, step: &StepState<'_>) -> f64 {
                if step.position[0] > 10.0 {
                    f64::NAN
                } else {
                    step.position[0]
                }
            }
        }
        stack.push(Poison);
        let mut c = Controller::with_stack(fixtures::planar2(), WorldModel::empty(2), cfg, stack, 3).unwrap();
        let goal = GoalSpec::position(Vector3::zeros());
        let ok = c.control_step(&JointState::at_rest(vec![0.3, 0.0]), &goal).unwrap();
        assert!(ok.diagnostics.fallback.is_none());
        let far = JointState::at_rest(vec![20.0, 0.0]);
        let first = c.control_step(&far, &goal).unwrap();
        assert!(first.diagnostics.fallback.is_some());
        assert_eq!(first.command, ok.command);
        let second = c.control_step(&far, &goal).unwrap();
        assert_eq!(second.command, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_step_episode_has_header_only() {
        let c = Controller::new(fixtures::planar2(), WorldModel::empty(2), small_config(), 0).unwrap();
        let plant = Plant::new(JointState::at_rest(vec![0.0, 1.0]), 0.0, 0).unwrap();
        let targets = Targets::scripted(TargetScript::constant(vec![1.0, 1.0], GoalMode::PositionOnly)).unwrap();
        let log = run_episode(c, plant, targets, 0).unwrap();
        let csv = log.to_csv_string();
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("t,theta_0,theta_1,theta_dot_0,"));
        assert!(csv.contains("cost_envcoll,collision,latency_ms"));
    }

    #[test]
    fn episode_logs_one_row_per_step() {
        let c = Controller::new(fixtures::planar2(), WorldModel::empty(2), small_config(), 0).unwrap();
        let plant = Plant::new(JointState::at_rest(vec![0.0, 1.0]), 0.0, 0).unwrap();
        let targets = Targets::scripted(TargetScript::constant(vec![1.0, 1.0], GoalMode::PositionOnly)).unwrap();
        let log = run_episode(c, plant, targets, 4).unwrap();
        assert_eq!(log.rows.len(), 4);
        assert_eq!(log.collisions(), 0);
        assert_eq!(log.to_csv_string().lines().count(), 5);
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut cfg = ControllerConfig::default();
        cfg.controller.control_period = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ControllerConfig::default();
        cfg.controller.filter_lambda = 1.5;
        assert!(cfg.validate().is_err());
    }
}
