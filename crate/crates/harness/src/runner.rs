//! Building and running a configured episode.

use jointmpc::controller::{Controller, Episode, EpisodeLog};
use jointmpc::simworld::{GoalInbox, Plant, Targets, TargetSource};
use jointmpc::{JointState, KinematicChain};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::metrics::{metrics_report, MetricsReport};
use crate::HarnessError;

pub fn initial_state(cfg: &ExperimentConfig, chain: &KinematicChain) -> Result<JointState, HarnessError> {
    let start = if cfg.scenario.start.is_empty() {
        chain.mid_configuration()
    } else {
        cfg.scenario.start.clone()
    };
    if start.len() != chain.dof() {
        return Err(HarnessError::Config(format!(
            "scenario.start has {} values but chain `{}` has {} joints",
            start.len(),
            chain.name,
            chain.dof()
        )));
    }
    Ok(JointState::at_rest(start))
}

/// Wires chain, world, controller, plant and targets for the scenario.
/// Interactive scenarios read goal updates from `inbox`.
pub fn build_episode(cfg: &ExperimentConfig, inbox: Option<GoalInbox>) -> Result<Episode, HarnessError> {
    let chain = cfg.load_chain()?;
    let dimension = if chain.manipulability_rows.rows().len() == 2 { 2 } else { 3 };
    let world = cfg.load_world(dimension)?;
    let start = initial_state(cfg, &chain)?;
    let seed = cfg.scenario.seed;
    let plant = Plant::new(start, cfg.scenario.noise_sigma, seed)?;
    let script = cfg.scenario.target_script();
    let targets = match (cfg.scenario.source, inbox) {
        (TargetSource::Interactive, Some(inbox)) => Targets::interactive(script, inbox)?,
        (TargetSource::Interactive, None) => Targets::interactive(script, GoalInbox::new())?,
        (TargetSource::Scripted, _) => Targets::scripted(script)?,
    };
    let controller = Controller::new(chain, world, cfg.controller_config(), seed)?;
    Ok(Episode::new(controller, plant, targets))
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub seed: u64,
    pub metrics: MetricsReport,
    /// Distance from the end effector to the goal after the last command.
    pub final_goal_distance: f64,
    pub aborted: Option<String>,
}

/// End-effector distance to the goal after the last executed command.
pub fn final_goal_distance(episode: &Episode) -> Result<f64, HarnessError> {
    let log = episode.log();
    let (Some(state), Some(last)) = (&log.final_state, log.rows.last()) else {
        return Err(HarnessError::Config("episode has no steps".into()));
    };
    let ee = episode.controller().chain().forward_kinematics(&state.position)?.ee.translation;
    let goal = nalgebra::Vector3::new(last.goal[0], last.goal[1], last.goal[2]);
    Ok((ee - goal).norm())
}

pub fn run_scenario(cfg: &ExperimentConfig) -> Result<(EpisodeLog, ScenarioOutcome), HarnessError> {
    let mut episode = build_episode(cfg, None)?;
    for _ in 0..cfg.scenario.steps {
        match episode.step() {
            Ok(_) => {}
            Err(jointmpc::Error::Diverged { .. }) => break,
            Err(e) => return Err(e.into()),
        }
    }
    let horizon_time = episode.controller().schedule().time_to_go(0);
    let metrics = metrics_report(
        episode.log(),
        episode.controller().chain(),
        horizon_time,
        cfg.scenario.goal_tolerance,
    )?;
    let outcome = ScenarioOutcome {
        name: cfg.scenario.name.clone(),
        seed: cfg.scenario.seed,
        final_goal_distance: final_goal_distance(&episode)?,
        aborted: episode.log().aborted.clone(),
        metrics,
    };
    Ok((episode.into_log(), outcome))
}
