//! Sampling-strategy comparison on the planar point-robot reacher.

use std::time::Instant;

use jointmpc::costs::GoalMode;
use jointmpc::sampling::{Generator, SmoothingMode};
use jointmpc::simworld::Waypoint;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::runner::{build_episode, final_goal_distance};
use crate::HarnessError;

#[derive(Debug, Clone, Copy)]
pub struct Strategy {
    pub name: &'static str,
    pub generator: Generator,
    pub mode: SmoothingMode,
}

/// Compared strategies, best expected first.
pub const STRATEGIES: [Strategy; 3] = [
    Strategy {
        name: "halton+bspline",
        generator: Generator::Halton,
        mode: SmoothingMode::Bspline,
    },
    Strategy {
        name: "halton+comb",
        generator: Generator::Halton,
        mode: SmoothingMode::Comb,
    },
    Strategy {
        name: "pseudorandom+comb",
        generator: Generator::Pseudorandom,
        mode: SmoothingMode::Comb,
    },
];

/// The reacher scenario: point robot from the left of the corridor to the right.
pub fn fig3_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.name = "fig3".into();
    cfg.scenario.chain = "planar_holonomic".into();
    cfg.scenario.world = Some("fig3_reacher".into());
    cfg.scenario.start = vec![-0.8, 0.0];
    cfg.scenario.steps = 100;
    cfg.scenario.goal_mode = GoalMode::PositionOnly;
    cfg.scenario.goal_tolerance = 0.05;
    cfg.scenario.waypoints = vec![Waypoint {
        time: 0.0,
        position: vec![0.8, 0.0],
        orientation: None,
    }];
    cfg.rollout.particles = 200;
    cfg.rollout.horizon = 30;
    cfg.policy.sigma0 = 3.0;
    cfg
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategyResult {
    pub name: String,
    pub successes: usize,
    pub seeds: usize,
    pub final_distances: Vec<f64>,
    pub collisions: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig3Summary {
    pub particles: usize,
    pub horizon: usize,
    pub steps: usize,
    pub goal_tolerance: f64,
    pub strategies: Vec<StrategyResult>,
    pub runtime_s: f64,
}

impl Fig3Summary {
    pub fn successes(&self, name: &str) -> Option<usize> {
        self.strategies.iter().find(|s| s.name == name).map(|s| s.successes)
    }
}

/// Runs every strategy on seeds `0..seeds`. A run succeeds when it ends
/// within the goal tolerance and never collided.
pub fn run_fig3(base: &ExperimentConfig, seeds: u64, strategies: &[Strategy]) -> Result<Fig3Summary, HarnessError> {
    let start = Instant::now();
    let mut results = Vec::new();
    for s in strategies {
        let mut r = StrategyResult {
            name: s.name.to_string(),
            successes: 0,
            seeds: seeds as usize,
            final_distances: Vec::new(),
            collisions: Vec::new(),
        };
        for seed in 0..seeds {
            let mut cfg = base.clone();
            cfg.sampling.generator = s.generator;
            cfg.sampling.mode = s.mode;
            cfg.scenario.seed = seed;
            let mut episode = build_episode(&cfg, None)?;
            for _ in 0..cfg.scenario.steps {
                episode.step()?;
            }
            let dist = final_goal_distance(&episode)?;
            let collisions = episode.log().collisions();
            if dist < cfg.scenario.goal_tolerance && collisions == 0 {
                r.successes += 1;
            }
            log::info!("{} seed {seed}: distance {dist:.4}, collisions {collisions}", s.name);
            r.final_distances.push(dist);
            r.collisions.push(collisions);
        }
        results.push(r);
    }
    Ok(Fig3Summary {
        particles: base.rollout.particles,
        horizon: base.rollout.horizon,
        steps: base.scenario.steps,
        goal_tolerance: base.scenario.goal_tolerance,
        strategies: results,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}
