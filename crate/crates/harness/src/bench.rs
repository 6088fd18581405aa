//! Rollout-throughput and control-latency sweeps.

use std::io::Write;
use std::time::Instant;

use jointmpc::controller::{Controller, ControllerConfig};
use jointmpc::costs::{CostContext, CostStack, GoalSpec};
use jointmpc::policy::CovarianceMode;
use jointmpc::rollout::evaluate_rollouts;
use jointmpc::sampling::ControlSampler;
use jointmpc::{CostConfig, JointState, KinematicChain, PolicyParams, Workers, WorldModel};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub particles: Vec<usize>,
    pub horizons: Vec<usize>,
    pub workers: Vec<usize>,
    /// Timed repetitions per grid point.
    pub reps: usize,
    /// Full control cycles timed per grid point; 0 skips the latency sweep.
    pub control_steps: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            particles: vec![512],
            horizons: vec![30],
            workers: vec![1, 2, 3, 4],
            reps: 5,
            control_steps: 10,
            seed: 0,
        }
    }
}

/// One JSON-lines record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub particles: usize,
    pub horizon: usize,
    pub dof: usize,
    pub workers: usize,
    pub reps: usize,
    /// Median wall time of one batched rollout evaluation.
    pub rollout_ms: f64,
    pub rollout_ms_min: f64,
    pub control_ms_p50: Option<f64>,
    pub control_ms_p95: Option<f64>,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx]
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn goal_for(chain: &KinematicChain) -> Result<GoalSpec, HarnessError> {
    let mut q = chain.mid_configuration();
    for (j, x) in q.iter_mut().enumerate() {
        *x += 0.2 * chain.limits.range(j) * if j % 2 == 0 { 1.0 } else { -1.0 };
    }
    let p = chain.forward_kinematics(&q)?.ee.translation;
    Ok(GoalSpec::position(Vector3::new(p.x, p.y, p.z)))
}

/// Wall-clock milliseconds of `reps` rollout evaluations of one fixed batch.
pub fn time_rollouts(
    chain: &KinematicChain,
    world: &WorldModel,
    particles: usize,
    horizon: usize,
    workers: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>, HarnessError> {
    let mut cfg = ControllerConfig::default();
    cfg.rollout.particles = particles;
    cfg.rollout.horizon = horizon;
    let sched = cfg.rollout.schedule()?;
    let discount = cfg.rollout.discount();
    let stack = CostStack::from_config(&CostConfig::default(), chain)?;
    let mut sampler = ControlSampler::new(cfg.sampling.clone(), particles, horizon, chain.dof(), seed)?;
    let policy = PolicyParams::new(horizon, chain.dof(), 1.0, CovarianceMode::PerJointDiagonal);
    let batch = sampler.sample(&policy)?;
    let goal = goal_for(chain)?;
    let ctx = CostContext {
        chain,
        goal: &goal,
        world,
        sched: &sched,
    };
    let start = JointState::at_rest(chain.mid_configuration());
    let pool = if workers == 1 {
        Workers::sequential()
    } else {
        Workers::new(workers)?
    };
    // warm-up
    evaluate_rollouts(&start, &batch, &ctx, &stack, &discount, &pool)?;
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        let bundle = evaluate_rollouts(&start, &batch, &ctx, &stack, &discount, &pool)?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(bundle);
    }
    Ok(times)
}

/// Latency of `steps` full control cycles from a fixed state.
pub fn time_control(
    chain: &KinematicChain,
    world: &WorldModel,
    particles: usize,
    horizon: usize,
    workers: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<f64>, HarnessError> {
    let mut cfg = ControllerConfig::default();
    cfg.rollout.particles = particles;
    cfg.rollout.horizon = horizon;
    cfg.rollout.workers = workers;
    let goal = goal_for(chain)?;
    let mut ctrl = Controller::new(chain.clone(), world.clone(), cfg, seed)?;
    let state = JointState::at_rest(chain.mid_configuration());
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        out.push(ctrl.control_step(&state, &goal)?.diagnostics.latency_ms);
    }
    Ok(out)
}

/// Runs the full grid in particles × horizons × workers order.
pub fn run_bench(
    bench: &BenchConfig,
    chain: &KinematicChain,
    world: &WorldModel,
) -> Result<Vec<BenchRecord>, HarnessError> {
    if bench.reps == 0 {
        return Err(HarnessError::Config("bench needs at least one repetition".into()));
    }
    let mut records = Vec::new();
    for &n in &bench.particles {
        for &h in &bench.horizons {
            for &w in &bench.workers {
                if w == 0 {
                    return Err(HarnessError::Config("worker counts start at 1".into()));
                }
                let t = sorted(time_rollouts(chain, world, n, h, w, bench.reps, bench.seed)?);
                let (p50, p95) = if bench.control_steps > 0 {
                    let c = sorted(time_control(chain, world, n, h, w, bench.control_steps, bench.seed)?);
                    (Some(percentile(&c, 0.5)), Some(percentile(&c, 0.95)))
                } else {
                    (None, None)
                };
                let rec = BenchRecord {
                    particles: n,
                    horizon: h,
                    dof: chain.dof(),
                    workers: w,
                    reps: bench.reps,
                    rollout_ms: percentile(&t, 0.5),
                    rollout_ms_min: t[0],
                    control_ms_p50: p50,
                    control_ms_p95: p95,
                };
                log::info!("N={n} H={h} W={w}: rollout {:.2} ms", rec.rollout_ms);
                records.push(rec);
            }
        }
    }
    Ok(records)
}

pub fn write_jsonl<W: Write>(records: &[BenchRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// The latency table: one CSV row per grid point.
pub fn write_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use jointmpc::fixtures;

    #[test]
    fn percentile_picks_nearest_rank() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.95), 5.0);
        assert_eq!(percentile(&v, 0.0), 1.0);
    }

    #[test]
    fn records_serialize_to_both_formats() {
        let bench = BenchConfig {
            particles: vec![16],
            horizons: vec![4],
            workers: vec![1],
            reps: 2,
            control_steps: 2,
            seed: 1,
        };
        let recs = run_bench(&bench, &fixtures::planar2(), &fixtures::empty_world()).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(recs[0].rollout_ms > 0.0 && recs[0].control_ms_p95.is_some());

        let mut jsonl = Vec::new();
        write_jsonl(&recs, &mut jsonl).unwrap();
        let line = String::from_utf8(jsonl).unwrap();
        let back: BenchRecord = serde_json::from_str(line.trim_end()).unwrap();
        assert_eq!(back, recs[0]);

        let mut csv_out = Vec::new();
        write_csv(&recs, &mut csv_out).unwrap();
        let text = String::from_utf8(csv_out).unwrap();
        assert!(text.starts_with("particles,horizon,dof,workers,reps,rollout_ms"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn zero_workers_is_rejected() {
        let bench = BenchConfig {
            workers: vec![0],
            ..BenchConfig::default()
        };
        assert!(run_bench(&bench, &fixtures::planar2(), &fixtures::empty_world()).is_err());
    }
}
