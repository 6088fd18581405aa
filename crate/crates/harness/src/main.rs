use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jointmpc::costs::{train_collision_surrogate, GoalMode, TrainingConfig};
use jointmpc_harness::bench::{self, BenchConfig};
use jointmpc_harness::bridge::{self, BridgeConfig};
use jointmpc_harness::fig3::{self, STRATEGIES};
use jointmpc_harness::{run_scenario, ExperimentConfig, HarnessError};

/// Joint-space sampling MPC: episodes, strategy comparison, benchmarks and
/// the interactive bridge.
///
/// Any config key can be overridden with `--section.key=value`, for example
/// `--rollout.particles=500`.
#[derive(Parser)]
#[command(name = "jointmpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Pose-reaching episode.
    Reach {
        #[command(flatten)]
        common: Common,
        /// Episode log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Moving-target episode.
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Keep the end-effector z axis aligned with the goal's.
        #[arg(long)]
        orientation_constraint: bool,
    },
    /// Compare sampling strategies on the reacher scenario.
    Fig3 {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Rollout throughput and control latency sweep; CSV on stdout.
    Bench {
        /// Bundled chain name or chain file.
        #[arg(long, default_value = "arm7")]
        chain: String,
        #[arg(long, value_delimiter = ',', default_value = "512")]
        particles: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "30")]
        horizon: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        workers: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// Control cycles timed per grid point.
        #[arg(long, default_value_t = 10)]
        control_steps: usize,
        /// Also write JSON-lines records here.
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
    /// Train the learned self-collision surrogate.
    TrainCollision {
        #[arg(long, default_value = "planar2")]
        chain: String,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Websocket bridge and controller for interactive steering.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Directory with the web UI build.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 30.0)]
        snapshot_hz: f64,
    },
}

/// Splits `--section.key=value` overrides from the arguments clap parses.
fn split_overrides(args: impl Iterator<Item = String>) -> (Vec<String>, Vec<String>) {
    let (overrides, rest) = args.partition(|a| {
        a.strip_prefix("--")
            .and_then(|rest| rest.split_once('='))
            .is_some_and(|(key, _)| key.contains('.'))
    });
    (rest, overrides)
}

fn load(common: &Common, base: ExperimentConfig, overrides: &[String]) -> Result<ExperimentConfig, HarnessError> {
    match &common.config {
        Some(path) => ExperimentConfig::load(path, overrides),
        None => base.with_overrides(overrides),
    }
}

fn chain_config(chain: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.chain = chain.to_string();
    cfg.base_dir = std::env::current_dir().ok();
    cfg
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            source: e,
        })
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Config(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn episode(cfg: ExperimentConfig, log_path: Option<&Path>) -> Result<(), HarnessError> {
    let (log, outcome) = run_scenario(&cfg)?;
    if let Some(path) = log_path {
        log.write_csv(create(path)?)?;
    }
    print_json(&outcome)
}

fn run(cli: Cli, overrides: &[String]) -> Result<(), HarnessError> {
    match cli.command {
        Command::Reach { common, log } => {
            let cfg = load(&common, ExperimentConfig::default(), overrides)?;
            episode(cfg, log.as_deref())
        }
        Command::Track {
            common,
            log,
            orientation_constraint,
        } => {
            let mut cfg = load(&common, ExperimentConfig::default(), overrides)?;
            if orientation_constraint {
                cfg.scenario.goal_mode = GoalMode::OrientationConstrained;
            }
            episode(cfg, log.as_deref())
        }
        Command::Fig3 { common, seeds } => {
            let cfg = load(&common, fig3::fig3_config(), overrides)?;
            let summary = fig3::run_fig3(&cfg, seeds, &STRATEGIES)?;
            for s in &summary.strategies {
                eprintln!("{:<20} {:>3}/{}", s.name, s.successes, s.seeds);
            }
            print_json(&summary)
        }
        Command::Bench {
            chain,
            particles,
            horizon,
            workers,
            reps,
            control_steps,
            jsonl,
        } => {
            let cfg = chain_config(&chain).with_overrides(overrides)?;
            let chain = cfg.load_chain()?;
            let world = cfg.load_world(3)?;
            let bench_cfg = BenchConfig {
                particles,
                horizons: horizon,
                workers,
                reps,
                control_steps,
                seed: cfg.scenario.seed,
            };
            let records = bench::run_bench(&bench_cfg, &chain, &world)?;
            if let Some(path) = jsonl {
                let mut out = create(&path)?;
                bench::write_jsonl(&records, &mut out)
                    .and_then(|_| out.flush())
                    .map_err(|e| HarnessError::Io { path, source: e })?;
            }
            bench::write_csv(&records, io::stdout().lock()).map_err(|e| HarnessError::Config(e.to_string()))
        }
        Command::TrainCollision {
            chain,
            samples,
            epochs,
            seed,
            out,
        } => {
            let chain = chain_config(&chain).with_overrides(overrides)?.load_chain()?;
            let mut tc = TrainingConfig::default();
            if let Some(n) = samples {
                tc.samples = n;
            }
            if let Some(e) = epochs {
                tc.epochs = e;
            }
            if let Some(s) = seed {
                tc.seed = s;
            }
            let net = train_collision_surrogate(&chain, &tc)?;
            net.save(&out)?;
            print_json(&net.report)
        }
        Command::Serve {
            common,
            addr,
            static_dir,
            snapshot_hz,
        } => {
            let mut cfg = load(&common, ExperimentConfig::default(), overrides)?;
            cfg.scenario.source = jointmpc::simworld::TargetSource::Interactive;
            let bridge_cfg = BridgeConfig {
                snapshot_hz,
                static_dir,
                ..BridgeConfig::default()
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| HarnessError::Bridge(e.to_string()))?;
            rt.block_on(async move {
                let handle = bridge::start(cfg, bridge_cfg, &addr).await?;
                eprintln!("serving on http://{}/ (websocket at /ws); ctrl-c to stop", handle.addr);
                tokio::signal::ctrl_c()
                    .await
                    .map_err(|e| HarnessError::Bridge(e.to_string()))?;
                handle.stop().await.map(|_| ())
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (args, overrides) = split_overrides(std::env::args());
    let cli = Cli::parse_from(args);
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
