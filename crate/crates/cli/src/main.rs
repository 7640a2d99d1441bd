use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use uavjam::agent::DefenseMode;
use uavjam::config::RunConfig;
use uavjam::env::{JammerEnv, Policy, Scenario, UavEnv};
use uavjam::jammers::JammerKind;
use uavjam::learner::{
    episode_seed, evaluate_parallel, run_episode, train, write_curve_csv, Checkpoint, Environment, TrainOutcome,
};
use uavjam::radio::reliable_region;
use uavjam::world::{aggregate, region_scene, reset};
use uavjam::{Error, QNet, Result};

#[derive(Parser)]
#[command(name = "uavjam", version, about = "UAV data collection under jamming: training, evaluation and region maps")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML). Missing sections take their defaults.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Checkpoints {
    /// Typical-UAV checkpoint; overrides `checkpoints.uav`.
    #[arg(long)]
    uav_checkpoint: Option<PathBuf>,
    /// Jammer checkpoint; overrides `checkpoints.jammer`.
    #[arg(long)]
    jammer_checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the typical UAV (defense: none, virtual_jammer or higher_threshold).
    TrainUav {
        #[command(flatten)]
        common: Common,
    },
    /// Train an intelligent jammer against a frozen typical-UAV policy.
    TrainJammer {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ckpt: Checkpoints,
    },
    /// Retrain the typical UAV against a frozen intelligent jammer (defense mode: intelligent).
    TrainDefense {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ckpt: Checkpoints,
    },
    /// Greedy evaluation; writes metrics.json and optionally per-episode trajectories.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ckpt: Checkpoints,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long)]
        export_traj: bool,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Reliable-transmission region of the configured world as CSV.
    Region {
        #[command(flatten)]
        common: Common,
        /// Grid cell size in meters.
        #[arg(long, default_value_t = 1.0)]
        resolution: f64,
        /// Elapsed time at which jammer emissions are evaluated.
        #[arg(long, default_value_t = 0.0)]
        at: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::Checkpoint(_) => 3,
        Error::Numerical(_) => 4,
        _ => 1,
    }
}

/// Loads the config, applies flag overrides, echoes it and prepares the output directory.
fn prepare(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    let echo = cfg.to_toml_string()?;
    println!("{echo}");
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.toml"), echo)?;
    Ok((cfg, out))
}

fn load_net(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<QNet> {
    let path = flag
        .as_ref()
        .or(fallback.as_ref())
        .ok_or_else(|| Error::config(format!("checkpoints.{what}"), "no checkpoint given"))?;
    Checkpoint::load(path)?.to_net()
}

fn save_outcome(out: &Path, name: &str, outcome: &TrainOutcome<f32>, cfg: &RunConfig, meta: serde_json::Value) -> Result<()> {
    let train_cfg = if name == "jammer" { &cfg.jammer_train } else { &cfg.train };
    Checkpoint::from_net(&outcome.net, Some(train_cfg.clone()), cfg.seed, meta).save(&out.join(format!("{name}.ckpt.json")))?;
    write_curve_csv(&outcome.curve, BufWriter::new(File::create(out.join(format!("{name}_curve.csv")))?))?;
    let last = outcome.curve.iter().rev().take(100).map(|r| r.ret).collect::<Vec<_>>();
    let mean = if last.is_empty() { 0.0 } else { last.iter().sum::<f64>() / last.len() as f64 };
    println!(
        "trained {name}: {} episodes, {} steps, mean return (last {}) {mean:.3}",
        outcome.curve.len(),
        outcome.steps,
        last.len()
    );
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::TrainUav { common } => {
            let (cfg, out) = prepare(&common)?;
            if cfg.defense.mode == DefenseMode::Intelligent {
                return Err(Error::config("defense.mode", "use train-defense for the intelligent mode"));
            }
            let sc = Scenario::training(&cfg.world, cfg.defense)?;
            println!("training threshold {}", sc.world.radio.sinr_threshold);
            let mut env = UavEnv::new(sc.clone(), None)?;
            let outcome = train::<f32, _>(&mut env, &cfg.train, cfg.seed)?;
            let meta = json!({ "role": "uav", "defense": cfg.defense.mode, "features": sc.uav_feature_len() });
            save_outcome(&out, "uav", &outcome, &cfg, meta)
        }
        Command::TrainJammer { common, ckpt } => {
            let (cfg, out) = prepare(&common)?;
            if cfg.jammer.kind != JammerKind::Intelligent {
                return Err(Error::config("jammer.kind", "train-jammer needs an intelligent jammer"));
            }
            let uav = load_net(&ckpt.uav_checkpoint, &cfg.checkpoints.uav, "uav")?;
            let sc = Scenario::deployment(&cfg.world_with_jammer(), cfg.defense)?;
            let mut env = JammerEnv::new(sc.clone(), Policy { net: uav })?;
            let outcome = train::<f32, _>(&mut env, &cfg.jammer_train, cfg.seed)?;
            let meta = json!({ "role": "jammer", "features": env.feature_len() });
            save_outcome(&out, "jammer", &outcome, &cfg, meta)
        }
        Command::TrainDefense { common, ckpt } => {
            let (cfg, out) = prepare(&common)?;
            if cfg.defense.mode != DefenseMode::Intelligent {
                return Err(Error::config("defense.mode", "train-defense needs mode = \"intelligent\""));
            }
            if cfg.jammer.kind != JammerKind::Intelligent {
                return Err(Error::config("jammer.kind", "train-defense needs an intelligent jammer"));
            }
            let jammer = load_net(&ckpt.jammer_checkpoint, &cfg.checkpoints.jammer, "jammer")?;
            let sc = Scenario::training(&cfg.world_with_jammer(), cfg.defense)?;
            println!("mission deadline {}", sc.world.mission_deadline);
            let mut env = UavEnv::new(sc.clone(), Some(Policy { net: jammer }))?;
            let outcome = train::<f32, _>(&mut env, &cfg.train, cfg.seed)?;
            let meta = json!({ "role": "uav", "defense": cfg.defense.mode, "features": sc.uav_feature_len() });
            save_outcome(&out, "uav", &outcome, &cfg, meta)
        }
        Command::Eval { common, ckpt, episodes, export_traj, workers } => {
            let (cfg, out) = prepare(&common)?;
            let uav = load_net(&ckpt.uav_checkpoint, &cfg.checkpoints.uav, "uav")?;
            let jammer = match (&ckpt.jammer_checkpoint, &cfg.checkpoints.jammer) {
                (None, None) => None,
                _ => Some(Policy { net: load_net(&ckpt.jammer_checkpoint, &cfg.checkpoints.jammer, "jammer")? }),
            };
            let sc = Scenario::deployment(&cfg.world_with_jammer(), cfg.defense)?;
            let make_env = || UavEnv::new(sc.clone(), jammer.clone());
            let probe = make_env()?;
            if uav.input_len() != probe.feature_len() || uav.action_count() != probe.action_count() {
                return Err(Error::Checkpoint(format!(
                    "policy expects {} features / {} actions, scenario provides {} / {}",
                    uav.input_len(),
                    uav.action_count(),
                    probe.feature_len(),
                    probe.action_count()
                )));
            }
            let metrics = if export_traj {
                let dir = out.join("trajectories");
                fs::create_dir_all(&dir)?;
                let mut env = probe;
                env.record_trajectory = true;
                let mut records = Vec::with_capacity(episodes);
                for i in 0..episodes {
                    records.push(run_episode(&uav, &mut env, episode_seed(cfg.seed, i))?);
                    if let Some(t) = env.trajectory() {
                        t.write_csv(BufWriter::new(File::create(dir.join(format!("episode_{i:05}.csv")))?))?;
                    }
                }
                aggregate(&records)?
            } else {
                evaluate_parallel(&uav, make_env, episodes, cfg.seed, workers)?.0
            };
            metrics.write_json(BufWriter::new(File::create(out.join("metrics.json"))?))?;
            println!("{}", serde_json::to_string(&metrics)?);
            Ok(())
        }
        Command::Region { common, resolution, at } => {
            let (cfg, out) = prepare(&common)?;
            let world = cfg.world_with_jammer();
            let state = reset(&world, cfg.seed)?;
            let grid = reliable_region(&region_scene(&world, &state, at), resolution)?;
            grid.write_csv(BufWriter::new(File::create(out.join("region.csv"))?))?;
            println!("region: {} of {} cells reliable", grid.count(), grid.nx * grid.ny);
            Ok(())
        }
    }
}
