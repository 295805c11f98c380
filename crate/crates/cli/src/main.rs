use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use epiopt_core::costs::{ConstraintSpec, MixingWeight};
use epiopt_core::env::{rollout, Goal};
use epiopt_core::evalkit::{
    area_under_front, compare_runs, goal_sweep, resolve_group, run_experiment, union_front, Algorithm, FrontPoint,
    NormBounds, PolicyFile, RunArtifact, RunConfig,
};
use epiopt_core::params::ParameterSet;
use epiopt_service::AppState;

#[derive(Parser)]
#[command(name = "epiopt", version, about = "Multi-objective epidemic control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm and write a run directory.
    Train {
        /// dqn, goal-dqn, goal-dqn-c or nsga2
        #[arg(long)]
        algo: Algorithm,
        /// JSON run config; omitted fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a goal-conditioned run on evenly spaced β values.
    Sweep {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 100)]
        n_goals: usize,
        /// Episodes per goal (defaults to the run's front_episodes).
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Union Pareto front of several runs, with each run's area under shared bounds.
    Pareto {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Welch comparison of front areas; each argument is a run or a directory of runs.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll out a stored policy for one episode and write JSON lines.
    Simulate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        max_deaths: Option<f64>,
        #[arg(long)]
        max_eco: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Parameter document replacing the run's model parameters.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Serve the HTTP API over a directory of runs.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

/// Config of the run a policy file belongs to (`<run>/policies/<name>.json`), if any.
fn owning_run_config(policy: &Path) -> Result<RunConfig> {
    let run_dir = policy.parent().and_then(Path::parent);
    match run_dir {
        Some(dir) if dir.join("config.json").is_file() => Ok(RunArtifact::load(dir)?.manifest.config),
        _ => Ok(RunConfig::default()),
    }
}

fn train(algo: Algorithm, config: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let run = run_experiment(algo, cfg, seed, out)?;
    let front = run.front_points()?;
    println!("{} run written to {} ({} front points)", algo, run.dir.display(), front.len());
    Ok(())
}

fn sweep(run_dir: &Path, n_goals: usize, episodes: Option<usize>) -> Result<()> {
    let run = RunArtifact::load(run_dir)?;
    let name = run.algorithm().as_str();
    if !matches!(run.algorithm(), Algorithm::GoalDqn | Algorithm::GoalDqnC) {
        bail!("{} is a {} run; sweeps need a goal-conditioned policy", run.id(), name);
    }
    let cfg = &run.manifest.config;
    let policy = run.load_policy(name)?;
    let points = goal_sweep(&policy, cfg, n_goals, episodes.unwrap_or(cfg.front_episodes), name)?;
    let file = format!("sweep_{n_goals}.json");
    run.write_points(&file, &points)?;
    println!("{:>6}  {:>10}  {:>12}", "beta", "deaths", "eco (B€)");
    for p in &points {
        println!("{:>6.3}  {:>10.0}  {:>12.2}", p.beta.unwrap_or(f64::NAN), p.health_mean, p.eco_mean / 1e9);
    }
    println!("wrote {}", run.dir.join(file).display());
    Ok(())
}

fn pareto(dirs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let runs = dirs.iter().map(|d| RunArtifact::load(d)).collect::<Result<Vec<_>, _>>()?;
    let front = union_front(&runs)?;
    let mut all = Vec::new();
    for r in &runs {
        all.extend(r.front_points()?.iter().map(FrontPoint::costs));
    }
    let bounds = NormBounds::from_points(all.iter()).context("runs have no front points")?;
    for r in &runs {
        let costs: Vec<[f64; 2]> = r.front_points()?.iter().map(FrontPoint::costs).collect();
        eprintln!("{:<24} area {:.4}", r.id(), area_under_front(&costs, &bounds));
    }
    let text = serde_json::to_string_pretty(&front)?;
    match out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn compare(dirs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let groups = dirs.iter().map(|d| resolve_group(d)).collect::<Result<Vec<_>, _>>()?;
    let report = compare_runs(&groups)?;
    print!("{}", report.to_table());
    if let Some(p) = out {
        fs::write(p, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn simulate(
    policy_path: &Path,
    beta: Option<f64>,
    constraints: ConstraintSpec,
    seed: u64,
    out: &Path,
    params: Option<&Path>,
) -> Result<()> {
    let policy = PolicyFile::load(policy_path)?;
    let mut cfg = owning_run_config(policy_path)?;
    if let Some(p) = params {
        cfg.params = ParameterSet::load(p)?;
    }
    if beta.is_some() && !policy.is_goal_conditioned() {
        log::warn!("{} policy ignores beta; it only weights the aggregated column", policy.kind());
    }
    let goal = Goal {
        beta: MixingWeight::new(beta.unwrap_or(policy.default_beta()))?,
        constraints,
    };
    let traj = rollout(&policy, &cfg.env(policy.observation_mode()), goal, seed)?;
    fs::write(out, traj.to_jsonl()).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "deaths {:.0}  eco {:.2} B€  lockdown weeks {}/{}",
        traj.health_cum,
        traj.eco_cum / 1e9,
        traj.records.iter().filter(|r| r.action.is_lockdown()).count(),
        traj.records.len()
    );
    Ok(())
}

fn serve(host: &str, port: u16, runs: &Path, params: Option<&Path>) -> Result<()> {
    let params = params.map(ParameterSet::load).transpose()?;
    let state = AppState::load(runs, params)?;
    let addr: SocketAddr = format!("{host}:{port}").parse().context("invalid host or port")?;
    eprintln!("serving {} runs on http://{addr}", state.run_count());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(epiopt_service::serve(addr, state))?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train { algo, config, seed, out } => train(algo, config.as_deref(), seed, &out),
        Command::Sweep { run, n_goals, episodes } => sweep(&run, n_goals, episodes),
        Command::Pareto { runs, out } => pareto(&runs, out.as_deref()),
        Command::Compare { runs, out } => compare(&runs, out.as_deref()),
        Command::Simulate {
            policy,
            beta,
            max_deaths,
            max_eco,
            seed,
            out,
            params,
        } => simulate(&policy, beta, ConstraintSpec { max_deaths, max_eco }, seed, &out, params.as_deref()),
        Command::Serve { port, runs, params, host } => serve(&host, port, &runs, params.as_deref()),
    }
}
