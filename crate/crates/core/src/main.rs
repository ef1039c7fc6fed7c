use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shardsim::env::{Environment, Snapshot};
use shardsim::harness::{brute_force_oracle, run_experiment, ExperimentIndex, ExperimentPlan, RunOptions};
use shardsim::strategy::StrategyKind;
use shardsim::{Error, Result, SimConfig};

/// Sharded-blockchain resharding simulator.
///
/// Every flag can also be set through an environment variable named
/// `SHARDSIM_<FLAG>`, e.g. `SHARDSIM_NODES=32`.
#[derive(Debug, Parser)]
#[command(name = "shardsim", version)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, env = "SHARDSIM_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute an experiment sweep (strategy x dishonest count x seed).
    Run(RunArgs),
    /// Brute-force the best allocation for a snapshot.
    Oracle(OracleArgs),
    /// Check the effective configuration.
    Validate(Overrides),
    /// Print the effective configuration as TOML.
    DumpConfig(Overrides),
}

#[derive(Debug, Args)]
struct Overrides {
    /// Total number of nodes.
    #[arg(long, env = "SHARDSIM_NODES")]
    nodes: Option<usize>,
    /// Number of shards.
    #[arg(long, env = "SHARDSIM_SHARDS")]
    shards: Option<usize>,
    /// Minimum shard size.
    #[arg(long, env = "SHARDSIM_MIN_SHARD")]
    min_shard: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut SimConfig) {
        if let Some(n) = self.nodes {
            cfg.network.n_total = n;
        }
        if let Some(d) = self.shards {
            cfg.network.d_shards = d;
        }
        if let Some(m) = self.min_shard {
            cfg.network.n_min = m;
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Strategies as a comma list, or `all`.
    #[arg(long, env = "SHARDSIM_STRATEGY", default_value = "all")]
    strategy: String,
    /// Dishonest node counts, e.g. `4`, `0-5` or `1,3,5`.
    #[arg(long, env = "SHARDSIM_DISHONEST")]
    dishonest: Option<String>,
    /// Seeds, same syntax as `--dishonest`.
    #[arg(long, env = "SHARDSIM_SEEDS", default_value = "0")]
    seeds: String,
    #[arg(long, env = "SHARDSIM_EPISODES", default_value_t = 100)]
    episodes: usize,
    /// Output directory.
    #[arg(long, env = "SHARDSIM_OUT", default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long, env = "SHARDSIM_JOBS", default_value_t = 0)]
    jobs: usize,
    /// Re-run entries of an existing index instead of building a sweep.
    #[arg(long)]
    rerun: Option<PathBuf>,
    /// With `--rerun`, restrict to these run ids (comma list).
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    /// Debug: write every episode's block verification table as JSON.
    #[arg(long)]
    dump_bvt: bool,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Snapshot JSON; if absent one is generated by running warm-up
    /// episodes with the random strategy.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[arg(long, env = "SHARDSIM_DISHONEST")]
    dishonest: Option<usize>,
    #[arg(long, env = "SHARDSIM_SEED", default_value_t = 0)]
    seed: u64,
    /// Warm-up episodes for a generated snapshot.
    #[arg(long, default_value_t = 1)]
    warmup: usize,
}

fn parse_list(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Parse(format!("bad list `{s}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn parse_strategies(s: &str) -> Result<Vec<StrategyKind>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(StrategyKind::ALL.to_vec());
    }
    s.split(',').map(|p| p.trim().parse()).collect()
}

fn load_config(path: &Option<PathBuf>) -> Result<SimConfig> {
    match path {
        Some(p) => SimConfig::from_file(p),
        None => Ok(SimConfig::default()),
    }
}

fn run(cli: &Cli, args: &RunArgs) -> Result<bool> {
    let opts = RunOptions { jobs: args.jobs, dump_bvt: args.dump_bvt };
    let plan = if let Some(index) = &args.rerun {
        ExperimentIndex::from_file(index)?.replan(&args.out, &args.only)
    } else {
        let mut cfg = load_config(&cli.config)?;
        args.overrides.apply(&mut cfg);
        cfg.validate()?;
        let hs = match &args.dishonest {
            Some(s) => parse_list(s)?.into_iter().map(|h| h as usize).collect(),
            None => vec![cfg.attack.h_dishonest],
        };
        ExperimentPlan::sweep(&cfg, &parse_strategies(&args.strategy)?, &hs, &parse_list(&args.seeds)?, args.episodes, &args.out)
    };
    let index = run_experiment(&plan, &opts)?;
    for e in index.entries.iter().filter(|e| e.error.is_some()) {
        eprintln!("run {} failed: {}", e.entry.id, e.error.as_deref().unwrap_or_default());
    }
    println!(
        "{} runs, {} failed, index at {}",
        index.entries.len(),
        index.failures(),
        plan.out_dir.join("index.json").display()
    );
    Ok(index.all_ok())
}

fn oracle(cli: &Cli, args: &OracleArgs) -> Result<()> {
    let mut cfg = load_config(&cli.config)?;
    args.overrides.apply(&mut cfg);
    cfg.network.seed = args.seed;
    if let Some(h) = args.dishonest {
        cfg.attack.h_dishonest = h;
    }
    cfg.validate()?;
    let snap: Snapshot = match &args.snapshot {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?).map_err(|e| Error::Parse(e.to_string()))?,
        None => {
            let mut env = Environment::new(cfg.clone())?;
            let mut s = StrategyKind::Random.build();
            for _ in 0..args.warmup {
                env.step_episode(s.as_mut())?;
            }
            env.snapshot()
        }
    };
    let (a, b) = brute_force_oracle(&snap, &cfg)?;
    let out = serde_json::json!({ "assignment": a, "reward": b });
    println!("{}", serde_json::to_string_pretty(&out).map_err(|e| Error::Parse(e.to_string()))?);
    Ok(())
}

fn effective(cli: &Cli, o: &Overrides) -> Result<SimConfig> {
    let mut cfg = load_config(&cli.config)?;
    o.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(&cli, args),
        Command::Oracle(args) => oracle(&cli, args).map(|_| true),
        Command::Validate(o) => effective(&cli, o).map(|_| {
            println!("ok");
            true
        }),
        Command::DumpConfig(o) => effective(&cli, o).map(|cfg| {
            print!("{}", cfg.to_toml_string());
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
