use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mgm_core::harness::{aggregate_dir, final_kl, run_and_write};
use mgm_core::{Algorithm, Error, RunConfig};

#[derive(Parser)]
#[command(name = "mgm", version, about = "Marker-gene coevolution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single seed and write its CSV and config snapshot.
    Run {
        #[command(flatten)]
        common: Common,
        /// Seed to run (defaults to the first seed in the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a range of seeds, then aggregate.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Inclusive-exclusive range `A..B`; defaults to the config's seeds.
        #[arg(long, value_parser = parse_range)]
        seeds: Option<(u64, u64)>,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Rebuild aggregate.csv from the seed CSVs in a run directory.
    Aggregate {
        /// Run directory holding seed_<n>.csv files.
        dir: PathBuf,
    },
    /// List games and algorithms.
    List,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, env = "COEVO_OUTDIR", default_value = "runs")]
    outdir: PathBuf,
    /// Dotted override such as `controller.eta_l=0`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn parse_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once("..").ok_or("expected A..B")?;
    let a: u64 = a
        .trim()
        .parse()
        .map_err(|_| format!("bad range start `{a}`"))?;
    let b: u64 = b
        .trim()
        .parse()
        .map_err(|_| format!("bad range end `{b}`"))?;
    if b <= a {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok((a, b))
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    if e.is_config_error() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn execute(common: &Common, seeds: Option<Vec<u64>>, parallelism: usize) -> ExitCode {
    let mut cfg = match RunConfig::load(&common.config, &common.overrides) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    match run_and_write(&cfg, &common.outdir, parallelism) {
        Ok(out) => {
            for r in &out.runs {
                let last = r.records.last().expect("at least one record");
                eprintln!(
                    "seed {}: {} generations, {} evals, final kl {:.3e}",
                    r.seed,
                    last.generation,
                    last.evals_used,
                    final_kl(r)
                );
            }
            for (seed, e) in &out.failures {
                eprintln!("seed {seed} failed: {e}");
            }
            println!("{}", out.dir.display());
            if out.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common, seed } => {
            let seeds = match seed {
                Some(s) => Some(vec![s]),
                None => match RunConfig::load(&common.config, &common.overrides) {
                    Ok(c) => Some(vec![c.seeds[0]]),
                    Err(e) => return fail(&e),
                },
            };
            execute(&common, seeds, 1)
        }
        Command::Sweep {
            common,
            seeds,
            parallelism,
        } => execute(&common, seeds.map(|(a, b)| (a..b).collect()), parallelism),
        Command::Aggregate { dir } => match aggregate_dir(&dir) {
            Ok(p) => {
                println!("{}", p.display());
                ExitCode::SUCCESS
            }
            Err(e @ Error::Empty(_)) => {
                eprintln!("error: no seed CSVs in {}: {e}", dir.display());
                ExitCode::from(2)
            }
            Err(e) => fail(&e),
        },
        Command::List => {
            println!("games: rps (d, bandwidth), stag_hunt, battle_of_sexes, markov_resource");
            let ids: Vec<&str> = Algorithm::ALL.iter().map(|a| a.id()).collect();
            println!("algorithms: {}", ids.join(", "));
            ExitCode::SUCCESS
        }
    }
}
